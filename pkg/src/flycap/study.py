#!/usr/bin/env python3

import asyncio
import math
from dataclasses import asdict, dataclass, field, replace
from typing import AsyncIterator, Dict, List, Optional, Tuple

import numpy as np

from flycap.analysis import (
    MIN_ORBIT_SAMPLES,
    SweepPoint,
    async_sweep_average_current,
    averages_closed,
    energy_residuals,
    orbit_series,
    stability,
    steady_state,
)
from flycap.base import (
    BaseStudy,
    BaseStudyConfig,
    Command,
    Report,
    Scale,
    StudyResult,
    Table,
)
from flycap.errors import InvalidParams
from flycap.integrator import IntegratorConfig, integrate, numeric_averages
from flycap.mat2 import Vec2
from flycap.model import Source, SwitchedSystem, TimeSeries, build_system
from flycap.registry import register_handler

SWEEP_COLUMNS = ("T_s", "i_avg_A", "i_nominal_A", "bound_A", "conjecture_ok")
SIMULATE_COLUMNS = ("t_s", "i_A", "v_V")
PROFILE_PERIODS = 2
# sweeps up to this many points get one headline per row
HEADLINE_ROWS = 10


def _options(config: BaseStudyConfig) -> Dict:
    options = asdict(config)
    options.pop("params")
    return options


@dataclass(frozen=True)
class AnalyzeStudyConfig(BaseStudyConfig):
    pass


@register_handler(AnalyzeStudyConfig)
class AnalyzeStudy(BaseStudy):
    def __init__(self, config: AnalyzeStudyConfig):
        super(AnalyzeStudy, self).__init__(config)
        self.config: AnalyzeStudyConfig = config

    @staticmethod
    def analyze(sys: SwitchedSystem) -> Tuple[Report, Dict[str, float]]:
        report = stability(sys)
        ss = steady_state(sys)
        averages = averages_closed(sys, ss)
        residuals = energy_residuals(sys, ss)
        document = {
            "stability": asdict(report),
            "steady_state": asdict(ss),
            "averages": asdict(averages),
            "energy_residuals": asdict(residuals),
        }
        headlines = {
            "v_avg": averages.v_avg,
            "i_avg": averages.i_avg,
            "i_nominal": averages.i_nominal,
            "spectral_radius": report.spectral_radius,
        }
        return document, headlines

    async def async_iterate(self) -> AsyncIterator[StudyResult]:
        sys = build_system(self.config.params)
        self.logger.info(f"Analyzing {self.config.params}")
        document, headlines = await asyncio.to_thread(self.analyze, sys)
        yield StudyResult(
            command=Command.ANALYZE,
            params=self.config.params,
            report=document,
            headlines=headlines,
        )


@dataclass(frozen=True)
class SimulateStudyConfig(BaseStudyConfig):
    n_periods: int = 1
    source: Source = Source.CLOSED_FORM
    # explicit (i0, v0); rk45 starts from rest when None
    x_init: Optional[Tuple[float, float]] = None
    samples: int = 512
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)

    def __post_init__(self) -> None:
        if self.n_periods < 1:
            raise InvalidParams(f"periods must be >= 1, got {self.n_periods}")
        if self.source == Source.CLOSED_FORM:
            if self.x_init is not None:
                raise InvalidParams("--i0/--v0 only apply to the rk45 source")
            if self.samples < MIN_ORBIT_SAMPLES:
                raise InvalidParams(
                    f"samples must be >= {MIN_ORBIT_SAMPLES}, got {self.samples}"
                )
        else:
            self.integrator_config()

    def integrator_config(self) -> IntegratorConfig:
        return replace(self.integrator, output_grid=self.samples)


@register_handler(SimulateStudyConfig)
class SimulateStudy(BaseStudy):
    def __init__(self, config: SimulateStudyConfig):
        super(SimulateStudy, self).__init__(config)
        self.config: SimulateStudyConfig = config

    def simulate(self, sys: SwitchedSystem) -> Tuple[TimeSeries, Dict[str, float]]:
        n_periods = self.config.n_periods
        if self.config.source == Source.CLOSED_FORM:
            ss = steady_state(sys)
            averages = averages_closed(sys, ss)
            ts = orbit_series(sys, ss, n_periods, self.config.samples)
            return ts, {"i_avg": averages.i_avg, "v_avg": averages.v_avg}

        start = (
            Vec2(*self.config.x_init) if self.config.x_init is not None else Vec2.zero()
        )
        ts = integrate(sys, start, n_periods, self.config.integrator_config())
        T = sys.period
        i_avg, v_avg = numeric_averages(ts, (n_periods - 1) * T, n_periods * T)
        self.logger.info(f"RK45 accepted {len(ts.step_log)} steps")
        return ts, {"i_avg_last_period": i_avg, "v_avg_last_period": v_avg}

    async def async_iterate(self) -> AsyncIterator[StudyResult]:
        sys = build_system(self.config.params)
        self.logger.info(
            f"Simulating {self.config.n_periods} period(s) from {self.config.source}"
        )
        ts, headlines = await asyncio.to_thread(self.simulate, sys)
        rows = [
            (float(t), float(i), float(v))
            for t, i, v in zip(ts.times, ts.currents, ts.voltages)
        ]
        config = _options(self.config)
        if self.config.source == Source.CLOSED_FORM:
            config.pop("integrator")
        else:
            config["integrator"] = asdict(self.config.integrator_config())
        yield StudyResult(
            command=Command.SIMULATE,
            params=self.config.params,
            table=Table(columns=SIMULATE_COLUMNS, rows=rows),
            config=config,
            headlines=headlines,
        )


@dataclass(frozen=True)
class SweepStudyConfig(BaseStudyConfig):
    t_from: float
    t_to: float
    steps: int
    scale: Scale = Scale.LINEAR

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t_from) and math.isfinite(self.t_to)):
            raise InvalidParams("sweep bounds must be finite")
        if not 0 < self.t_from < self.t_to:
            raise InvalidParams(
                f"sweep needs 0 < t_from < t_to, got t_from={self.t_from!r} "
                f"t_to={self.t_to!r}"
            )
        if self.steps < 2:
            raise InvalidParams(f"steps must be >= 2, got {self.steps}")

    def periods(self) -> List[float]:
        if self.scale == Scale.LOG:
            values = np.geomspace(self.t_from, self.t_to, self.steps)
        else:
            values = np.linspace(self.t_from, self.t_to, self.steps)
        values[0], values[-1] = self.t_from, self.t_to
        return [float(T) for T in values]


@register_handler(SweepStudyConfig)
class SweepStudy(BaseStudy):
    def __init__(self, config: SweepStudyConfig):
        super(SweepStudy, self).__init__(config)
        self.config: SweepStudyConfig = config

    @staticmethod
    def row(point: SweepPoint) -> Tuple[float, float, float, float, bool]:
        return (
            point.T,
            point.i_avg,
            point.i_nominal,
            point.i_deviation_bound,
            point.conjecture_satisfied,
        )

    async def async_iterate(self) -> AsyncIterator[StudyResult]:
        periods = self.config.periods()
        self.logger.info(
            f"Sweeping {len(periods)} periods over "
            f"[{self.config.t_from!r}, {self.config.t_to!r}] ({self.config.scale})"
        )
        points = await async_sweep_average_current(self.config.params, periods)

        headlines: Dict[str, float] = {}
        if len(points) <= HEADLINE_ROWS:
            headlines = {f"i_avg[T={p.T:g}]": p.i_avg for p in points}
        headlines["i_nominal"] = points[0].i_nominal
        yield StudyResult(
            command=Command.SWEEP,
            params=self.config.params,
            table=Table(columns=SWEEP_COLUMNS, rows=[self.row(p) for p in points]),
            config=_options(self.config),
            headlines=headlines,
        )


@dataclass(frozen=True)
class ProfilesStudyConfig(BaseStudyConfig):
    t_list: Tuple[float, ...] = ()
    samples: int = 512

    def __post_init__(self) -> None:
        if not self.t_list:
            raise InvalidParams("t_list must name at least one period")
        for T in self.t_list:
            if not (math.isfinite(T) and T > 0):
                raise InvalidParams(f"every period in t_list must be > 0, got {T!r}")
        if self.samples < MIN_ORBIT_SAMPLES:
            raise InvalidParams(
                f"samples must be >= {MIN_ORBIT_SAMPLES}, got {self.samples}"
            )


@register_handler(ProfilesStudyConfig)
class ProfilesStudy(BaseStudy):
    def __init__(self, config: ProfilesStudyConfig):
        super(ProfilesStudy, self).__init__(config)
        self.config: ProfilesStudyConfig = config

    def profile(self, T: float) -> Tuple[TimeSeries, float]:
        sys = build_system(self.config.params.with_period(T))
        ss = steady_state(sys)
        ts = orbit_series(sys, ss, PROFILE_PERIODS, self.config.samples)
        return ts, averages_closed(sys, ss).i_avg

    @staticmethod
    def columns(count: int) -> Tuple[str, ...]:
        names = ["tau"]
        for index in range(1, count + 1):
            names += [f"i_A_T{index}", f"v_V_T{index}"]
        return tuple(names)

    async def async_iterate(self) -> AsyncIterator[StudyResult]:
        t_list = self.config.t_list
        self.logger.info(f"Sampling {len(t_list)} profile(s)")
        profiles = await asyncio.gather(
            *(asyncio.to_thread(self.profile, T) for T in t_list)
        )

        tau = np.linspace(0.0, PROFILE_PERIODS, PROFILE_PERIODS * self.config.samples + 1)
        data = [tau]
        for ts, _ in profiles:
            data += [ts.currents, ts.voltages]
        rows = [tuple(float(x) for x in row) for row in np.column_stack(data)]
        yield StudyResult(
            command=Command.PROFILES,
            params=self.config.params,
            table=Table(columns=self.columns(len(t_list)), rows=rows),
            config=_options(self.config),
            headlines={
                f"i_avg[T={T:g}]": i_avg for T, (_, i_avg) in zip(t_list, profiles)
            },
        )
