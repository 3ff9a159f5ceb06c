"""Adaptive RK45 integration of the switched system, used as an oracle.

The right-hand side changes at every switch instant kT/2, so each half period
is integrated by a fresh `scipy.integrate.RK45` whose `t_bound` is the next
switch instant: no accepted step ever straddles a switch. Samples on the
uniform output grid come from the dense output of the step that covers them.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.integrate import RK45, trapezoid

from flycap.analysis import forcing_matrix, monodromy, steady_state
from flycap.errors import DomainError, InvalidParams, StepLimitExceeded, StepUnderflow
from flycap.mat2 import Vec2
from flycap.model import Source, SwitchedSystem, TimeSeries
from flycap.utils import get_logger

logger = get_logger(__package__)

PROTOCOL_PERIODS = 20
UNDERFLOW_FACTOR = 1e-3 * float(np.finfo(np.float64).eps)


@dataclass(frozen=True)
class IntegratorConfig:
    abs_tol: float = 1e-9
    rel_tol: float = 1e-9
    # None means T / 1000
    initial_step: float | None = None
    max_steps: int = 500_000
    output_grid: int = 512

    def __post_init__(self) -> None:
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise InvalidParams("abs_tol and rel_tol must be > 0")
        if self.initial_step is not None and not self.initial_step > 0:
            raise InvalidParams("initial_step must be > 0")
        if self.max_steps < 1000:
            raise InvalidParams("max_steps must be >= 1000")
        if self.output_grid < 64:
            raise InvalidParams("output_grid must be >= 64")
        if self.output_grid % 2:
            raise InvalidParams("output_grid must be even")

    def first_step(self, T: float) -> float:
        return self.initial_step if self.initial_step is not None else T / 1000.0


@dataclass(frozen=True)
class ConvergenceRecord:
    k: int
    distance: float


def integrate(
    sys: SwitchedSystem, x_init: Vec2, n_periods: int, cfg: IntegratorConfig
) -> TimeSeries:
    if n_periods < 1:
        raise DomainError(f"n_periods must be >= 1, got {n_periods}")

    T = sys.period
    half_grid = cfg.output_grid // 2
    times = np.linspace(0.0, n_periods * T, n_periods * cfg.output_grid + 1)
    states = np.empty((len(times), 2))
    states[0] = x_init.entries()

    A1, A2, b1 = sys.A1.to_array(), sys.A2.to_array(), sys.b1.to_array()
    rhs = (lambda t, y: A1 @ y + b1, lambda t, y: A2 @ y)
    min_step = UNDERFLOW_FACTOR * T

    y = x_init.to_array()
    step = cfg.first_step(T)
    n_steps = 0
    step_log: List[Tuple[float, float]] = []
    for j in range(2 * n_periods):
        start, stop = j * half_grid, (j + 1) * half_grid
        t0, t1 = float(times[start]), float(times[stop])
        solver = RK45(
            rhs[j % 2],
            t0,
            y,
            t1,
            first_step=min(step, t1 - t0),
            rtol=cfg.rel_tol,
            atol=cfg.abs_tol,
        )
        pending = start + 1
        widest = 0.0
        while solver.status == "running":
            message = solver.step()
            if solver.status == "failed":
                raise StepUnderflow(f"RK45 failed at t={solver.t!r}: {message}")
            n_steps += 1
            if n_steps >= cfg.max_steps:
                raise StepLimitExceeded(
                    f"max_steps={cfg.max_steps} reached at t={solver.t!r}"
                )
            taken = solver.t - solver.t_old
            if solver.status == "running" and taken < min_step:
                raise StepUnderflow(f"step {taken!r} below {min_step!r}")
            widest = max(widest, taken)
            step_log.append((float(solver.t_old), float(solver.t)))

            last = min(int(np.searchsorted(times, solver.t, side="right")) - 1, stop)
            if last >= pending:
                interpolant = solver.dense_output()
                states[pending : last + 1] = interpolant(times[pending : last + 1]).T
                pending = last + 1

        y = solver.y.copy()
        states[stop] = y
        step = widest or step

    logger.debug(f"RK45 took {n_steps} steps over {n_periods} periods")
    return TimeSeries(
        times=times,
        currents=states[:, 0].copy(),
        voltages=states[:, 1].copy(),
        source=Source.RK45,
        step_log=tuple(step_log),
    )


def numeric_averages(
    ts: TimeSeries, window_start: float, window_end: float
) -> Tuple[float, float]:
    if not window_end > window_start:
        raise DomainError(
            f"window_end={window_end!r} must exceed window_start={window_start!r}"
        )
    span = window_end - window_start
    slack = 1e-9 * span
    if window_start < ts.times[0] - slack or window_end > ts.times[-1] + slack:
        raise DomainError(
            f"window [{window_start!r}, {window_end!r}] outside the series "
            f"[{ts.times[0]!r}, {ts.times[-1]!r}]"
        )
    mask = (ts.times >= window_start - slack) & (ts.times <= window_end + slack)
    if np.count_nonzero(mask) < 2:
        raise DomainError("window holds fewer than two samples")
    t = ts.times[mask]
    return (
        float(trapezoid(ts.currents[mask], t)) / span,
        float(trapezoid(ts.voltages[mask], t)) / span,
    )


def run_protocol(
    sys: SwitchedSystem,
    cfg: IntegratorConfig,
    n_periods: int = PROTOCOL_PERIODS,
    x_init: Vec2 | None = None,
) -> Tuple[TimeSeries, Tuple[float, float]]:
    """Integrate from rest (or `x_init`) and average over the final period."""
    start = x_init if x_init is not None else Vec2.zero()
    ts = integrate(sys, start, n_periods, cfg)
    T = sys.period
    return ts, numeric_averages(ts, (n_periods - 1) * T, n_periods * T)


def convergence_study(
    sys: SwitchedSystem, x_init: Vec2, n_periods: int
) -> List[ConvergenceRecord]:
    """Distances to the periodic anchor under the exact map x <- M x + N b1."""
    if n_periods < 2:
        raise DomainError(f"n_periods must be >= 2, got {n_periods}")
    M = monodromy(sys)
    forcing = forcing_matrix(sys) @ sys.b1
    anchor = steady_state(sys).x0

    records = []
    x = x_init
    for k in range(n_periods + 1):
        records.append(ConvergenceRecord(k=k, distance=(x - anchor).norm_inf()))
        x = M @ x + forcing
    return records


def contraction_rate(records: Sequence[ConvergenceRecord], floor: float) -> float:
    """Per-period decay factor fitted to log distance over records above `floor`."""
    kept = [r for r in records if r.distance > floor]
    if len(kept) < 2:
        raise DomainError("need at least two records above the floor")
    k = np.array([r.k for r in kept], dtype=np.float64)
    log_distance = np.log([r.distance for r in kept])
    slope = np.polyfit(k, log_distance, 1)[0]
    return float(np.exp(slope))

