"""State-space model of the three-level flying capacitor converter.

With x = [i, v] (inductor current, flying capacitor voltage) the converter is
the periodically switched system

    x' = A1 x + b1   on [kT, kT + T/2)
    x' = A2 x        on [kT + T/2, (k+1)T)

    A1 = [[-R/L, -1/L], [1/C, 0]]   A2 = [[-R/L, 1/L], [-1/C, 0]]   b1 = [Vdc/L, 0]

The duty cycle is fixed at one half. Dimensionless groups used by the closed
forms in `flycap.analysis` are a = TR/2L, b = T/2L, c = T/2C and
disc = a^2 - 4bc.
"""

import math
import tomllib
from dataclasses import dataclass, field, replace
from enum import StrEnum
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple

import numpy as np
import numpy.typing as npt

from flycap.errors import DomainError, InvalidParams
from flycap.mat2 import Mat2, Vec2

PARAM_KEYS = ("R", "L", "C", "Vdc", "T")
HALF_DUTY = 0.5


@dataclass(frozen=True)
class CircuitParams:
    R: float
    L: float
    C: float
    Vdc: float
    T: float
    duty_cycle: float = HALF_DUTY

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        for key in PARAM_KEYS:
            value = getattr(self, key)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise InvalidParams(f"{key} must be a number, got {value!r}")
            if not math.isfinite(value):
                raise InvalidParams(f"{key} must be finite")
        for key in ("R", "L", "C", "T"):
            if getattr(self, key) <= 0:
                raise InvalidParams(f"{key} must be > 0")
        if self.Vdc < 0:
            raise InvalidParams("Vdc must be >= 0")
        if self.duty_cycle != HALF_DUTY:
            raise InvalidParams(
                f"duty_cycle is fixed at {HALF_DUTY}, got {self.duty_cycle!r}"
            )

    @property
    def half_period(self) -> float:
        return 0.5 * self.T

    def with_period(self, T: float) -> "CircuitParams":
        return replace(self, T=T)

    def as_dict(self) -> Dict[str, float]:
        return {key: float(getattr(self, key)) for key in PARAM_KEYS}

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "CircuitParams":
        unknown = sorted(set(values) - set(PARAM_KEYS))
        if unknown:
            raise InvalidParams(f"Unknown parameter key(s): {', '.join(unknown)}")
        missing = [key for key in PARAM_KEYS if key not in values]
        if missing:
            raise InvalidParams(f"Missing parameter(s): {', '.join(missing)}")
        return cls(**{key: values[key] for key in PARAM_KEYS})


def load_params_file(path: Path) -> Dict[str, float]:
    """Read a flat `key = value` TOML file of circuit parameters.

    Only keys are checked here; values are validated once the file has been
    merged with command line overrides.
    """
    try:
        with open(path, "rb") as fp:
            raw = tomllib.load(fp)
    except FileNotFoundError as exc:
        raise InvalidParams(f"Parameter file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise InvalidParams(f"Cannot parse parameter file {path}: {exc}") from exc

    unknown = sorted(set(raw) - set(PARAM_KEYS))
    if unknown:
        raise InvalidParams(f"Unknown parameter key(s): {', '.join(unknown)}")
    return raw


@dataclass(frozen=True)
class SwitchedSystem:
    A1: Mat2
    A2: Mat2
    b1: Vec2
    half_period: float
    params: CircuitParams

    @property
    def period(self) -> float:
        return self.params.T

    @property
    def equilibrium(self) -> Vec2:
        """Rest point of mode 1, -A1^-1 b1 = [0, Vdc]."""
        return Vec2(0.0, float(self.params.Vdc))


@dataclass(frozen=True)
class ReducedParams:
    a: float
    b: float
    c: float
    disc: float

    def __post_init__(self) -> None:
        if not (self.a > 0 and self.b > 0 and self.c > 0):
            raise InvalidParams(
                f"Reduced parameters must be positive, got a={self.a} "
                f"b={self.b} c={self.c}"
            )


def build_system(p: CircuitParams) -> SwitchedSystem:
    p.validate()
    r_over_l = p.R / p.L
    inv_l = 1.0 / p.L
    inv_c = 1.0 / p.C
    return SwitchedSystem(
        A1=Mat2(-r_over_l, -inv_l, inv_c, 0.0),
        A2=Mat2(-r_over_l, inv_l, -inv_c, 0.0),
        b1=Vec2(p.Vdc / p.L, 0.0),
        half_period=p.half_period,
        params=p,
    )


def reduced_params(p: CircuitParams) -> ReducedParams:
    p.validate()
    h = p.half_period
    # same products as half_period * A1 entries so both routes agree bit for bit
    a = h * (p.R / p.L)
    b = h * (1.0 / p.L)
    c = h * (1.0 / p.C)
    return ReducedParams(a=a, b=b, c=c, disc=a * a - 4.0 * b * c)


class Source(StrEnum):
    CLOSED_FORM = "closed_form"
    RK45 = "rk45"


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Sampled trajectory (t, i, v) tagged with the route that produced it.

    `step_log` holds the accepted integrator steps as (t_start, t_end) pairs;
    it is empty for closed-form samples.
    """

    times: npt.NDArray[np.float64]
    currents: npt.NDArray[np.float64]
    voltages: npt.NDArray[np.float64]
    source: Source
    step_log: Tuple[Tuple[float, float], ...] = field(default=(), repr=False)

    def __post_init__(self) -> None:
        n = len(self.times)
        if len(self.currents) != n or len(self.voltages) != n:
            raise DomainError(
                f"TimeSeries columns differ in length: {n}, "
                f"{len(self.currents)}, {len(self.voltages)}"
            )
        for name in ("times", "currents", "voltages"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DomainError(f"TimeSeries {name} contain non-finite values")
        if n > 1 and not np.all(np.diff(self.times) > 0):
            raise DomainError("TimeSeries times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    def states(self) -> npt.NDArray[np.float64]:
        return np.column_stack((self.currents, self.voltages))

