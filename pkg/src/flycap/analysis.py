"""Stability, periodic steady state and averages of the switched converter.

Over one period the state maps as

    x(T) = M x(0) + N b1,    M = e^(T/2 A2) e^(T/2 A1),
                             N = e^(T/2 A2) A1^-1 (e^(T/2 A1) - I)

and the periodic orbit is anchored at x0 = (I - M)^-1 N b1. The
characteristic polynomial of M is known in closed form in the reduced
parameters (a, b, c, disc):

    beta  = e^(-2a)
    alpha = -e^(-a) * (2 + 4 a^2 s(disc)^2),   s(q) = sinh(sqrt(q)/2) / sqrt(q)

(sin form for negative disc), so both Jury margins 1 - |beta| and
1 + beta - |alpha| can be written without cancellation. `stability` checks
that verdict against the eigenvalues of the numeric monodromy matrix.

Because A2 = D A1 D with D = diag(1, -1), M = H^2 for the half-period
reflection map H = D e^(T/2 A1), and the anchor solves (I - H) (x0 - w) = -w
for the mode-1 equilibrium w = [0, Vdc]. `steady_state` evaluates x0 that
way; `fixed_point_direct` keeps the textbook (I - M)^-1 N b1 route.
"""

import asyncio
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from scipy.integrate import quad_vec
from scipy.optimize import minimize_scalar

from flycap.errors import DomainError, InternalInconsistency, SingularMatrix
from flycap.mat2 import (
    EPS_SING,
    CharPoly2,
    Mat2,
    Vec2,
    expm1_closed,
    expm_closed,
    inverse,
)
from flycap.model import (
    CircuitParams,
    ReducedParams,
    Source,
    SwitchedSystem,
    TimeSeries,
    build_system,
    reduced_params,
)
from flycap.utils import get_logger

logger = get_logger(__package__)

STABILITY_TIE = 1e-12
IDENTITY_TOL = 1e-9
CONJECTURE_TOL = 1e-9
DISC_SERIES = 1e-6
SLOPE_TERMS = 24
SCAN_SAMPLES = 2048
REFINE_ITERATIONS = 32
ENERGY_RTOL = 1e-10
BREAKPOINT_DECADES = 12
MIN_ORBIT_SAMPLES = 16

# sinh(x/2)/x = sum_k q^k / (2^(2k+1) (2k+1)!),  q = x^2
_HALF_SINHC = tuple(
    1.0 / (2.0 ** (2 * k + 1) * math.factorial(2 * k + 1))
    for k in range(SLOPE_TERMS + 1)
)


@dataclass(frozen=True)
class StabilityReport:
    alpha: float
    beta: float
    eig_real: Tuple[float, float]
    eig_imag: Tuple[float, float]
    spectral_radius: float
    jury_margin_beta: float
    jury_margin_alpha: float
    stable: bool


@dataclass(frozen=True)
class SteadyState:
    x0: Vec2
    x_half: Vec2
    fixed_point_residual: float
    half_period_current_residual: float
    # v(T/2) - v(0), evaluated without subtracting the two voltages
    voltage_swing: float


@dataclass(frozen=True)
class Averages:
    v_avg: float
    i_avg: float
    i_nominal: float
    i_deviation_bound: float
    i_max_half: float


@dataclass(frozen=True)
class EnergyResiduals:
    power_balance_residual: float
    ohmic_residual: float
    capacitor_energy_residual: float
    charge_residual: float
    quadrature_error: float


@dataclass(frozen=True)
class SweepPoint:
    T: float
    i_avg: float
    i_nominal: float
    i_deviation_bound: float
    conjecture_satisfied: bool


@dataclass(frozen=True)
class HalfPeriodMaps:
    """e^(T/2 Ak) and e^(T/2 Ak) - I for both switch states."""

    E1: Mat2
    F1: Mat2
    E2: Mat2
    F2: Mat2


@lru_cache(maxsize=512)
def half_period_maps(sys: SwitchedSystem) -> HalfPeriodMaps:
    X1 = sys.A1.scale(sys.half_period)
    X2 = sys.A2.scale(sys.half_period)
    return HalfPeriodMaps(
        E1=expm_closed(X1),
        F1=expm1_closed(X1),
        E2=expm_closed(X2),
        F2=expm1_closed(X2),
    )


def monodromy(
    sys: SwitchedSystem, expm: Callable[[Mat2], Mat2] = expm_closed
) -> Mat2:
    h = sys.half_period
    return expm(sys.A2.scale(h)) @ expm(sys.A1.scale(h))


def forcing_matrix(sys: SwitchedSystem) -> Mat2:
    maps = half_period_maps(sys)
    return maps.E2 @ (inverse(sys.A1) @ maps.F1)


def fixed_point_direct(sys: SwitchedSystem) -> Vec2:
    """x0 = (I - M)^-1 N b1 with I - M = -(F1 + F2 + F2 F1)."""
    maps = half_period_maps(sys)
    i_minus_m = -(maps.F1 + maps.F2 + maps.F2 @ maps.F1)
    return inverse(i_minus_m) @ (forcing_matrix(sys) @ sys.b1)


def _half_sinhc(q: float) -> float:
    """s(q) = sinh(sqrt(q)/2) / sqrt(q), continued as sin(sqrt(-q)/2) / sqrt(-q)."""
    if abs(q) < DISC_SERIES:
        return 0.5 + q / 48.0 + q * q / 3840.0
    if q > 0.0:
        x = math.sqrt(q)
        return math.sinh(0.5 * x) / x
    x = math.sqrt(-q)
    return math.sin(0.5 * x) / x


def _log_half_sinhc(x: float) -> float:
    """log(sinh(x/2) / x) for x > 0 without overflow."""
    return 0.5 * x + math.log(-math.expm1(-x)) - math.log(2.0 * x)


def _half_sinhc_slope(x: float, y: float) -> float:
    """Divided difference (s(x) - s(y)) / (x - y) as a power series."""
    total = 0.0
    sigma = 1.0
    y_pow = 1.0
    for k in range(1, SLOPE_TERMS + 1):
        total += _HALF_SINHC[k] * sigma
        y_pow *= y
        sigma = x * sigma + y_pow
    return total


def alpha_beta_closed(rp: ReducedParams) -> CharPoly2:
    a, disc = rp.a, rp.disc
    if disc > 1.0:
        log_term = 2.0 * (_log_half_sinhc(math.sqrt(disc)) + math.log(2.0 * a))
        damped = math.exp(log_term - a)
    else:
        s = _half_sinhc(disc)
        damped = 4.0 * a * a * math.exp(-a) * s * s
    return CharPoly2(alpha=-(2.0 * math.exp(-a) + damped), beta=math.exp(-2.0 * a))


def _sinhc_ratio_complements(rp: ReducedParams) -> Tuple[float, float]:
    """(1 - r, 1 + r) for r = s(disc) / s(a^2)."""
    a, disc = rp.a, rp.disc
    a2 = a * a
    four_bc = 4.0 * rp.b * rp.c
    if a2 <= 16.0 and disc >= -16.0:
        s_a = _half_sinhc(a2)
        gap = four_bc * _half_sinhc_slope(a2, disc) / s_a
        return gap, 2.0 - gap
    if disc > 1.0:
        d = math.sqrt(disc)
        d_minus_a = -four_bc / (a + d)
        log_r = (
            0.5 * d_minus_a
            + math.log(math.expm1(-d) / math.expm1(-a))
            - math.log1p(d_minus_a / a)
        )
        return -math.expm1(log_r), 1.0 + math.exp(log_r)
    r = 2.0 * a * _half_sinhc(disc) * math.exp(-0.5 * a) / -math.expm1(-a)
    return 1.0 - r, 1.0 + r


def jury_margins(rp: ReducedParams) -> Tuple[float, float]:
    """(1 - |beta|, 1 + beta - |alpha|) evaluated without cancellation.

    beta is positive and alpha negative for every valid parameter set, so the
    second margin is p(1) = (1 - e^-a)^2 (1 - r^2).
    """
    margin_beta = -math.expm1(-2.0 * rp.a)
    gap, total = _sinhc_ratio_complements(rp)
    return margin_beta, math.expm1(-rp.a) ** 2 * gap * total


def stability(sys: SwitchedSystem) -> StabilityReport:
    rp = reduced_params(sys.params)
    closed = alpha_beta_closed(rp)
    margin_beta, margin_alpha = jury_margins(rp)

    eigenvalues = np.linalg.eigvals(monodromy(sys).to_array())
    eigenvalues = eigenvalues[np.lexsort((eigenvalues.imag, eigenvalues.real))]
    rho = float(np.max(np.abs(eigenvalues)))

    jury_stable = margin_beta > 0.0 and margin_alpha > 0.0
    spectral_stable = rho < 1.0
    if jury_stable != spectral_stable:
        if abs(rho - 1.0) > STABILITY_TIE:
            raise InternalInconsistency(
                f"Jury test says stable={jury_stable} but spectral radius is "
                f"{rho!r} for {sys.params}"
            )
        logger.warning(
            f"Spectral radius {rho!r} within {STABILITY_TIE} of 1, "
            f"reporting the closed-form verdict stable={jury_stable}"
        )
    if not jury_stable:
        logger.error(f"Periodic orbit reported unstable for {sys.params}")

    return StabilityReport(
        alpha=closed.alpha,
        beta=closed.beta,
        eig_real=(float(eigenvalues[0].real), float(eigenvalues[1].real)),
        eig_imag=(float(eigenvalues[0].imag), float(eigenvalues[1].imag)),
        spectral_radius=rho,
        jury_margin_beta=margin_beta,
        jury_margin_alpha=margin_alpha,
        stable=jury_stable,
    )


def _det_expm1(rp: ReducedParams) -> float:
    """det(e^X1 - I) = (1 - e^l1)(1 - e^l2) for the eigenvalues l of X1.

    Real eigenvalues: the smaller magnitude one is bc / (a/2 + d/2). Complex
    ones: (1 - e^(-a/2))^2 + 4 e^(-a/2) sin^2(theta/2). Both are products or
    sums of positive terms.
    """
    a = rp.a
    if rp.disc >= 0.0:
        fast = 0.5 * a + 0.5 * math.sqrt(rp.disc)
        slow = rp.b * rp.c / fast
        return math.expm1(-slow) * math.expm1(-fast)
    half_angle = 0.25 * math.sqrt(-rp.disc)
    return math.expm1(-0.5 * a) ** 2 + 4.0 * math.exp(-0.5 * a) * math.sin(
        half_angle
    ) ** 2


def steady_state(sys: SwitchedSystem) -> SteadyState:
    maps = half_period_maps(sys)
    X1 = sys.A1.scale(sys.half_period)
    F1 = maps.F1
    w = sys.equilibrium
    rp = reduced_params(sys.params)

    # det(I - H) = 1 - e^-a + a c1 where F1 = (...) I + c1 X1
    a = -X1.m11
    det_reflect = -math.expm1(-a) + a * (F1.m12 / X1.m12)
    if not det_reflect > EPS_SING:
        raise SingularMatrix(
            f"I - M is singular (det(I - H)={det_reflect!r}) for {sys.params}"
        )

    offset = Vec2(-F1.m12, F1.m11).scale(w.second / det_reflect)
    x0 = w + offset
    x_half = x0 + F1 @ offset
    x_period = x_half + maps.F2 @ x_half

    ss = SteadyState(
        x0=x0,
        x_half=x_half,
        fixed_point_residual=(x_period - x0).norm_inf(),
        half_period_current_residual=abs(x0.first - x_half.first),
        # F1 (x0 - w) = [0, v(T/2) - v(0)] and its second entry is det(F1) Vdc / det(I - H)
        voltage_swing=w.second * _det_expm1(rp) / det_reflect,
    )
    if ss.fixed_point_residual > IDENTITY_TOL * max(1.0, x0.norm_inf()):
        logger.warning(
            f"Fixed point residual {ss.fixed_point_residual!r} is large for "
            f"{sys.params}"
        )
    logger.debug(f"Steady state x0={x0} x_half={x_half}")
    return ss


def half_period_difference(sys: SwitchedSystem, ss: SteadyState) -> float:
    """First component of (I - e^(-T/2 A2)) x0; zero when i(0) = i(T/2)."""
    return -(expm1_closed(sys.A2.scale(-sys.half_period)) @ ss.x0).first


def trajectory_at(sys: SwitchedSystem, ss: SteadyState, t: float) -> Vec2:
    if not 0.0 <= t <= sys.period:
        raise DomainError(f"t={t!r} outside [0, {sys.period!r}]")
    if t <= sys.half_period:
        w = sys.equilibrium
        return w + expm_closed(sys.A1.scale(t)) @ (ss.x0 - w)
    return expm_closed(sys.A2.scale(t - sys.half_period)) @ ss.x_half


def orbit_series(
    sys: SwitchedSystem, ss: SteadyState, n_periods: int, samples: int
) -> TimeSeries:
    """The periodic orbit tiled over `n_periods`, `samples` intervals each."""
    if samples < MIN_ORBIT_SAMPLES:
        raise DomainError(f"Need at least {MIN_ORBIT_SAMPLES} samples, got {samples}")
    if n_periods < 1:
        raise DomainError(f"n_periods must be >= 1, got {n_periods}")
    T = sys.period
    times = np.linspace(0.0, n_periods * T, n_periods * samples + 1)
    phases = np.clip(times - np.floor(times / T) * T, 0.0, T)
    states = np.array(
        [trajectory_at(sys, ss, float(t)).entries() for t in phases]
    )
    return TimeSeries(
        times=times,
        currents=states[:, 0],
        voltages=states[:, 1],
        source=Source.CLOSED_FORM,
    )


def sample_orbit(sys: SwitchedSystem, ss: SteadyState, n: int) -> TimeSeries:
    return orbit_series(sys, ss, 1, n)


def _half_period_grid(
    sys: SwitchedSystem, ss: SteadyState, n: int
) -> Tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    """States at t = k h/n on both half periods, k = 0..n, by stepping the flow."""
    dt = sys.half_period / n
    w = sys.equilibrium
    step1 = expm_closed(sys.A1.scale(dt))
    step2 = expm_closed(sys.A2.scale(dt))

    first = np.empty((n + 1, 2))
    second = np.empty((n + 1, 2))
    z, x = ss.x0 - w, ss.x_half
    for k in range(n + 1):
        first[k] = (w + z).entries()
        second[k] = x.entries()
        z, x = step1 @ z, step2 @ x
    # pin the anchors to the exact values
    first[n] = ss.x_half.entries()
    second[n] = ss.x0.entries()
    return first, second


def max_abs_current(sys: SwitchedSystem, ss: SteadyState) -> float:
    """max |i(t)| on [0, T/2]: dense scan, then bounded refinement."""
    first, _ = _half_period_grid(sys, ss, SCAN_SAMPLES)
    currents = np.abs(first[:, 0])
    k = int(np.argmax(currents))
    best = float(currents[k])
    if best == 0.0:
        return 0.0

    dt = sys.half_period / SCAN_SAMPLES
    lo, hi = max(k - 1, 0) * dt, min(k + 1, SCAN_SAMPLES) * dt
    result = minimize_scalar(
        lambda t: -abs(trajectory_at(sys, ss, float(t)).first),
        bounds=(lo, hi),
        method="bounded",
        options={"maxiter": REFINE_ITERATIONS, "xatol": 1e-9 * (hi - lo)},
    )
    return max(best, -float(result.fun))


def averages_closed(sys: SwitchedSystem, ss: SteadyState) -> Averages:
    p = sys.params
    v_avg = 0.5 * p.Vdc
    v_reflected = 0.5 * (ss.x0.second + ss.x_half.second)
    if abs(v_reflected - v_avg) > IDENTITY_TOL * max(1.0, p.Vdc):
        logger.warning(
            f"(v(0) + v(T/2))/2 = {v_reflected!r} differs from Vdc/2 = {v_avg!r}"
        )
    i_max = max_abs_current(sys, ss)
    return Averages(
        v_avg=v_avg,
        # Vdc - 2 v(0) = v(T/2) - v(0)
        i_avg=(2.0 * p.C / p.T) * ss.voltage_swing,
        i_nominal=p.Vdc / (2.0 * p.R),
        i_deviation_bound=p.T / (2.0 * p.R * p.C) * i_max,
        i_max_half=i_max,
    )


def average_exact_integral(sys: SwitchedSystem, ss: SteadyState) -> Vec2:
    """(1/T) * integral of x over one period using int_0^s e^(tA) dt = A^-1 (e^(sA) - I).

    On the orbit (e^(T/2 A1) - I)(x0 - w) = x(T/2) - x(0) and
    (e^(T/2 A2) - I) x(T/2) = x(0) - x(T/2), both equal to [0, +-swing].
    """
    swing = Vec2(0.0, ss.voltage_swing)
    w = sys.equilibrium
    first = w.scale(sys.half_period) + inverse(sys.A1) @ swing
    second = inverse(sys.A2) @ (-swing)
    return (first + second).scale(1.0 / sys.period)


def _relative(difference: float, scale: float) -> float:
    return abs(difference) / scale if scale > 0.0 else 0.0


def _decade_breakpoints(h: float) -> List[float]:
    """h * 10^-k; switching transients live in the first few decades."""
    return [h * 10.0 ** (-k) for k in range(BREAKPOINT_DECADES, 0, -1)]


def _branch_integrals(
    integrand: Callable[[float], npt.NDArray[np.float64]], h: float
) -> Tuple[npt.NDArray[np.float64], float]:
    """Adaptive Gauss-Kronrod integral over [0, h] and its relative error."""
    values, error = quad_vec(
        integrand,
        0.0,
        h,
        epsrel=ENERGY_RTOL,
        norm="max",
        points=_decade_breakpoints(h),
    )
    values = np.asarray(values, dtype=np.float64)
    size = float(np.max(np.abs(values)))
    return values, (float(error) / size if size > 0.0 else 0.0)


def energy_residuals(sys: SwitchedSystem, ss: SteadyState) -> EnergyResiduals:
    p = sys.params
    i_size = max_abs_current(sys, ss)
    if p.Vdc == 0.0 or i_size == 0.0:
        return EnergyResiduals(0.0, 0.0, 0.0, 0.0, 0.0)

    v0, v_half = ss.x0.second, ss.x_half.second
    v_size = max(p.Vdc, abs(v0), abs(v_half))
    w = sys.equilibrium

    # integrands are scaled to order one so the max norm weighs them alike
    def first_half(t: float) -> npt.NDArray[np.float64]:
        x = w + expm_closed(sys.A1.scale(t)) @ (ss.x0 - w)
        i, v = x.first / i_size, x.second / v_size
        return np.array([v * i, abs(v * i), i * i, i, abs(i)])

    def second_half(t: float) -> npt.NDArray[np.float64]:
        x = expm_closed(sys.A2.scale(t)) @ ss.x_half
        i, v = x.first / i_size, x.second / v_size
        return np.array([v * i, abs(v * i)])

    h = sys.half_period
    first, first_error = _branch_integrals(first_half, h)
    second, second_error = _branch_integrals(second_half, h)
    vi_1, vi_2 = first[0] * v_size * i_size, second[0] * v_size * i_size
    vi_scale = max(first[1], second[1]) * v_size * i_size
    ii_1 = first[2] * i_size * i_size
    i_1, i_scale = first[3] * i_size, first[4] * i_size
    k = p.Vdc / (2.0 * p.R)

    residuals = EnergyResiduals(
        power_balance_residual=_relative(vi_1 - vi_2, vi_scale),
        ohmic_residual=_relative(ii_1 - k * i_1, max(ii_1, k * i_scale)),
        capacitor_energy_residual=_relative(
            vi_1 - 0.5 * p.C * ss.voltage_swing * (v_half + v0), vi_scale
        ),
        charge_residual=_relative(i_1 - p.C * ss.voltage_swing, i_scale),
        quadrature_error=max(first_error, second_error),
    )
    logger.debug(f"Energy residuals {residuals}")
    return residuals


def sweep_point(base: CircuitParams, T: float) -> SweepPoint:
    sys = build_system(base.with_period(T))
    averages = averages_closed(sys, steady_state(sys))
    satisfied = averages.i_avg <= averages.i_nominal * (1.0 + CONJECTURE_TOL)
    if not satisfied:
        logger.warning(
            f"<i> = {averages.i_avg!r} exceeds Vdc/2R = {averages.i_nominal!r} "
            f"at T={T!r}"
        )
    return SweepPoint(
        T=float(T),
        i_avg=averages.i_avg,
        i_nominal=averages.i_nominal,
        i_deviation_bound=averages.i_deviation_bound,
        conjecture_satisfied=satisfied,
    )


def sweep_average_current(
    base: CircuitParams, T_values: Sequence[float]
) -> List[SweepPoint]:
    return [sweep_point(base, T) for T in T_values]


async def async_sweep_average_current(
    base: CircuitParams, T_values: Sequence[float]
) -> List[SweepPoint]:
    """Evaluates the sweep points concurrently; results keep the input order."""
    return list(
        await asyncio.gather(
            *(asyncio.to_thread(sweep_point, base, T) for T in T_values)
        )
    )
