#!/usr/bin/env python3

import numpy as np
import pytest

from flycap.analysis import (
    averages_closed,
    forcing_matrix,
    monodromy,
    orbit_series,
    steady_state,
)
from flycap.errors import DomainError, InvalidParams, StepLimitExceeded
from flycap.integrator import (
    IntegratorConfig,
    contraction_rate,
    convergence_study,
    integrate,
    numeric_averages,
    run_protocol,
)
from flycap.mat2 import Vec2
from flycap.model import CircuitParams, Source, build_system

RINGING = CircuitParams(R=1.0, L=0.25e-3, C=100e-6, Vdc=100.0, T=1200e-6)
DAMPED = CircuitParams(R=20.0, L=10e-3, C=100e-6, Vdc=100.0, T=250e-5)
SWEEP_BASE = CircuitParams(R=2.0, L=10e-3, C=100e-6, Vdc=100.0, T=800e-5)
N_RANDOM_STARTS = 20


def random_starts(n: int, seed: int = 31):
    rng = np.random.default_rng(seed)
    return [Vec2.from_array(rng.uniform(-1e3, 1e3, size=2)) for _ in range(n)]


def sup_error(states: np.ndarray, reference: np.ndarray) -> float:
    scale = max(1.0, float(np.max(np.abs(reference))))
    return float(np.max(np.abs(states - reference))) / scale


class TestIntegratorConfig:
    def test_defaults(self):
        cfg = IntegratorConfig()
        assert cfg.output_grid == 512
        assert cfg.first_step(1e-3) == pytest.approx(1e-6)
        assert IntegratorConfig(initial_step=1e-7).first_step(1e-3) == 1e-7

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(abs_tol=0.0),
            dict(rel_tol=-1e-9),
            dict(initial_step=0.0),
            dict(max_steps=10),
            dict(output_grid=32),
            dict(output_grid=129),
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(InvalidParams):
            IntegratorConfig(**kwargs)


class TestIntegrate:
    @pytest.mark.parametrize("params", [RINGING, DAMPED, SWEEP_BASE])
    def test_matches_closed_form_orbit(self, params):
        sys = build_system(params)
        ss = steady_state(sys)
        ts = integrate(sys, ss.x0, 5, IntegratorConfig(output_grid=128))
        closed = orbit_series(sys, ss, 5, 128)
        assert ts.source == Source.RK45
        np.testing.assert_array_equal(ts.times, closed.times)
        assert sup_error(ts.states(), closed.states()) <= 1e-6

    @pytest.mark.parametrize("params", [RINGING, DAMPED, SWEEP_BASE])
    @pytest.mark.parametrize("x_init", [Vec2.zero(), Vec2(5.0, -20.0)])
    def test_matches_discrete_map(self, params, x_init):
        sys = build_system(params)
        cfg = IntegratorConfig(rel_tol=1e-12, output_grid=64)
        ts = integrate(sys, x_init, 3, cfg)
        M, forcing = monodromy(sys), forcing_matrix(sys) @ sys.b1

        x = x_init
        for k in range(4):
            sample = ts.states()[k * cfg.output_grid]
            assert np.max(np.abs(sample - x.to_array())) <= 10.0 * cfg.abs_tol
            x = M @ x + forcing

    def test_steps_never_cross_a_switch(self):
        sys = build_system(RINGING)
        cfg = IntegratorConfig(output_grid=64)
        ts = integrate(sys, Vec2.zero(), 4, cfg)
        switches = ts.times[:: cfg.output_grid // 2]
        starts = np.array([start for start, _ in ts.step_log])
        ends = np.array([end for _, end in ts.step_log])

        tol = 1e-12 * sys.period
        inside = (switches[None, :] > starts[:, None] + tol) & (
            switches[None, :] < ends[:, None] - tol
        )
        assert not inside.any()
        assert np.isin(switches[1:], ends).all()

    def test_tighter_tolerance_takes_more_steps(self):
        sys = build_system(RINGING)
        ss = steady_state(sys)
        closed = orbit_series(sys, ss, 2, 128).states()
        loose = integrate(
            sys, ss.x0, 2, IntegratorConfig(abs_tol=1e-5, rel_tol=1e-5, output_grid=128)
        )
        tight = integrate(sys, ss.x0, 2, IntegratorConfig(output_grid=128))
        assert len(loose.step_log) < len(tight.step_log)
        assert sup_error(tight.states(), closed) <= sup_error(loose.states(), closed)
        assert sup_error(tight.states(), closed) <= 1e-6

    def test_step_limit(self):
        sys = build_system(RINGING)
        cfg = IntegratorConfig(abs_tol=1e-12, rel_tol=1e-12, max_steps=1000)
        with pytest.raises(StepLimitExceeded):
            integrate(sys, Vec2.zero(), 20, cfg)

    def test_rejects_empty_run(self):
        with pytest.raises(DomainError):
            integrate(build_system(RINGING), Vec2.zero(), 0, IntegratorConfig())


class TestProtocol:
    def test_ringing_from_rest(self):
        _, (i_avg, v_avg) = run_protocol(build_system(RINGING), IntegratorConfig())
        assert i_avg == pytest.approx(33.1215, abs=0.005)
        assert v_avg == pytest.approx(50.0, abs=0.01)

    def test_damped_from_rest(self):
        ts, (i_avg, v_avg) = run_protocol(build_system(DAMPED), IntegratorConfig())
        assert len(ts) == 20 * 512 + 1
        assert i_avg == pytest.approx(2.4922, abs=0.005)
        assert v_avg == pytest.approx(49.9849, abs=0.02)

    def test_sweep_base_from_rest(self):
        _, (i_avg, v_avg) = run_protocol(build_system(SWEEP_BASE), IntegratorConfig())
        assert i_avg == pytest.approx(13.0181, abs=0.005)
        assert v_avg == pytest.approx(50.0, abs=0.01)

    @pytest.mark.parametrize(
        "params, n_periods", [(RINGING, 40), (SWEEP_BASE, 40), (DAMPED, 60)]
    )
    def test_long_run_matches_closed_form(self, params, n_periods):
        sys = build_system(params)
        _, (i_avg, v_avg) = run_protocol(
            sys, IntegratorConfig(output_grid=2048), n_periods
        )
        averages = averages_closed(sys, steady_state(sys))
        assert i_avg == pytest.approx(averages.i_avg, rel=1e-5)
        assert v_avg == pytest.approx(averages.v_avg, rel=1e-5)

    def test_from_steady_state(self):
        sys = build_system(RINGING)
        ss = steady_state(sys)
        _, (i_avg, v_avg) = run_protocol(sys, IntegratorConfig(), 1, x_init=ss.x0)
        averages = averages_closed(sys, ss)
        assert i_avg == pytest.approx(averages.i_avg, abs=0.005)
        assert v_avg == pytest.approx(averages.v_avg, abs=0.01)

    def test_numeric_averages_window(self):
        sys = build_system(RINGING)
        ts = orbit_series(sys, steady_state(sys), 1, 512)
        with pytest.raises(DomainError):
            numeric_averages(ts, sys.period, 0.0)
        with pytest.raises(DomainError):
            numeric_averages(ts, 0.0, 2.0 * sys.period)
        i_avg, v_avg = numeric_averages(ts, 0.0, sys.period)
        assert i_avg == pytest.approx(33.1215, abs=0.005)
        assert v_avg == pytest.approx(50.0, abs=0.01)


class TestConvergence:
    # RINGING: the second eigenvalue is about rho / 2, fit once its mode has faded
    @pytest.mark.parametrize(
        "params, n_periods, fit_from, floor_ratio",
        [(DAMPED, 30, 0, 1e-7), (RINGING, 20, 6, 1e-11)],
    )
    def test_bounded_by_spectral_radius(self, params, n_periods, fit_from, floor_ratio):
        sys = build_system(params)
        records = convergence_study(sys, Vec2.zero(), n_periods)
        assert [r.k for r in records] == list(range(n_periods + 1))

        M = monodromy(sys).to_array()
        eigenvalues, V = np.linalg.eig(M)
        rho = float(np.max(np.abs(eigenvalues)))
        kappa = float(np.linalg.cond(V, np.inf))
        anchor = steady_state(sys).x0
        floor = 1e-9 * max(1.0, anchor.norm_inf())

        d0 = records[0].distance
        for record in records:
            bound = kappa * rho**record.k * d0 * (1.0 + 1e-6) + floor
            assert record.distance <= bound

        rate = contraction_rate(records[fit_from:], floor=floor_ratio * d0)
        assert rate == pytest.approx(rho, rel=0.2)

    @pytest.mark.parametrize("params, n_periods", [(RINGING, 60), (DAMPED, 120)])
    def test_converges_from_any_start(self, params, n_periods):
        anchor = steady_state(build_system(params)).x0
        for x_init in random_starts(N_RANDOM_STARTS):
            records = convergence_study(build_system(params), x_init, n_periods)
            assert records[-1].distance <= 1e-9 * max(1.0, anchor.norm_inf()), x_init

    def test_integrator_converges_from_any_start(self):
        sys = build_system(RINGING)
        anchor = steady_state(sys).x0
        for x_init in random_starts(3, seed=32):
            ts = integrate(sys, x_init, 20, IntegratorConfig(output_grid=64))
            final = Vec2(ts.currents[-1], ts.voltages[-1])
            assert (final - anchor).norm_inf() <= 1e-6 * max(1.0, anchor.norm_inf())

    def test_needs_enough_records(self):
        sys = build_system(DAMPED)
        with pytest.raises(DomainError):
            convergence_study(sys, Vec2.zero(), 1)
        records = convergence_study(sys, Vec2.zero(), 5)
        with pytest.raises(DomainError):
            contraction_rate(records, floor=1e9)
