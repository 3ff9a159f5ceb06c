#!/usr/bin/env python3

import math

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from flycap.errors import DomainError, SingularMatrix
from flycap.mat2 import (
    IDENTITY,
    ExpmBranch,
    Mat2,
    Vec2,
    charpoly,
    det,
    expm1_closed,
    expm_closed,
    expm_squaring,
    half_discriminant,
    inverse,
)

ENTRY_BOUND = 4.0
N_ORACLE = 10_000
N_FLOW = 2_000

matrices = arrays(
    np.float64,
    (2, 2),
    elements=st.floats(
        min_value=-ENTRY_BOUND,
        max_value=ENTRY_BOUND,
        allow_nan=False,
        allow_infinity=False,
    ),
).map(Mat2.from_array)


def norm_inf(A: Mat2) -> float:
    return max(abs(A.m11) + abs(A.m12), abs(A.m21) + abs(A.m22))


class TestMat2Algebra:
    def test_rejects_non_finite_entries(self):
        with pytest.raises(DomainError):
            Mat2(1.0, float("nan"), 0.0, 1.0)
        with pytest.raises(DomainError):
            Vec2(float("inf"), 0.0)

    def test_products(self):
        A = Mat2(1.0, 2.0, 3.0, 4.0)
        B = Mat2(0.0, 1.0, -1.0, 0.0)
        assert A @ B == Mat2(-2.0, 1.0, -4.0, 3.0)
        assert A @ Vec2(1.0, -1.0) == Vec2(-1.0, -1.0)
        assert A @ IDENTITY == A

    def test_inverse_and_singular(self):
        A = Mat2(4.0, 7.0, 2.0, 6.0)
        np.testing.assert_allclose(
            (A @ inverse(A)).to_array(), np.eye(2), atol=1e-15
        )
        with pytest.raises(SingularMatrix):
            inverse(Mat2(1.0, 2.0, 2.0, 4.0))

    def test_half_discriminant(self):
        A = Mat2(-4000.0, -4000.0, 10000.0, 0.0)
        tau, d = A.trace(), det(A)
        assert half_discriminant(A) == pytest.approx(tau * tau / 4.0 - d, rel=1e-15)

    @seed(1)
    @settings(max_examples=200, deadline=None)
    @given(A=matrices)
    def test_cayley_hamilton(self, A: Mat2):
        p = charpoly(A)
        residual = A @ A + A.scale(p.alpha) + IDENTITY.scale(p.beta)
        scale = 1.0 + norm_inf(A) ** 2
        assert residual.frobenius_norm() <= 1e-13 * scale

    @seed(2)
    @settings(max_examples=200, deadline=None)
    @given(A=matrices, B=matrices)
    def test_det_is_multiplicative(self, A: Mat2, B: Mat2):
        scale = (norm_inf(A) * norm_inf(B)) ** 2
        assert abs(det(A @ B) - det(A) * det(B)) <= 1e-13 * (1.0 + scale)


class TestExpm:
    def test_diagonal(self):
        E = expm_closed(Mat2.diag(1.0, 2.0))
        np.testing.assert_allclose(
            E.to_array(), np.diag([math.e, math.exp(2.0)]), rtol=1e-14, atol=1e-15
        )

    def test_rotation(self):
        t = 0.7
        E = expm_closed(Mat2(0.0, t, -t, 0.0))
        expected = [[math.cos(t), math.sin(t)], [-math.sin(t), math.cos(t)]]
        np.testing.assert_allclose(E.to_array(), expected, rtol=1e-14, atol=1e-15)

    def test_nilpotent_and_scalar(self):
        assert expm_closed(Mat2(0.0, 1.0, 0.0, 0.0)) == Mat2(1.0, 1.0, 0.0, 1.0)
        E = expm_closed(IDENTITY.scale(-3.0))
        np.testing.assert_allclose(
            E.to_array(), math.exp(-3.0) * np.eye(2), rtol=1e-15, atol=0.0
        )

    @pytest.mark.parametrize("sign", [1.0, -1.0])
    def test_branches_agree_near_repeated_eigenvalues(self, sign: float):
        # tau^2/4 - det = +-1e-9 puts each exact branch next to the series one
        A = Mat2(-1.0, 1e-4, sign * 1e-5, -1.0)
        assert half_discriminant(A) == pytest.approx(sign * 1e-9, rel=1e-12)
        series = expm_closed(A, ExpmBranch.SERIES)
        exact = expm_closed(A, ExpmBranch.EXACT)
        np.testing.assert_allclose(
            series.to_array(), exact.to_array(), rtol=1e-12, atol=1e-15
        )

    def test_overflow_is_a_domain_error(self):
        with pytest.raises(DomainError):
            expm_closed(IDENTITY.scale(800.0))

    def test_closed_form_matches_squaring(self):
        rng = np.random.default_rng(11)
        worst = 0.0
        for entries in rng.uniform(-10.0, 10.0, size=(N_ORACLE, 2, 2)):
            A = Mat2.from_array(entries)
            oracle = expm_squaring(A)
            error = (expm_closed(A) - oracle).frobenius_norm()
            worst = max(worst, error / oracle.frobenius_norm())
        assert worst <= 1e-12

    def test_flow_property(self):
        rng = np.random.default_rng(12)
        for _ in range(N_FLOW):
            A = Mat2.from_array(rng.uniform(-10.0, 10.0, size=(2, 2)))
            t, s = rng.uniform(0.0, 2.0, size=2)
            Et, Es = expm_closed(A.scale(t)), expm_closed(A.scale(s))
            error = (Et @ Es - expm_closed(A.scale(t + s))).frobenius_norm()
            scale = Et.frobenius_norm() * Es.frobenius_norm()
            assert error <= 1e-10 * scale, f"A={A} t={t} s={s}"

    @seed(4)
    @settings(max_examples=300, deadline=None)
    @given(A=matrices)
    def test_liouville(self, A: Mat2):
        E = expm_closed(A)
        expected = math.exp(A.trace())
        tol = 1e-12 * (math.exp(2.0 * norm_inf(A)) + expected)
        assert abs(det(E) - expected) <= tol

    @seed(5)
    @settings(max_examples=200, deadline=None)
    @given(A=matrices)
    def test_expm1_plus_identity(self, A: Mat2):
        np.testing.assert_allclose(
            (expm1_closed(A) + IDENTITY).to_array(),
            expm_closed(A).to_array(),
            rtol=1e-12,
            atol=1e-13 * math.exp(norm_inf(A)),
        )

    def test_expm1_keeps_small_matrices_accurate(self):
        A = Mat2(-4000.0, -4000.0, 10000.0, 0.0).scale(1e-12)
        A2 = A @ A
        expected = A + A2.scale(0.5) + (A2 @ A).scale(1.0 / 6.0)
        np.testing.assert_allclose(
            expm1_closed(A).to_array(), expected.to_array(), rtol=1e-12, atol=0.0
        )
