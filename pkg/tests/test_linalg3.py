import numpy as np
import pytest
from scipy.linalg import expm as scipy_expm

from beblab.linalg3 import (
    EigenTriple,
    companion_from_traces,
    expm_companion,
    left_eigenvector,
    right_eigenvector,
)


def test_companion_zero_traces():
    C = companion_from_traces(0.0, 0.0, 0.0)
    assert C[0, 0] == 0 and C[1, 0] == 0 and C[2, 0] == 0
    assert C[0, 1] == 1.0 and C[1, 2] == 1.0
    assert np.trace(C) == 0.0 and np.linalg.det(C) == 0.0


def test_companion_example_left_right():
    # left piece: alpha=0.3, beta=4, gamma=0.05 through the trace formulas
    C_L = companion_from_traces(-0.65, 16.12, -0.8045)
    assert np.isclose(np.trace(C_L), -0.65)
    assert np.isclose(np.linalg.det(C_L), -0.8045)
    ev = np.sort_complex(np.linalg.eigvals(C_L))
    expect = np.sort_complex(np.array([-0.3 + 4j, -0.3 - 4j, -0.05]))
    assert np.allclose(ev, expect, atol=1e-10)

    C_R = companion_from_traces(-0.96, 0.9604, -1.0004)
    ev = np.sort_complex(np.linalg.eigvals(C_R))
    expect = np.sort_complex(np.array([0.02 + 1j, 0.02 - 1j, -1.0]))
    assert np.allclose(ev, expect, atol=1e-10)


def test_eigen_triple_traces_roundtrip():
    rng = np.random.default_rng(7)
    for _ in range(200):
        alpha, beta, gamma = rng.uniform(0.01, 5.0, 3)
        for sign in (-1, 1):
            eig = EigenTriple(alpha, beta, gamma, sign)
            tau, sigma, delta = eig.traces()
            C = companion_from_traces(tau, sigma, delta)
            assert abs(np.trace(C) - tau) < 1e-12
            assert abs(np.linalg.det(C) - delta) < 1e-12 * max(1, abs(delta))
            # characteristic polynomial reproduces the requested spectrum
            ev = np.linalg.eigvals(C)
            real = min(ev, key=lambda z: abs(z.imag))
            assert abs(real - (-gamma)) < 1e-8 * max(1, gamma)


def test_eigen_triple_validation():
    with pytest.raises(ValueError):
        EigenTriple(0.3, -1.0, 0.05, 1)
    with pytest.raises(ValueError):
        EigenTriple(0.3, 1.0, 0.05, 2)


def test_eigenvector_residuals():
    rng = np.random.default_rng(11)
    for _ in range(100):
        alpha, beta, gamma = rng.uniform(0.01, 5.0, 3)
        eig = EigenTriple(alpha, beta, gamma, 1)
        tau, sigma, delta = eig.traces()
        C = companion_from_traces(tau, sigma, delta)
        v = right_eigenvector(tau, -gamma, delta)
        assert np.linalg.norm(C @ v + gamma * v) <= 1e-10 * np.linalg.norm(v) * max(1, gamma, sigma)
        w = left_eigenvector(-gamma)
        assert np.linalg.norm(w @ C + gamma * w) <= 1e-10 * np.linalg.norm(w) * max(1, gamma, sigma)


class TestExpm:
    eig_R = EigenTriple(0.02, 1.0, 1.0, 1)
    C_R = companion_from_traces(*eig_R.traces())

    def test_identity_at_zero(self):
        assert np.allclose(expm_companion(self.C_R, self.eig_R, 0.0), np.eye(3), atol=1e-15)

    def test_semigroup(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            t1, t2 = rng.uniform(-5, 5, 2)
            E1v = expm_companion(self.C_R, self.eig_R, t1)
            E2v = expm_companion(self.C_R, self.eig_R, t2)
            E12 = expm_companion(self.C_R, self.eig_R, t1 + t2)
            assert np.allclose(E1v @ E2v, E12, atol=1e-12 * np.abs(E12).max() + 1e-12)

    def test_against_scipy(self):
        rng = np.random.default_rng(5)
        for _ in range(40):
            alpha, beta, gamma = rng.uniform(0.02, 4.0, 3)
            sign = 1 if rng.uniform() < 0.5 else -1
            eig = EigenTriple(alpha, beta, gamma, sign)
            C = companion_from_traces(*eig.traces())
            t = rng.uniform(-4, 4)
            ours = expm_companion(C, eig, t)
            ref = scipy_expm(t * C)
            assert np.allclose(ours, ref, atol=1e-11 * max(1.0, np.abs(ref).max()))

    def test_stable_eigvector_decay_one_period(self):
        # e^{(2 pi / beta) C} scales the stable eigenvector by e^{-2 pi gamma / beta}
        v = right_eigenvector(-0.96, -1.0, -1.0004)
        E = expm_companion(self.C_R, self.eig_R, 2 * np.pi / 1.0)
        got = E @ v
        factor = np.exp(-2 * np.pi)
        assert np.isclose(factor, 0.0018674, atol=2e-7)
        assert np.allclose(got, factor * v, atol=1e-12)

    def test_derivative_at_zero_is_matrix(self):
        h = 1e-4
        Ep = expm_companion(self.C_R, self.eig_R, h)
        Em = expm_companion(self.C_R, self.eig_R, -h)
        assert np.allclose((Ep - Em) / (2 * h), self.C_R, atol=1e-6)

    def test_determinant_identity(self):
        rng = np.random.default_rng(13)
        for _ in range(30):
            t = rng.uniform(-6, 6)
            E = expm_companion(self.C_R, self.eig_R, t)
            assert np.isclose(
                np.linalg.det(E), np.exp(t * np.trace(self.C_R)), rtol=1e-10
            )
