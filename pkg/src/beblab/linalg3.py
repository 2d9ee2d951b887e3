"""Minimal 3D linear algebra for companion-matrix systems.

Vectors and matrices are plain numpy arrays (shape ``(3,)`` and ``(3, 3)``,
float64).  The one genuinely specialised piece is the closed-form matrix
exponential: the spectrum of a companion matrix built from the model's
eigenvalue parameters is known exactly (one real eigenvalue and one complex
pair), so ``e^{tC}`` is evaluated by interpolating the exponential on the
spectrum instead of time-stepping or scaling-and-squaring.  All public
results are real; complex arithmetic never leaves this module (and in fact
never appears: the interpolation is arranged in a real basis).
"""
from __future__ import annotations

from dataclasses import dataclass
from math import cos, exp, sin

import numpy as np

__all__ = [
    "EigenTriple",
    "companion_from_traces",
    "eigen_triple_traces",
    "expm_coeffs",
    "expm_companion",
    "right_eigenvector",
    "left_eigenvector",
]

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])
IDENT = np.eye(3)


@dataclass(frozen=True)
class EigenTriple:
    """Spectrum of one companion piece: ``sign*alpha ± i*beta`` and ``-gamma``.

    ``sign`` is -1 for the contracting complex pair (left piece) and +1 for
    the expanding pair (right piece); ``beta > 0`` always.
    """

    alpha: float
    beta: float
    gamma: float
    sign: int

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.sign not in (-1, 1):
            raise ValueError(f"sign must be -1 or +1, got {self.sign}")

    @property
    def pair_real(self) -> float:
        """Real part of the complex-conjugate eigenvalue pair."""
        return self.sign * self.alpha

    @property
    def real_eig(self) -> float:
        """The real eigenvalue."""
        return -self.gamma

    def traces(self) -> tuple[float, float, float]:
        """(trace, second trace, determinant) of any matrix with this spectrum.

        For eigenvalues a ± ib and c:  tau = 2a + c,
        sigma = a^2 + b^2 + 2ac,  delta = (a^2 + b^2) c.
        """
        a = self.pair_real
        b = self.beta
        c = self.real_eig
        r2 = a * a + b * b
        return 2 * a + c, r2 + 2 * a * c, r2 * c


def companion_from_traces(tau: float, sigma: float, delta: float) -> np.ndarray:
    """Companion matrix with trace ``tau``, second trace ``sigma``,
    determinant ``delta``: first column (tau, -sigma, delta), ones on the
    superdiagonal."""
    return np.array(
        [
            [tau, 1.0, 0.0],
            [-sigma, 0.0, 1.0],
            [delta, 0.0, 0.0],
        ]
    )


def eigen_triple_traces(eig: EigenTriple) -> tuple[float, float, float]:
    return eig.traces()


def right_eigenvector(tau: float, lam: float, delta: float) -> np.ndarray:
    """Right eigenvector of the companion matrix for real eigenvalue ``lam``,
    normalised to first component 1:  (1, lam - tau, delta / lam)."""
    if lam == 0.0:
        raise ValueError("zero eigenvalue has no companion eigenvector of this form")
    return np.array([1.0, lam - tau, delta / lam])


def left_eigenvector(lam: float) -> np.ndarray:
    """Left eigenvector of any companion matrix for eigenvalue ``lam``:
    (lam^2, lam, 1)."""
    return np.array([lam * lam, lam, 1.0])


def expm_coeffs(a: float, b: float, c: float, t: float) -> tuple[float, float, float]:
    """Interpolation coefficients for ``e^{tC}`` on the spectrum {a±ib, c}.

    Returns (A, B, G) such that

        e^{tC} = A*I + B*(C - a I) + G*((C - a I)^2 + b^2 I)

    for any matrix C with that spectrum.  The basis {1, (l-a), (l-a)^2+b^2}
    keeps everything real: the quadratic term vanishes on the pair, so A and
    B are fixed by the pair alone and G by the real eigenvalue.
    """
    ea = exp(a * t)
    A = ea * cos(b * t)
    B = ea * sin(b * t) / b
    G = (exp(c * t) - A - (c - a) * B) / ((c - a) ** 2 + b * b)
    return A, B, G


def expm_companion(C: np.ndarray, eig: EigenTriple, t: float) -> np.ndarray:
    """``e^{tC}`` for a companion matrix with the given verified spectrum.

    Exact up to roundoff; no time-stepping.
    """
    a = eig.pair_real
    A, B, G = expm_coeffs(a, eig.beta, eig.real_eig, t)
    M1 = C - a * IDENT
    M2 = M1 @ M1 + (eig.beta**2) * IDENT
    return A * IDENT + B * M1 + G * M2
