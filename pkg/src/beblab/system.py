"""System definition: eigenvalue parameters, companion matrices, equilibria,
and the section/subspace geometry used by the return map.

The default parameter values are the chaotic reference configuration used
throughout the test-suite and CLI (stable spiral on the left of the switching
plane, expanding saddle-focus spiral on the right, boundary parameter mu = 1).
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .linalg3 import (
    E3,
    EigenTriple,
    companion_from_traces,
    left_eigenvector,
    right_eigenvector,
)

__all__ = [
    "ConfigurationError",
    "SystemParams",
    "DerivedTraces",
    "Equilibrium",
    "SectionGeometry",
    "derive_traces",
    "companion_matrices",
    "eigen_triples",
    "equilibria",
    "section_geometry",
    "line_g",
]


class ConfigurationError(ValueError):
    """Raised for parameter sets outside the supported regime."""


@dataclass(frozen=True)
class SystemParams:
    """Six eigenvalue parameters, the boundary parameter mu, and the flag
    enabling the quadratic x*y term on the left piece.

    All six eigenvalue parameters must be strictly positive: the left piece
    has eigenvalues -alpha_L ± i beta_L, -gamma_L (attracting), the right
    piece alpha_R ± i beta_R, -gamma_R (saddle focus).
    """

    alpha_L: float = 0.3
    beta_L: float = 4.0
    gamma_L: float = 0.05
    alpha_R: float = 0.02
    beta_R: float = 1.0
    gamma_R: float = 1.0
    mu: float = 1.0
    nonlinear: bool = False

    def __post_init__(self) -> None:
        for name in ("alpha_L", "beta_L", "gamma_L", "alpha_R", "beta_R", "gamma_R"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0:
                raise ConfigurationError(f"{name} must be strictly positive, got {val}")
        if not np.isfinite(self.mu):
            raise ConfigurationError(f"mu must be finite, got {self.mu}")

    def with_mu(self, mu: float) -> "SystemParams":
        return replace(self, mu=mu)

    def with_gamma_L(self, gamma_L: float) -> "SystemParams":
        return replace(self, gamma_L=gamma_L)


@dataclass(frozen=True)
class DerivedTraces:
    tau_L: float
    sigma_L: float
    delta_L: float
    tau_R: float
    sigma_R: float
    delta_R: float


@dataclass(frozen=True)
class Equilibrium:
    location: np.ndarray
    side: str  # "left" | "right"
    admissible: bool


@dataclass(frozen=True)
class SectionGeometry:
    """Section plane and invariant-subspace data of the right piece.

    The section is the plane through ``X_R`` spanned by ``span1 = X_R - X_int``
    and the stable direction ``v``; ``normal`` is the unit plane normal.
    ``w`` is the left eigenvector normal to the unstable plane.
    """

    v: np.ndarray
    w: np.ndarray
    X_int: np.ndarray
    X_R: np.ndarray
    span1: np.ndarray
    normal: np.ndarray

    @property
    def plane_offset(self) -> float:
        return float(self.normal @ self.X_R)


def derive_traces(p: SystemParams) -> DerivedTraces:
    """Trace, second trace, and determinant of each piece from the eigenvalue
    parameters."""
    rL = p.alpha_L**2 + p.beta_L**2
    rR = p.alpha_R**2 + p.beta_R**2
    return DerivedTraces(
        tau_L=-2 * p.alpha_L - p.gamma_L,
        sigma_L=rL + 2 * p.alpha_L * p.gamma_L,
        delta_L=-rL * p.gamma_L,
        tau_R=2 * p.alpha_R - p.gamma_R,
        sigma_R=rR - 2 * p.alpha_R * p.gamma_R,
        delta_R=-rR * p.gamma_R,
    )


def companion_matrices(p: SystemParams) -> tuple[np.ndarray, np.ndarray]:
    tr = derive_traces(p)
    CL = companion_from_traces(tr.tau_L, tr.sigma_L, tr.delta_L)
    CR = companion_from_traces(tr.tau_R, tr.sigma_R, tr.delta_R)
    return CL, CR


def eigen_triples(p: SystemParams) -> tuple[EigenTriple, EigenTriple]:
    return (
        EigenTriple(p.alpha_L, p.beta_L, p.gamma_L, sign=-1),
        EigenTriple(p.alpha_R, p.beta_R, p.gamma_R, sign=+1),
    )


def equilibria(p: SystemParams) -> tuple[Equilibrium, Equilibrium]:
    """The two potential equilibria with their admissibility.

    The left one is an equilibrium of the full system only when its first
    component is <= 0, the right one when it is >= 0; otherwise the point is
    virtual.
    """
    tr = derive_traces(p)
    XL = (p.mu / tr.delta_L) * np.array([-1.0, tr.tau_L, -tr.sigma_L])
    XR = (p.mu / tr.delta_R) * np.array([-1.0, tr.tau_R, -tr.sigma_R])
    return (
        Equilibrium(XL, "left", admissible=bool(XL[0] <= 0.0)),
        Equilibrium(XR, "right", admissible=bool(XR[0] >= 0.0)),
    )


def section_geometry(p: SystemParams) -> SectionGeometry:
    """Eigen-directions of the right piece and the section plane.

    ``v`` spans the stable line (right eigenvector for -gamma_R), ``w`` is
    normal to the unstable plane (left eigenvector), ``X_int`` is the point
    where the grazing line (the z-axis) meets the unstable plane.
    """
    tr = derive_traces(p)
    v = right_eigenvector(tr.tau_R, -p.gamma_R, tr.delta_R)
    w = left_eigenvector(-p.gamma_R)
    X_int = (p.mu / p.gamma_R) * E3
    _, eqR = equilibria(p)
    X_R = eqR.location
    span1 = X_R - X_int
    normal = np.cross(span1, v)
    nn = np.linalg.norm(normal)
    sn = np.linalg.norm(span1)
    if sn == 0.0 or nn < 1e-12 * sn * np.linalg.norm(v):
        raise ConfigurationError(
            "degenerate section: X_R - X_int is parallel to the stable direction"
        )
    return SectionGeometry(v=v, w=w, X_int=X_int, X_R=X_R, span1=span1, normal=normal / nn)


def line_g(p: SystemParams, x: float) -> np.ndarray:
    """Point of the line (section plane) ∩ (unstable plane) with first
    component ``x``.

    Built constructively as X_R + s*(X_R - X_int) with s chosen to hit the
    requested first component; both anchor points lie in the unstable plane
    and on the section, so the result does too.  Closed form:

        g(x) = (x, (gamma_R - 2 alpha_R) x, -2 alpha_R gamma_R x + mu / gamma_R)
    """
    geo = section_geometry(p)
    xR = geo.X_R[0]
    if xR == 0.0:
        raise ConfigurationError("mu = 0 degenerates the section-unstable line")
    s = x / xR - 1.0
    return geo.X_R + s * geo.span1
