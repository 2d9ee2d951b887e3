"""Exact time-t flow of each affine piece and first-crossing location against
a plane (the switching plane x = 0 or the section plane).

Crossing searches bracket by uniform scan at a fraction of the piece's
rotation period, then polish with a safeguarded bracketed root finder; a
tangential contact whose event value stays within the grazing tolerance is
reported as a distinct grazing event rather than a crossing.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import pi

import numpy as np

from ._backend import Engine, KernelTolerances, build_pack
from .linalg3 import EigenTriple
from .system import SystemParams, companion_matrices, eigen_triples, equilibria

__all__ = [
    "Plane",
    "HalfFlow",
    "CrossingEvent",
    "FlowError",
    "switching_plane",
    "section_plane",
    "half_flows",
    "flow",
    "first_crossing",
]


class FlowError(RuntimeError):
    pass


@dataclass(frozen=True)
class Plane:
    """Scalar surface n.X = offset."""

    normal: np.ndarray
    offset: float
    name: str


@dataclass(frozen=True)
class HalfFlow:
    """One affine piece with cached eigen-structure for exact flow."""

    matrix: np.ndarray
    eig: EigenTriple
    equilibrium: np.ndarray
    side: str  # "left" | "right"
    params: SystemParams

    @property
    def rotation_period(self) -> float:
        return 2 * pi / self.eig.beta

    def velocity(self, X: np.ndarray) -> np.ndarray:
        return self.matrix @ X + np.array([0.0, 0.0, self.params.mu])


@dataclass(frozen=True)
class CrossingEvent:
    time: float
    point: np.ndarray
    surface: str
    orientation: float  # sign of normal . velocity; 0 for grazing contact
    grazing: bool = False


def switching_plane() -> Plane:
    return Plane(np.array([1.0, 0.0, 0.0]), 0.0, "switching_plane")


def section_plane(p: SystemParams) -> Plane:
    from .system import section_geometry

    geo = section_geometry(p)
    return Plane(geo.normal, geo.plane_offset, "section")


def half_flows(p: SystemParams) -> tuple[HalfFlow, HalfFlow]:
    CL, CR = companion_matrices(p)
    eigL, eigR = eigen_triples(p)
    eqL, eqR = equilibria(p)
    return (
        HalfFlow(CL, eigL, eqL.location, "left", p),
        HalfFlow(CR, eigR, eqR.location, "right", p),
    )


def _engine_for(p: SystemParams, tols: KernelTolerances | None = None) -> Engine:
    return Engine(build_pack(p, tols))


_engine_cache: dict[SystemParams, Engine] = {}


def engine(p: SystemParams) -> Engine:
    """Default-tolerance kernel engine for a parameter set (cached)."""
    got = _engine_cache.get(p)
    if got is None:
        if len(_engine_cache) > 256:
            _engine_cache.clear()
        got = _engine_for(p)
        _engine_cache[p] = got
    return got


def flow(h: HalfFlow, t: float, X0: np.ndarray) -> np.ndarray:
    """Exact state at time t: equilibrium + e^{t C}(X0 - equilibrium)."""
    eng = engine(h.params)
    return eng.flow(0 if h.side == "left" else 1, float(t), np.asarray(X0, dtype=float))


def first_crossing(
    h: HalfFlow,
    X0: np.ndarray,
    surface: Plane,
    direction: str = "forward",
    window: float | None = None,
    min_time: float = 1e-9,
) -> CrossingEvent | None:
    """First crossing of ``surface`` with ``min_time < |t| <= window``.

    ``direction`` is "forward" or "backward"; a grazing contact encountered
    before any transversal crossing is returned with ``grazing=True`` and
    zero orientation.  ``None`` means no event inside the window.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    if window is None:
        window = h.rotation_period
    if not window > min_time >= 0:
        raise ValueError("need window > min_time >= 0")
    eng = engine(h.params)
    side = 0 if h.side == "left" else 1
    d = 1.0 if direction == "forward" else -1.0
    st, t, Xc, orient = eng.first_crossing(
        side,
        np.asarray(X0, dtype=float),
        (float(surface.normal[0]), float(surface.normal[1]), float(surface.normal[2])),
        float(surface.offset),
        d,
        float(window),
        float(min_time),
    )
    if st == 0:
        return None
    if st == 2:
        return CrossingEvent(float(t), Xc, surface.name, 0.0, grazing=True)
    return CrossingEvent(float(t), Xc, surface.name, float(orient))
