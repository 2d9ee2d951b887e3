"""Two-dimensional return map on the section plane.

The map factors as one revolution about the right equilibrium (diagonal in
section coordinates) after a correction step that accounts for the excursion
into the left half-space, evaluated through virtual extensions of the
right-piece flow.  Everything is integrator-free: each leg is an exact flow
plus a root solve for the crossing time.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _backend
from ._backend import OK
from .flow import engine
from .system import SystemParams

__all__ = [
    "SectionPoint",
    "DiscontinuityTrace",
    "MapEvaluationError",
    "ExcursionEscapeError",
    "OffSectionError",
    "chart",
    "unchart",
    "global_map",
    "global_multipliers",
    "disc_map",
    "return_map",
    "iterate_x",
    "iterate_points",
    "trace_to_json",
]

CHART_RESIDUAL_BOUND = 1e-8


class MapEvaluationError(RuntimeError):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


class ExcursionEscapeError(MapEvaluationError):
    pass


class OffSectionError(ValueError):
    pass


@dataclass(frozen=True)
class SectionPoint:
    """Section-plane coordinates: X = X_R + c1 (X_R - X_int) + c2 v."""

    c1: float
    c2: float


@dataclass(frozen=True)
class DiscontinuityTrace:
    """Labelled intersection sequence of one correction-step evaluation."""

    identity: bool
    X0: np.ndarray
    X1: np.ndarray | None
    X3: np.ndarray | None
    X4: np.ndarray
    t1: float
    t3: float
    t4: float
    X2: np.ndarray | None = None
    t2: float | None = None
    candidates: int = 0
    identity_clean: bool = True

    def as_dict(self) -> dict:
        def arr(a):
            return None if a is None else [float(x) for x in a]

        return {
            "identity": self.identity,
            "identity_clean": self.identity_clean,
            "candidates": self.candidates,
            "X0": arr(self.X0),
            "X1": arr(self.X1),
            "t1": self.t1,
            "X2": arr(self.X2),
            "t2": self.t2,
            "X3": arr(self.X3),
            "t3": self.t3,
            "X4": arr(self.X4),
            "t4": self.t4,
        }


def _raise_for_status(status: int) -> None:
    if status == _backend.ERR_NO_X3:
        raise ExcursionEscapeError(status, "left-piece excursion did not return to the switching plane")
    if status == _backend.ERR_NO_X4:
        raise MapEvaluationError(status, "no backward section crossing within one revolution")
    if status == _backend.ERR_ESCAPE:
        raise MapEvaluationError(status, "orbit escaped the configured bound")
    if status == _backend.ERR_STEP_UNDERFLOW:
        raise MapEvaluationError(status, "integrator step-size underflow near tangential contact")
    if status != OK:
        raise MapEvaluationError(status, f"map evaluation failed with status {status}")


def chart(p: SystemParams, X: np.ndarray) -> SectionPoint:
    """Section coordinates of a point on the section plane.

    Raises OffSectionError when the projection residual exceeds 1e-8.
    """
    c1, c2, resid = engine(p).chart(np.asarray(X, dtype=float))
    if resid > CHART_RESIDUAL_BOUND:
        raise OffSectionError(
            f"point is off the section plane: projected residual {resid:.3e} > {CHART_RESIDUAL_BOUND:.0e}"
        )
    return SectionPoint(float(c1), float(c2))


def unchart(p: SystemParams, s: SectionPoint) -> np.ndarray:
    return engine(p).unchart(s.c1, s.c2)


def global_multipliers(p: SystemParams) -> tuple[float, float]:
    """Per-revolution multipliers on (c1, c2)."""
    eng = engine(p)
    return eng.m1, eng.m2


def global_map(p: SystemParams, s: SectionPoint) -> SectionPoint:
    """One revolution about the right equilibrium in section coordinates."""
    m1, m2 = global_multipliers(p)
    return SectionPoint(m1 * s.c1, m2 * s.c2)


def _trace_from_array(X0: np.ndarray, t: np.ndarray) -> DiscontinuityTrace:
    identity = t[0] != 0.0
    has2 = t[16] != 0.0
    return DiscontinuityTrace(
        identity=bool(identity),
        X0=np.asarray(X0, dtype=float),
        X1=None if identity else t[5:8].copy(),
        X3=None if identity else t[9:12].copy(),
        X4=t[13:16].copy(),
        t1=float(t[4]),
        t3=float(t[8]),
        t4=float(t[12]),
        X2=t[18:21].copy() if has2 else None,
        t2=float(t[17]) if has2 else None,
        candidates=int(t[1]),
        identity_clean=bool(t[3] != 0.0) if identity else True,
    )


def disc_map(p: SystemParams, X0: np.ndarray) -> DiscontinuityTrace:
    """Correction step: resolve the excursion associated with a section point.

    The outgoing switching-plane crossing is searched within half a
    revolution either side of the section passage; when none exists the
    correction is the identity (any later dip belongs to the next passage).
    """
    X0 = np.asarray(X0, dtype=float)
    st, X4, trace = engine(p).disc_map(X0, want_x2=True)
    _raise_for_status(st)
    return _trace_from_array(X0, trace)


def return_map(p: SystemParams, X0: np.ndarray) -> tuple[np.ndarray, DiscontinuityTrace]:
    """Full section map evaluation with its labelled trace."""
    X0 = np.asarray(X0, dtype=float)
    st, X5, trace = engine(p).return_map(X0, want_trace=True)
    _raise_for_status(st)
    return X5, _trace_from_array(X0, trace)


def iterate_x(p: SystemParams, X0: np.ndarray, n_transient: int, n_keep: int) -> np.ndarray:
    """First components of kept map iterates (batch kernel path)."""
    st, fail, xs = engine(p).iterate_x(np.asarray(X0, dtype=float), int(n_transient), int(n_keep))
    if st != OK:
        raise MapEvaluationError(st, f"iteration failed at step {fail} (status {st})")
    return xs


def iterate_points(p: SystemParams, X0: np.ndarray, n_transient: int, n_keep: int) -> np.ndarray:
    """Kept map iterates as full states, shape (n_keep, 3)."""
    st, fail, pts = engine(p).iterate_points(np.asarray(X0, dtype=float), int(n_transient), int(n_keep))
    if st != OK:
        raise MapEvaluationError(st, f"iteration failed at step {fail} (status {st})")
    return pts


def trace_to_json(trace: DiscontinuityTrace, indent: int = 2) -> str:
    return json.dumps(trace.as_dict(), indent=indent)
