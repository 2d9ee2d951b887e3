"""Full trajectory simulation of the hybrid system and section-point
extraction from real orbits.

Piecewise-linear legs advance by exact flow with first-crossing stitching at
the switching plane.  With the quadratic term enabled the left piece is no
longer linear and advances by an adaptive Dormand-Prince 5(4) pair with
dense-output event location; the right piece stays exact either way.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ._backend import OK
from .flow import engine
from .system import SystemParams, equilibria

__all__ = [
    "TrajectorySegment",
    "VirtualSectionPoint",
    "SimulationError",
    "simulate",
    "extract_section_sequence",
    "settle_to_equilibrium",
    "write_trajectory_csv",
]


class SimulationError(RuntimeError):
    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class TrajectorySegment:
    side: str  # "left" | "right"
    start: np.ndarray
    end: np.ndarray
    t_start: float
    t_end: float
    samples: list[tuple[float, np.ndarray]] = field(default_factory=list)


@dataclass(frozen=True)
class VirtualSectionPoint:
    point: np.ndarray
    kind: str  # "real" | "virtual"
    source_event: np.ndarray | None = None


def _side_of(eng, X: np.ndarray) -> int:
    """0 = left piece, 1 = right piece; near the switching plane (within
    root-solver jitter) the velocity decides."""
    if X[0] < -1e-12:
        return 0
    if X[0] > 1e-12:
        return 1
    vx = eng.velocity(1, X)[0]
    return 1 if vx >= 0 else 0


def simulate(
    p: SystemParams,
    X0: np.ndarray,
    duration: float,
    sample_dt: float = 0.02,
    force_rk: bool = False,
) -> list[TrajectorySegment]:
    """Alternating-side trajectory over ``duration`` with render samples.

    ``force_rk`` drives the left piece through the Runge-Kutta stepper even
    when it is linear (integrator cross-validation).  Raises SimulationError
    on escape or integrator step underflow; the offending state rides on the
    exception.
    """
    if not np.isfinite(duration) or duration < 0:
        raise ValueError("duration must be finite and nonnegative")
    X0 = np.asarray(X0, dtype=float)
    if force_rk:
        from ._backend import Engine, build_pack

        eng = Engine(build_pack(p, force_rk_left=True))
    else:
        eng = engine(p)
    if duration == 0.0:
        side = "left" if _side_of(eng, X0) == 0 else "right"
        return [TrajectorySegment(side, X0.copy(), X0.copy(), 0.0, 0.0, [(0.0, X0.copy())])]
    segs: list[TrajectorySegment] = []
    t = 0.0
    X = X0.copy()
    while True:
        side = _side_of(eng, X)
        remaining = duration - t
        if remaining <= 0:
            break
        if side == 0 and eng.use_rk_left:
            t_leg, X_end, samples = _rk_left_samples(eng, X, t, remaining, sample_dt)
        else:
            t_leg, X_end, samples = _exact_leg_samples(eng, side, X, t, remaining, sample_dt)
        segs.append(
            TrajectorySegment(
                side="left" if side == 0 else "right",
                start=X.copy(),
                end=X_end.copy(),
                t_start=t,
                t_end=t + t_leg,
                samples=samples,
            )
        )
        if np.abs(X_end).max() > eng.escape:
            raise SimulationError("orbit escaped the configured bound", state=X_end)
        t += t_leg
        X = X_end
        if t >= duration - 1e-12:
            break
        if t_leg <= 0:
            raise SimulationError("simulation stalled at the switching plane", state=X)
    return segs


def _exact_leg_samples(eng, side, X, t0, budget, sample_dt):
    """One exact-flow leg: until the switching-plane crossing that leaves the
    current half-space, or until the budget runs out."""
    orient = -1.0 if side == 1 else 1.0  # leaving crossing direction
    trot = eng.halves[side]["trot"]
    elapsed = 0.0
    Xc = X
    t_cross = None
    while elapsed < budget:
        win = min(trot, budget - elapsed)
        st, tc, Xn, o = eng.first_crossing(
            side, Xc, (1.0, 0.0, 0.0), 0.0, 1.0, win, eng.min_time, orient=orient
        )
        if st == 1:
            t_cross = elapsed + tc
            break
        Xc = eng.flow(side, win, Xc)
        elapsed += win
    t_leg = t_cross if t_cross is not None else budget
    n = max(2, int(t_leg / sample_dt) + 1)
    ts = np.linspace(0.0, t_leg, n)
    samples = [(t0 + float(u), eng.flow(side, float(u), X)) for u in ts]
    return t_leg, samples[-1][1], samples


def _rk_left_samples(eng, X, t0, budget, sample_dt):
    """Nonlinear left leg via the kernel's chunked stepper, sampled densely."""
    samples = [(t0, np.asarray(X, dtype=float).copy())]
    t_leg = 0.0
    Xc = np.asarray(X, dtype=float).copy()
    if Xc[0] > -1e-13:
        Xc[0] = -1e-13  # boundary entry with root-solver jitter
    while t_leg < budget:
        step = min(sample_dt, budget - t_leg)
        st, dt, Xn = eng._left_chunk(Xc, step)
        if st != OK:
            raise SimulationError(
                "integrator step-size underflow near tangential contact", state=Xn
            )
        t_leg += dt
        Xc = Xn
        samples.append((t0 + t_leg, Xc.copy()))
        if Xc[0] >= 0.0 and dt < step:
            break  # boundary return located inside the chunk
    return t_leg, Xc, samples


def extract_section_sequence(
    p: SystemParams, X0: np.ndarray, count: int, transient: int = 0
) -> list[VirtualSectionPoint]:
    """Section points realised by the real orbit, one per revolution:
    virtual continuation points for revolutions with an excursion, the real
    crossing otherwise.  Discards ``transient`` leading points."""
    if count < 1:
        raise ValueError("count must be >= 1")
    eng = engine(p)
    st, pts, kinds = eng.section_sequence(np.asarray(X0, dtype=float), int(transient), int(count))
    if st != OK:
        raise SimulationError(
            f"section extraction failed with status {st} after {len(pts)} points",
            state=None,
        )
    return [
        VirtualSectionPoint(point=pts[i].copy(), kind="virtual" if kinds[i] else "real")
        for i in range(len(pts))
    ]


def settle_to_equilibrium(
    p: SystemParams,
    X0: np.ndarray | None = None,
    tol: float = 1e-9,
    t_max: float = 5000.0,
) -> np.ndarray:
    """Run the orbit until it stops moving; returns the settled state.

    Defaults to starting at the piecewise-linear left equilibrium, which for
    the quadratic variant settles onto the perturbed equilibrium nearby.
    Settling is local: an orbit leaving a ball of 50x the starting scale is
    reported as divergent immediately.
    """
    if X0 is None:
        X0 = equilibria(p)[0].location
    if p.mu == 0.0 and np.linalg.norm(X0) == 0.0:
        # both equilibria coincide at the origin; the section geometry the
        # engine needs is degenerate there, and nothing moves anyway
        return np.zeros(3)
    eng = engine(p)
    X0 = np.asarray(X0, dtype=float)
    bound = 50.0 * (1.0 + float(np.abs(X0).max()))
    st, X, t = eng.settle(X0, tol, t_max, bound)
    if st != OK:
        raise SimulationError(
            f"settling did not converge within t={t_max} (status {st})", state=X
        )
    return X


def write_trajectory_csv(path, segments: list[TrajectorySegment]) -> int:
    """Rows t,x,y,z,side; returns the row count."""
    n = 0
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "x", "y", "z", "side"])
        for seg in segments:
            for t, X in seg.samples:
                wr.writerow(
                    [f"{t:.17g}", f"{X[0]:.17g}", f"{X[1]:.17g}", f"{X[2]:.17g}", seg.side]
                )
                n += 1
    return n
