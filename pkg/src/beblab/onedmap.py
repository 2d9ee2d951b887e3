"""One-dimensional reduction of the section map.

``f(x)`` is the first component of the section map evaluated on the line
where the section meets the unstable plane.  Because the map contracts
strongly onto that line, ``f`` captures the dynamics well; this module
provides its evaluation, iteration, a covering diagnostic for interval
images, the critical point, and a Lyapunov exponent estimate.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from math import log

import numpy as np

from .flow import engine
from .retmap import MapEvaluationError
from .system import SystemParams

__all__ = [
    "MapProfile",
    "CoveringReport",
    "LyapunovEstimate",
    "eval_f",
    "iterate_f",
    "eval_fn",
    "critical_point",
    "covering_check",
    "lyapunov_f",
    "profile",
    "write_profile_csv",
]


@dataclass(frozen=True)
class MapProfile:
    grid: np.ndarray
    values: np.ndarray
    critical_x: float
    lyapunov: float | None


@dataclass(frozen=True)
class CoveringReport:
    interval: tuple[float, float]
    power: int
    image_min: float
    image_max: float
    endpoint_images: tuple[float, float]
    endpoints_mapped_outside: bool
    covers: bool
    grid_size: int


@dataclass(frozen=True)
class LyapunovEstimate:
    value: float
    n_samples: int
    n_excluded: int
    fd_step: float

    def __float__(self) -> float:
        return self.value


def eval_f(p: SystemParams, x: float) -> float:
    """First component of the section map at the unstable-line point with
    first component ``x``."""
    eng = engine(p)
    st, X5, _ = eng.return_map(_g_state(p, x))
    if st != 0:
        raise MapEvaluationError(st, f"f evaluation failed at x={x} (status {st})")
    return float(X5[0])


def _g_state(p: SystemParams, x: float) -> np.ndarray:
    eng = engine(p)
    xR = eng.XR[0]
    s = x / xR - 1.0
    return np.array(
        [
            eng.XR[0] + s * eng.span[0],
            eng.XR[1] + s * eng.span[1],
            eng.XR[2] + s * eng.span[2],
        ]
    )


def iterate_f(p: SystemParams, x0: float, n: int) -> np.ndarray:
    """Orbit (x0, f(x0), ..., f^n(x0)) of length n+1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = np.empty(n + 1)
    out[0] = x0
    x = x0
    for i in range(n):
        x = eval_f(p, x)
        out[i + 1] = x
    return out


def eval_fn(p: SystemParams, x: float, n: int) -> float:
    """n-fold composition f^n(x)."""
    for _ in range(n):
        x = eval_f(p, x)
    return x


def critical_point(p: SystemParams, interval: tuple[float, float], grid: int = 400) -> float:
    """Interior critical point of f on ``interval``: grid bracket of the
    extremum (either polarity) followed by golden-section refinement."""
    a, b = interval
    xs = np.linspace(a, b, grid)
    vals = np.array([eval_f(p, float(u)) for u in xs])
    dv = np.diff(vals)
    flips = np.where(np.sign(dv[:-1]) * np.sign(dv[1:]) < 0)[0]
    if len(flips) == 0:
        raise ValueError("no interior critical point on the given interval")
    i = int(flips[0]) + 1
    lo, hi = xs[i - 1], xs[i + 1]
    sign = 1.0 if vals[i] >= max(vals[i - 1], vals[i + 1]) else -1.0

    def obj(u: float) -> float:
        return sign * eval_f(p, u)

    gr = 0.6180339887498949
    c = hi - gr * (hi - lo)
    d = lo + gr * (hi - lo)
    fc, fd = obj(c), obj(d)
    while hi - lo > 1e-11 * max(1.0, abs(hi)):
        if fc > fd:
            hi, d, fd = d, c, fc
            c = hi - gr * (hi - lo)
            fc = obj(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + gr * (hi - lo)
            fd = obj(d)
    return 0.5 * (lo + hi)


def covering_check(
    p: SystemParams, interval: tuple[float, float], n: int, grid: int = 2001
) -> CoveringReport:
    """Evaluate f^n on a dense grid over ``interval`` and report whether the
    image folds over it with both endpoint images outside."""
    a, b = interval
    if not a < b:
        raise ValueError("interval must satisfy a < b")
    xs = np.linspace(a, b, grid)
    vals = np.array([eval_fn(p, float(u), n) for u in xs])
    fa, fb = float(vals[0]), float(vals[-1])
    outside = (fa < a or fa > b) and (fb < a or fb > b)
    covers = bool(vals.min() <= a and vals.max() >= b)
    return CoveringReport(
        interval=(a, b),
        power=n,
        image_min=float(vals.min()),
        image_max=float(vals.max()),
        endpoint_images=(fa, fb),
        endpoints_mapped_outside=bool(outside),
        covers=covers,
        grid_size=grid,
    )


def lyapunov_f(
    p: SystemParams,
    x0: float,
    n_transient: int,
    n: int,
    fd_step: float | None = None,
) -> LyapunovEstimate:
    """Average log-slope along the orbit after transient.

    The derivative is taken by central differences with a step scaled to the
    attractor width (1e-7 at the reference width of 0.008); samples whose
    |slope| falls below 1e-14 are excluded and counted.
    """
    if n < 1000:
        raise ValueError("n must be at least 1000 for a stable estimate")
    x = x0
    for _ in range(n_transient):
        x = eval_f(p, x)
    if fd_step is None:
        probe = np.empty(min(n, 400))
        xt = x
        for i in range(len(probe)):
            xt = eval_f(p, xt)
            probe[i] = xt
        width = max(probe.max() - probe.min(), 1e-6)
        fd_step = (1e-7 / 0.008) * width
    total = 0.0
    used = 0
    excluded = 0
    for _ in range(n):
        d = (eval_f(p, x + fd_step) - eval_f(p, x - fd_step)) / (2 * fd_step)
        if abs(d) < 1e-14:
            excluded += 1
        else:
            total += log(abs(d))
            used += 1
        x = eval_f(p, x)
    return LyapunovEstimate(total / max(used, 1), used, excluded, fd_step)


def profile(
    p: SystemParams,
    interval: tuple[float, float],
    grid: int = 400,
    with_lyapunov: bool = False,
    x0: float | None = None,
) -> MapProfile:
    a, b = interval
    xs = np.linspace(a, b, grid)
    vals = np.array([eval_f(p, float(u)) for u in xs])
    crit = critical_point(p, interval, grid=min(grid, 400))
    lya = None
    if with_lyapunov:
        lya = lyapunov_f(p, x0 if x0 is not None else crit, 500, 2000).value
    return MapProfile(xs, vals, crit, lya)


def write_profile_csv(
    path, p: SystemParams, interval: tuple[float, float], grid: int, powers: tuple[int, ...]
) -> int:
    """Grid evaluation of the requested iterates; failed points carry a
    status sentinel instead of being dropped.  Returns the row count."""
    xs = np.linspace(interval[0], interval[1], grid)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x"] + [f"f{k}" for k in powers] + ["status"])
        for u in xs:
            row = [f"{u:.17g}"]
            status = "ok"
            for k in powers:
                try:
                    row.append(f"{eval_fn(p, float(u), k):.17g}")
                except MapEvaluationError:
                    row.append("nan")
                    status = "failed"
            wr.writerow(row + [status])
    return grid
