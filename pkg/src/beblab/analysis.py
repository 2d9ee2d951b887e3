"""Attractor sampling, period detection, trapping-region verification, and
the two bifurcation sweeps (left contraction rate; boundary parameter with
the quadratic term).

Sweep grid points are independent work items; with ``workers > 1`` the grid
splits into contiguous chunks, warm-start continuation applies within each
chunk, and results reassemble in parameter order.
"""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ._backend import OK
from .flow import engine
from .hybrid import SimulationError, extract_section_sequence, settle_to_equilibrium
from .onedmap import lyapunov_f
from .retmap import MapEvaluationError, iterate_points, iterate_x
from .system import SystemParams, line_g

__all__ = [
    "TrapRegion",
    "TrapReport",
    "SweepRecord",
    "SweepConfig",
    "attractor_samples",
    "detect_period",
    "fold_coords",
    "from_fold_coords",
    "empirical_trap_region",
    "trap_check",
    "sweep_gamma_L",
    "sweep_mu",
    "ks_distance",
    "write_sweep_csv",
]


@dataclass(frozen=True)
class TrapRegion:
    """Rectangle in the fold coordinates (x, y - e2.g(x))."""

    x_min: float
    x_max: float
    d_min: float
    d_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.d_min < self.d_max):
            raise ValueError("trap region must have positive extent")


@dataclass(frozen=True)
class TrapReport:
    region: TrapRegion
    contained: bool
    margin_x: float
    margin_d: float
    n_boundary: int
    worst_point: tuple[float, float]
    failures: int


@dataclass(frozen=True)
class SweepRecord:
    param_value: float
    samples: np.ndarray
    period: int | None
    lyapunov: float | None
    error: str | None = None


@dataclass(frozen=True)
class SweepConfig:
    n_transient: int = 2000
    n_keep: int = 500
    period_tol: float = 1e-7
    max_period: int = 32
    with_lyapunov: bool = False
    lyapunov_n: int = 1000
    x0: float = -0.001
    workers: int = 1


def attractor_samples(
    p: SystemParams, x0: float, n_transient: int, n_keep: int
) -> np.ndarray:
    """First components of kept section-map iterates started on the
    unstable line at ``x0``."""
    if n_transient < 0 or n_keep < 1:
        raise ValueError("need n_transient >= 0 and n_keep >= 1")
    return iterate_x(p, line_g(p, x0), n_transient, n_keep)


def detect_period(samples: np.ndarray, tol: float = 1e-7, max_period: int = 32) -> int | None:
    """Smallest k <= max_period with |x[i+k] - x[i]| < tol over the tail of
    the sample list; None when nothing locks."""
    samples = np.asarray(samples, dtype=float)
    if len(samples) < 3 * max_period:
        raise ValueError("need at least 3 * max_period samples")
    tail = samples[-3 * max_period:]
    for k in range(1, max_period + 1):
        if np.all(np.abs(tail[k:] - tail[:-k]) < tol):
            return k
    return None


def fold_coords(p: SystemParams, pts: np.ndarray) -> np.ndarray:
    """(x, y - e2.g(x)) for an array of section states, shape (n, 2).

    The second coordinate measures distance from the unstable line along the
    section; the attractor collapses near d = 0.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    x = pts[:, 0]
    d = pts[:, 1] - (p.gamma_R - 2 * p.alpha_R) * x
    return np.stack([x, d], axis=1)


def from_fold_coords(p: SystemParams, x: float, d: float) -> np.ndarray:
    """Section state with the given fold coordinates (inverse of
    ``fold_coords`` on the section plane)."""
    eng = engine(p)
    y = (p.gamma_R - 2 * p.alpha_R) * x + d
    # solve for (c1, c2) from the first two components
    sx, sy = eng.span[0], eng.span[1]
    vx, vy = eng.v[0], eng.v[1]
    det = sx * vy - sy * vx
    if abs(det) < 1e-14:
        raise ValueError("section projection to (x, y) is degenerate")
    rx = x - eng.XR[0]
    ry = y - eng.XR[1]
    c1 = (rx * vy - ry * vx) / det
    c2 = (sx * ry - sy * rx) / det
    return eng.unchart(c1, c2)


def empirical_trap_region(
    p: SystemParams,
    x0: float = -0.001,
    n_transient: int = 500,
    n_samples: int = 10000,
    inflate: float = 0.2,
    max_rounds: int = 6,
) -> TrapRegion:
    """Trapping rectangle in fold coordinates built from the attractor.

    The attractor bounding box is inflated by ``inflate`` on each side; the
    second coordinate is then widened to cover the images of boundary probe
    points (states beyond the attractor's x-range take deeper excursions and
    land farther from the unstable line than any attractor point, so the raw
    inflated box is not quite forward-invariant in that direction).  The
    result still has to be verified with ``trap_check``.
    """
    pts = iterate_points(p, line_g(p, x0), n_transient, n_samples)
    fc = fold_coords(p, pts)
    x_lo, x_hi = fc[:, 0].min(), fc[:, 0].max()
    d_lo, d_hi = fc[:, 1].min(), fc[:, 1].max()
    wx = x_hi - x_lo
    wd = d_hi - d_lo
    x_min = float(x_lo - inflate * wx)
    x_max = float(x_hi + inflate * wx)
    d_min = float(d_lo - inflate * wd)
    d_max = float(d_hi + inflate * wd)
    eng = engine(p)
    for _ in range(max_rounds):
        region = TrapRegion(x_min, x_max, d_min, d_max)
        report = trap_check(p, region, 400)
        if report.contained:
            return region
        # grow the box to cover the observed boundary images plus headroom
        img = []
        probes = (
            [(x, d_min) for x in np.linspace(x_min, x_max, 100)]
            + [(x, d_max) for x in np.linspace(x_min, x_max, 100)]
            + [(x_min, d) for d in np.linspace(d_min, d_max, 50)]
            + [(x_max, d) for d in np.linspace(d_min, d_max, 50)]
        )
        for x, d in probes:
            st, X5, _ = eng.return_map(from_fold_coords(p, x, d))
            if st == OK:
                img.append(fold_coords(p, X5[None, :])[0])
        if not img:
            break
        img = np.array(img)
        pad_x = inflate * max(img[:, 0].max() - img[:, 0].min(), wx)
        pad_d = inflate * max(img[:, 1].max() - img[:, 1].min(), wd)
        x_min = min(x_min, float(img[:, 0].min() - pad_x))
        x_max = max(x_max, float(img[:, 0].max() + pad_x))
        d_min = min(d_min, float(img[:, 1].min() - pad_d))
        d_max = max(d_max, float(img[:, 1].max() + pad_d))
    return TrapRegion(x_min, x_max, d_min, d_max)


def trap_check(p: SystemParams, region: TrapRegion, n_boundary: int = 2000) -> TrapReport:
    """Map boundary points of the rectangle through the section map and
    report containment and the minimum inward margin per axis."""
    if n_boundary < 100:
        raise ValueError("n_boundary must be >= 100")
    eng = engine(p)
    per_side = n_boundary // 4
    xs = np.linspace(region.x_min, region.x_max, per_side)
    ds = np.linspace(region.d_min, region.d_max, per_side)
    boundary = (
        [(x, region.d_min) for x in xs]
        + [(x, region.d_max) for x in xs]
        + [(region.x_min, d) for d in ds]
        + [(region.x_max, d) for d in ds]
    )
    margin_x = np.inf
    margin_d = np.inf
    worst = (np.nan, np.nan)
    failures = 0
    contained = True
    for x, d in boundary:
        X = from_fold_coords(p, x, d)
        st, X5, _ = eng.return_map(X)
        if st != OK:
            failures += 1
            contained = False
            continue
        fx, fd = fold_coords(p, X5[None, :])[0]
        mx = min(fx - region.x_min, region.x_max - fx)
        md = min(fd - region.d_min, region.d_max - fd)
        if mx < margin_x or md < margin_d:
            worst = (float(fx), float(fd))
        margin_x = min(margin_x, mx)
        margin_d = min(margin_d, md)
        if mx <= 0 or md <= 0:
            contained = False
    return TrapReport(
        region=region,
        contained=contained,
        margin_x=float(margin_x),
        margin_d=float(margin_d),
        n_boundary=len(boundary),
        worst_point=worst,
        failures=failures,
    )


# ----------------------------------------------------------------------
# sweeps
# ----------------------------------------------------------------------


def _sweep_gamma_chunk(args) -> list[dict]:
    base_kwargs, grid, cfg = args
    out = []
    p0 = SystemParams(**base_kwargs)
    warm_x = cfg.x0
    for gval in grid:
        p = p0.with_gamma_L(float(gval))
        try:
            xs = attractor_samples(p, warm_x, cfg.n_transient, cfg.n_keep)
            period = detect_period(xs, cfg.period_tol, cfg.max_period)
            lya = None
            if cfg.with_lyapunov:
                lya = lyapunov_f(p, float(xs[-1]), 200, max(cfg.lyapunov_n, 1000)).value
            out.append(dict(param=float(gval), samples=xs, period=period, lyapunov=lya, error=None))
            warm_x = float(np.clip(xs[-1], -0.9, 0.9))
        except (MapEvaluationError, SimulationError) as exc:
            out.append(
                dict(param=float(gval), samples=np.empty(0), period=None, lyapunov=None, error=str(exc))
            )
            warm_x = cfg.x0
    return out


def _sweep_mu_chunk(args) -> list[dict]:
    base_kwargs, grid, cfg = args
    out = []
    p0 = SystemParams(**base_kwargs)
    for mval in grid:
        p = p0.with_mu(float(mval))
        try:
            if mval <= 0.0:
                X = settle_to_equilibrium(p)
                out.append(
                    dict(param=float(mval), samples=np.array([X[0]]), period=None, lyapunov=None, error=None)
                )
            else:
                seq = extract_section_sequence(
                    p, line_g(p, cfg.x0 * float(mval)), cfg.n_keep, transient=cfg.n_transient
                )
                xs = np.array([s.point[0] for s in seq])
                period = detect_period(xs, cfg.period_tol * max(float(mval), 1e-3), cfg.max_period)
                out.append(dict(param=float(mval), samples=xs, period=period, lyapunov=None, error=None))
        except (MapEvaluationError, SimulationError, ValueError) as exc:
            out.append(
                dict(param=float(mval), samples=np.empty(0), period=None, lyapunov=None, error=str(exc))
            )
    return out


def _run_sweep(chunk_fn, base: SystemParams, grid: np.ndarray, cfg: SweepConfig) -> list[SweepRecord]:
    base_kwargs = dict(
        alpha_L=base.alpha_L,
        beta_L=base.beta_L,
        gamma_L=base.gamma_L,
        alpha_R=base.alpha_R,
        beta_R=base.beta_R,
        gamma_R=base.gamma_R,
        mu=base.mu,
        nonlinear=base.nonlinear,
    )
    workers = max(1, int(cfg.workers))
    if workers == 1:
        results = chunk_fn((base_kwargs, grid, cfg))
    else:
        chunks = np.array_split(grid, workers)
        results = []
        with ProcessPoolExecutor(max_workers=workers) as ex:
            for part in ex.map(chunk_fn, [(base_kwargs, ch, cfg) for ch in chunks if len(ch)]):
                results.extend(part)
    results.sort(key=lambda r: r["param"])
    return [
        SweepRecord(r["param"], r["samples"], r["period"], r["lyapunov"], r["error"])
        for r in results
    ]


def sweep_gamma_L(
    base: SystemParams,
    range_: tuple[float, float] = (0.05, 0.35),
    steps: int = 600,
    cfg: SweepConfig | None = None,
) -> list[SweepRecord]:
    """Attractor samples over a grid of the left contraction rate, swept with
    warm-start continuation from high to low values within each chunk."""
    if steps < 2:
        raise ValueError("steps must be >= 2")
    cfg = cfg or SweepConfig()
    grid = np.linspace(max(range_), min(range_), steps)  # continuation downward
    recs = _run_sweep(_sweep_gamma_chunk, base, grid, cfg)
    return recs


def sweep_mu(
    base: SystemParams,
    range_: tuple[float, float] = (-1.0, 1.5),
    steps: int = 600,
    cfg: SweepConfig | None = None,
) -> list[SweepRecord]:
    """Boundary-parameter sweep of the quadratic variant: settled equilibrium
    for mu <= 0, section samples extracted from the hybrid orbit for mu > 0."""
    if steps < 2:
        raise ValueError("steps must be >= 2")
    if not base.nonlinear:
        base = replace(base, nonlinear=True)
    cfg = cfg or SweepConfig()
    grid = np.linspace(range_[0], range_[1], steps)
    return _run_sweep(_sweep_mu_chunk, base, grid, cfg)


def ks_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov statistic."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    both = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, both, side="right") / len(a)
    cdf_b = np.searchsorted(b, both, side="right") / len(b)
    return float(np.abs(cdf_a - cdf_b).max())


def write_sweep_csv(path, records: list[SweepRecord]) -> int:
    """Rows param,sample_index,x,period,lyapunov in deterministic order."""
    n = 0
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["param", "sample_index", "x", "period", "lyapunov"])
        for rec in records:
            period = "" if rec.period is None else rec.period
            lya = "" if rec.lyapunov is None else f"{rec.lyapunov:.17g}"
            if rec.error is not None:
                wr.writerow([f"{rec.param_value:.17g}", -1, "nan", period, lya])
                n += 1
                continue
            for i, x in enumerate(rec.samples):
                wr.writerow([f"{rec.param_value:.17g}", i, f"{x:.17g}", period, lya])
                n += 1
    return n
