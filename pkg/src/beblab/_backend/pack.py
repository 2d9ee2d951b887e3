"""Flat parameter pack consumed by both kernel backends.

A pack is one contiguous float64 array carrying everything a map evaluation
needs: the two affine pieces with their precomputed exponential bases, the
section plane, the revolution multipliers, and every tolerance that affects
results.  Keeping the layout identical across the pure-Python and compiled
kernels is what lets the cross-backend agreement tests assert bit-level
equality; the compiled module mirrors these offsets and checks
``LAYOUT_VERSION`` at call time.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import pi

import numpy as np

from ..system import (
    SystemParams,
    companion_matrices,
    eigen_triples,
    equilibria,
    section_geometry,
)

LAYOUT_VERSION = 4.0

# half-flow block, relative offsets (34 doubles)
H_A = 0        # real part of complex pair
H_B = 1        # imaginary part
H_C = 2        # real eigenvalue
H_MAT = 3      # 9: companion matrix, row major
H_M1 = 12      # 9: C - a I
H_M2 = 21      # 9: (C - a I)^2 + b^2 I
H_EQ = 30      # 3: equilibrium of the affine piece
H_TROT = 33    # rotation period 2 pi / b
HALF_LEN = 34

HL = 1                       # left block offset
HR = HL + HALF_LEN           # right block offset
SEC = HR + HALF_LEN          # section block offset
S_XR = SEC                   # 3
S_XINT = SEC + 3             # 3
S_V = SEC + 6                # 3
S_SPAN = SEC + 9             # 3: X_R - X_int
S_NORMAL = SEC + 12          # 3: unit plane normal
S_D = SEC + 15               # plane offset normal . X_R
S_GINV = SEC + 16            # 4: inverse Gram of (span, v), row major
S_M1MUL = SEC + 20           # revolution multiplier on c1
S_M2MUL = SEC + 21           # revolution multiplier on c2
S_TREV = SEC + 22            # revolution time 2 pi / beta_R
P_MU = SEC + 23
P_NONLIN = SEC + 24           # quadratic-term coefficient (0 or 1)
P_FORCERK = SEC + 25          # integrate the left piece with RK even when linear
TOL = SEC + 26
T_SCANPTS = TOL + 0          # scan points per rotation period
T_MINTIME = TOL + 1
T_GRAZE = TOL + 2
T_EVENT = TOL + 3
T_X1WIN = TOL + 4            # half-window for the excursion search
T_LEFTMAX = TOL + 5          # time bound for the left-piece return
T_ACCEPT = TOL + 6           # section-crossing acceptance distance from X_int
T_ESCAPE = TOL + 7
T_RKRTOL = TOL + 8
T_RKATOL = TOL + 9
T_EVREFINE = TOL + 10        # event refinement tolerance on dense output
T_ORIENT = TOL + 11          # reference crossing orientation (+1/-1)
PACK_LEN = TOL + 12


@dataclass(frozen=True)
class KernelTolerances:
    """Every knob that affects kernel output; defaults follow the contract
    used by the test-suite."""

    scan_points_per_turn: float = 64.0
    min_time: float = 1e-9
    grazing_tol: float = 1e-9
    event_tol: float = 1e-12
    x1_window_turns: float = 0.5      # half a revolution either side
    left_max_turns: float = 100.0     # in left-piece rotation periods
    accept_dist_factor: float = 0.5   # fraction of |X_R - X_int|
    escape: float = 1e6
    rk_rtol: float = 1e-10
    rk_atol: float = 1e-12
    event_refine_tol: float = 1e-11


def _fill_half(pack: np.ndarray, off: int, C: np.ndarray, a: float, b: float,
               c: float, eq: np.ndarray) -> None:
    pack[off + H_A] = a
    pack[off + H_B] = b
    pack[off + H_C] = c
    pack[off + H_MAT: off + H_MAT + 9] = C.reshape(-1)
    M1 = C - a * np.eye(3)
    pack[off + H_M1: off + H_M1 + 9] = M1.reshape(-1)
    pack[off + H_M2: off + H_M2 + 9] = (M1 @ M1 + b * b * np.eye(3)).reshape(-1)
    pack[off + H_EQ: off + H_EQ + 3] = eq
    pack[off + H_TROT] = 2 * pi / b


def build_pack(
    p: SystemParams,
    tols: KernelTolerances | None = None,
    force_rk_left: bool = False,
) -> np.ndarray:
    """Assemble the kernel pack for one parameter set.

    ``force_rk_left`` routes the left piece through the Runge-Kutta stepper
    even when it is linear (cross-validation of the integrator path).
    """
    tols = tols or KernelTolerances()
    CL, CR = companion_matrices(p)
    eigL, eigR = eigen_triples(p)
    eqL, eqR = equilibria(p)
    geo = section_geometry(p)

    pack = np.zeros(PACK_LEN)
    pack[0] = LAYOUT_VERSION
    _fill_half(pack, HL, CL, eigL.pair_real, eigL.beta, eigL.real_eig, eqL.location)
    _fill_half(pack, HR, CR, eigR.pair_real, eigR.beta, eigR.real_eig, eqR.location)

    pack[S_XR: S_XR + 3] = geo.X_R
    pack[S_XINT: S_XINT + 3] = geo.X_int
    pack[S_V: S_V + 3] = geo.v
    pack[S_SPAN: S_SPAN + 3] = geo.span1
    pack[S_NORMAL: S_NORMAL + 3] = geo.normal
    pack[S_D] = geo.plane_offset
    M = np.stack([geo.span1, geo.v], axis=1)
    G = M.T @ M
    det = G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]
    if det <= 0 or det < 1e-14 * G[0, 0] * G[1, 1]:
        raise ValueError("section spanning pair is numerically ill-conditioned")
    pack[S_GINV: S_GINV + 4] = np.linalg.inv(G).reshape(-1)
    pack[S_M1MUL] = np.exp(2 * pi * p.alpha_R / p.beta_R)
    pack[S_M2MUL] = np.exp(-2 * pi * p.gamma_R / p.beta_R)
    pack[S_TREV] = 2 * pi / p.beta_R
    pack[P_MU] = p.mu
    pack[P_NONLIN] = 1.0 if p.nonlinear else 0.0
    pack[P_FORCERK] = 1.0 if force_rk_left else 0.0

    pack[T_SCANPTS] = tols.scan_points_per_turn
    pack[T_MINTIME] = tols.min_time
    pack[T_GRAZE] = tols.grazing_tol
    pack[T_EVENT] = tols.event_tol
    pack[T_X1WIN] = tols.x1_window_turns * 2 * pi / p.beta_R
    pack[T_LEFTMAX] = tols.left_max_turns * 2 * pi / p.beta_L
    pack[T_ACCEPT] = tols.accept_dist_factor * np.linalg.norm(geo.span1)
    pack[T_ESCAPE] = tols.escape
    pack[T_RKRTOL] = tols.rk_rtol
    pack[T_RKATOL] = tols.rk_atol
    pack[T_EVREFINE] = tols.event_refine_tol
    # reference orientation: sign of normal . velocity at X_int under the
    # right piece (the revolution's crossing direction near X_int)
    vel = CR @ geo.X_int + np.array([0.0, 0.0, p.mu])
    ori = geo.normal @ vel
    pack[T_ORIENT] = 1.0 if ori >= 0 else -1.0
    return pack


def tolerances_dict(tols: KernelTolerances) -> dict[str, float]:
    """Manifest-friendly view of the tolerance set."""
    return {k: float(getattr(tols, k)) for k in tols.__dataclass_fields__}
