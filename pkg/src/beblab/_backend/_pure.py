"""Pure-Python kernel backend.

Mirrors the compiled core exactly: same pack layout, same algorithms, same
status codes.  Scalar math throughout; numpy appears only at the array
boundaries.  The compiled backend is selected over this one at import time
when available, and the agreement tests hold the two to near bit-level
equality on map evaluations.
"""
from __future__ import annotations

from math import cos, exp, sin, sqrt

import numpy as np

from .pack import (
    H_A,
    H_B,
    H_C,
    H_EQ,
    H_M1,
    H_M2,
    H_MAT,
    H_TROT,
    HL,
    HR,
    LAYOUT_VERSION,
    P_FORCERK,
    P_MU,
    P_NONLIN,
    S_D,
    S_GINV,
    S_M1MUL,
    S_M2MUL,
    S_NORMAL,
    S_SPAN,
    S_TREV,
    S_V,
    S_XINT,
    S_XR,
    T_ACCEPT,
    T_ESCAPE,
    T_EVENT,
    T_EVREFINE,
    T_GRAZE,
    T_LEFTMAX,
    T_MINTIME,
    T_ORIENT,
    T_RKATOL,
    T_RKRTOL,
    T_SCANPTS,
    T_X1WIN,
    PACK_LEN,
)

BACKEND_NAME = "pure"

# status codes shared with the compiled core
OK = 0
ERR_NO_X3 = -1
ERR_NO_X4 = -2
ERR_ESCAPE = -3
ERR_CHART = -4
ERR_STEP_UNDERFLOW = -5
ERR_NO_VIRTUAL = -6

TRACE_LEN = 21
_EPS = 2.220446049250313e-16

# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 0.2, 0.3, 0.8, 8.0 / 9.0
_A21 = 0.2
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_A71, _A73, _A74, _A75, _A76 = (
    35.0 / 384.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
)
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)
# dense-output weights (classic DOPRI5 interpolant)
_D1, _D3, _D4, _D5, _D6, _D7 = (
    -12715105075.0 / 11282082432.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
)


class Engine:
    """One parameter set, unpacked for repeated kernel calls."""

    def __init__(self, pack: np.ndarray) -> None:
        pack = np.ascontiguousarray(pack, dtype=np.float64)
        if pack.shape != (PACK_LEN,) or pack[0] != LAYOUT_VERSION:
            raise ValueError("kernel pack has wrong length or layout version")
        self._pack = pack
        g = pack.tolist()
        self.halves = []
        for off in (HL, HR):
            self.halves.append(
                dict(
                    a=g[off + H_A],
                    b=g[off + H_B],
                    c=g[off + H_C],
                    C=tuple(g[off + H_MAT: off + H_MAT + 9]),
                    M1=tuple(g[off + H_M1: off + H_M1 + 9]),
                    M2=tuple(g[off + H_M2: off + H_M2 + 9]),
                    eq=tuple(g[off + H_EQ: off + H_EQ + 3]),
                    trot=g[off + H_TROT],
                )
            )
        self.XR = tuple(g[S_XR: S_XR + 3])
        self.Xint = tuple(g[S_XINT: S_XINT + 3])
        self.v = tuple(g[S_V: S_V + 3])
        self.span = tuple(g[S_SPAN: S_SPAN + 3])
        self.normal = tuple(g[S_NORMAL: S_NORMAL + 3])
        self.d_plane = g[S_D]
        self.Ginv = tuple(g[S_GINV: S_GINV + 4])
        self.m1 = g[S_M1MUL]
        self.m2 = g[S_M2MUL]
        self.trev = g[S_TREV]
        self.mu = g[P_MU]
        self.nonlinear = g[P_NONLIN] != 0.0
        self.use_rk_left = self.nonlinear or g[P_FORCERK] != 0.0
        self.scan_pts = g[T_SCANPTS]
        self.min_time = g[T_MINTIME]
        self.grazing_tol = g[T_GRAZE]
        self.event_tol = g[T_EVENT]
        self.x1_window = g[T_X1WIN]
        self.left_max_time = g[T_LEFTMAX]
        self.accept_dist = g[T_ACCEPT]
        self.escape = g[T_ESCAPE]
        self.rk_rtol = g[T_RKRTOL]
        self.rk_atol = g[T_RKATOL]
        self.ev_refine = g[T_EVREFINE]
        self.orient_ref = g[T_ORIENT]

    # ------------------------------------------------------------------
    # affine flow primitives
    # ------------------------------------------------------------------

    def _coeffs(self, side: int, t: float) -> tuple[float, float, float]:
        h = self.halves[side]
        a, b, c = h["a"], h["b"], h["c"]
        ea = exp(a * t)
        A = ea * cos(b * t)
        B = ea * sin(b * t) / b
        G = (exp(c * t) - A - (c - a) * B) / ((c - a) * (c - a) + b * b)
        return A, B, G

    def flow(self, side: int, t: float, X) -> np.ndarray:
        h = self.halves[side]
        ex, ey, ez = h["eq"]
        u0 = (X[0] - ex, X[1] - ey, X[2] - ez)
        M1, M2 = h["M1"], h["M2"]
        u1 = _matvec(M1, u0)
        u2 = _matvec(M2, u0)
        A, B, G = self._coeffs(side, t)
        return np.array(
            [
                ex + A * u0[0] + B * u1[0] + G * u2[0],
                ey + A * u0[1] + B * u1[1] + G * u2[1],
                ez + A * u0[2] + B * u1[2] + G * u2[2],
            ]
        )

    def velocity(self, side: int, X) -> np.ndarray:
        h = self.halves[side]
        C = h["C"]
        return np.array(
            [
                C[0] * X[0] + C[1] * X[1] + C[2] * X[2],
                C[3] * X[0] + C[4] * X[1] + C[5] * X[2],
                C[6] * X[0] + C[7] * X[1] + C[8] * X[2] + self.mu,
            ]
        )

    # scalar event machinery -------------------------------------------------

    def _event_setup(self, side, X, n, d):
        """coefficients k so that event(t) = k0 + A k1 + B k2 + G k3."""
        h = self.halves[side]
        ex, ey, ez = h["eq"]
        u0 = (X[0] - ex, X[1] - ey, X[2] - ez)
        u1 = _matvec(h["M1"], u0)
        u2 = _matvec(h["M2"], u0)
        k0 = n[0] * ex + n[1] * ey + n[2] * ez - d
        k1 = n[0] * u0[0] + n[1] * u0[1] + n[2] * u0[2]
        k2 = n[0] * u1[0] + n[1] * u1[1] + n[2] * u1[2]
        k3 = n[0] * u2[0] + n[1] * u2[1] + n[2] * u2[2]
        return (k0, k1, k2, k3, u0, u1, u2, h["eq"])

    def _event(self, side, setup, t):
        A, B, G = self._coeffs(side, t)
        k0, k1, k2, k3 = setup[0], setup[1], setup[2], setup[3]
        return k0 + A * k1 + B * k2 + G * k3

    def _state_at(self, side, setup, t):
        A, B, G = self._coeffs(side, t)
        u0, u1, u2, eq = setup[4], setup[5], setup[6], setup[7]
        return np.array(
            [
                eq[0] + A * u0[0] + B * u1[0] + G * u2[0],
                eq[1] + A * u0[1] + B * u1[1] + G * u2[1],
                eq[2] + A * u0[2] + B * u1[2] + G * u2[2],
            ]
        )

    def _brent(self, side, setup, sa, sb, fa, fb, xtol):
        a, b, c = sa, sb, sa
        fc = fa
        d = e = b - a
        while True:
            if abs(fc) < abs(fb):
                a, b, c = b, c, b
                fa, fb, fc = fb, fc, fb
            tol = 2.0 * _EPS * abs(b) + xtol
            m = 0.5 * (c - b)
            if abs(m) <= tol or fb == 0.0:
                return b, fb
            if abs(e) < tol or abs(fa) <= abs(fb):
                d = e = m
            else:
                s = fb / fa
                if a == c:
                    p = 2.0 * m * s
                    q = 1.0 - s
                else:
                    q = fa / fc
                    r = fb / fc
                    p = s * (2.0 * m * q * (q - r) - (b - a) * (r - 1.0))
                    q = (q - 1.0) * (r - 1.0) * (s - 1.0)
                if p > 0.0:
                    q = -q
                else:
                    p = -p
                s2 = e
                e = d
                if 2.0 * p < 3.0 * m * q - abs(tol * q) and p < abs(0.5 * s2 * q):
                    d = p / q
                else:
                    d = e = m
            a, fa = b, fb
            if abs(d) > tol:
                b += d
            elif m > 0.0:
                b += tol
            else:
                b -= tol
            fb = self._event(side, setup, b)
            if (fb > 0.0) == (fc > 0.0):
                c, fc = a, fa
                d = e = b - a

    def _refine_extremum(self, side, setup, sa, sb):
        """golden-section minimum of |event| on [sa, sb]."""
        gr = 0.6180339887498949
        a, b = (sa, sb) if sa <= sb else (sb, sa)
        c = b - gr * (b - a)
        d = a + gr * (b - a)
        fc = abs(self._event(side, setup, c))
        fd = abs(self._event(side, setup, d))
        for _ in range(60):
            if b - a < 1e-13 * max(1.0, abs(b)):
                break
            if fc < fd:
                b, d, fd = d, c, fc
                c = b - gr * (b - a)
                fc = abs(self._event(side, setup, c))
            else:
                a, c, fc = c, d, fd
                d = a + gr * (b - a)
                fd = abs(self._event(side, setup, d))
        s = 0.5 * (a + b)
        return s, self._event(side, setup, s)

    def first_crossing(self, side, X, n, d, direction, window, min_time, orient=0.0):
        """First surface event along the flow, scanning |t| in (min_time,
        window] with sign ``direction``.

        Returns (status, t, Xc, orient_at_event):
        status 1 = transversal crossing, 2 = grazing contact, 0 = none found.
        Grazing contacts do not satisfy an orientation filter and never
        terminate an orientation-filtered search.
        """
        setup = self._event_setup(side, X, n, d)
        h = self.halves[side]
        step = h["trot"] / self.scan_pts
        s0 = min_time
        f0 = self._event(side, setup, direction * s0)
        fm1 = None  # previous-previous value for extremum detection
        s_prev, f_prev = s0, f0
        nsteps = int((window - min_time) / step) + 2
        for i in range(1, nsteps + 1):
            s1 = min_time + i * step
            if s1 > window:
                s1 = window
            if s1 <= s_prev:
                break
            f1 = self._event(side, setup, direction * s1)
            if f_prev == 0.0:
                # landed exactly on the surface at a scan point
                t = direction * s_prev
                Xc = self._state_at(side, setup, t)
                o = _dot3(n, self.velocity(side, Xc))
                if s_prev > min_time and (orient == 0.0 or (o > 0) == (orient > 0)):
                    return 1, t, Xc, (1.0 if o > 0 else -1.0)
            elif (f_prev < 0.0) != (f1 < 0.0):
                r, fr = self._brent(
                    side, setup, direction * s_prev, direction * s1,
                    f_prev, f1, 1e-13 * window
                )
                Xc = self._state_at(side, setup, r)
                o = _dot3(n, self.velocity(side, Xc))
                if orient == 0.0 or (o > 0) == (orient > 0):
                    return 1, r, Xc, (1.0 if o > 0 else -1.0)
                # filtered out: keep scanning past this crossing
            elif fm1 is not None and (fm1 > f_prev) != (f1 > f_prev):
                # same-sign local extremum of the event between scan points:
                # candidate grazing contact or a double crossing inside a step
                if abs(f_prev) <= abs(fm1) and abs(f_prev) <= abs(f1):
                    sx, fx = self._refine_extremum(
                        side, setup, direction * (s_prev - step), direction * s1
                    )
                    if fx == 0.0:
                        Xc = self._state_at(side, setup, sx)
                        o = _dot3(n, self.velocity(side, Xc))
                        if orient == 0.0 or (o > 0) == (orient > 0):
                            return 1, sx, Xc, (1.0 if o > 0 else -1.0)
                    elif (fx < 0.0) != (f_prev < 0.0):
                        # dipped through: two roots inside; take the earlier
                        lo = direction * (s_prev - step)
                        flo = fm1
                        r, fr = self._brent(side, setup, lo, sx, flo, fx, 1e-13 * window)
                        Xc = self._state_at(side, setup, r)
                        o = _dot3(n, self.velocity(side, Xc))
                        if orient == 0.0 or (o > 0) == (orient > 0):
                            return 1, r, Xc, (1.0 if o > 0 else -1.0)
                        r2, _ = self._brent(
                            side, setup, sx, direction * s1, fx, f1, 1e-13 * window
                        )
                        Xc2 = self._state_at(side, setup, r2)
                        o2 = _dot3(n, self.velocity(side, Xc2))
                        if orient == 0.0 or (o2 > 0) == (orient > 0):
                            return 1, r2, Xc2, (1.0 if o2 > 0 else -1.0)
                    elif abs(fx) < self.grazing_tol and orient == 0.0:
                        Xc = self._state_at(side, setup, sx)
                        return 2, sx, Xc, 0.0
            fm1, s_prev, f_prev = f_prev, s1, f1
            if s1 >= window:
                break
        return 0, 0.0, None, 0.0

    def min_x_over_turn(self, side, X):
        """Dense minimum of the first component over one rotation period."""
        setup = self._event_setup(side, X, (1.0, 0.0, 0.0), 0.0)
        h = self.halves[side]
        npts = int(2 * self.scan_pts) + 1
        step = h["trot"] / (npts - 1)
        best = self._event(side, setup, 0.0)
        for i in range(1, npts):
            f = self._event(side, setup, i * step)
            if f < best:
                best = f
        return best

    # ------------------------------------------------------------------
    # section chart
    # ------------------------------------------------------------------

    def chart(self, X):
        dx = (X[0] - self.XR[0], X[1] - self.XR[1], X[2] - self.XR[2])
        r1 = _dot3(self.span, dx)
        r2 = _dot3(self.v, dx)
        g = self.Ginv
        c1 = g[0] * r1 + g[1] * r2
        c2 = g[2] * r1 + g[3] * r2
        rx = self.XR[0] + c1 * self.span[0] + c2 * self.v[0] - X[0]
        ry = self.XR[1] + c1 * self.span[1] + c2 * self.v[1] - X[1]
        rz = self.XR[2] + c1 * self.span[2] + c2 * self.v[2] - X[2]
        return c1, c2, sqrt(rx * rx + ry * ry + rz * rz)

    def unchart(self, c1, c2):
        return np.array(
            [
                self.XR[0] + c1 * self.span[0] + c2 * self.v[0],
                self.XR[1] + c1 * self.span[1] + c2 * self.v[1],
                self.XR[2] + c1 * self.span[2] + c2 * self.v[2],
            ]
        )

    # ------------------------------------------------------------------
    # discontinuity map and return map
    # ------------------------------------------------------------------

    def _find_x1(self, X0):
        """Nearest outgoing switching-plane crossing of the right orbit
        through X0 within the half-revolution window either side.

        Returns (found, t1, X1, n_candidates)."""
        e1 = (1.0, 0.0, 0.0)
        cands = []
        for direction in (-1.0, 1.0):
            st, t, Xc, o = self.first_crossing(
                1, X0, e1, 0.0, direction, self.x1_window, self.min_time, orient=-1.0
            )
            if st == 1:
                cands.append((abs(t), t, Xc))
        if not cands:
            return False, 0.0, None, 0
        cands.sort(key=lambda z: z[0])
        return True, cands[0][1], cands[0][2], len(cands)

    def disc_map(self, X0, want_x2=False):
        """Excursion correction on the section.

        Returns (status, X4, trace) with trace a float ndarray of TRACE_LEN
        (identity, ambiguous, grazing_skips, identity_clean, t1, X1, t3, X3,
        tb, X4, has_x2, t2, X2).
        """
        trace = np.zeros(TRACE_LEN)
        e1 = (1.0, 0.0, 0.0)
        found, t1, X1, ncand = self._find_x1(X0)
        trace[1] = ncand
        if not found:
            # no excursion belongs to this section passage
            trace[0] = 1.0
            trace[3] = 1.0 if self.min_x_over_turn(1, X0) >= -self.grazing_tol else 0.0
            trace[13:16] = X0[0], X0[1], X0[2]
            X4 = np.array([X0[0], X0[1], X0[2]])
            return OK, X4, trace
        trace[4] = t1
        trace[5:8] = X1
        st, t3, X3, o3 = self.first_crossing(
            0, X1, e1, 0.0, 1.0, self.left_max_time, self.min_time, orient=+1.0
        )
        if st != 1:
            return ERR_NO_X3, None, trace
        trace[8] = t3
        trace[9:12] = X3
        st, tb, X4, _ = self.first_crossing(
            1, X3, self.normal, self.d_plane, -1.0, self.trev, self.min_time
        )
        if st != 1:
            return ERR_NO_X4, None, trace
        trace[12] = tb
        trace[13:16] = X4
        if want_x2:
            stx, t2, X2, _ = self.first_crossing(
                0, X1, self.normal, self.d_plane, 1.0, t3, self.min_time
            )
            if stx == 1 and t2 < t3:
                trace[16] = 1.0
                trace[17] = t2
                trace[18:21] = X2
        return OK, X4, trace

    def return_map(self, X0, want_trace=False):
        """One full revolution of the section map: excursion correction then
        the revolution multipliers in section coordinates.

        Returns (status, X5, trace-or-None)."""
        st, X4, trace = self.disc_map(X0, want_x2=want_trace)
        if st != OK:
            return st, None, (trace if want_trace else None)
        c1, c2, resid = self.chart(X4)
        X5 = self.unchart(self.m1 * c1, self.m2 * c2)
        return OK, X5, (trace if want_trace else None)

    def iterate_x(self, X0, n_transient, n_keep):
        """First components of kept section-map iterates.

        Returns (status, fail_index, xs)."""
        xs = np.empty(n_keep)
        X = np.array([X0[0], X0[1], X0[2]])
        esc = self.escape
        for i in range(n_transient + n_keep):
            st, X, _ = self.return_map(X)
            if st != OK:
                return st, i, xs[: max(0, i - n_transient)]
            if abs(X[0]) > esc or abs(X[1]) > esc or abs(X[2]) > esc:
                return ERR_ESCAPE, i, xs[: max(0, i - n_transient)]
            if i >= n_transient:
                xs[i - n_transient] = X[0]
        return OK, -1, xs

    def iterate_points(self, X0, n_transient, n_keep):
        """Kept section-map iterates as full states.

        Returns (status, fail_index, pts (n_keep, 3))."""
        pts = np.empty((n_keep, 3))
        X = np.array([X0[0], X0[1], X0[2]])
        esc = self.escape
        for i in range(n_transient + n_keep):
            st, X, _ = self.return_map(X)
            if st != OK:
                return st, i, pts[: max(0, i - n_transient)]
            if abs(X[0]) > esc or abs(X[1]) > esc or abs(X[2]) > esc:
                return ERR_ESCAPE, i, pts[: max(0, i - n_transient)]
            if i >= n_transient:
                pts[i - n_transient] = X
        return OK, -1, pts

    # ------------------------------------------------------------------
    # hybrid orbit: left-piece stepping (exact or Runge-Kutta)
    # ------------------------------------------------------------------

    def _rhs_left(self, X):
        h = self.halves[0]
        C = h["C"]
        nl = X[0] * X[1] if self.nonlinear else 0.0
        return (
            C[0] * X[0] + C[1] * X[1] + C[2] * X[2] + nl,
            C[3] * X[0] + C[4] * X[1] + C[5] * X[2],
            C[6] * X[0] + C[7] * X[1] + C[8] * X[2] + self.mu,
        )

    def _rk_step(self, X, t, hstep):
        """One Dormand-Prince 5(4) attempt; returns (ok, hnext, Xnew, ks)."""
        f = self._rhs_left
        k1 = f(X)
        k2 = f(_axpy(X, hstep, [(_A21, k1)]))
        k3 = f(_axpy(X, hstep, [(_A31, k1), (_A32, k2)]))
        k4 = f(_axpy(X, hstep, [(_A41, k1), (_A42, k2), (_A43, k3)]))
        k5 = f(_axpy(X, hstep, [(_A51, k1), (_A52, k2), (_A53, k3), (_A54, k4)]))
        k6 = f(
            _axpy(X, hstep, [(_A61, k1), (_A62, k2), (_A63, k3), (_A64, k4), (_A65, k5)])
        )
        Xn = _axpy(X, hstep, [(_A71, k1), (_A73, k3), (_A74, k4), (_A75, k5), (_A76, k6)])
        k7 = f(Xn)
        errv = (
            hstep * (_E1 * k1[0] + _E3 * k3[0] + _E4 * k4[0] + _E5 * k5[0] + _E6 * k6[0] + _E7 * k7[0]),
            hstep * (_E1 * k1[1] + _E3 * k3[1] + _E4 * k4[1] + _E5 * k5[1] + _E6 * k6[1] + _E7 * k7[1]),
            hstep * (_E1 * k1[2] + _E3 * k3[2] + _E4 * k4[2] + _E5 * k5[2] + _E6 * k6[2] + _E7 * k7[2]),
        )
        err = 0.0
        for j in range(3):
            sc = self.rk_atol + self.rk_rtol * max(abs(X[j]), abs(Xn[j]))
            err += (errv[j] / sc) ** 2
        err = sqrt(err / 3.0)
        if err == 0.0:
            fac = 5.0
        else:
            fac = min(5.0, max(0.2, 0.9 * err ** -0.2))
        return err <= 1.0, hstep * fac, Xn, (k1, k3, k4, k5, k6, k7)

    def _rk_dense(self, X, Xn, hstep, ks, theta):
        """DOPRI5 dense output at fraction theta of the step."""
        k1, k3, k4, k5, k6, k7 = ks
        out = [0.0, 0.0, 0.0]
        for j in range(3):
            ydiff = Xn[j] - X[j]
            bspl = hstep * k1[j] - ydiff
            r1 = X[j]
            r2 = ydiff
            r3 = bspl
            r4 = ydiff - hstep * k7[j] - bspl
            r5 = hstep * (
                _D1 * k1[j] + _D3 * k3[j] + _D4 * k4[j] + _D5 * k5[j] + _D6 * k6[j] + _D7 * k7[j]
            )
            th1 = 1.0 - theta
            out[j] = r1 + theta * (r2 + th1 * (r3 + theta * (r4 + th1 * r5)))
        return tuple(out)

    def _left_leg(self, X1, hint=0.1):
        """Advance through the left half-space from a switching-plane entry
        until the return crossing (first component back to zero, increasing).

        Exact flow when the left piece is linear; adaptive Runge-Kutta with
        dense-output bisection otherwise.  Returns (status, duration, X3)."""
        if not self.use_rk_left:
            st, t3, X3, _ = self.first_crossing(
                0, X1, (1.0, 0.0, 0.0), 0.0, 1.0, self.left_max_time, self.min_time, orient=+1.0
            )
            if st != 1:
                return ERR_NO_X3, 0.0, None
            return OK, t3, X3
        t = 0.0
        # entries arrive on the switching plane with root-solver jitter of
        # either sign; force strictly left so the return detector is armed
        X = (min(X1[0], -1e-13), X1[1], X1[2])
        hstep = hint
        hmin = 1e-14 * max(1.0, self.left_max_time)
        while t < self.left_max_time:
            ok, hnext, Xn, ks = self._rk_step(X, t, hstep)
            if not ok:
                if hstep <= hmin:
                    return ERR_STEP_UNDERFLOW, t, np.array(X)
                hstep = max(hnext, hmin)
                continue
            if Xn[0] >= 0.0 and X[0] < 0.0:
                # crossed back: bisect the dense output for the return time
                lo, hi = 0.0, 1.0
                for _ in range(200):
                    mid = 0.5 * (lo + hi)
                    xm = self._rk_dense(X, Xn, hstep, ks, mid)[0]
                    if xm >= 0.0:
                        hi = mid
                    else:
                        lo = mid
                    if (hi - lo) * hstep < self.ev_refine:
                        break
                Xc = self._rk_dense(X, Xn, hstep, ks, hi)
                return OK, t + hi * hstep, np.array(Xc)
            t += hstep
            X = Xn
            hstep = min(hnext, self.left_max_time - t + 1e-30)
        return ERR_NO_X3, t, np.array(X)

    # ------------------------------------------------------------------
    # hybrid section extraction
    # ------------------------------------------------------------------

    def _next_exit(self, X, window, min_time):
        """First outgoing switching-plane crossing of the right flow from X,
        including micro-dips narrower than the scan step.

        Scans x(t) for sign changes and xdot(t) (also a linear functional of
        the state) for minima of x; a minimum with x < 0 brackets a dip whose
        first root is the exit.  Returns (found, t, Xc)."""
        e1 = (1.0, 0.0, 0.0)
        setup_x = self._event_setup(1, X, e1, 0.0)
        h = self.halves[1]
        C = h["C"]
        # xdot = (C row 1) . X + 0 (no drift in the first component)
        setup_v = self._event_setup(1, X, (C[0], C[1], C[2]), 0.0)
        step = h["trot"] / self.scan_pts
        s_prev = min_time
        fx_prev = self._event(1, setup_x, s_prev)
        fv_prev = self._event(1, setup_v, s_prev)
        nsteps = int((window - min_time) / step) + 2
        for i in range(1, nsteps + 1):
            s1 = min(min_time + i * step, window)
            if s1 <= s_prev:
                break
            fx1 = self._event(1, setup_x, s1)
            fv1 = self._event(1, setup_v, s1)
            if (fx_prev < 0.0) != (fx1 < 0.0) or fx_prev == 0.0:
                r, _ = self._brent(1, setup_x, s_prev, s1, fx_prev, fx1, 1e-13 * window)
                Xc = self._state_at(1, setup_x, r)
                if self.velocity(1, Xc)[0] < 0.0:
                    return True, r, Xc
                # inward crossing: keep going
            elif fx_prev > 0.0 and fv_prev < 0.0 and fv1 >= 0.0:
                # bracketed minimum of x while still positive at scan points
                rm, _ = self._brent(1, setup_v, s_prev, s1, fv_prev, fv1, 1e-13 * window)
                fxm = self._event(1, setup_x, rm)
                if fxm < 0.0:
                    r, _ = self._brent(1, setup_x, s_prev, rm, fx_prev, fxm, 1e-13 * window)
                    Xc = self._state_at(1, setup_x, r)
                    return True, r, Xc
            s_prev, fx_prev, fv_prev = s1, fx1, fv1
            if s1 >= window:
                break
        return False, 0.0, None

    def _accepted(self, Xc, orient):
        dx = Xc[0] - self.Xint[0]
        dy = Xc[1] - self.Xint[1]
        dz = Xc[2] - self.Xint[2]
        if sqrt(dx * dx + dy * dy + dz * dz) > self.accept_dist:
            return False
        return (orient > 0) == (self.orient_ref > 0)

    def _virtual_point(self, X1):
        """First accepted section crossing of the right-flow continuation."""
        t_from = self.min_time
        while t_from < self.trev:
            st, t, Xc, o = self.first_crossing(
                1, X1, self.normal, self.d_plane, 1.0, self.trev, t_from
            )
            if st != 1:
                return None
            if self._accepted(Xc, o):
                return Xc
            t_from = t + self.min_time
        return None

    def section_sequence(self, X0, n_skip, n_keep):
        """Section points realised by the hybrid orbit, mirroring the map's
        convention: one virtual point per excursion, plus real crossings of
        excursion-free revolutions.

        Returns (status, pts (n_keep, 3), kinds) with kinds 0 = real,
        1 = virtual.
        """
        e1 = (1.0, 0.0, 0.0)
        want = n_skip + n_keep
        pts = np.empty((n_keep, 3))
        kinds = np.zeros(n_keep, dtype=np.int64)
        got = 0
        X = np.array([X0[0], X0[1], X0[2]])
        t_now = 0.0
        pending = []  # (t_candidate, point) awaiting the no-exit window
        last_exit = -1e300
        w1 = self.x1_window
        max_time = max(4.0, 3.0 * self.trev) * want + 100.0 * self.trev
        if X[0] < 0.0:
            st, dur, X = self._left_leg(X)
            if st != OK:
                return st, pts[:0], kinds[:0]
            t_now += dur
        while got < want and t_now < max_time:
            if abs(X[0]) > self.escape or abs(X[1]) > self.escape or abs(X[2]) > self.escape:
                return ERR_ESCAPE, pts[: max(0, got - n_skip)], kinds[: max(0, got - n_skip)]
            # next exit from the right half-space, scanned one revolution at
            # a time so section candidates inside the segment are seen first
            found_e, t_exit, X_exit = self._next_exit(X, self.trev, self.min_time)
            st_e = 1 if found_e else 0
            seg_end = t_exit if st_e == 1 else self.trev
            # section candidates inside this right segment
            t_from = self.min_time
            while True:
                st_c, t_c, Xc, o = self.first_crossing(
                    1, X, self.normal, self.d_plane, 1.0, seg_end, t_from
                )
                if st_c != 1:
                    break
                if self._accepted(Xc, o) and (t_now + t_c) - last_exit > w1:
                    pending.append((t_now + t_c, Xc))
                t_from = t_c + self.min_time
            if st_e == 1:
                t_abs_exit = t_now + t_exit
                pending = [pc for pc in pending if t_abs_exit - pc[0] > w1]
                while pending and got < want:
                    tc, Xc = pending.pop(0)
                    if got >= n_skip:
                        pts[got - n_skip] = Xc
                        kinds[got - n_skip] = 0
                    got += 1
                if got >= want:
                    break
                Xv = self._virtual_point(X_exit)
                if Xv is not None:
                    if got >= n_skip:
                        pts[got - n_skip] = Xv
                        kinds[got - n_skip] = 1
                    got += 1
                last_exit = t_abs_exit
                st_l, dur, X3 = self._left_leg(X_exit)
                if st_l != OK:
                    return st_l, pts[: max(0, got - n_skip)], kinds[: max(0, got - n_skip)]
                t_now = t_abs_exit + dur
                X = X3
            else:
                # no exit this revolution: flush candidates older than the
                # window, keep the rest pending
                t_now += seg_end
                X = self.flow(1, seg_end, X)
                still = []
                for tc, Xc in pending:
                    if t_now - tc > w1:
                        if got < want:
                            if got >= n_skip:
                                pts[got - n_skip] = Xc
                                kinds[got - n_skip] = 0
                            got += 1
                    else:
                        still.append((tc, Xc))
                pending = still
        if got < want:
            return ERR_NO_VIRTUAL, pts[: max(0, got - n_skip)], kinds[: max(0, got - n_skip)]
        return OK, pts, kinds

    # ------------------------------------------------------------------
    # settling (nonlinear equilibrium branch)
    # ------------------------------------------------------------------

    def settle(self, X0, tol=1e-9, t_max=5000.0, bound=None):
        """Run the hybrid orbit until displacement over a probe interval stays
        below ``tol``; returns (status, X, t).

        ``bound`` declares divergence: settling is a local operation, so an
        orbit leaving that ball is reported as escaped instead of being
        integrated to the time limit."""
        X = np.array([X0[0], X0[1], X0[2]])
        if bound is None:
            bound = self.escape
        t = 0.0
        chunk = 50.0
        while t < t_max:
            Xs = (X[0], X[1], X[2])
            t_in = 0.0
            while t_in < chunk - 1e-12:
                budget = chunk - t_in
                if X[0] <= 0.0:
                    st, dur, X = self._left_chunk(X, budget)
                    if st != OK:
                        return st, X, t + t_in
                else:
                    st_e, t_exit, X_exit, _ = self.first_crossing(
                        1, X, (1.0, 0.0, 0.0), 0.0, 1.0, budget, self.min_time, orient=-1.0
                    )
                    if st_e == 1:
                        dur, X = t_exit, X_exit
                    else:
                        dur = budget
                        X = self.flow(1, dur, X)
                if abs(X[0]) > bound or abs(X[1]) > bound or abs(X[2]) > bound:
                    return ERR_ESCAPE, X, t + t_in
                if dur <= 0.0:
                    dur = budget
                t_in += dur
            t += chunk
            d = sqrt((X[0] - Xs[0]) ** 2 + (X[1] - Xs[1]) ** 2 + (X[2] - Xs[2]) ** 2)
            if d < tol:
                return OK, X, t
        return ERR_NO_VIRTUAL, X, t

    def _left_chunk(self, X, t_budget):
        """Advance inside the left half-space by at most ``t_budget`` or until
        the boundary return, whichever first.  Returns (status, elapsed, X)."""
        if not self.use_rk_left:
            st, t3, X3, _ = self.first_crossing(
                0, X, (1.0, 0.0, 0.0), 0.0, 1.0, min(t_budget, self.left_max_time),
                self.min_time, orient=+1.0,
            )
            if st == 1 and t3 <= t_budget:
                return OK, t3, X3
            return OK, t_budget, self.flow(0, t_budget, X)
        t = 0.0
        Xt = (X[0], X[1], X[2])
        hstep = min(0.1, t_budget)
        hmin = 1e-14 * max(1.0, t_budget)
        while t < t_budget:
            hstep = min(hstep, t_budget - t)
            ok, hnext, Xn, ks = self._rk_step(Xt, t, hstep)
            if not ok:
                if hstep <= hmin:
                    return ERR_STEP_UNDERFLOW, t, np.array(Xt)
                hstep = max(hnext, hmin)
                continue
            if Xn[0] >= 0.0 and Xn[0] != Xt[0] and Xt[0] < 0.0:
                lo, hi = 0.0, 1.0
                for _ in range(200):
                    mid = 0.5 * (lo + hi)
                    if self._rk_dense(Xt, Xn, hstep, ks, mid)[0] >= 0.0:
                        hi = mid
                    else:
                        lo = mid
                    if (hi - lo) * hstep < self.ev_refine:
                        break
                Xc = self._rk_dense(Xt, Xn, hstep, ks, hi)
                return OK, t + hi * hstep, np.array(Xc)
            t += hstep
            Xt = Xn
            hstep = hnext
        return OK, t, np.array(Xt)


def _matvec(M, u):
    return (
        M[0] * u[0] + M[1] * u[1] + M[2] * u[2],
        M[3] * u[0] + M[4] * u[1] + M[5] * u[2],
        M[6] * u[0] + M[7] * u[1] + M[8] * u[2],
    )


def _dot3(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _axpy(X, h, terms):
    x, y, z = X[0], X[1], X[2]
    for c, k in terms:
        x += h * c * k[0]
        y += h * c * k[1]
        z += h * c * k[2]
    return (x, y, z)
