# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel core: exact flows, event location, the section map, batch
iteration, hybrid section extraction, and settling.

Twin of the pure-Python backend; layout offsets and status codes must stay in
lockstep with ``pack.py`` (checked at construction via the layout version).
"""
from libc.math cimport cos, exp, fabs, fmin, fmax, log, sin, sqrt

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "compiled"

# status codes, mirrored from the pure backend
OK = 0
ERR_NO_X3 = -1
ERR_NO_X4 = -2
ERR_ESCAPE = -3
ERR_CHART = -4
ERR_STEP_UNDERFLOW = -5
ERR_NO_VIRTUAL = -6

cdef int C_OK = 0
cdef int C_ERR_NO_X3 = -1
cdef int C_ERR_NO_X4 = -2
cdef int C_ERR_ESCAPE = -3
cdef int C_ERR_STEP_UNDERFLOW = -5
cdef int C_ERR_NO_VIRTUAL = -6

TRACE_LEN = 21
cdef int C_TRACE_LEN = 21
cdef double EPS = 2.220446049250313e-16

# pack layout (mirrors pack.py; version checked at runtime)
cdef double LAYOUT_VERSION = 4.0
cdef int H_A = 0, H_B = 1, H_C = 2, H_MAT = 3, H_M1 = 12, H_M2 = 21, H_EQ = 30, H_TROT = 33
cdef int HALF_LEN = 34
cdef int HL = 1
cdef int HR = 1 + 34
cdef int SEC = 1 + 68
cdef int PACK_LEN_C = SEC + 26 + 12

# Dormand-Prince 5(4) tableau
cdef double A21 = 0.2
cdef double A31 = 3.0/40.0, A32 = 9.0/40.0
cdef double A41 = 44.0/45.0, A42 = -56.0/15.0, A43 = 32.0/9.0
cdef double A51 = 19372.0/6561.0, A52 = -25360.0/2187.0, A53 = 64448.0/6561.0, A54 = -212.0/729.0
cdef double A61 = 9017.0/3168.0, A62 = -355.0/33.0, A63 = 46732.0/5247.0, A64 = 49.0/176.0, A65 = -5103.0/18656.0
cdef double A71 = 35.0/384.0, A73 = 500.0/1113.0, A74 = 125.0/192.0, A75 = -2187.0/6784.0, A76 = 11.0/84.0
cdef double E1c = 71.0/57600.0, E3c = -71.0/16695.0, E4c = 71.0/1920.0, E5c = -17253.0/339200.0, E6c = 22.0/525.0, E7c = -1.0/40.0
cdef double D1 = -12715105075.0/11282082432.0
cdef double D3 = 87487479700.0/32700410799.0
cdef double D4 = -10690763975.0/1880347072.0
cdef double D5 = 701980252875.0/199316789632.0
cdef double D6 = -1453857185.0/822651844.0
cdef double D7 = 69997945.0/29380423.0


cdef struct Half:
    double a, b, c
    double C[9]
    double M1[9]
    double M2[9]
    double eq[3]
    double trot


cdef struct Sys:
    Half half[2]
    double XR[3]
    double Xint[3]
    double v[3]
    double span[3]
    double normal[3]
    double d_plane
    double Ginv[4]
    double m1, m2, trev
    double mu
    bint nonlinear
    bint use_rk_left
    double scan_pts, min_time, grazing_tol, event_tol
    double x1_window, left_max_time, accept_dist, escape
    double rk_rtol, rk_atol, ev_refine, orient_ref


cdef struct EvSetup:
    double k0, k1, k2, k3
    double u0[3]
    double u1[3]
    double u2[3]
    int side


cdef inline void _matvec(double* M, double* u, double* out) nogil:
    out[0] = M[0]*u[0] + M[1]*u[1] + M[2]*u[2]
    out[1] = M[3]*u[0] + M[4]*u[1] + M[5]*u[2]
    out[2] = M[6]*u[0] + M[7]*u[1] + M[8]*u[2]


cdef inline void _coeffs(Sys* S, int side, double t, double* A, double* B, double* G) nogil:
    cdef double a = S.half[side].a
    cdef double b = S.half[side].b
    cdef double c = S.half[side].c
    cdef double ea = exp(a*t)
    A[0] = ea*cos(b*t)
    B[0] = ea*sin(b*t)/b
    G[0] = (exp(c*t) - A[0] - (c - a)*B[0])/((c - a)*(c - a) + b*b)


cdef void _flow_c(Sys* S, int side, double t, double* X, double* out) nogil:
    cdef double u0[3]
    cdef double u1[3]
    cdef double u2[3]
    cdef double A, B, G
    cdef int j
    for j in range(3):
        u0[j] = X[j] - S.half[side].eq[j]
    _matvec(S.half[side].M1, u0, u1)
    _matvec(S.half[side].M2, u0, u2)
    _coeffs(S, side, t, &A, &B, &G)
    for j in range(3):
        out[j] = S.half[side].eq[j] + A*u0[j] + B*u1[j] + G*u2[j]


cdef inline void _velocity_c(Sys* S, int side, double* X, double* out) nogil:
    cdef double* C = S.half[side].C
    out[0] = C[0]*X[0] + C[1]*X[1] + C[2]*X[2]
    out[1] = C[3]*X[0] + C[4]*X[1] + C[5]*X[2]
    out[2] = C[6]*X[0] + C[7]*X[1] + C[8]*X[2] + S.mu


cdef void _event_setup_c(Sys* S, int side, double* X, double* n, double d, EvSetup* ev) nogil:
    cdef double u0[3]
    cdef int j
    for j in range(3):
        u0[j] = X[j] - S.half[side].eq[j]
        ev.u0[j] = u0[j]
    _matvec(S.half[side].M1, u0, ev.u1)
    _matvec(S.half[side].M2, u0, ev.u2)
    ev.k0 = n[0]*S.half[side].eq[0] + n[1]*S.half[side].eq[1] + n[2]*S.half[side].eq[2] - d
    ev.k1 = n[0]*u0[0] + n[1]*u0[1] + n[2]*u0[2]
    ev.k2 = n[0]*ev.u1[0] + n[1]*ev.u1[1] + n[2]*ev.u1[2]
    ev.k3 = n[0]*ev.u2[0] + n[1]*ev.u2[1] + n[2]*ev.u2[2]
    ev.side = side


cdef inline double _event_c(Sys* S, EvSetup* ev, double t) nogil:
    cdef double A, B, G
    _coeffs(S, ev.side, t, &A, &B, &G)
    return ev.k0 + A*ev.k1 + B*ev.k2 + G*ev.k3


cdef void _state_at_c(Sys* S, EvSetup* ev, double t, double* out) nogil:
    cdef double A, B, G
    cdef int j
    _coeffs(S, ev.side, t, &A, &B, &G)
    for j in range(3):
        out[j] = S.half[ev.side].eq[j] + A*ev.u0[j] + B*ev.u1[j] + G*ev.u2[j]


cdef double _brent_c(Sys* S, EvSetup* ev, double sa, double sb, double fa, double fb,
                     double xtol, double* fout) nogil:
    cdef double a = sa, b = sb, c = sa
    cdef double fc = fa
    cdef double d = b - a, e = b - a
    cdef double tol, m, s, p, q, r, s2
    while True:
        if fabs(fc) < fabs(fb):
            a = b; b = c; c = a
            fa = fb; fb = fc; fc = fa
        tol = 2.0*EPS*fabs(b) + xtol
        m = 0.5*(c - b)
        if fabs(m) <= tol or fb == 0.0:
            fout[0] = fb
            return b
        if fabs(e) < tol or fabs(fa) <= fabs(fb):
            d = m; e = m
        else:
            s = fb/fa
            if a == c:
                p = 2.0*m*s
                q = 1.0 - s
            else:
                q = fa/fc
                r = fb/fc
                p = s*(2.0*m*q*(q - r) - (b - a)*(r - 1.0))
                q = (q - 1.0)*(r - 1.0)*(s - 1.0)
            if p > 0.0:
                q = -q
            else:
                p = -p
            s2 = e
            e = d
            if 2.0*p < 3.0*m*q - fabs(tol*q) and p < fabs(0.5*s2*q):
                d = p/q
            else:
                d = m; e = m
        a = b
        fa = fb
        if fabs(d) > tol:
            b += d
        elif m > 0.0:
            b += tol
        else:
            b -= tol
        fb = _event_c(S, ev, b)
        if (fb > 0.0) == (fc > 0.0):
            c = a; fc = fa
            d = b - a; e = b - a


cdef double _refine_extremum_c(Sys* S, EvSetup* ev, double sa, double sb, double* fout) nogil:
    cdef double gr = 0.6180339887498949
    cdef double a, b, c, d, fc, fd, s
    if sa <= sb:
        a = sa; b = sb
    else:
        a = sb; b = sa
    c = b - gr*(b - a)
    d = a + gr*(b - a)
    fc = fabs(_event_c(S, ev, c))
    fd = fabs(_event_c(S, ev, d))
    cdef int i
    for i in range(60):
        if b - a < 1e-13*fmax(1.0, fabs(b)):
            break
        if fc < fd:
            b = d; d = c; fd = fc
            c = b - gr*(b - a)
            fc = fabs(_event_c(S, ev, c))
        else:
            a = c; c = d; fc = fd
            d = a + gr*(b - a)
            fd = fabs(_event_c(S, ev, d))
    s = 0.5*(a + b)
    fout[0] = _event_c(S, ev, s)
    return s


cdef int _first_crossing_c(Sys* S, int side, double* X, double* n, double d,
                           double direction, double window, double min_time,
                           double orient, double* t_out, double* X_out,
                           double* orient_out) nogil:
    """status 1 crossing / 2 grazing / 0 none; mirrors the pure backend."""
    cdef EvSetup ev
    cdef double step, s0, f0, fm1, s_prev, f_prev, s1, f1, r, fr, sx, fx, lo, flo, t, o, r2
    cdef double vel[3]
    cdef double Xc[3]
    cdef bint have_fm1 = False
    cdef int i, nsteps
    _event_setup_c(S, side, X, n, d, &ev)
    step = S.half[side].trot/S.scan_pts
    s0 = min_time
    f0 = _event_c(S, &ev, direction*s0)
    s_prev = s0
    f_prev = f0
    fm1 = 0.0
    nsteps = <int>((window - min_time)/step) + 2
    for i in range(1, nsteps + 1):
        s1 = min_time + i*step
        if s1 > window:
            s1 = window
        if s1 <= s_prev:
            break
        f1 = _event_c(S, &ev, direction*s1)
        if f_prev == 0.0:
            t = direction*s_prev
            _state_at_c(S, &ev, t, Xc)
            _velocity_c(S, side, Xc, vel)
            o = n[0]*vel[0] + n[1]*vel[1] + n[2]*vel[2]
            if s_prev > min_time and (orient == 0.0 or (o > 0) == (orient > 0)):
                t_out[0] = t
                X_out[0] = Xc[0]; X_out[1] = Xc[1]; X_out[2] = Xc[2]
                orient_out[0] = 1.0 if o > 0 else -1.0
                return 1
        elif (f_prev < 0.0) != (f1 < 0.0):
            r = _brent_c(S, &ev, direction*s_prev, direction*s1, f_prev, f1,
                         1e-13*window, &fr)
            _state_at_c(S, &ev, r, Xc)
            _velocity_c(S, side, Xc, vel)
            o = n[0]*vel[0] + n[1]*vel[1] + n[2]*vel[2]
            if orient == 0.0 or (o > 0) == (orient > 0):
                t_out[0] = r
                X_out[0] = Xc[0]; X_out[1] = Xc[1]; X_out[2] = Xc[2]
                orient_out[0] = 1.0 if o > 0 else -1.0
                return 1
        elif have_fm1 and (fm1 > f_prev) != (f1 > f_prev):
            if fabs(f_prev) <= fabs(fm1) and fabs(f_prev) <= fabs(f1):
                sx = _refine_extremum_c(S, &ev, direction*(s_prev - step), direction*s1, &fx)
                if fx == 0.0:
                    _state_at_c(S, &ev, sx, Xc)
                    _velocity_c(S, side, Xc, vel)
                    o = n[0]*vel[0] + n[1]*vel[1] + n[2]*vel[2]
                    if orient == 0.0 or (o > 0) == (orient > 0):
                        t_out[0] = sx
                        X_out[0] = Xc[0]; X_out[1] = Xc[1]; X_out[2] = Xc[2]
                        orient_out[0] = 1.0 if o > 0 else -1.0
                        return 1
                elif (fx < 0.0) != (f_prev < 0.0):
                    lo = direction*(s_prev - step)
                    flo = fm1
                    r = _brent_c(S, &ev, lo, sx, flo, fx, 1e-13*window, &fr)
                    _state_at_c(S, &ev, r, Xc)
                    _velocity_c(S, side, Xc, vel)
                    o = n[0]*vel[0] + n[1]*vel[1] + n[2]*vel[2]
                    if orient == 0.0 or (o > 0) == (orient > 0):
                        t_out[0] = r
                        X_out[0] = Xc[0]; X_out[1] = Xc[1]; X_out[2] = Xc[2]
                        orient_out[0] = 1.0 if o > 0 else -1.0
                        return 1
                    r2 = _brent_c(S, &ev, sx, direction*s1, fx, f1, 1e-13*window, &fr)
                    _state_at_c(S, &ev, r2, Xc)
                    _velocity_c(S, side, Xc, vel)
                    o = n[0]*vel[0] + n[1]*vel[1] + n[2]*vel[2]
                    if orient == 0.0 or (o > 0) == (orient > 0):
                        t_out[0] = r2
                        X_out[0] = Xc[0]; X_out[1] = Xc[1]; X_out[2] = Xc[2]
                        orient_out[0] = 1.0 if o > 0 else -1.0
                        return 1
                elif fabs(fx) < S.grazing_tol and orient == 0.0:
                    _state_at_c(S, &ev, sx, Xc)
                    t_out[0] = sx
                    X_out[0] = Xc[0]; X_out[1] = Xc[1]; X_out[2] = Xc[2]
                    orient_out[0] = 0.0
                    return 2
        fm1 = f_prev
        have_fm1 = True
        s_prev = s1
        f_prev = f1
        if s1 >= window:
            break
    return 0


cdef double _min_x_over_turn_c(Sys* S, int side, double* X) nogil:
    cdef EvSetup ev
    cdef double e1[3]
    e1[0] = 1.0; e1[1] = 0.0; e1[2] = 0.0
    _event_setup_c(S, side, X, e1, 0.0, &ev)
    cdef int npts = <int>(2*S.scan_pts) + 1
    cdef double step = S.half[side].trot/(npts - 1)
    cdef double best = _event_c(S, &ev, 0.0)
    cdef double f
    cdef int i
    for i in range(1, npts):
        f = _event_c(S, &ev, i*step)
        if f < best:
            best = f
    return best


cdef void _chart_c(Sys* S, double* X, double* c1, double* c2, double* resid) nogil:
    cdef double dx[3]
    cdef double r1, r2, rx, ry, rz
    cdef int j
    for j in range(3):
        dx[j] = X[j] - S.XR[j]
    r1 = S.span[0]*dx[0] + S.span[1]*dx[1] + S.span[2]*dx[2]
    r2 = S.v[0]*dx[0] + S.v[1]*dx[1] + S.v[2]*dx[2]
    c1[0] = S.Ginv[0]*r1 + S.Ginv[1]*r2
    c2[0] = S.Ginv[2]*r1 + S.Ginv[3]*r2
    rx = S.XR[0] + c1[0]*S.span[0] + c2[0]*S.v[0] - X[0]
    ry = S.XR[1] + c1[0]*S.span[1] + c2[0]*S.v[1] - X[1]
    rz = S.XR[2] + c1[0]*S.span[2] + c2[0]*S.v[2] - X[2]
    resid[0] = sqrt(rx*rx + ry*ry + rz*rz)


cdef inline void _unchart_c(Sys* S, double c1, double c2, double* out) nogil:
    cdef int j
    for j in range(3):
        out[j] = S.XR[j] + c1*S.span[j] + c2*S.v[j]


cdef int _find_x1_c(Sys* S, double* X0, double* t1, double* X1, int* ncand) nogil:
    cdef double e1[3]
    cdef double tc, oc
    cdef double Xc[3]
    cdef double best_t = 0.0
    cdef double best_X[3]
    cdef bint found = False
    cdef int st, j
    cdef double direction
    e1[0] = 1.0; e1[1] = 0.0; e1[2] = 0.0
    ncand[0] = 0
    for j in range(2):
        direction = -1.0 if j == 0 else 1.0
        st = _first_crossing_c(S, 1, X0, e1, 0.0, direction, S.x1_window,
                               S.min_time, -1.0, &tc, Xc, &oc)
        if st == 1:
            ncand[0] += 1
            if not found or fabs(tc) < fabs(best_t):
                best_t = tc
                best_X[0] = Xc[0]; best_X[1] = Xc[1]; best_X[2] = Xc[2]
                found = True
    if found:
        t1[0] = best_t
        X1[0] = best_X[0]; X1[1] = best_X[1]; X1[2] = best_X[2]
        return 1
    return 0


cdef int _disc_map_c(Sys* S, double* X0, double* X4, double* trace, bint want_x2) nogil:
    """trace has TRACE_LEN slots; returns status."""
    cdef double t1, t3, tb, t2, oc
    cdef double X1[3]
    cdef double X3[3]
    cdef double X2[3]
    cdef double e1[3]
    cdef int st, ncand, j
    e1[0] = 1.0; e1[1] = 0.0; e1[2] = 0.0
    for j in range(C_TRACE_LEN):
        trace[j] = 0.0
    st = _find_x1_c(S, X0, &t1, X1, &ncand)
    trace[1] = ncand
    if st == 0:
        trace[0] = 1.0
        trace[3] = 1.0 if _min_x_over_turn_c(S, 1, X0) >= -S.grazing_tol else 0.0
        for j in range(3):
            trace[13 + j] = X0[j]
            X4[j] = X0[j]
        return C_OK
    trace[4] = t1
    for j in range(3):
        trace[5 + j] = X1[j]
    st = _first_crossing_c(S, 0, X1, e1, 0.0, 1.0, S.left_max_time, S.min_time,
                           1.0, &t3, X3, &oc)
    if st != 1:
        return C_ERR_NO_X3
    trace[8] = t3
    for j in range(3):
        trace[9 + j] = X3[j]
    st = _first_crossing_c(S, 1, X3, S.normal, S.d_plane, -1.0, S.trev,
                           S.min_time, 0.0, &tb, X4, &oc)
    if st != 1:
        return C_ERR_NO_X4
    trace[12] = tb
    for j in range(3):
        trace[13 + j] = X4[j]
    if want_x2:
        st = _first_crossing_c(S, 0, X1, S.normal, S.d_plane, 1.0, t3,
                               S.min_time, 0.0, &t2, X2, &oc)
        if st == 1 and t2 < t3:
            trace[16] = 1.0
            trace[17] = t2
            for j in range(3):
                trace[18 + j] = X2[j]
    return C_OK


cdef int _return_map_c(Sys* S, double* X0, double* X5, double* trace, bint want_x2) nogil:
    cdef double X4[3]
    cdef double c1, c2, resid
    cdef int st = _disc_map_c(S, X0, X4, trace, want_x2)
    if st != C_OK:
        return st
    _chart_c(S, X4, &c1, &c2, &resid)
    _unchart_c(S, S.m1*c1, S.m2*c2, X5)
    return C_OK


# ---------------------------------------------------------------------------
# left-piece stepping (exact or Runge-Kutta)
# ---------------------------------------------------------------------------

cdef inline void _rhs_left_c(Sys* S, double* X, double* out) nogil:
    cdef double* C = S.half[0].C
    cdef double nl = X[0]*X[1] if S.nonlinear else 0.0
    out[0] = C[0]*X[0] + C[1]*X[1] + C[2]*X[2] + nl
    out[1] = C[3]*X[0] + C[4]*X[1] + C[5]*X[2]
    out[2] = C[6]*X[0] + C[7]*X[1] + C[8]*X[2] + S.mu


cdef bint _rk_step_c(Sys* S, double* X, double h, double* hnext, double* Xn,
                     double* k1, double* k3, double* k7,
                     double* k4, double* k5, double* k6) nogil:
    cdef double k2[3]
    cdef double tmp[3]
    cdef double errv, err, sc, fac
    cdef int j
    _rhs_left_c(S, X, k1)
    for j in range(3):
        tmp[j] = X[j] + h*A21*k1[j]
    _rhs_left_c(S, tmp, k2)
    for j in range(3):
        tmp[j] = X[j] + h*(A31*k1[j] + A32*k2[j])
    _rhs_left_c(S, tmp, k3)
    for j in range(3):
        tmp[j] = X[j] + h*(A41*k1[j] + A42*k2[j] + A43*k3[j])
    _rhs_left_c(S, tmp, k4)
    for j in range(3):
        tmp[j] = X[j] + h*(A51*k1[j] + A52*k2[j] + A53*k3[j] + A54*k4[j])
    _rhs_left_c(S, tmp, k5)
    for j in range(3):
        tmp[j] = X[j] + h*(A61*k1[j] + A62*k2[j] + A63*k3[j] + A64*k4[j] + A65*k5[j])
    _rhs_left_c(S, tmp, k6)
    for j in range(3):
        Xn[j] = X[j] + h*(A71*k1[j] + A73*k3[j] + A74*k4[j] + A75*k5[j] + A76*k6[j])
    _rhs_left_c(S, Xn, k7)
    err = 0.0
    for j in range(3):
        errv = h*(E1c*k1[j] + E3c*k3[j] + E4c*k4[j] + E5c*k5[j] + E6c*k6[j] + E7c*k7[j])
        sc = S.rk_atol + S.rk_rtol*fmax(fabs(X[j]), fabs(Xn[j]))
        err += (errv/sc)*(errv/sc)
    err = sqrt(err/3.0)
    if err == 0.0:
        fac = 5.0
    else:
        fac = fmin(5.0, fmax(0.2, 0.9*err**(-0.2)))
    hnext[0] = h*fac
    return err <= 1.0


cdef void _rk_dense_c(double* X, double* Xn, double h, double theta,
                      double* k1, double* k3, double* k4, double* k5,
                      double* k6, double* k7, double* out) nogil:
    cdef double ydiff, bspl, r1, r2, r3, r4, r5, th1
    cdef int j
    th1 = 1.0 - theta
    for j in range(3):
        ydiff = Xn[j] - X[j]
        bspl = h*k1[j] - ydiff
        r1 = X[j]
        r2 = ydiff
        r3 = bspl
        r4 = ydiff - h*k7[j] - bspl
        r5 = h*(D1*k1[j] + D3*k3[j] + D4*k4[j] + D5*k5[j] + D6*k6[j] + D7*k7[j])
        out[j] = r1 + theta*(r2 + th1*(r3 + theta*(r4 + th1*r5)))


cdef int _left_leg_c(Sys* S, double* X1, double* dur, double* X3) nogil:
    cdef double e1[3]
    cdef double t, hstep, hmin, oc, lo, hi, mid
    cdef double X[3]
    cdef double Xn[3]
    cdef double Xc[3]
    cdef double k1[3]
    cdef double k3[3]
    cdef double k4[3]
    cdef double k5[3]
    cdef double k6[3]
    cdef double k7[3]
    cdef double hnext
    cdef int st, j, it
    e1[0] = 1.0; e1[1] = 0.0; e1[2] = 0.0
    if not S.use_rk_left:
        st = _first_crossing_c(S, 0, X1, e1, 0.0, 1.0, S.left_max_time,
                               S.min_time, 1.0, &t, X3, &oc)
        if st != 1:
            return C_ERR_NO_X3
        dur[0] = t
        return C_OK
    t = 0.0
    X[0] = fmin(X1[0], -1e-13)
    X[1] = X1[1]
    X[2] = X1[2]
    hstep = 0.1
    hmin = 1e-14*fmax(1.0, S.left_max_time)
    while t < S.left_max_time:
        if not _rk_step_c(S, X, hstep, &hnext, Xn, k1, k3, k7, k4, k5, k6):
            if hstep <= hmin:
                return C_ERR_STEP_UNDERFLOW
            hstep = fmax(hnext, hmin)
            continue
        if Xn[0] >= 0.0 and X[0] < 0.0:
            lo = 0.0
            hi = 1.0
            for it in range(200):
                mid = 0.5*(lo + hi)
                _rk_dense_c(X, Xn, hstep, mid, k1, k3, k4, k5, k6, k7, Xc)
                if Xc[0] >= 0.0:
                    hi = mid
                else:
                    lo = mid
                if (hi - lo)*hstep < S.ev_refine:
                    break
            _rk_dense_c(X, Xn, hstep, hi, k1, k3, k4, k5, k6, k7, Xc)
            dur[0] = t + hi*hstep
            X3[0] = Xc[0]; X3[1] = Xc[1]; X3[2] = Xc[2]
            return C_OK
        t += hstep
        for j in range(3):
            X[j] = Xn[j]
        hstep = hnext
        if hstep > S.left_max_time - t:
            hstep = S.left_max_time - t + 1e-30
    return C_ERR_NO_X3


cdef int _left_chunk_c(Sys* S, double* X, double budget, double* elapsed, double* Xout) nogil:
    cdef double e1[3]
    cdef double t, hstep, hmin, oc, lo, hi, mid, t3
    cdef double Xt[3]
    cdef double Xn[3]
    cdef double Xc[3]
    cdef double X3[3]
    cdef double k1[3]
    cdef double k3[3]
    cdef double k4[3]
    cdef double k5[3]
    cdef double k6[3]
    cdef double k7[3]
    cdef double hnext
    cdef int st, j, it
    e1[0] = 1.0; e1[1] = 0.0; e1[2] = 0.0
    if not S.use_rk_left:
        st = _first_crossing_c(S, 0, X, e1, 0.0, 1.0,
                               fmin(budget, S.left_max_time), S.min_time, 1.0,
                               &t3, X3, &oc)
        if st == 1 and t3 <= budget:
            elapsed[0] = t3
            Xout[0] = X3[0]; Xout[1] = X3[1]; Xout[2] = X3[2]
            return C_OK
        elapsed[0] = budget
        _flow_c(S, 0, budget, X, Xout)
        return C_OK
    t = 0.0
    for j in range(3):
        Xt[j] = X[j]
    hstep = fmin(0.1, budget)
    hmin = 1e-14*fmax(1.0, budget)
    while t < budget:
        if hstep > budget - t:
            hstep = budget - t
        if not _rk_step_c(S, Xt, hstep, &hnext, Xn, k1, k3, k7, k4, k5, k6):
            if hstep <= hmin:
                return C_ERR_STEP_UNDERFLOW
            hstep = fmax(hnext, hmin)
            continue
        if Xn[0] >= 0.0 and Xt[0] < 0.0:
            lo = 0.0
            hi = 1.0
            for it in range(200):
                mid = 0.5*(lo + hi)
                _rk_dense_c(Xt, Xn, hstep, mid, k1, k3, k4, k5, k6, k7, Xc)
                if Xc[0] >= 0.0:
                    hi = mid
                else:
                    lo = mid
                if (hi - lo)*hstep < S.ev_refine:
                    break
            _rk_dense_c(Xt, Xn, hstep, hi, k1, k3, k4, k5, k6, k7, Xc)
            elapsed[0] = t + hi*hstep
            Xout[0] = Xc[0]; Xout[1] = Xc[1]; Xout[2] = Xc[2]
            return C_OK
        t += hstep
        for j in range(3):
            Xt[j] = Xn[j]
        hstep = hnext
    elapsed[0] = t
    Xout[0] = Xt[0]; Xout[1] = Xt[1]; Xout[2] = Xt[2]
    return C_OK


cdef int _next_exit_c(Sys* S, double* X, double window, double min_time,
                      double* t_out, double* X_out) nogil:
    cdef EvSetup evx, evv
    cdef double e1[3]
    cdef double nv[3]
    cdef double step, s_prev, fx_prev, fv_prev, s1, fx1, fv1, r, rm, fxm, fr
    cdef double Xc[3]
    cdef double vel[3]
    cdef int i, nsteps
    e1[0] = 1.0; e1[1] = 0.0; e1[2] = 0.0
    nv[0] = S.half[1].C[0]; nv[1] = S.half[1].C[1]; nv[2] = S.half[1].C[2]
    _event_setup_c(S, 1, X, e1, 0.0, &evx)
    _event_setup_c(S, 1, X, nv, 0.0, &evv)
    step = S.half[1].trot/S.scan_pts
    s_prev = min_time
    fx_prev = _event_c(S, &evx, s_prev)
    fv_prev = _event_c(S, &evv, s_prev)
    nsteps = <int>((window - min_time)/step) + 2
    for i in range(1, nsteps + 1):
        s1 = min_time + i*step
        if s1 > window:
            s1 = window
        if s1 <= s_prev:
            break
        fx1 = _event_c(S, &evx, s1)
        fv1 = _event_c(S, &evv, s1)
        if (fx_prev < 0.0) != (fx1 < 0.0) or fx_prev == 0.0:
            r = _brent_c(S, &evx, s_prev, s1, fx_prev, fx1, 1e-13*window, &fr)
            _state_at_c(S, &evx, r, Xc)
            _velocity_c(S, 1, Xc, vel)
            if vel[0] < 0.0:
                t_out[0] = r
                X_out[0] = Xc[0]; X_out[1] = Xc[1]; X_out[2] = Xc[2]
                return 1
        elif fx_prev > 0.0 and fv_prev < 0.0 and fv1 >= 0.0:
            rm = _brent_c(S, &evv, s_prev, s1, fv_prev, fv1, 1e-13*window, &fr)
            fxm = _event_c(S, &evx, rm)
            if fxm < 0.0:
                r = _brent_c(S, &evx, s_prev, rm, fx_prev, fxm, 1e-13*window, &fr)
                _state_at_c(S, &evx, r, Xc)
                t_out[0] = r
                X_out[0] = Xc[0]; X_out[1] = Xc[1]; X_out[2] = Xc[2]
                return 1
        s_prev = s1
        fx_prev = fx1
        fv_prev = fv1
        if s1 >= window:
            break
    return 0


cdef bint _accepted_c(Sys* S, double* Xc, double o) nogil:
    cdef double dx = Xc[0] - S.Xint[0]
    cdef double dy = Xc[1] - S.Xint[1]
    cdef double dz = Xc[2] - S.Xint[2]
    if sqrt(dx*dx + dy*dy + dz*dz) > S.accept_dist:
        return False
    return (o > 0) == (S.orient_ref > 0)


cdef int _virtual_point_c(Sys* S, double* X1, double* out) nogil:
    cdef double t_from = S.min_time
    cdef double tc, oc
    cdef double Xc[3]
    cdef int st
    while t_from < S.trev:
        st = _first_crossing_c(S, 1, X1, S.normal, S.d_plane, 1.0, S.trev,
                               t_from, 0.0, &tc, Xc, &oc)
        if st != 1:
            return 0
        if _accepted_c(S, Xc, oc):
            out[0] = Xc[0]; out[1] = Xc[1]; out[2] = Xc[2]
            return 1
        t_from = tc + S.min_time
    return 0


cdef class Engine:
    """Compiled twin of the pure-Python engine; same construction, methods,
    and status codes."""

    cdef Sys S
    cdef readonly double m1, m2, trev, mu, min_time, escape
    cdef readonly object XR, Xint, v, span, normal, Ginv, halves
    cdef readonly double d_plane, accept_dist, grazing_tol, x1_window, orient_ref
    cdef readonly bint nonlinear, use_rk_left

    def __init__(self, pack):
        arr = np.ascontiguousarray(pack, dtype=np.float64)
        if arr.shape != (PACK_LEN_C,) or arr[0] != LAYOUT_VERSION:
            raise ValueError("kernel pack has wrong length or layout version")
        cdef double[::1] p = arr
        cdef int off, j, side
        for side in range(2):
            off = HL if side == 0 else HR
            self.S.half[side].a = p[off + H_A]
            self.S.half[side].b = p[off + H_B]
            self.S.half[side].c = p[off + H_C]
            for j in range(9):
                self.S.half[side].C[j] = p[off + H_MAT + j]
                self.S.half[side].M1[j] = p[off + H_M1 + j]
                self.S.half[side].M2[j] = p[off + H_M2 + j]
            for j in range(3):
                self.S.half[side].eq[j] = p[off + H_EQ + j]
            self.S.half[side].trot = p[off + H_TROT]
        for j in range(3):
            self.S.XR[j] = p[SEC + j]
            self.S.Xint[j] = p[SEC + 3 + j]
            self.S.v[j] = p[SEC + 6 + j]
            self.S.span[j] = p[SEC + 9 + j]
            self.S.normal[j] = p[SEC + 12 + j]
        self.S.d_plane = p[SEC + 15]
        for j in range(4):
            self.S.Ginv[j] = p[SEC + 16 + j]
        self.S.m1 = p[SEC + 20]
        self.S.m2 = p[SEC + 21]
        self.S.trev = p[SEC + 22]
        self.S.mu = p[SEC + 23]
        self.S.nonlinear = p[SEC + 24] != 0.0
        self.S.use_rk_left = self.S.nonlinear or p[SEC + 25] != 0.0
        self.S.scan_pts = p[SEC + 26]
        self.S.min_time = p[SEC + 27]
        self.S.grazing_tol = p[SEC + 28]
        self.S.event_tol = p[SEC + 29]
        self.S.x1_window = p[SEC + 30]
        self.S.left_max_time = p[SEC + 31]
        self.S.accept_dist = p[SEC + 32]
        self.S.escape = p[SEC + 33]
        self.S.rk_rtol = p[SEC + 34]
        self.S.rk_atol = p[SEC + 35]
        self.S.ev_refine = p[SEC + 36]
        self.S.orient_ref = p[SEC + 37]
        # python-visible mirrors used by the layer above
        self.m1 = self.S.m1
        self.m2 = self.S.m2
        self.trev = self.S.trev
        self.mu = self.S.mu
        self.min_time = self.S.min_time
        self.escape = self.S.escape
        self.d_plane = self.S.d_plane
        self.accept_dist = self.S.accept_dist
        self.grazing_tol = self.S.grazing_tol
        self.x1_window = self.S.x1_window
        self.orient_ref = self.S.orient_ref
        self.nonlinear = self.S.nonlinear
        self.use_rk_left = self.S.use_rk_left
        self.XR = tuple(arr[SEC:SEC + 3])
        self.Xint = tuple(arr[SEC + 3:SEC + 6])
        self.v = tuple(arr[SEC + 6:SEC + 9])
        self.span = tuple(arr[SEC + 9:SEC + 12])
        self.normal = tuple(arr[SEC + 12:SEC + 15])
        self.Ginv = tuple(arr[SEC + 16:SEC + 20])
        halves = []
        for side in range(2):
            off = HL if side == 0 else HR
            halves.append(dict(
                a=float(arr[off + H_A]), b=float(arr[off + H_B]), c=float(arr[off + H_C]),
                C=tuple(arr[off + H_MAT:off + H_MAT + 9]),
                M1=tuple(arr[off + H_M1:off + H_M1 + 9]),
                M2=tuple(arr[off + H_M2:off + H_M2 + 9]),
                eq=tuple(arr[off + H_EQ:off + H_EQ + 3]),
                trot=float(arr[off + H_TROT]),
            ))
        self.halves = halves

    # ------------------------------------------------------------------

    def flow(self, int side, double t, X):
        cdef double Xi[3]
        cdef double out[3]
        Xi[0] = X[0]; Xi[1] = X[1]; Xi[2] = X[2]
        _flow_c(&self.S, side, t, Xi, out)
        return np.array([out[0], out[1], out[2]])

    def velocity(self, int side, X):
        cdef double Xi[3]
        cdef double out[3]
        Xi[0] = X[0]; Xi[1] = X[1]; Xi[2] = X[2]
        _velocity_c(&self.S, side, Xi, out)
        return np.array([out[0], out[1], out[2]])

    def first_crossing(self, int side, X, n, double d, double direction,
                       double window, double min_time, double orient=0.0):
        cdef double Xi[3]
        cdef double ni[3]
        cdef double t_out, orient_out
        cdef double X_out[3]
        cdef int st
        Xi[0] = X[0]; Xi[1] = X[1]; Xi[2] = X[2]
        ni[0] = n[0]; ni[1] = n[1]; ni[2] = n[2]
        st = _first_crossing_c(&self.S, side, Xi, ni, d, direction, window,
                               min_time, orient, &t_out, X_out, &orient_out)
        if st == 0:
            return 0, 0.0, None, 0.0
        return st, t_out, np.array([X_out[0], X_out[1], X_out[2]]), orient_out

    def min_x_over_turn(self, int side, X):
        cdef double Xi[3]
        Xi[0] = X[0]; Xi[1] = X[1]; Xi[2] = X[2]
        return _min_x_over_turn_c(&self.S, side, Xi)

    def chart(self, X):
        cdef double Xi[3]
        cdef double c1, c2, resid
        Xi[0] = X[0]; Xi[1] = X[1]; Xi[2] = X[2]
        _chart_c(&self.S, Xi, &c1, &c2, &resid)
        return c1, c2, resid

    def unchart(self, double c1, double c2):
        cdef double out[3]
        _unchart_c(&self.S, c1, c2, out)
        return np.array([out[0], out[1], out[2]])

    def disc_map(self, X0, want_x2=False):
        cdef double Xi[3]
        cdef double X4[3]
        cdef int st
        Xi[0] = X0[0]; Xi[1] = X0[1]; Xi[2] = X0[2]
        trace = np.zeros(C_TRACE_LEN)
        cdef double[::1] tv = trace
        st = _disc_map_c(&self.S, Xi, X4, &tv[0], bool(want_x2))
        if st != C_OK:
            return st, None, trace
        return st, np.array([X4[0], X4[1], X4[2]]), trace

    def return_map(self, X0, want_trace=False):
        cdef double Xi[3]
        cdef double X5[3]
        cdef double tr[21]
        cdef int st, j
        Xi[0] = X0[0]; Xi[1] = X0[1]; Xi[2] = X0[2]
        st = _return_map_c(&self.S, Xi, X5, tr, bool(want_trace))
        if st != C_OK:
            if want_trace:
                out = np.empty(C_TRACE_LEN)
                for j in range(C_TRACE_LEN):
                    out[j] = tr[j]
                return st, None, out
            return st, None, None
        if want_trace:
            out = np.empty(C_TRACE_LEN)
            for j in range(C_TRACE_LEN):
                out[j] = tr[j]
            return st, np.array([X5[0], X5[1], X5[2]]), out
        return st, np.array([X5[0], X5[1], X5[2]]), None

    def iterate_x(self, X0, int n_transient, int n_keep):
        cdef double X[3]
        cdef double X5[3]
        cdef double tr[21]
        cdef int st = C_OK
        cdef int i, total
        cdef int fail = -1
        xs = np.empty(n_keep)
        cdef double[::1] xv = xs
        X[0] = X0[0]; X[1] = X0[1]; X[2] = X0[2]
        total = n_transient + n_keep
        with nogil:
            for i in range(total):
                st = _return_map_c(&self.S, X, X5, tr, False)
                if st != C_OK:
                    fail = i
                    break
                X[0] = X5[0]; X[1] = X5[1]; X[2] = X5[2]
                if fabs(X[0]) > self.S.escape or fabs(X[1]) > self.S.escape or fabs(X[2]) > self.S.escape:
                    st = C_ERR_ESCAPE
                    fail = i
                    break
                if i >= n_transient:
                    xv[i - n_transient] = X[0]
        if fail >= 0:
            return st, fail, xs[: max(0, fail - n_transient)]
        return C_OK, -1, xs

    def iterate_points(self, X0, int n_transient, int n_keep):
        cdef double X[3]
        cdef double X5[3]
        cdef double tr[21]
        cdef int st = C_OK
        cdef int i, total
        cdef int fail = -1
        pts = np.empty((n_keep, 3))
        cdef double[:, ::1] pv = pts
        X[0] = X0[0]; X[1] = X0[1]; X[2] = X0[2]
        total = n_transient + n_keep
        with nogil:
            for i in range(total):
                st = _return_map_c(&self.S, X, X5, tr, False)
                if st != C_OK:
                    fail = i
                    break
                X[0] = X5[0]; X[1] = X5[1]; X[2] = X5[2]
                if fabs(X[0]) > self.S.escape or fabs(X[1]) > self.S.escape or fabs(X[2]) > self.S.escape:
                    st = C_ERR_ESCAPE
                    fail = i
                    break
                if i >= n_transient:
                    pv[i - n_transient, 0] = X[0]
                    pv[i - n_transient, 1] = X[1]
                    pv[i - n_transient, 2] = X[2]
        if fail >= 0:
            return st, fail, pts[: max(0, fail - n_transient)]
        return C_OK, -1, pts

    def section_sequence(self, X0, int n_skip, int n_keep):
        cdef double X[3]
        cdef double X_exit[3]
        cdef double X3[3]
        cdef double Xv[3]
        cdef double Xc[3]
        cdef double t_now = 0.0, t_exit, seg_end, t_from, tc, oc, dur, t_abs_exit
        cdef double last_exit = -1e300
        cdef double w1 = self.S.x1_window
        cdef double max_time
        cdef int got = 0, want, st, stc, j, npend, k
        cdef double pend_t[8]
        cdef double pend_x[8][3]
        cdef int found_e
        pts = np.empty((n_keep, 3))
        kinds = np.zeros(n_keep, dtype=np.int64)
        cdef double[:, ::1] pv = pts
        cdef long long[::1] kv = kinds
        want = n_skip + n_keep
        X[0] = X0[0]; X[1] = X0[1]; X[2] = X0[2]
        max_time = fmax(4.0, 3.0*self.S.trev)*want + 100.0*self.S.trev
        npend = 0
        if X[0] < 0.0:
            st = _left_leg_c(&self.S, X, &dur, X3)
            if st != C_OK:
                return st, pts[:0], kinds[:0]
            X[0] = X3[0]; X[1] = X3[1]; X[2] = X3[2]
            t_now += dur
        with nogil:
            st = C_OK
            while got < want and t_now < max_time:
                if fabs(X[0]) > self.S.escape or fabs(X[1]) > self.S.escape or fabs(X[2]) > self.S.escape:
                    st = C_ERR_ESCAPE
                    break
                found_e = _next_exit_c(&self.S, X, self.S.trev, self.S.min_time, &t_exit, X_exit)
                seg_end = t_exit if found_e == 1 else self.S.trev
                t_from = self.S.min_time
                while True:
                    stc = _first_crossing_c(&self.S, 1, X, self.S.normal, self.S.d_plane,
                                            1.0, seg_end, t_from, 0.0, &tc, Xc, &oc)
                    if stc != 1:
                        break
                    if _accepted_c(&self.S, Xc, oc) and (t_now + tc) - last_exit > w1:
                        if npend < 8:
                            pend_t[npend] = t_now + tc
                            pend_x[npend][0] = Xc[0]
                            pend_x[npend][1] = Xc[1]
                            pend_x[npend][2] = Xc[2]
                            npend += 1
                    t_from = tc + self.S.min_time
                if found_e == 1:
                    t_abs_exit = t_now + t_exit
                    # drop pendings inside the exit window, flush the rest
                    k = 0
                    for j in range(npend):
                        if t_abs_exit - pend_t[j] > w1:
                            if got < want:
                                if got >= n_skip:
                                    pv[got - n_skip, 0] = pend_x[j][0]
                                    pv[got - n_skip, 1] = pend_x[j][1]
                                    pv[got - n_skip, 2] = pend_x[j][2]
                                    kv[got - n_skip] = 0
                                got += 1
                    npend = 0
                    if got >= want:
                        break
                    if _virtual_point_c(&self.S, X_exit, Xv) == 1:
                        if got >= n_skip:
                            pv[got - n_skip, 0] = Xv[0]
                            pv[got - n_skip, 1] = Xv[1]
                            pv[got - n_skip, 2] = Xv[2]
                            kv[got - n_skip] = 1
                        got += 1
                    last_exit = t_abs_exit
                    st = _left_leg_c(&self.S, X_exit, &dur, X3)
                    if st != C_OK:
                        break
                    t_now = t_abs_exit + dur
                    X[0] = X3[0]; X[1] = X3[1]; X[2] = X3[2]
                else:
                    t_now += seg_end
                    _flow_c(&self.S, 1, seg_end, X, Xc)
                    X[0] = Xc[0]; X[1] = Xc[1]; X[2] = Xc[2]
                    k = 0
                    for j in range(npend):
                        if t_now - pend_t[j] > w1:
                            if got < want:
                                if got >= n_skip:
                                    pv[got - n_skip, 0] = pend_x[j][0]
                                    pv[got - n_skip, 1] = pend_x[j][1]
                                    pv[got - n_skip, 2] = pend_x[j][2]
                                    kv[got - n_skip] = 0
                                got += 1
                        else:
                            pend_t[k] = pend_t[j]
                            pend_x[k][0] = pend_x[j][0]
                            pend_x[k][1] = pend_x[j][1]
                            pend_x[k][2] = pend_x[j][2]
                            k += 1
                    npend = k
        if st != C_OK:
            return st, pts[: max(0, got - n_skip)], kinds[: max(0, got - n_skip)]
        if got < want:
            return C_ERR_NO_VIRTUAL, pts[: max(0, got - n_skip)], kinds[: max(0, got - n_skip)]
        return C_OK, pts, kinds

    def settle(self, X0, double tol=1e-9, double t_max=5000.0, bound=None):
        cdef double bnd = self.S.escape if bound is None else float(bound)
        cdef double X[3]
        cdef double Xs[3]
        cdef double Xn[3]
        cdef double X_exit[3]
        cdef double t = 0.0, chunk = 50.0, t_in, budget, dur, t_exit, oc, d
        cdef double e1[3]
        cdef int st, stc, j
        e1[0] = 1.0; e1[1] = 0.0; e1[2] = 0.0
        X[0] = X0[0]; X[1] = X0[1]; X[2] = X0[2]
        with nogil:
            while t < t_max:
                Xs[0] = X[0]; Xs[1] = X[1]; Xs[2] = X[2]
                t_in = 0.0
                while t_in < chunk - 1e-12:
                    budget = chunk - t_in
                    if X[0] <= 0.0:
                        st = _left_chunk_c(&self.S, X, budget, &dur, Xn)
                        if st != C_OK:
                            with gil:
                                return st, np.array([X[0], X[1], X[2]]), t + t_in
                        X[0] = Xn[0]; X[1] = Xn[1]; X[2] = Xn[2]
                    else:
                        stc = _first_crossing_c(&self.S, 1, X, e1, 0.0, 1.0, budget,
                                                self.S.min_time, -1.0, &t_exit, X_exit, &oc)
                        if stc == 1:
                            dur = t_exit
                            X[0] = X_exit[0]; X[1] = X_exit[1]; X[2] = X_exit[2]
                        else:
                            dur = budget
                            _flow_c(&self.S, 1, dur, X, Xn)
                            X[0] = Xn[0]; X[1] = Xn[1]; X[2] = Xn[2]
                    if fabs(X[0]) > bnd or fabs(X[1]) > bnd or fabs(X[2]) > bnd:
                        with gil:
                            return C_ERR_ESCAPE, np.array([X[0], X[1], X[2]]), t + t_in
                    if dur <= 0.0:
                        dur = budget
                    t_in += dur
                t += chunk
                d = sqrt((X[0]-Xs[0])**2 + (X[1]-Xs[1])**2 + (X[2]-Xs[2])**2)
                if d < tol:
                    with gil:
                        return C_OK, np.array([X[0], X[1], X[2]]), t
        return C_ERR_NO_VIRTUAL, np.array([X[0], X[1], X[2]]), t

    def _left_chunk(self, X, double budget):
        cdef double Xi[3]
        cdef double Xo[3]
        cdef double dur
        cdef int st
        Xi[0] = X[0]; Xi[1] = X[1]; Xi[2] = X[2]
        st = _left_chunk_c(&self.S, Xi, budget, &dur, Xo)
        return st, dur, np.array([Xo[0], Xo[1], Xo[2]])
