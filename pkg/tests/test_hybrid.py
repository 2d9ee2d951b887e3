import numpy as np
import pytest
from scipy.integrate import solve_ivp

from beblab.hybrid import (
    extract_section_sequence,
    settle_to_equilibrium,
    simulate,
    write_trajectory_csv,
)
from beblab.retmap import iterate_x
from beblab.system import SystemParams, companion_matrices, equilibria, line_g

EX = SystemParams()


class TestSimulate:
    def test_equilibrium_is_single_constant_segment(self):
        p = EX.with_mu(-1.0)
        eq = equilibria(p)[0].location
        segs = simulate(p, eq, 30.0)
        assert len(segs) == 1
        assert np.allclose(segs[0].end, eq, atol=1e-9)

    def test_duration_zero_single_sample(self):
        segs = simulate(EX, np.array([0.5, 0.0, 0.5]), 0.0)
        assert len(segs) == 1 and len(segs[0].samples) == 1

    def test_alternating_sides_and_boundary_residuals(self):
        segs = simulate(EX, line_g(EX, -0.001), 150.0)
        assert len(segs) > 5
        for a, b in zip(segs, segs[1:]):
            assert a.side != b.side
            assert abs(a.end[0]) <= 1e-10  # interior endpoints on the plane
            assert np.allclose(a.end, b.start, atol=1e-12)
        for seg in segs:
            xs = np.array([X[0] for _, X in seg.samples])
            if seg.side == "right":
                assert xs.min() > -1e-8
            else:
                assert xs.max() < 1e-8

    def test_vector_field_continuity_at_interfaces(self):
        CL, CR = companion_matrices(EX)
        e3mu = np.array([0, 0, EX.mu])
        segs = simulate(EX, line_g(EX, -0.001), 60.0)
        for seg in segs[:-1]:
            X = seg.end
            vL = CL @ X + e3mu
            vR = CR @ X + e3mu
            assert np.allclose(vL, vR, atol=1e-12 * 30)

    def test_nonlinear_right_side_identical_to_linear(self):
        # starting in the right half-space, the quadratic flag cannot change
        # the leg (the term lives on the left piece only)
        X0 = np.array([0.5, 0.2, 0.8])
        a = simulate(EX, X0, 3.0)
        b = simulate(SystemParams(nonlinear=True), X0, 3.0)
        assert a[0].side == b[0].side == "right"
        ta, Xa = a[0].samples[-1]
        tb, Xb = b[0].samples[-1]
        assert np.isclose(ta, tb, atol=1e-10)
        assert np.allclose(Xa, Xb, atol=1e-10)

    def test_rk_path_matches_exact_flow_on_linear_left(self):
        # the integrator path forced on the linear left piece agrees with the
        # exact flow
        segs_exact = simulate(EX, line_g(EX, -0.004), 8.0)
        segs_rk = simulate(EX, line_g(EX, -0.004), 8.0, force_rk=True)
        assert len(segs_exact) == len(segs_rk)
        for sa, sb in zip(segs_exact, segs_rk):
            assert sa.side == sb.side
            assert np.allclose(sa.end, sb.end, atol=1e-8)
            assert np.isclose(sa.t_end, sb.t_end, atol=1e-8)

    def test_csv_export(self, tmp_path):
        segs = simulate(EX, line_g(EX, -0.001), 10.0)
        path = tmp_path / "traj.csv"
        rows = write_trajectory_csv(path, segs)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "t,x,y,z,side"
        assert len(lines) == rows + 1


class TestNonlinearAgainstIntegratorOracle:
    def test_left_leg_against_scipy(self):
        # one excursion of the quadratic system vs a high-accuracy reference
        p = SystemParams(mu=0.8, nonlinear=True)
        CL, _ = companion_matrices(p)
        e3mu = np.array([0, 0, p.mu])

        def rhs(t, X):
            return CL @ X + e3mu + np.array([X[0] * X[1], 0, 0])

        segs = simulate(p, line_g(p, -0.004), 3.0)
        left = next(s for s in segs if s.side == "left")
        sol = solve_ivp(
            rhs,
            (left.t_start, left.t_end),
            left.start,
            rtol=1e-12,
            atol=1e-14,
        )
        assert np.allclose(sol.y[:, -1], left.end, atol=1e-8)


class TestExtraction:
    def test_count_validation(self):
        with pytest.raises(ValueError):
            extract_section_sequence(EX, line_g(EX, -0.001), 0)

    def test_single_point(self):
        seq = extract_section_sequence(EX, line_g(EX, -0.001), 1)
        assert len(seq) == 1
        assert seq[0].kind in ("real", "virtual")

    def test_points_lie_on_section(self):
        from beblab.system import section_geometry

        geo = section_geometry(EX)
        seq = extract_section_sequence(EX, line_g(EX, -0.001), 200, transient=20)
        for s in seq:
            assert abs(geo.normal @ s.point - geo.normal @ geo.X_R) < 1e-9

    def test_identity_revolutions_yield_real_points(self):
        seq = extract_section_sequence(EX, line_g(EX, -0.001), 400, transient=50)
        kinds = {s.kind for s in seq}
        assert kinds == {"real", "virtual"}

    def test_sequence_tracks_map_iteration(self):
        # same attractor: ranges agree closely after transient
        xs_map = iterate_x(EX, line_g(EX, -0.001), 300, 1500)
        seq = extract_section_sequence(EX, line_g(EX, -0.001), 1500, transient=300)
        xs_hyb = np.array([s.point[0] for s in seq])
        assert abs(xs_map.min() - xs_hyb.min()) < 1e-4
        assert abs(xs_map.max() - xs_hyb.max()) < 1e-4


class TestSettle:
    def test_linear_settles_to_equilibrium(self):
        p = EX.with_mu(-0.7)
        X = settle_to_equilibrium(p)
        assert np.allclose(X, equilibria(p)[0].location, atol=1e-7)

    def test_nonlinear_against_newton_oracle(self):
        p = SystemParams(mu=-0.5, nonlinear=True)
        X = settle_to_equilibrium(p)
        CL, _ = companion_matrices(p)

        def F(Z):
            return CL @ Z + np.array([0, 0, p.mu]) + np.array([Z[0] * Z[1], 0, 0])

        Z = equilibria(p)[0].location.copy()
        for _ in range(60):
            J = CL + np.array([[Z[1], Z[0], 0], [0, 0, 0], [0, 0, 0]])
            Z = Z - np.linalg.solve(J, F(Z))
        assert np.allclose(X, Z, atol=1e-7)

    def test_quadratic_correction_shrinks_with_mu(self):
        # the deviation from the piecewise-linear equilibrium is second order
        devs = {}
        for mu in (-0.5, -0.05):
            p = SystemParams(mu=mu, nonlinear=True)
            X = settle_to_equilibrium(p)
            devs[mu] = np.linalg.norm(X - equilibria(p)[0].location)
        ratio = devs[-0.5] / devs[-0.05]
        assert 50 < ratio < 500  # quadratic scaling up to the cubic factor

    def test_mu_zero_settles_at_origin(self):
        p = SystemParams(mu=0.0, nonlinear=True)
        X = settle_to_equilibrium(p)
        assert np.linalg.norm(X) < 1e-9
