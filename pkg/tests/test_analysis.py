import numpy as np
import pytest

from beblab.analysis import (
    SweepConfig,
    TrapRegion,
    attractor_samples,
    detect_period,
    empirical_trap_region,
    fold_coords,
    from_fold_coords,
    ks_distance,
    sweep_gamma_L,
    sweep_mu,
    trap_check,
    write_sweep_csv,
)
from beblab.system import SystemParams, equilibria, line_g, section_geometry

EX = SystemParams()


class TestDetectPeriod:
    def test_constant_is_period_1(self):
        assert detect_period(np.full(120, 0.7), 1e-9, 32) == 1

    def test_two_cycle(self):
        s = np.tile([0.1, -0.2], 60)
        assert detect_period(s, 1e-9, 32) == 2

    def test_none_for_noise(self):
        rng = np.random.default_rng(0)
        assert detect_period(rng.uniform(size=200), 1e-9, 32) is None

    def test_length_precondition(self):
        with pytest.raises(ValueError):
            detect_period(np.zeros(50), 1e-9, 32)


class TestAttractorSamples:
    def test_single_keep(self):
        xs = attractor_samples(EX, -0.001, 10, 1)
        assert xs.shape == (1,)

    def test_stable_parameters_collapse_to_fixed_point(self):
        xs = attractor_samples(EX.with_gamma_L(0.35), -0.05, 800, 200)
        assert xs.max() - xs.min() < 1e-9
        assert detect_period(xs, 1e-7, 32) == 1

    def test_reference_attractor_band(self):
        xs = attractor_samples(EX, -0.001, 500, 2000)
        assert -0.14 < xs.min() < -0.12
        assert 0.02 < xs.max() < 0.04


class TestFoldCoords:
    def test_round_trip(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            x, d = rng.uniform(-0.2, 0.2, 2)
            X = from_fold_coords(EX, x, d)
            fc = fold_coords(EX, X[None, :])[0]
            assert np.allclose(fc, (x, d), atol=1e-12)

    def test_lift_lies_on_section(self):
        geo = section_geometry(EX)
        X = from_fold_coords(EX, -0.01, 3e-4)
        assert abs(geo.normal @ X - geo.normal @ geo.X_R) < 1e-12

    def test_unstable_line_has_zero_d(self):
        fc = fold_coords(EX, line_g(EX, -0.03)[None, :])[0]
        assert abs(fc[1]) < 1e-14


class TestTrap:
    def test_empirical_region_traps(self):
        region = empirical_trap_region(EX, n_samples=3000)
        report = trap_check(EX, region, 400)
        assert report.contained
        assert report.margin_x > 0 and report.margin_d > 0
        assert report.failures == 0

    def test_tiny_box_around_repeller_fails(self):
        # a small box around a point of the expanding unstable line is mapped
        # outside itself
        region = TrapRegion(0.1, 0.11, -1e-4, 1e-4)
        report = trap_check(EX, region, 120)
        assert not report.contained

    def test_doubling_boundary_preserves_verdict(self):
        region = empirical_trap_region(EX, n_samples=2000)
        a = trap_check(EX, region, 200)
        b = trap_check(EX, region, 400)
        assert a.contained == b.contained

    def test_validation(self):
        with pytest.raises(ValueError):
            TrapRegion(0.1, 0.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            trap_check(EX, TrapRegion(-1, 1, -1, 1), 50)


class TestSweepGamma:
    CFG = SweepConfig(n_transient=400, n_keep=160, max_period=32)

    def test_period_one_at_high_gamma(self):
        recs = sweep_gamma_L(EX, (0.3, 0.35), 3, self.CFG)
        assert [r.period for r in recs] == [1, 1, 1]
        assert recs[0].param_value < recs[-1].param_value  # ordered output

    def test_cascade_bands_ordered(self):
        recs = sweep_gamma_L(EX, (0.08, 0.35), 24, self.CFG)
        by_period = {}
        for r in recs:
            if r.period in (1, 2, 4):
                by_period.setdefault(r.period, []).append(r.param_value)
        assert set(by_period) == {1, 2, 4}
        assert min(by_period[1]) > max(by_period[2]) > min(by_period[2]) > max(by_period[4])

    def test_warm_vs_cold_start_periods_agree(self):
        cold = []
        for g in np.linspace(0.35, 0.2, 6):
            xs = attractor_samples(EX.with_gamma_L(float(g)), -0.05, 400, 160)
            cold.append(detect_period(xs, 1e-7, 32))
        warm = [r.period for r in sweep_gamma_L(EX, (0.2, 0.35), 6, self.CFG)][::-1]
        assert cold == warm

    def test_parallel_matches_serial_structure(self):
        serial = sweep_gamma_L(EX, (0.25, 0.35), 8, self.CFG)
        par = sweep_gamma_L(
            EX, (0.25, 0.35), 8,
            SweepConfig(n_transient=400, n_keep=160, max_period=32, workers=2),
        )
        assert [r.period for r in serial] == [r.period for r in par]
        assert [r.param_value for r in serial] == [r.param_value for r in par]

    def test_branch_extent_scales_linearly_with_mu(self):
        # the attractor extent in x grows linearly in the boundary parameter
        recs = {}
        for mu in (0.5, 1.0, 2.0):
            xs = attractor_samples(EX.with_mu(mu), -0.001 * mu, 400, 400)
            recs[mu] = xs.max() - xs.min()
        assert abs(recs[0.5] / recs[1.0] - 0.5) < 0.01 * 0.5
        assert abs(recs[2.0] / recs[1.0] - 2.0) < 0.01 * 2.0


class TestSweepMu:
    CFG = SweepConfig(n_transient=300, n_keep=120, max_period=32)

    def test_negative_branch_single_sample_tracks_equilibrium(self):
        recs = sweep_mu(EX, (-0.6, -0.2), 3, self.CFG)
        for r in recs:
            assert r.error is None
            assert len(r.samples) == 1
            xl = equilibria(SystemParams(mu=r.param_value, nonlinear=True))[0].location[0]
            assert abs(r.samples[0] - xl) < 1e-6  # x-component is exact for this term

    def test_positive_branch_sampled_from_orbit(self):
        recs = sweep_mu(EX, (0.4, 0.8), 3, self.CFG)
        for r in recs:
            assert r.error is None
            assert len(r.samples) == 120
            assert r.samples.min() < 0 < r.param_value

    def test_settle_fails_cleanly_beyond_equilibrium_blowup(self):
        # the quadratic equilibrium diverges as mu approaches -delta_L; the
        # branch reports non-convergence instead of a bogus value
        from beblab.hybrid import SimulationError, settle_to_equilibrium

        with pytest.raises(SimulationError):
            settle_to_equilibrium(SystemParams(mu=-0.9, nonlinear=True), t_max=300.0)

    def test_spans_zero(self):
        recs = sweep_mu(EX, (-0.4, 0.4), 5, self.CFG)
        assert all(r.error is None for r in recs)
        neg = [r for r in recs if r.param_value <= 0]
        pos = [r for r in recs if r.param_value > 0]
        assert all(len(r.samples) == 1 for r in neg)
        assert all(len(r.samples) == 120 for r in pos)


def test_ks_distance_properties():
    rng = np.random.default_rng(3)
    a = rng.normal(size=400)
    assert ks_distance(a, a) == 0.0
    b = rng.normal(size=400) + 3.0
    assert ks_distance(a, b) > 0.85
    c = rng.normal(size=4000)
    d = rng.normal(size=4000)
    assert ks_distance(c, d) < 0.05


def test_write_sweep_csv(tmp_path):
    recs = sweep_gamma_L(EX, (0.3, 0.35), 2, SweepConfig(n_transient=200, n_keep=100))
    out = tmp_path / "sweep.csv"
    rows = write_sweep_csv(out, recs)
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "param,sample_index,x,period,lyapunov"
    assert len(lines) == rows + 1
    assert rows == 200
