"""Coagulation-diffusion solver: semigroups, split steps, Picard iteration.

Oracles: analytic Fourier-mode decay for the diffusion semigroups, a
high-accuracy 0-D ODE integration for the coagulation dynamics, and the
closed-form constant-kernel solution.
"""

import math

import numpy as np
import pytest

from coagmc.kernels import WeightSpec, ou_mass_kernel, pair_bound_weight
from coagmc.smoluchowski import (
    MassField,
    MassGrid,
    Problem,
    SignedMassField,
    StabilityError,
    apply_drift_semigroup,
    apply_heat_semigroup,
    boundary_mass_fraction,
    coag_gain,
    coag_loss,
    constant_kernel_number,
    homogeneous_oracle,
    linearized_solve,
    load_checkpoint,
    measured_inequality_constant,
    mild_residual,
    moment_monitor,
    picard_solve,
    save_checkpoint,
    strang_step,
    uniform_field,
    w_distance,
)


def constant_kernel_problem(J=12, d=3, rho=2.0):
    # weight with u = 1/2 and c1 = 1 so <w^2, mu> equals the conserved mass
    return Problem(grid=MassGrid(delta=1.0, rho=rho, J=J),
                   kernel=lambda y1, y2: np.ones(np.broadcast(y1, y2).shape),
                   a=lambda y: np.full(np.shape(y) or (), 0.5),
                   weight=WeightSpec(c1=1.0, u=0.5))


def ou_problem(J=12, d=3):
    return Problem(grid=MassGrid(delta=1.0, rho=2.0, J=J),
                   kernel=ou_mass_kernel,
                   a=lambda y: np.asarray(y, dtype=float) ** (-1.0 / 3.0),
                   weight=pair_bound_weight(), d=d)


class TestGridsAndFields:
    def test_geometric_edges_and_pivots(self):
        g = MassGrid(delta=0.5, rho=2.0, J=4)
        np.testing.assert_allclose(g.edges, 0.5 * 2.0 ** np.arange(5))
        np.testing.assert_allclose(g.pivots, np.sqrt(g.edges[:-1] * g.edges[1:]))

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            MassGrid(delta=0.0)
        with pytest.raises(ValueError):
            MassGrid(rho=1.0)
        with pytest.raises(ValueError):
            MassGrid(J=1)

    def test_field_rejects_negative_values(self):
        g = MassGrid(J=3)
        vals = np.zeros((2, 2, 3))
        vals[0, 0, 0] = -1.0
        with pytest.raises(ValueError):
            MassField(grid=g, d=2, L=1.0, n=2, values=vals)

    def test_signed_field_allows_negative_values(self):
        g = MassGrid(J=3)
        vals = np.zeros((2, 2, 3))
        vals[0, 0, 0] = -1.0
        fld = SignedMassField(grid=g, d=2, L=1.0, n=2, values=vals)
        assert fld.signed

    def test_mass_and_number_totals(self):
        g = MassGrid(delta=1.0, rho=2.0, J=2)
        fld = uniform_field(g, d=1, L=2.0, n=4, bin_densities=[3.0, 1.0])
        # number: (3 + 1) per unit volume * volume 2
        assert fld.number_total() == pytest.approx(8.0)
        assert fld.mass_l1() == pytest.approx(2.0 * (3.0 * g.pivots[0] + g.pivots[1]))


class TestHeatSemigroup:
    def test_fourier_mode_decays_at_exact_rate(self):
        prob = constant_kernel_problem(J=2, d=1)
        n, L = 32, 4.0
        x = np.arange(n) * L / n
        vals = np.zeros((n, 2))
        vals[:, 0] = 2.0 + np.cos(2 * math.pi * x / L)
        vals[:, 1] = 2.0 + np.sin(4 * math.pi * x / L)
        fld = MassField(grid=prob.grid, d=1, L=L, n=n, values=vals)
        dt = 0.3
        out = apply_heat_semigroup(fld, dt, prob)
        k1 = 2 * math.pi / L
        a = prob.a_vec
        exp1 = 2.0 + np.cos(k1 * x) * math.exp(-0.5 * a[0] * k1 ** 2 * dt)
        exp2 = 2.0 + np.sin(2 * k1 * x) * math.exp(-0.5 * a[1] * (2 * k1) ** 2 * dt)
        np.testing.assert_allclose(out.values[:, 0], exp1, atol=1e-13)
        np.testing.assert_allclose(out.values[:, 1], exp2, atol=1e-13)

    def test_preserves_per_bin_number_exactly(self):
        prob = ou_problem(J=6)
        rng = np.random.default_rng(1)
        fld = MassField(grid=prob.grid, d=3, L=1.0, n=8,
                        values=rng.random((8, 8, 8, 6)))
        out = apply_heat_semigroup(fld, 0.7, prob)
        np.testing.assert_allclose(out.values.sum(axis=(0, 1, 2)),
                                   fld.values.sum(axis=(0, 1, 2)), rtol=1e-12)

    def test_semigroup_property(self):
        prob = ou_problem(J=4)
        rng = np.random.default_rng(2)
        fld = MassField(grid=prob.grid, d=2, L=2.0, n=16,
                        values=rng.random((16, 16, 4)))
        once = apply_heat_semigroup(fld, 0.5, prob)
        twice = apply_heat_semigroup(apply_heat_semigroup(fld, 0.2, prob), 0.3, prob)
        np.testing.assert_allclose(once.values, twice.values, atol=1e-12)

    def test_zero_dt_is_identity(self):
        prob = ou_problem(J=4)
        fld = uniform_field(prob.grid, d=1, L=1.0, n=8, bin_densities=np.ones(4))
        out = apply_heat_semigroup(fld, 0.0, prob)
        np.testing.assert_array_equal(out.values, fld.values)


class TestDriftSemigroup:
    def drift_problem(self, B_scale=0.5):
        return Problem(grid=MassGrid(delta=1.0, rho=2.0, J=3),
                       kernel=lambda y1, y2: np.ones(np.broadcast(y1, y2).shape),
                       a=lambda y: np.asarray(y, dtype=float) ** (-1.0 / 3.0),
                       B=lambda y: B_scale * np.asarray(y, dtype=float) ** (-0.5),
                       weight=WeightSpec(c1=1.0, u=0.5))

    def test_zero_drift_reduces_to_heat(self):
        prob = self.drift_problem(B_scale=0.0)
        rng = np.random.default_rng(3)
        fld = MassField(grid=prob.grid, d=2, L=1.0, n=8,
                        values=rng.random((8, 8, 3)))
        np.testing.assert_allclose(apply_drift_semigroup(fld, 0.2, prob).values,
                                   apply_heat_semigroup(fld, 0.2, prob).values,
                                   atol=1e-13)

    def test_preserves_number_and_nonnegativity(self):
        prob = self.drift_problem()
        rng = np.random.default_rng(4)
        fld = MassField(grid=prob.grid, d=2, L=2.0, n=16,
                        values=rng.random((16, 16, 3)))
        out = apply_drift_semigroup(fld, 0.4, prob)
        np.testing.assert_allclose(out.values.sum(axis=(0, 1)),
                                   fld.values.sum(axis=(0, 1)), rtol=1e-10)
        assert out.values.min() > -1e-10

    def test_spreads_more_than_heat(self):
        # the drifted kernel is the heat kernel tilted outward: starting from a
        # point concentration the peak must sit below the pure-heat peak
        prob = self.drift_problem(B_scale=2.0)
        vals = np.zeros((32, 3))
        vals[0, :] = 1.0
        fld = MassField(grid=prob.grid, d=1, L=4.0, n=32, values=vals)
        drift = apply_drift_semigroup(fld, 0.2, prob)
        heat = apply_heat_semigroup(fld, 0.2, prob)
        assert drift.values[:, 0].max() < heat.values[:, 0].max()


class TestCoagulation:
    def test_gain_loss_balance_conserves_mass(self):
        prob = ou_problem(J=10)
        rng = np.random.default_rng(5)
        fld = MassField(grid=prob.grid, d=1, L=1.0, n=4,
                        values=0.1 * rng.random((4, 10)))
        gain, over_rate = coag_gain(fld, prob)
        loss = coag_loss(fld, prob)
        m = prob.grid.pivots
        net = float(((gain - loss) @ m).sum()) * fld.cell_volume
        assert net == pytest.approx(-over_rate, abs=1e-12 * max(1.0, abs(over_rate)))

    def test_number_loss_rate_for_constant_kernel(self):
        # d(number)/dt = -n^2/2 for K = 1 and all mass in the lowest bins
        prob = constant_kernel_problem(J=12)
        dens = np.zeros(12)
        dens[0] = 2.0
        fld = uniform_field(prob.grid, d=1, L=1.0, n=2, bin_densities=dens)
        gain, _ = coag_gain(fld, prob)
        loss = coag_loss(fld, prob)
        rate = float((gain - loss).sum(axis=-1)[0])
        assert rate == pytest.approx(-0.5 * 2.0 ** 2, rel=1e-12)

    def test_pairs_beyond_top_pivot_go_to_overflow(self):
        prob = constant_kernel_problem(J=3)
        dens = np.zeros(3)
        dens[2] = 1.0  # top bin: every coagulation overflows
        fld = uniform_field(prob.grid, d=1, L=1.0, n=2, bin_densities=dens)
        gain, over_rate = coag_gain(fld, prob)
        assert np.all(gain == 0.0)
        assert over_rate == pytest.approx(0.5 * 1.0 * 2.0 * prob.grid.pivots[2],
                                          rel=1e-12)


class TestStrangStep:
    def test_stability_error_carries_working_suggestion(self):
        prob = ou_problem(J=8)
        fld = uniform_field(prob.grid, d=1, L=1.0, n=4,
                            bin_densities=np.full(8, 10.0))
        with pytest.raises(StabilityError) as exc:
            strang_step(fld, 10.0, prob)
        strang_step(fld, exc.value.suggested * 0.99, prob)  # must not raise

    @staticmethod
    def stable_dt(fld, prob):
        try:
            strang_step(fld, 1e9, prob)
        except StabilityError as exc:
            return exc.suggested * 0.5
        return 1e9

    def test_mass_nonincreasing_and_accounted(self):
        prob = ou_problem(J=10)
        dens = np.zeros(10)
        dens[:3] = [0.05, 0.02, 0.01]
        fld = uniform_field(prob.grid, d=3, L=1.0, n=4, bin_densities=dens)
        cur = fld
        dt = self.stable_dt(fld, prob)
        for _ in range(5):
            cur = strang_step(cur, dt, prob)
        assert cur.values.min() >= 0.0
        assert cur.mass_l1() <= fld.mass_l1() + 1e-12
        # mass lost is exactly the tracked overflow plus clipped mass
        lost = fld.mass_l1() - cur.mass_l1()
        assert lost == pytest.approx(cur.overflow + cur.clipped,
                                     abs=1e-10 * fld.mass_l1())

    def test_matches_homogeneous_oracle_to_second_order(self):
        prob = constant_kernel_problem(J=12)
        dens = np.zeros(12)
        dens[0] = 1.0
        T = 1.0
        _, traj = homogeneous_oracle(prob, dens, T, n_eval=2)
        ref = traj[-1]

        def final_error(n_steps):
            fld = uniform_field(prob.grid, d=1, L=1.0, n=2, bin_densities=dens)
            for _ in range(n_steps):
                fld = strang_step(fld, T / n_steps, prob)
            return float(np.abs(fld.values[0] - ref).sum())

        e1, e2 = final_error(40), final_error(80)
        assert e1 / e2 == pytest.approx(4.0, abs=0.5)


class TestLinearizedSolve:
    def test_single_bin_background_gives_exact_decay(self):
        prob = constant_kernel_problem(J=12)
        nu_dens = np.zeros(12)
        nu_dens[0] = 3.0
        nu = uniform_field(prob.grid, d=1, L=1.0, n=2, bin_densities=nu_dens)
        q0 = uniform_field(prob.grid, d=1, L=1.0, n=2, bin_densities=nu_dens)
        T, n_steps = 0.5, 10
        path = linearized_solve(nu, q0, T, prob, n_steps)
        # bin-0 content only decays (gain feeds the 2*delta bin); the decay
        # rate is c0 = K00 nu0 = 3, and the exponential is exact per step
        assert path[-1].values[0, 0] == pytest.approx(3.0 * math.exp(-3.0 * T),
                                                      rel=1e-12)

    def test_contracts_signed_differences(self):
        prob = ou_problem(J=8)
        rng = np.random.default_rng(6)
        nu = uniform_field(prob.grid, d=1, L=1.0, n=4,
                           bin_densities=0.2 * rng.random(8))
        diff0 = SignedMassField(grid=prob.grid, d=1, L=1.0, n=4,
                                values=rng.standard_normal((4, 8)) * 0.01)
        path = linearized_solve(nu, diff0, 0.5, prob, 10)
        norm0 = float((np.abs(path[0].values) @ prob.w_vec).sum())
        for fld in path[1:]:
            norm = float((np.abs(fld.values) @ prob.w_vec).sum())
            assert norm <= norm0 * (1.0 + 1e-10)

    def test_rejects_negative_background(self):
        prob = ou_problem(J=4)
        bad = SignedMassField(grid=prob.grid, d=1, L=1.0, n=2,
                              values=-np.ones((2, 4)))
        q0 = uniform_field(prob.grid, d=1, L=1.0, n=2, bin_densities=np.ones(4))
        with pytest.raises(ValueError):
            linearized_solve(bad, q0, 0.1, prob, 2)


class TestPicard:
    def test_converges_to_homogeneous_oracle(self):
        prob = constant_kernel_problem(J=12)
        dens = np.zeros(12)
        dens[0] = 1.0
        mu0 = uniform_field(prob.grid, d=1, L=1.0, n=2, bin_densities=dens)
        T = 0.8
        path, report = picard_solve(mu0, T, prob, n_steps=160)
        _, traj = homogeneous_oracle(prob, dens, T, n_eval=2)
        # the mild-form fixed point freezes the background within each step,
        # so its time discretization is first order: error ~ dt here
        np.testing.assert_allclose(path[-1].values[0], traj[-1], atol=1e-3)
        assert all(f < 1.0 for f in report.contraction_factors)

    def test_reported_residual_is_small_at_fixed_point(self):
        prob = constant_kernel_problem(J=10)
        dens = np.zeros(10)
        dens[0] = 0.5
        mu0 = uniform_field(prob.grid, d=1, L=1.0, n=2, bin_densities=dens)
        path, _ = picard_solve(mu0, 0.5, prob, n_steps=20)
        assert mild_residual(path, 0.5, prob, 20) < 1e-7

    def test_rejects_mass_below_floor(self):
        prob = constant_kernel_problem(J=4)
        grid = MassGrid(delta=1.0, rho=2.0, J=4)
        vals = np.zeros((2, 4))
        mu0 = MassField(grid=grid, d=1, L=1.0, n=2, values=vals)
        mu0.grid.pivots[0] = 0.5  # simulate support below the floor
        vals2 = vals.copy()
        vals2[:, 0] = 1.0
        mu0 = MassField(grid=mu0.grid, d=1, L=1.0, n=2, values=vals2)
        with pytest.raises(ValueError):
            picard_solve(mu0, 0.1, prob, n_steps=2)


class TestMonitors:
    def test_riccati_bound_dominates_measured_moment(self):
        prob = ou_problem(J=10)
        dens = np.zeros(10)
        dens[:2] = 0.02
        mu0 = uniform_field(prob.grid, d=3, L=1.0, n=4, bin_densities=dens)
        path = [mu0]
        cur = mu0
        dt = TestStrangStep.stable_dt(mu0, prob)
        for _ in range(8):
            cur = strang_step(cur, dt, prob)
            path.append(cur)
        report = moment_monitor(path, prob, check_wv=True)
        assert np.all(report.w2_sup <= report.riccati_bound + 1e-9)
        assert report.wv_max_excess <= 1e-6
        assert report.T_star > 0

    def test_measured_constant_is_positive_and_finite(self):
        C = measured_inequality_constant(ou_problem(J=16))
        assert 0 < C < 1e3

    def test_report_round_trips_to_csv(self, tmp_path):
        prob = constant_kernel_problem(J=6)
        mu0 = uniform_field(prob.grid, d=1, L=1.0, n=2,
                            bin_densities=np.r_[0.5, np.zeros(5)])
        path, report = picard_solve(mu0, 0.3, prob, n_steps=5)
        out = tmp_path / "moments.csv"
        report.to_csv(out)
        lines = out.read_text().strip().splitlines()
        assert lines[0].startswith("t,")
        assert len(lines) == report.t.size + 1


class TestOracleAndClosedForm:
    def test_constant_kernel_total_number_closed_form(self):
        prob = constant_kernel_problem(J=20)
        dens = np.zeros(20)
        n0 = 1.0
        dens[0] = n0
        T = 4.0 / n0
        times, traj = homogeneous_oracle(prob, dens, T)
        total = traj.sum(axis=1)
        np.testing.assert_allclose(total, constant_kernel_number(n0, times),
                                   rtol=1e-6)

    def test_oracle_conserves_mass(self):
        prob = ou_problem(J=14)
        dens = np.zeros(14)
        dens[:2] = 0.05
        times, traj = homogeneous_oracle(prob, dens, 2.0)
        mass = traj @ prob.grid.pivots
        assert abs(mass[-1] - mass[0]) / mass[0] < 1e-6


class TestCheckpointsAndDiagnostics:
    def test_checkpoint_round_trip(self, tmp_path):
        prob = ou_problem(J=5)
        rng = np.random.default_rng(7)
        fld = MassField(grid=prob.grid, d=2, L=3.0, n=8,
                        values=rng.random((8, 8, 5)), t=1.25, overflow=0.5)
        p = tmp_path / "state.npz"
        save_checkpoint(fld, p, kernel_id="test")
        back = load_checkpoint(p)
        np.testing.assert_array_equal(back.values, fld.values)
        assert back.t == fld.t
        assert back.overflow == fld.overflow
        assert back.grid.J == fld.grid.J
        assert back.L == fld.L

    def test_boundary_mass_fraction_concentrated_center(self):
        g = MassGrid(J=2)
        vals = np.zeros((8, 8, 2))
        vals[4, 4, 0] = 1.0
        fld = MassField(grid=g, d=2, L=1.0, n=8, values=vals)
        assert boundary_mass_fraction(fld) == 0.0
        vals[0, 3, 0] = 1.0
        fld = MassField(grid=g, d=2, L=1.0, n=8, values=vals)
        assert boundary_mass_fraction(fld) == pytest.approx(0.5)

    def test_w_distance_is_zero_on_identical_paths(self):
        prob = ou_problem(J=4)
        fld = uniform_field(prob.grid, d=1, L=1.0, n=2, bin_densities=np.ones(4))
        assert w_distance([fld], [fld.copy()], prob) == 0.0
