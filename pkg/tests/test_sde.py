"""Path simulators: exact velocity-process stepper, crossing detection, batches.

The stepper's conditional moments are checked against direct quadrature of the
defining stochastic integrals before the samplers built on them are trusted.
"""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from coagmc.sde import (
    CollisionOutcome,
    OUPairConfig,
    PairConfig,
    _bridge_prob,
    _ou_moments,
    _place_on_sphere,
    _segment_sphere_crossing,
    bridge_collision_check,
    path_rngs,
    run_brownian_batch,
    run_first_collision,
    run_ou_batch,
    step_brownian_pair,
    step_ou_pair_exact,
)


def moments_by_quadrature(theta, sigma, dt):
    # V_t = e^{-theta t} V_0 + sigma int e^{-theta(t-s)} dB_s
    # X_t = X_0 + int V_s ds; Ito isometry gives the entries below
    var_v, _ = integrate.quad(
        lambda s: sigma ** 2 * math.exp(-2 * theta * (dt - s)), 0, dt)
    var_x, _ = integrate.quad(
        lambda s: sigma ** 2 * ((1 - math.exp(-theta * (dt - s))) / theta) ** 2, 0, dt)
    cov, _ = integrate.quad(
        lambda s: sigma ** 2 * math.exp(-theta * (dt - s))
        * (1 - math.exp(-theta * (dt - s))) / theta, 0, dt)
    return var_v, var_x, cov


class TestExactStepperMoments:
    @pytest.mark.parametrize("theta,sigma,dt", [
        (1.0, 1.0, 0.5), (2500.0, 2500.0, 1e-4), (2500.0, 2500.0, 1.0),
        (0.01, 3.0, 2.0), (1e4, 50.0, 1e-6),
    ])
    def test_closed_form_matches_quadrature(self, theta, sigma, dt):
        em1, var_v, var_x, cov = _ou_moments(theta, sigma, dt)
        qv, qx, qc = moments_by_quadrature(theta, sigma, dt)
        assert em1 == pytest.approx(1.0 - math.exp(-theta * dt), rel=1e-12)
        assert var_v == pytest.approx(qv, rel=1e-8)
        assert var_x == pytest.approx(qx, rel=1e-8)
        assert cov == pytest.approx(qc, rel=1e-8)

    def test_sampler_matches_moments_statistically(self):
        cfg = OUPairConfig(d=1, x1=[0.0], x2=[5.0], N=100.0)
        rng = np.random.default_rng(11)
        n = 400_000
        dt = 0.02
        x = np.zeros((n, 1))
        v = np.zeros((n, 1))
        nx1, nv1, _, _ = step_ou_pair_exact((x, v, x.copy(), v.copy()), cfg, dt, rng)
        theta, sigma = cfg.N * cfg.tau1, cfg.N * cfg.b1
        _, var_v, var_x, cov = _ou_moments(theta, sigma, dt)
        for sample, target in ((nx1[:, 0], var_x), (nv1[:, 0], var_v)):
            assert abs(sample.mean()) < 4 * math.sqrt(target / n)
            # var of sample variance ~ 2 sigma^4 / n for Gaussians
            assert abs(sample.var(ddof=1) - target) < 4 * target * math.sqrt(2.0 / n)
        emp_cov = float(np.mean(nx1[:, 0] * nv1[:, 0]))
        assert abs(emp_cov - cov) < 4 * math.sqrt(2.0 * var_x * var_v / n)

    def test_stationary_velocity_variance_is_preserved(self):
        cfg = OUPairConfig(d=1, x1=[0.0], x2=[5.0], N=50.0)
        theta, sigma = cfg.N * cfg.tau1, cfg.N * cfg.b1
        stat = sigma ** 2 / (2.0 * theta)
        rng = np.random.default_rng(12)
        n = 200_000
        v = rng.normal(0.0, math.sqrt(stat), size=(n, 1))
        x = np.zeros((n, 1))
        _, nv, _, _ = step_ou_pair_exact((x, v, x.copy(), v.copy()), cfg, 0.3, rng)
        assert abs(nv.var(ddof=1) - stat) < 4 * stat * math.sqrt(2.0 / n)

    def test_rejects_nonpositive_dt(self):
        cfg = OUPairConfig(d=1, x1=[0.0], x2=[5.0], N=10.0)
        z = np.zeros((2, 1))
        with pytest.raises(ValueError):
            step_ou_pair_exact((z, z, z, z), cfg, 0.0, np.random.default_rng(0))


class TestBrownianStep:
    def test_marginal_is_gaussian_with_the_right_scale(self):
        cfg = PairConfig(d=2, x1=[0.0, 0.0], x2=[3.0, 0.0], a1=0.7, a2=0.3)
        rng = np.random.default_rng(13)
        n = 100_000
        x1 = np.zeros((n, 2))
        x2 = np.tile([3.0, 0.0], (n, 1))
        dt = 0.25
        n1, n2 = step_brownian_pair((x1, x2), cfg, dt, rng)
        for arr, a in ((n1[:, 0], 0.7), (n2[:, 1], 0.3)):
            shifted = arr - arr.mean().round()  # remove the deterministic start
            _, p = stats.kstest(shifted / math.sqrt(a * dt), "norm")
            assert p > 1e-4

    def test_drift_is_applied(self):
        cfg = PairConfig(d=1, x1=[0.0], x2=[3.0],
                         b1=lambda x: np.full(np.shape(x), 2.0), bound_R=10.0)
        rng = np.random.default_rng(14)
        n = 50_000
        n1, _ = step_brownian_pair((np.zeros((n, 1)), np.full((n, 1), 3.0)),
                                   cfg, 0.1, rng)
        assert n1.mean() == pytest.approx(0.2, abs=4 * math.sqrt(0.05 / n))


class TestCrossingDetection:
    def test_straight_pass_through_gives_entry_root(self):
        rel0 = np.array([[2.0, 0.0]])
        rel1 = np.array([[-2.0, 0.0]])
        crossed, s = _segment_sphere_crossing(rel0, rel1, 0.5)
        assert crossed[0]
        assert s[0] == pytest.approx(0.375)  # 2 - 4 s = 0.5

    def test_miss_returns_closest_approach(self):
        rel0 = np.array([[2.0, 1.0]])
        rel1 = np.array([[-2.0, 1.0]])
        crossed, s = _segment_sphere_crossing(rel0, rel1, 0.5)
        assert not crossed[0]
        assert s[0] == pytest.approx(0.5)

    def test_endpoint_just_outside_is_not_a_crossing(self):
        rel0 = np.array([[2.0, 0.0]])
        rel1 = np.array([[0.6, 0.0]])
        crossed, _ = _segment_sphere_crossing(rel0, rel1, 0.5)
        assert not crossed[0]

    def test_placement_keeps_center_of_mass_and_sets_separation(self):
        p1 = np.array([[0.3, 0.0, 0.0]])
        p2 = np.array([[-0.2, 0.1, 0.0]])
        y1, y2 = 2.0, 1.0
        n1, n2 = _place_on_sphere(p1, p2, 0.25, y1, y2)
        assert np.linalg.norm(n1 - n2) == pytest.approx(0.25)
        com_before = (y1 * p1 + y2 * p2) / (y1 + y2)
        com_after = (y1 * n1 + y2 * n2) / (y1 + y2)
        np.testing.assert_allclose(com_after, com_before, atol=1e-14)

    def test_bridge_check_certain_inside(self):
        rng = np.random.default_rng(15)
        assert bridge_collision_check(np.array([0.05, 0.0]),
                                      np.array([1.0, 0.0]), 1.0, 0.1, 0.1, rng)

    def test_bridge_probability_formula(self):
        p = _bridge_prob(np.array([0.2]), np.array([0.3]), 1.0, 0.5)
        assert p[0] == pytest.approx(math.exp(-2 * 0.2 * 0.3 / 0.5))


class TestConfigs:
    def test_pair_rejects_overlapping_start(self):
        with pytest.raises(ValueError):
            PairConfig(d=3, x1=np.zeros(3), x2=np.zeros(3), r_N=0.1)

    def test_pair_rejects_coefficients_outside_declared_bounds(self):
        with pytest.raises(ValueError):
            PairConfig(d=2, x1=[0.0, 0.0], x2=[1.0, 0.0],
                       a1=lambda x: np.full(len(x), 100.0), bound_R=10.0)
        with pytest.raises(ValueError):
            PairConfig(d=2, x1=[0.0, 0.0], x2=[1.0, 0.0],
                       b1=lambda x: np.full((len(x), 2), 99.0), bound_R=10.0)

    def test_ou_radius_regime_constraints(self):
        with pytest.raises(ValueError):  # fast regime needs r_N < N^-alpha
            OUPairConfig(d=3, x1=np.zeros(3), x2=np.r_[1.0, 0, 0], N=100.0,
                         alpha=0.6, r_N=0.5)
        with pytest.raises(ValueError):  # slow regime needs r_N > N^-alpha
            OUPairConfig(d=3, x1=np.zeros(3), x2=np.r_[1.0, 0, 0], N=100.0,
                         alpha=0.4, r_N=0.001)

    def test_ou_base_step_is_capped(self):
        cfg = OUPairConfig(d=3, x1=np.zeros(3), x2=np.r_[1.0, 0, 0], N=100.0,
                           t0=0.1, t1=1.1, base_h=1.0)
        assert cfg.base_h == pytest.approx(1e-4)

    def test_ou_requires_positive_observation_window(self):
        with pytest.raises(ValueError):
            OUPairConfig(d=3, x1=np.zeros(3), x2=np.r_[1.0, 0, 0], N=10.0,
                         t0=0.0, t1=1.0)


class TestBatches:
    def brownian_cfg(self, **kw):
        base = dict(d=3, x1=np.zeros(3), x2=np.r_[1.0, 0, 0], r_N=0.3,
                    horizon=3.0, h=0.05, seed=42)
        base.update(kw)
        return PairConfig(**base)

    def test_brownian_batch_is_deterministic_given_seed(self):
        cfg = self.brownian_cfg()
        out1 = run_brownian_batch(cfg, 500)
        out2 = run_brownian_batch(cfg, 500)
        for key in out1:
            np.testing.assert_array_equal(out1[key], out2[key])

    def test_brownian_hits_have_exact_radius_and_time_in_range(self):
        cfg = self.brownian_cfg()
        out = run_brownian_batch(cfg, 2000)
        hits = out["hit"]
        assert 0.2 < hits.mean() < 0.6  # ever-collide level is 0.3 at infinity
        assert np.all(out["T"][hits] <= cfg.horizon)
        assert np.all(out["T"][~hits] == cfg.horizon)
        assert np.all(out["min_distance"][hits] == pytest.approx(cfg.r_N))
        assert np.all(out["min_distance"] >= cfg.r_N * (1 - 1e-9))

    def test_step_budget_censors_instead_of_dropping(self):
        cfg = self.brownian_cfg(max_steps=3, horizon=100.0)
        out = run_brownian_batch(cfg, 200)
        assert out["censored"].any()
        assert not out["hit"][out["censored"]].any()

    def ou_cfg(self, **kw):
        base = dict(d=3, x1=np.zeros(3), x2=np.r_[0.5, 0, 0], N=50.0,
                    r_N=0.25, t0=0.1, t1=0.6, seed=7)
        base.update(kw)
        return OUPairConfig(**base)

    def test_ou_engines_agree_statistically(self):
        cfg = self.ou_cfg()
        n = 4000
        out_nb = run_ou_batch(cfg, n, engine="numba")
        out_np = run_ou_batch(cfg, n, engine="numpy")
        p1, p2 = out_nb["hit"].mean(), out_np["hit"].mean()
        se = math.sqrt((p1 * (1 - p1) + p2 * (1 - p2)) / n)
        assert abs(p1 - p2) <= 4 * se
        assert not out_nb["censored"].any()
        t1, t2 = out_nb["T"][out_nb["hit"]], out_np["T"][out_np["hit"]]
        assert abs(t1.mean() - t2.mean()) <= 4 * math.sqrt(
            t1.var() / t1.size + t2.var() / t2.size)

    def test_ou_batch_is_deterministic_given_seed(self):
        cfg = self.ou_cfg()
        out1 = run_ou_batch(cfg, 300)
        out2 = run_ou_batch(cfg, 300)
        for key in out1:
            np.testing.assert_array_equal(out1[key], out2[key])

    def test_ou_hits_record_sphere_contact(self):
        cfg = self.ou_cfg()
        out = run_ou_batch(cfg, 3000)
        hits = out["hit"]
        assert hits.mean() > 0.05
        assert np.all(out["min_distance"][hits] <= cfg.r_N * (1 + 1e-6))
        assert np.all(out["T"][hits] >= 0.0)
        assert np.all(out["T"][hits] <= cfg.t1)

    def test_single_path_wrapper_round_trips(self):
        cfg = self.brownian_cfg()
        res = run_first_collision(cfg)
        assert isinstance(res, CollisionOutcome)
        res2 = run_first_collision(cfg)
        assert res.hit == res2.hit and res.T == res2.T

    def test_path_rngs_are_independent_and_deterministic(self):
        rngs = path_rngs(123, 4)
        draws = [r.random() for r in rngs]
        assert len(set(draws)) == 4
        again = [r.random() for r in path_rngs(123, 4)]
        assert draws == again
