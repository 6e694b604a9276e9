"""Path simulators for diffusing and velocity-jump (OU) particle pairs.

Two free-motion models are supported: Ito diffusions dX = sqrt(a(X)) dB + b(X) dt
advanced by Euler-Maruyama, and stiff Ornstein-Uhlenbeck velocity/position pairs
dV = N b dB - N tau V dt, dX = V dt advanced by the exact Gaussian transition.
Both feed a first-collision detector at radius r_N with bridge/segment crossing
corrections, plus vectorized batch runners used by the estimation harness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: default safety factors for adaptive steps; the Brownian factor is smaller
#: because the radial-bridge correction bias grows with the squared-gap step
KAPPA_BROWNIAN = 0.02
KAPPA_OU = 0.1

#: relative tolerance on the recorded collision-sphere radius
RADIUS_TOL = 1e-9


def _as_point(x, d: int, name: str) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (d,):
        raise ValueError(f"{name} must be a point in R^{d}")
    return x


def _as_field(f, name: str):
    """Normalize a constant or callable coefficient to a vectorized callable."""
    if callable(f):
        return f
    val = float(f)
    return lambda x, _v=val: np.full(np.asarray(x).shape[:-1], _v)


@dataclass
class PairConfig:
    """Two diffusing particles, collision radius, and the simulation budget.

    ``a1``/``a2`` and ``b1``/``b2`` may be constants or callables on R^d
    (vectorized over leading axes).  ``bound_R`` declares the ellipticity /
    drift bound R^-1 <= a_i <= R, |b_i| <= R, spot-checked on sampled points.
    """

    d: int
    x1: np.ndarray
    x2: np.ndarray
    a1: object = 0.5
    a2: object = 0.5
    b1: object = None
    b2: object = None
    r_N: float = 0.01
    horizon: float = 10.0
    h: float = 0.1
    y1: float = 1.0
    y2: float = 1.0
    bound_R: float = 10.0
    kappa: float = KAPPA_BROWNIAN
    max_steps: int = 100_000
    seed: int = 0

    def __post_init__(self):
        self.x1 = _as_point(self.x1, self.d, "x1")
        self.x2 = _as_point(self.x2, self.d, "x2")
        if not self.r_N > 0:
            raise ValueError("collision radius must be strictly positive")
        sep = float(np.linalg.norm(self.x1 - self.x2))
        if sep <= self.r_N:
            raise ValueError("starting separation must exceed the collision radius")
        if self.horizon <= 0 or self.h <= 0:
            raise ValueError("horizon and base step must be strictly positive")
        if self.y1 <= 0 or self.y2 <= 0:
            raise ValueError("masses must be strictly positive")
        self._constant_coeffs = not (callable(self.a1) or callable(self.a2))
        self._zero_drift = self.b1 is None and self.b2 is None
        self._spot_check_bounds()

    def _spot_check_bounds(self):
        pts = np.vstack([self.x1, self.x2,
                         self.x1 + np.linspace(-1, 1, 5)[:, None] * np.ones(self.d)])
        for name, f in (("a1", self.a1), ("a2", self.a2)):
            vals = np.asarray(_as_field(f, name)(pts), dtype=float)
            if np.any(vals < 1.0 / self.bound_R - 1e-12) or np.any(vals > self.bound_R + 1e-12):
                raise ValueError(f"{name} violates the declared bounds [1/R, R] at sampled points")
        for name, f in (("b1", self.b1), ("b2", self.b2)):
            if f is None:
                continue
            vals = np.asarray(f(pts), dtype=float)
            if np.any(np.abs(vals) > self.bound_R + 1e-12):
                raise ValueError(f"{name} exceeds the declared drift bound R at sampled points")


@dataclass
class OUPairConfig:
    """Two OU velocity/position particles observed on the window [t0, t1].

    ``N`` is the stiffness: dV = N b dB - N tau V dt.  ``alpha`` declares the
    radius regime (fast alpha > 1/2 needs r_N < N^-alpha, slow alpha < 1/2
    needs r_N > N^-alpha).  Velocities start at 0 unless
    ``stationary_velocity``; the base step is capped at (t1 - t0) / 1e4.
    """

    d: int
    x1: np.ndarray
    x2: np.ndarray
    N: float
    tau1: float = 1.0
    tau2: float = 1.0
    b1: float = 1.0
    b2: float = 1.0
    r_N: float = 0.01
    t0: float = 0.1
    t1: float = 1.0
    alpha: float | None = None
    y1: float = 1.0
    y2: float = 1.0
    stationary_velocity: bool = False
    base_h: float | None = None
    kappa: float = KAPPA_OU
    max_steps: int = 200_000
    seed: int = 0

    def __post_init__(self):
        self.x1 = _as_point(self.x1, self.d, "x1")
        self.x2 = _as_point(self.x2, self.d, "x2")
        for name in ("N", "tau1", "tau2", "b1", "b2", "r_N", "y1", "y2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not 0 < self.t0 < self.t1:
            raise ValueError("need 0 < t0 < t1 (observation starts strictly after 0)")
        if float(np.linalg.norm(self.x1 - self.x2)) <= self.r_N:
            raise ValueError("starting separation must exceed the collision radius")
        if self.alpha is not None:
            thresh = self.N ** (-self.alpha)
            if self.alpha > 0.5 and not self.r_N < thresh:
                raise ValueError("fast regime (alpha > 1/2) requires r_N < N^-alpha")
            if self.alpha < 0.5 and not self.r_N > thresh:
                raise ValueError("slow regime (alpha < 1/2) requires r_N > N^-alpha")
        cap = (self.t1 - self.t0) / 1e4
        self.base_h = cap if self.base_h is None else min(self.base_h, cap)


@dataclass
class CollisionOutcome:
    """First-collision result for one simulated pair."""

    hit: bool
    T: float
    X_T: np.ndarray | None  # center of mass (y1 X1 + y2 X2) / (y1 + y2) at T
    n_steps: int
    min_distance: float
    censored: bool = False


def step_brownian_pair(state, config: PairConfig, dt: float, rng) -> tuple:
    """One Euler-Maruyama step of both particles; exact for constant a, zero b.

    ``state`` is (x1, x2) with arbitrary leading batch axes.
    """
    if dt <= 0:
        raise ValueError("dt must be strictly positive")
    x1, x2 = state
    a1 = np.asarray(_as_field(config.a1, "a1")(x1), dtype=float)[..., None]
    a2 = np.asarray(_as_field(config.a2, "a2")(x2), dtype=float)[..., None]
    z = rng.standard_normal(x1.shape + (2,))
    new1 = x1 + np.sqrt(a1 * dt) * z[..., 0]
    new2 = x2 + np.sqrt(a2 * dt) * z[..., 1]
    if config.b1 is not None:
        new1 = new1 + dt * np.asarray(config.b1(x1), dtype=float)
    if config.b2 is not None:
        new2 = new2 + dt * np.asarray(config.b2(x2), dtype=float)
    if not (np.all(np.isfinite(new1)) and np.all(np.isfinite(new2))):
        raise FloatingPointError("coefficient field returned non-finite values; path aborted")
    return new1, new2


def _ou_moments(theta, sigma, dt):
    """Per-coordinate conditional moments of (V, X) over a step of length dt.

    For dV = sigma dB - theta V dt, dX = V dt:
        V' | (V, X) ~ N(V e^-u, sigma^2 (1 - e^-2u) / (2 theta)),  u = theta dt
        X' | (V, X) ~ N(X + V (1 - e^-u)/theta, sigma^2 f(u) / theta^3)
    with f(u) = u + 2 expm1(-u) - expm1(-2u)/2 (cancellation-safe) and
    Cov(X', V') = sigma^2 (1 - e^-u)^2 / (2 theta^2).
    """
    u = theta * dt
    em1 = -np.expm1(-u)       # 1 - e^-u
    em2 = -np.expm1(-2.0 * u)  # 1 - e^-2u
    var_v = sigma ** 2 * em2 / (2.0 * theta)
    var_x = sigma ** 2 * (u - 2.0 * em1 + em2 / 2.0) / theta ** 3
    cov = sigma ** 2 * em1 ** 2 / (2.0 * theta ** 2)
    return em1, var_v, var_x, cov


def _sample_ou_coordinate(x, v, theta, sigma, dt, rng):
    """Exact joint draw of (X', V') given (X, V); dt may be a broadcastable array."""
    em1, var_v, var_x, cov = _ou_moments(theta, sigma, dt)
    mean_v = v * (1.0 - em1)
    mean_x = x + v * em1 / theta
    # 2x2 Cholesky with X first; the conditional V variance can lose a few ulps
    # to cancellation, so recompute in extended precision if it goes negative.
    sx = np.sqrt(var_x)
    cond = var_v - cov ** 2 / var_x
    if np.any(cond < 0):
        bad = cond < 0
        u_l = np.longdouble(theta) * np.asarray(dt, dtype=np.longdouble)
        em1_l = -np.expm1(-u_l)
        em2_l = -np.expm1(-2.0 * u_l)
        var_v_l = np.longdouble(sigma) ** 2 * em2_l / (2 * np.longdouble(theta))
        var_x_l = np.longdouble(sigma) ** 2 * (u_l - 2 * em1_l + em2_l / 2) / np.longdouble(theta) ** 3
        cov_l = np.longdouble(sigma) ** 2 * em1_l ** 2 / (2 * np.longdouble(theta) ** 2)
        cond_l = np.asarray(var_v_l - cov_l ** 2 / var_x_l, dtype=float)
        cond = np.where(bad, np.maximum(cond_l, 0.0), cond)
    z = rng.standard_normal(np.broadcast(x, sx).shape + (2,))
    new_x = mean_x + sx * z[..., 0]
    new_v = mean_v + (cov / sx) * z[..., 0] + np.sqrt(cond) * z[..., 1]
    return new_x, new_v


def step_ou_pair_exact(state, config: OUPairConfig, dt, rng) -> tuple:
    """Exact transition of both (V, X) pairs over dt; stable for any dt.

    ``state`` is (x1, v1, x2, v2); ``dt`` may be per-path (broadcast against
    the leading axes).  Coordinates are independent, so each is a 2x2
    Gaussian draw with the closed-form covariance.
    """
    if np.any(np.asarray(dt) <= 0):
        raise ValueError("dt must be strictly positive")
    x1, v1, x2, v2 = state
    dt = np.asarray(dt, dtype=float)
    dtb = dt[..., None] if dt.ndim else dt
    new_x1, new_v1 = _sample_ou_coordinate(x1, v1, config.N * config.tau1,
                                           config.N * config.b1, dtb, rng)
    new_x2, new_v2 = _sample_ou_coordinate(x2, v2, config.N * config.tau2,
                                           config.N * config.b2, dtb, rng)
    return new_x1, new_v1, new_x2, new_v2


def bridge_collision_check(x_before, x_after, a_eff: float, dt: float, r_N: float,
                           rng) -> bool:
    """Brownian-bridge crossing decision for the radial distance over one step.

    Applies the 1-D bridge crossing probability
    exp(-2 (|x_before| - r_N)(|x_after| - r_N) / (a_eff dt)) to the radial
    distance of the relative position; an approximation for d >= 3 whose bias
    is bounded by step-refinement comparison in the tests.
    """
    d0 = float(np.linalg.norm(x_before)) - r_N
    d1 = float(np.linalg.norm(x_after)) - r_N
    if d0 <= 0 or d1 <= 0:
        return True
    p = math.exp(-2.0 * d0 * d1 / (a_eff * dt))
    return bool(rng.random() < p)


def _bridge_prob(d0, d1, a_eff, dt):
    """Vectorized bridge crossing probability for positive surface distances."""
    return np.exp(-2.0 * d0 * d1 / (a_eff * dt))


def _segment_sphere_crossing(rel0, rel1, r_N):
    """First crossing of |rel0 + s (rel1 - rel0)| = r_N for s in [0, 1].

    Returns (crossed, s) arrays; ``s`` is the smaller root where crossed,
    else the location of the minimum distance.
    """
    dvec = rel1 - rel0
    aa = np.sum(dvec * dvec, axis=-1)
    bb = np.sum(rel0 * dvec, axis=-1)
    cc = np.sum(rel0 * rel0, axis=-1) - r_N ** 2
    disc = bb * bb - aa * cc
    aa_safe = np.where(aa > 0, aa, 1.0)
    s_min = np.clip(-bb / aa_safe, 0.0, 1.0)
    sqrt_disc = np.sqrt(np.maximum(disc, 0.0))
    s_root = np.clip((-bb - sqrt_disc) / aa_safe, 0.0, 1.0)
    crossed = (disc >= 0) & (s_root <= 1.0) & (cc + 2 * s_root * bb + s_root ** 2 * aa <= r_N ** 2 * (1 + 1e-9))
    # a crossing requires the root to actually reach the sphere within the step
    dist_at_root = np.linalg.norm(rel0 + s_root[..., None] * dvec, axis=-1)
    crossed = crossed & (np.abs(dist_at_root - r_N) <= 1e-6 * max(r_N, 1.0))
    return crossed, np.where(crossed, s_root, s_min)


def _place_on_sphere(p1, p2, r_N, y1, y2):
    """Move the pair radially to exact separation r_N, keeping the center of mass."""
    rel = p1 - p2
    dist = np.linalg.norm(rel, axis=-1, keepdims=True)
    unit = rel / np.where(dist > 0, dist, 1.0)
    com = (y1 * p1 + y2 * p2) / (y1 + y2)
    new1 = com + (y2 / (y1 + y2)) * r_N * unit
    new2 = com - (y1 / (y1 + y2)) * r_N * unit
    return new1, new2


def run_first_collision(config, rng=None) -> CollisionOutcome:
    """Simulate one pair to first detected collision or the horizon.

    Deterministic given (config, seed).  Steps adapt to the current gap; paths
    exceeding the step budget are reported censored, never dropped silently.
    """
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    if isinstance(config, OUPairConfig):
        out = run_ou_batch(config, 1, rng=rng)
    elif isinstance(config, PairConfig):
        out = run_brownian_batch(config, 1, rng=rng)
    else:
        raise TypeError("config must be PairConfig or OUPairConfig")
    return CollisionOutcome(hit=bool(out["hit"][0]), T=float(out["T"][0]),
                            X_T=out["X_T"][0].copy(), n_steps=int(out["n_steps"][0]),
                            min_distance=float(out["min_distance"][0]),
                            censored=bool(out["censored"][0]))


def path_rngs(seed: int, n_paths: int):
    """Independent per-path generators from one master seed (counter-based split)."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_paths)]


def run_brownian_batch(config: PairConfig, n_paths: int, rng=None,
                       batch_rows: int = 200_000) -> dict:
    """Vectorized first-collision simulation of n_paths independent Brownian pairs.

    Adaptive steps dt = min(h, kappa (dist - r_N)^2 / a_eff) with the radial
    Brownian-bridge correction per step.  Returns arrays hit, T, X_T, n_steps,
    min_distance, censored.
    """
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    out = {"hit": np.zeros(n_paths, bool), "T": np.full(n_paths, config.horizon),
           "X_T": np.zeros((n_paths, config.d)),
           "n_steps": np.zeros(n_paths, np.int64),
           "min_distance": np.zeros(n_paths), "censored": np.zeros(n_paths, bool)}
    for lo in range(0, n_paths, batch_rows):
        hi = min(lo + batch_rows, n_paths)
        res = _brownian_chunk(config, hi - lo, rng)
        for key in out:
            out[key][lo:hi] = res[key]
    return out


def _brownian_chunk(config: PairConfig, n: int, rng) -> dict:
    d = config.d
    x1 = np.tile(config.x1, (n, 1))
    x2 = np.tile(config.x2, (n, 1))
    t = np.zeros(n)
    hit = np.zeros(n, bool)
    T = np.full(n, config.horizon)
    X_T = np.zeros((n, d))
    n_steps = np.zeros(n, np.int64)
    min_dist = np.full(n, np.linalg.norm(config.x1 - config.x2))
    censored = np.zeros(n, bool)
    active = np.arange(n)
    a1f = _as_field(config.a1, "a1")
    a2f = _as_field(config.a2, "a2")
    steps = 0
    while active.size:
        steps += 1
        p1, p2 = x1[active], x2[active]
        a1 = np.asarray(a1f(p1), dtype=float)
        a2 = np.asarray(a2f(p2), dtype=float)
        a_eff = a1 + a2
        dist = np.linalg.norm(p1 - p2, axis=-1)
        dt = np.minimum(config.h, config.kappa * (dist - config.r_N) ** 2 / a_eff)
        dt = np.maximum(dt, 1e-12)
        dt = np.minimum(dt, config.horizon - t[active])
        z = rng.standard_normal((active.size, d, 2))
        new1 = p1 + np.sqrt(a1 * dt)[:, None] * z[..., 0]
        new2 = p2 + np.sqrt(a2 * dt)[:, None] * z[..., 1]
        if config.b1 is not None:
            new1 += dt[:, None] * np.asarray(config.b1(p1), dtype=float)
        if config.b2 is not None:
            new2 += dt[:, None] * np.asarray(config.b2(p2), dtype=float)
        rel0, rel1 = p1 - p2, new1 - new2
        dist1 = np.linalg.norm(rel1, axis=-1)
        min_dist[active] = np.minimum(min_dist[active], dist1)
        crossed, s = _segment_sphere_crossing(rel0, rel1, config.r_N)
        # bridge correction on the radial distance for segments staying outside
        outside = ~crossed & (dist1 > config.r_N)
        if np.any(outside):
            p_cross = _bridge_prob(dist[outside] - config.r_N,
                                   dist1[outside] - config.r_N,
                                   a_eff[outside], dt[outside])
            bridge_hit = rng.random(int(outside.sum())) < p_cross
            tmp = crossed[outside]
            tmp |= bridge_hit
            crossed[outside] = tmp
        endpoint_inside = dist1 <= config.r_N
        crossed |= endpoint_inside
        t_new = t[active] + dt
        done_time = t_new >= config.horizon - 1e-15
        if np.any(crossed):
            idx = active[crossed]
            sc = s[crossed]
            hp1 = p1[crossed] + sc[:, None] * (new1[crossed] - p1[crossed])
            hp2 = p2[crossed] + sc[:, None] * (new2[crossed] - p2[crossed])
            hp1, hp2 = _place_on_sphere(hp1, hp2, config.r_N, config.y1, config.y2)
            hit[idx] = True
            T[idx] = t[active][crossed] + sc * dt[crossed]
            X_T[idx] = (config.y1 * hp1 + config.y2 * hp2) / (config.y1 + config.y2)
            min_dist[idx] = config.r_N
        x1[active], x2[active] = new1, new2
        t[active] = t_new
        n_steps[active] += 1
        budget = n_steps[active] >= config.max_steps
        if np.any(budget & ~crossed & ~done_time):
            censored[active[budget & ~crossed & ~done_time]] = True
        keep = ~crossed & ~done_time & ~budget
        active = active[keep]
    return {"hit": hit, "T": T, "X_T": X_T, "n_steps": n_steps,
            "min_distance": min_dist, "censored": censored}


def run_ou_batch(config: OUPairConfig, n_paths: int, rng=None,
                 batch_rows: int = 100_000, engine: str = "auto") -> dict:
    """First-collision simulation of n_paths independent OU pairs.

    Uses the exact Gaussian stepper with adaptive
    dt = min(base_h, kappa (|dX| - r_N) / |dV|) and segment-sphere crossing
    detection (ballistic interpolation within a step).  The compiled per-path
    engine is used when available (mandatory for acceptance-scale budgets);
    ``engine="numpy"`` forces the vectorized reference implementation.
    """
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    if engine == "auto":
        engine = "numba" if _ou_kernel_compiled() is not None else "numpy"
    if engine == "numba":
        return _ou_batch_numba(config, n_paths, rng)
    out = {"hit": np.zeros(n_paths, bool), "T": np.full(n_paths, config.t1),
           "X_T": np.zeros((n_paths, config.d)),
           "n_steps": np.zeros(n_paths, np.int64),
           "min_distance": np.zeros(n_paths), "censored": np.zeros(n_paths, bool)}
    for lo in range(0, n_paths, batch_rows):
        hi = min(lo + batch_rows, n_paths)
        res = _ou_chunk(config, hi - lo, rng)
        for key in out:
            out[key][lo:hi] = res[key]
    return out


_OU_KERNEL = None


def _zig_tables():
    """Layer tables for the 128-level ziggurat normal sampler."""
    dn = 3.442619855899
    tn = dn
    vn = 9.91256303526217e-3
    m1 = 2147483648.0
    kn = np.zeros(128, np.int64)
    wn = np.zeros(128)
    fn = np.zeros(128)
    q = vn / math.exp(-0.5 * dn * dn)
    kn[0] = int(dn / q * m1)
    kn[1] = 0
    wn[0] = q / m1
    wn[127] = dn / m1
    fn[0] = 1.0
    fn[127] = math.exp(-0.5 * dn * dn)
    for i in range(126, 0, -1):
        dn = math.sqrt(-2.0 * math.log(vn / dn + math.exp(-0.5 * dn * dn)))
        kn[i + 1] = int(dn / tn * m1)
        tn = dn
        fn[i] = math.exp(-0.5 * dn * dn)
        wn[i] = dn / m1
    return kn, wn, fn


def _ou_kernel_compiled():
    """Build (once) the compiled per-path OU simulator; None if numba is absent."""
    global _OU_KERNEL
    if _OU_KERNEL is not None:
        return _OU_KERNEL
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is available in CI
        return None

    kn_t, wn_t, fn_t = _zig_tables()
    TWO53_INV = 1.0 / 9007199254740992.0
    ZR = 3.442619855899

    @numba.njit(inline="always")
    def _xo_next(st):
        s0, s1, s2, s3 = st[0], st[1], st[2], st[3]
        result = s0 + s3
        t = s1 << np.uint64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = (s3 << np.uint64(45)) | (s3 >> np.uint64(19))
        st[0], st[1], st[2], st[3] = s0, s1, s2, s3
        return result

    @numba.njit(inline="always")
    def _xo_unif(st):
        # double in (0, 1)
        return (np.float64(_xo_next(st) >> np.uint64(11)) + 0.5) * TWO53_INV

    @numba.njit(inline="always")
    def _xo_normal(st):
        # ziggurat rejection sampler over 128 layers
        while True:
            u = _xo_next(st)
            hz = np.int64((u >> np.uint64(32)) & np.uint64(0xFFFFFFFF))
            if hz >= 2147483648:
                hz -= 4294967296
            iz = hz & 127
            a = hz if hz >= 0 else -hz
            if a < kn_t[iz]:
                return hz * wn_t[iz]
            if iz == 0:
                while True:
                    x = -math.log(_xo_unif(st)) / ZR
                    y = -math.log(_xo_unif(st))
                    if y + y >= x * x:
                        break
                return ZR + x if hz > 0 else -(ZR + x)
            x = hz * wn_t[iz]
            if fn_t[iz] + _xo_unif(st) * (fn_t[iz - 1] - fn_t[iz]) \
                    < math.exp(-0.5 * x * x):
                return x

    @numba.njit(inline="always")
    def _splitmix(z):
        z = z + np.uint64(0x9E3779B97F4A7C15)
        x = z
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return x ^ (x >> np.uint64(31)), z

    @numba.njit(parallel=True, cache=True)
    def kernel(seeds, x1_0, x2_0, theta1, sig1, theta2, sig2, r_N, t1, base_h,
               kappa, max_steps, v1_0_std, v2_0_std, y1, y2,
               hit, T, X_T, n_steps, min_dist, censored):
        n = seeds.size
        d = x1_0.size
        cross_tol = 1e-6 * max(r_N, 1.0)
        # conditional Gaussian moments for the common full-size step base_h
        uh1 = theta1 * base_h
        eh1 = -math.expm1(-uh1)
        fh1 = -math.expm1(-2.0 * uh1)
        sxh1 = math.sqrt(sig1 * sig1 * (uh1 - 2.0 * eh1 + 0.5 * fh1) / theta1 ** 3)
        covh1 = sig1 * sig1 * eh1 * eh1 / (2.0 * theta1 ** 2)
        sch1 = math.sqrt(max(sig1 * sig1 * fh1 / (2.0 * theta1)
                             - covh1 * covh1 / (sxh1 * sxh1), 0.0))
        uh2 = theta2 * base_h
        eh2 = -math.expm1(-uh2)
        fh2 = -math.expm1(-2.0 * uh2)
        sxh2 = math.sqrt(sig2 * sig2 * (uh2 - 2.0 * eh2 + 0.5 * fh2) / theta2 ** 3)
        covh2 = sig2 * sig2 * eh2 * eh2 / (2.0 * theta2 ** 2)
        sch2 = math.sqrt(max(sig2 * sig2 * fh2 / (2.0 * theta2)
                             - covh2 * covh2 / (sxh2 * sxh2), 0.0))
        for p in numba.prange(n):
            st = np.empty(4, np.uint64)
            z = seeds[p]
            for q in range(4):
                st[q], z = _splitmix(z)
            x1 = x1_0.copy()
            x2 = x2_0.copy()
            nx1 = np.empty(d)
            nx2 = np.empty(d)
            v1 = np.empty(d)
            v2 = np.empty(d)
            for i in range(d):
                v1[i] = v1_0_std * _xo_normal(st)
                v2[i] = v2_0_std * _xo_normal(st)
            t = 0.0
            steps = 0
            mind = 0.0
            for i in range(d):
                mind += (x1[i] - x2[i]) ** 2
            mind = math.sqrt(mind)
            done = False
            while not done:
                gap2 = 0.0
                dv2 = 0.0
                for i in range(d):
                    gap2 += (x1[i] - x2[i]) ** 2
                    dv2 += (v1[i] - v2[i]) ** 2
                dist0 = math.sqrt(gap2)
                relsp = math.sqrt(dv2)
                dt = kappa * (dist0 - r_N) / max(relsp, 1e-12)
                if dt >= base_h and base_h <= t1 - t:
                    dt = base_h
                    e1, sx1, cov1, sc1 = eh1, sxh1, covh1, sch1
                    e2, sx2, cov2, sc2 = eh2, sxh2, covh2, sch2
                else:
                    if dt > base_h:
                        dt = base_h
                    if dt < 1e-12:
                        dt = 1e-12
                    if dt > t1 - t:
                        dt = t1 - t
                    # exact per-particle conditional moments over dt
                    u1 = theta1 * dt
                    e1 = -math.expm1(-u1)
                    f1 = -math.expm1(-2.0 * u1)
                    sx1 = math.sqrt(sig1 * sig1 * (u1 - 2.0 * e1 + 0.5 * f1)
                                    / theta1 ** 3)
                    cov1 = sig1 * sig1 * e1 * e1 / (2.0 * theta1 ** 2)
                    sc1 = math.sqrt(max(sig1 * sig1 * f1 / (2.0 * theta1)
                                        - cov1 * cov1 / (sx1 * sx1), 0.0))
                    u2 = theta2 * dt
                    e2 = -math.expm1(-u2)
                    f2 = -math.expm1(-2.0 * u2)
                    sx2 = math.sqrt(sig2 * sig2 * (u2 - 2.0 * e2 + 0.5 * f2)
                                    / theta2 ** 3)
                    cov2 = sig2 * sig2 * e2 * e2 / (2.0 * theta2 ** 2)
                    sc2 = math.sqrt(max(sig2 * sig2 * f2 / (2.0 * theta2)
                                        - cov2 * cov2 / (sx2 * sx2), 0.0))
                # advance and run the segment-sphere crossing test on the fly
                aa = 0.0
                bb = 0.0
                cc = -r_N * r_N
                for i in range(d):
                    z1 = _xo_normal(st)
                    z2 = _xo_normal(st)
                    nx1[i] = x1[i] + v1[i] * e1 / theta1 + sx1 * z1
                    v1[i] = v1[i] * (1.0 - e1) + (cov1 / sx1) * z1 + sc1 * z2
                    z1 = _xo_normal(st)
                    z2 = _xo_normal(st)
                    nx2[i] = x2[i] + v2[i] * e2 / theta2 + sx2 * z1
                    v2[i] = v2[i] * (1.0 - e2) + (cov2 / sx2) * z1 + sc2 * z2
                    rel0 = x1[i] - x2[i]
                    dvec = (nx1[i] - nx2[i]) - rel0
                    aa += dvec * dvec
                    bb += rel0 * dvec
                    cc += rel0 * rel0
                dist1 = math.sqrt(max(cc + 2.0 * bb + aa + r_N * r_N, 0.0))
                if dist1 < mind:
                    mind = dist1
                crossed = False
                s = 1.0
                disc = bb * bb - aa * cc
                if disc >= 0.0 and aa > 0.0:
                    s_root = (-bb - math.sqrt(disc)) / aa
                    if s_root < 0.0:
                        s_root = 0.0
                    elif s_root > 1.0:
                        s_root = 1.0
                    dist_at = math.sqrt(max(cc + 2.0 * s_root * bb
                                            + s_root * s_root * aa
                                            + r_N * r_N, 0.0))
                    if abs(dist_at - r_N) <= cross_tol:
                        crossed = True
                        s = s_root
                if not crossed and dist1 <= r_N:
                    crossed = True
                    s = 1.0
                t_new = t + dt
                steps += 1
                if crossed:
                    hit[p] = True
                    T[p] = t + s * dt
                    # mass-weighted center of mass at the crossing time
                    for i in range(d):
                        h1 = x1[i] + s * (nx1[i] - x1[i])
                        h2 = x2[i] + s * (nx2[i] - x2[i])
                        X_T[p, i] = (y1 * h1 + y2 * h2) / (y1 + y2)
                    mind = r_N
                    done = True
                elif t_new >= t1 - 1e-15:
                    T[p] = t1
                    done = True
                elif steps >= max_steps:
                    censored[p] = True
                    done = True
                for i in range(d):
                    x1[i] = nx1[i]
                    x2[i] = nx2[i]
                t = t_new
            n_steps[p] = steps
            min_dist[p] = mind

    kernel._normal_sampler = _xo_normal  # statistical-quality testing hook
    _OU_KERNEL = kernel
    return _OU_KERNEL



def _ou_batch_numba(config: OUPairConfig, n_paths: int, rng) -> dict:
    kernel = _ou_kernel_compiled()
    seeds = rng.integers(0, 2 ** 64, size=n_paths, dtype=np.uint64)
    if config.stationary_velocity:
        v1_std = math.sqrt(config.N * config.b1 ** 2 / (2.0 * config.tau1))
        v2_std = math.sqrt(config.N * config.b2 ** 2 / (2.0 * config.tau2))
    else:
        v1_std = v2_std = 0.0
    hit = np.zeros(n_paths, bool)
    T = np.full(n_paths, config.t1)
    X_T = np.zeros((n_paths, config.d))
    n_steps = np.zeros(n_paths, np.int64)
    min_dist = np.zeros(n_paths)
    censored = np.zeros(n_paths, bool)
    kernel(seeds, config.x1, config.x2,
           config.N * config.tau1, config.N * config.b1,
           config.N * config.tau2, config.N * config.b2,
           config.r_N, config.t1, config.base_h, config.kappa,
           config.max_steps, v1_std, v2_std, config.y1, config.y2,
           hit, T, X_T, n_steps, min_dist, censored)
    return {"hit": hit, "T": T, "X_T": X_T, "n_steps": n_steps,
            "min_distance": min_dist, "censored": censored}


def _ou_chunk(config: OUPairConfig, n: int, rng) -> dict:
    d = config.d
    x1 = np.tile(config.x1, (n, 1))
    x2 = np.tile(config.x2, (n, 1))
    if config.stationary_velocity:
        s1 = math.sqrt(config.N * config.b1 ** 2 / (2.0 * config.tau1))
        s2 = math.sqrt(config.N * config.b2 ** 2 / (2.0 * config.tau2))
        v1 = s1 * rng.standard_normal((n, d))
        v2 = s2 * rng.standard_normal((n, d))
    else:
        v1 = np.zeros((n, d))
        v2 = np.zeros((n, d))
    t = np.zeros(n)
    hit = np.zeros(n, bool)
    T = np.full(n, config.t1)
    X_T = np.zeros((n, d))
    n_steps = np.zeros(n, np.int64)
    min_dist = np.full(n, np.linalg.norm(config.x1 - config.x2))
    censored = np.zeros(n, bool)
    active = np.arange(n)
    theta1, sig1 = config.N * config.tau1, config.N * config.b1
    theta2, sig2 = config.N * config.tau2, config.N * config.b2
    while active.size:
        p1, p2, w1, w2 = x1[active], x2[active], v1[active], v2[active]
        rel = p1 - p2
        gap = np.linalg.norm(rel, axis=-1) - config.r_N
        relspeed = np.linalg.norm(w1 - w2, axis=-1)
        dt = np.minimum(config.base_h, config.kappa * gap / np.maximum(relspeed, 1e-12))
        dt = np.maximum(dt, 1e-12)
        dt = np.minimum(dt, config.t1 - t[active])
        dtb = dt[:, None]
        new_x1, new_v1 = _sample_ou_coordinate(p1, w1, theta1, sig1, dtb, rng)
        new_x2, new_v2 = _sample_ou_coordinate(p2, w2, theta2, sig2, dtb, rng)
        rel1 = new_x1 - new_x2
        dist1 = np.linalg.norm(rel1, axis=-1)
        min_dist[active] = np.minimum(min_dist[active], dist1)
        crossed, s = _segment_sphere_crossing(rel, rel1, config.r_N)
        crossed |= dist1 <= config.r_N
        t_new = t[active] + dt
        done_time = t_new >= config.t1 - 1e-15
        if np.any(crossed):
            idx = active[crossed]
            sc = s[crossed]
            hp1 = p1[crossed] + sc[:, None] * (new_x1[crossed] - p1[crossed])
            hp2 = p2[crossed] + sc[:, None] * (new_x2[crossed] - p2[crossed])
            hp1, hp2 = _place_on_sphere(hp1, hp2, config.r_N, config.y1, config.y2)
            hit[idx] = True
            T[idx] = t[active][crossed] + sc * dt[crossed]
            X_T[idx] = (config.y1 * hp1 + config.y2 * hp2) / (config.y1 + config.y2)
            min_dist[idx] = config.r_N
        x1[active], x2[active] = new_x1, new_x2
        v1[active], v2[active] = new_v1, new_v2
        t[active] = t_new
        n_steps[active] += 1
        budget = n_steps[active] >= config.max_steps
        if np.any(budget & ~crossed & ~done_time):
            censored[active[budget & ~crossed & ~done_time]] = True
        keep = ~crossed & ~done_time & ~budget
        active = active[keep]
    return {"hit": hit, "T": T, "X_T": X_T, "n_steps": n_steps,
            "min_distance": min_dist, "censored": censored}
