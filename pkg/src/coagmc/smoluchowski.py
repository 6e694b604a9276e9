"""Mild-form coagulation-diffusion solver on a periodic box with a geometric mass grid.

State is a nonnegative density per (spatial cell, mass bin).  Diffusion acts
per mass bin through exact spectral multipliers (heat semigroup P_t) or the
closed-form drifted kernel (Q_t); coagulation acts pointwise in space through
a conservative fixed-pivot two-bin split.  On top of the split-step integrator
sit the frozen-background linearized solver, the Picard fixed-point iteration
with the w-weighted contraction metric, and moment/Gronwall monitors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .densities import tilted_tail
from .kernels import WeightSpec, pair_bound_weight

SQRT_2PI = math.sqrt(2.0 * math.pi)


class StabilityError(RuntimeError):
    """Explicit coagulation step rejected; carries a suggested dt."""

    def __init__(self, dt: float, suggested: float):
        super().__init__(f"step dt={dt:g} violates the stability bound; "
                         f"suggested dt <= {suggested:g}")
        self.suggested = suggested


@dataclass
class MassGrid:
    """Geometric mass bins [delta rho^j, delta rho^(j+1)), pivots at geometric midpoints."""

    delta: float = 1.0
    rho: float = 2.0
    J: int = 24

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("mass floor delta must be positive")
        if self.rho <= 1:
            raise ValueError("bin ratio must exceed 1")
        if self.J < 2:
            raise ValueError("need at least two bins")
        self.edges = self.delta * self.rho ** np.arange(self.J + 1)
        self.pivots = np.sqrt(self.edges[:-1] * self.edges[1:])


@dataclass
class MassField:
    """Solver state: number density per unit volume per mass bin on [0, L)^d.

    ``values`` has shape (n,)*d + (J,).  ``overflow`` and ``clipped`` are mass
    accumulators (reported, never silently dropped).
    """

    grid: MassGrid
    d: int
    L: float
    n: int
    values: np.ndarray
    t: float = 0.0
    overflow: float = 0.0
    clipped: float = 0.0
    signed: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        shape = (self.n,) * self.d + (self.grid.J,)
        if self.values.shape != shape:
            raise ValueError(f"values must have shape {shape}")
        if not self.signed and np.any(self.values < -1e-12):
            raise ValueError("mass field values must be nonnegative")

    @property
    def cell_volume(self) -> float:
        return (self.L / self.n) ** self.d

    def copy(self) -> "MassField":
        return dataclass_replace(self, values=self.values.copy())

    def bracket(self, f_vals: np.ndarray) -> np.ndarray:
        """<f, mu>(x): contraction of the bin axis against f at the pivots."""
        return self.values @ np.asarray(f_vals, dtype=float)

    def mass_l1(self) -> float:
        """|| <y, mu> ||_1 over the box (includes cell volume)."""
        return float(self.bracket(self.grid.pivots).sum()) * self.cell_volume

    def number_total(self) -> float:
        return float(self.values.sum()) * self.cell_volume

    def sup_moment(self, f_vals: np.ndarray) -> float:
        """|| <f, mu> ||_inf over cells."""
        return float(self.bracket(f_vals).max())


class SignedMassField(MassField):
    """MassField without the nonnegativity invariant (Picard differences, q paths)."""

    def __init__(self, grid, d, L, n, values, t=0.0, overflow=0.0, clipped=0.0):
        super().__init__(grid, d, L, n, values, t, overflow, clipped, signed=True)


def dataclass_replace(fld: MassField, **kw) -> MassField:
    cls = SignedMassField if fld.signed else MassField
    args = dict(grid=fld.grid, d=fld.d, L=fld.L, n=fld.n, values=fld.values,
                t=fld.t, overflow=fld.overflow, clipped=fld.clipped)
    args.update(kw)
    if fld.signed:
        args.pop("signed", None)
        return SignedMassField(**args)
    args.setdefault("signed", False)
    return MassField(**args)


def uniform_field(grid: MassGrid, d: int, L: float, n: int, bin_densities) -> MassField:
    """Spatially homogeneous field with the given per-bin number densities."""
    vals = np.broadcast_to(np.asarray(bin_densities, dtype=float),
                           (n,) * d + (grid.J,)).copy()
    return MassField(grid=grid, d=d, L=L, n=n, values=vals)


@dataclass
class Problem:
    """Kernel, diffusivity/drift laws and weights, pre-tabulated on the grid."""

    grid: MassGrid
    kernel: object                  # K(y, y'), vectorized
    a: object                       # diffusivity law a(y)
    B: object = None                # drift-magnitude law for Q_t (None: heat only)
    weight: WeightSpec = field(default_factory=pair_bound_weight)
    d: int = 3

    def __post_init__(self):
        m = self.grid.pivots
        J = self.grid.J
        self.Kmat = np.asarray(self.kernel(m[:, None], m[None, :]), dtype=float)
        if not np.allclose(self.Kmat, self.Kmat.T):
            raise ValueError("coagulation kernel must be symmetric")
        self.a_vec = np.asarray(self.a(m), dtype=float)
        if np.any(self.a_vec <= 0):
            raise ValueError("diffusivity must be positive on all bins")
        self.B_vec = None if self.B is None else np.asarray(self.B(m), dtype=float)
        self.w_vec = np.asarray(self.weight.w(m), dtype=float)
        self.v_vec = (np.asarray(self.weight.v(m), dtype=float)
                      if self.weight.has_pair_bound else None)
        self._build_split_tables()
        self._heat_cache: dict = {}
        self._drift_cache: dict = {}

    def _build_split_tables(self):
        """Fixed-pivot split of every pair sum onto the two bracketing pivots.

        number and mass are both conserved: fractions f, 1-f with
        f m_j + (1-f) m_{j+1} = m_i + m_l.  Sums beyond the top pivot are
        routed to the overflow accumulator (as mass).
        """
        m = self.grid.pivots
        J = self.grid.J
        sums = m[:, None] + m[None, :]
        j = np.searchsorted(m, sums.ravel(), side="right") - 1
        over = j >= J - 1
        j_safe = np.clip(j, 0, J - 2)
        frac = (m[j_safe + 1] - sums.ravel()) / (m[j_safe + 1] - m[j_safe])
        split = np.zeros((J * J, J))
        rows = np.arange(J * J)
        ok = ~over
        split[rows[ok], j_safe[ok]] = frac[ok]
        split[rows[ok], j_safe[ok] + 1] = 1.0 - frac[ok]
        # symmetric gain operator: outer(mu, mu) flattened @ gain_table, halved
        kflat = self.Kmat.ravel()
        self.gain_table = 0.5 * kflat[:, None] * split
        self.overflow_mass = 0.5 * kflat * sums.ravel() * over
        # linearized gain: background index i, source index l, weight m_l/(m_i+m_l)
        wgt = (m[None, :] / sums).ravel()
        self.lin_gain_table = (kflat * wgt)[:, None] * split
        self.lin_overflow_mass = kflat * wgt * sums.ravel() * over

    def max_rowsum(self) -> float:
        return float(self.Kmat.sum(axis=1).max())


# ---------------------------------------------------------------------------
# semigroups
# ---------------------------------------------------------------------------

def _k2_grid(d: int, n: int, L: float) -> np.ndarray:
    """|k|^2 on the half-spectrum grid used by rfftn over the spatial axes."""
    h = L / n
    freqs = [2.0 * math.pi * np.fft.fftfreq(n, d=h) for _ in range(d - 1)]
    freqs.append(2.0 * math.pi * np.fft.rfftfreq(n, d=h))
    k2 = np.zeros(tuple(f.size for f in freqs))
    for axis, f in enumerate(freqs):
        shape = [1] * d
        shape[axis] = f.size
        k2 = k2 + (f ** 2).reshape(shape)
    return k2


def apply_heat_semigroup(fld: MassField, dt: float, problem: Problem) -> MassField:
    """P_dt: per-bin spatial convolution with the wrapped heat kernel (spectral).

    Exact on the torus; the zero-frequency multiplier is 1, so every bin's
    spatial integral is preserved to rounding.
    """
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if dt == 0:
        return fld.copy()
    key = ("heat", float(dt))
    mult = problem._heat_cache.get(key)
    if mult is None:
        k2 = _k2_grid(fld.d, fld.n, fld.L)
        mult = np.exp(-0.5 * dt * k2[..., None] * problem.a_vec)
        problem._heat_cache[key] = mult
    axes = tuple(range(fld.d))
    F = np.fft.rfftn(fld.values, axes=axes)
    F *= mult
    out = np.fft.irfftn(F, s=(fld.n,) * fld.d, axes=axes)
    return dataclass_replace(fld, values=out, t=fld.t + dt)


def _drift_multiplier_1d(a_y: float, B_y: float, dt: float, n: int, L: float) -> np.ndarray:
    """Spectral multiplier of the wrapped, normalized 1-D drifted kernel.

    The per-coordinate kernel is (2 pi a t)^(-1/2) tilted_tail(|x|/sqrt(at),
    B sqrt(t/a)); it is sampled at the grid offsets, summed over periodic
    images, and normalized so the zero mode is exactly 1 (preserving each
    bin's spatial integral).
    """
    h = L / n
    offs = (np.arange(n) * h + L / 2.0) % L - L / 2.0
    var = a_y * dt
    c = B_y * math.sqrt(dt / a_y)
    width = 6.0 * math.sqrt(var) + B_y * dt
    n_images = int(math.ceil(width / L)) + 1
    kern = np.zeros(n)
    for m_img in range(-n_images, n_images + 1):
        x = offs + m_img * L
        kern += tilted_tail(np.abs(x) / math.sqrt(var), c) / math.sqrt(2.0 * math.pi * var)
    kern /= kern.sum() * h
    mult = np.fft.fft(kern) * h
    return np.real(mult)  # kernel is even, spectrum is real


def apply_drift_semigroup(fld: MassField, dt: float, problem: Problem) -> MassField:
    """Q_dt: per-bin convolution with the wrapped extremal drifted kernel.

    The kernel factorizes over coordinates, so each bin gets a product of 1-D
    multipliers.  A zero drift law reduces to the heat semigroup.
    """
    if dt <= 0:
        raise ValueError("dt must be strictly positive")
    if problem.B_vec is None or not np.any(problem.B_vec):
        return apply_heat_semigroup(fld, dt, problem)
    key = ("drift", float(dt))
    mults = problem._drift_cache.get(key)
    if mults is None:
        per_bin = []
        for a_y, B_y in zip(problem.a_vec, problem.B_vec):
            m1 = _drift_multiplier_1d(a_y, B_y, dt, fld.n, fld.L)
            full = m1
            r = m1[: fld.n // 2 + 1]
            mult = np.ones(())
            for axis in range(fld.d):
                vec = r if axis == fld.d - 1 else full
                shape = [1] * fld.d
                shape[axis] = vec.size
                mult = mult * vec.reshape(shape)
            per_bin.append(mult)
        mults = np.stack(per_bin, axis=-1)
        problem._drift_cache[key] = mults
    axes = tuple(range(fld.d))
    F = np.fft.rfftn(fld.values, axes=axes)
    F *= mults
    out = np.fft.irfftn(F, s=(fld.n,) * fld.d, axes=axes)
    return dataclass_replace(fld, values=out, t=fld.t + dt)


def _propagate(fld: MassField, dt: float, problem: Problem) -> MassField:
    if problem.B_vec is not None and np.any(problem.B_vec) and dt > 0:
        return apply_drift_semigroup(fld, dt, problem)
    return apply_heat_semigroup(fld, dt, problem)


# ---------------------------------------------------------------------------
# coagulation
# ---------------------------------------------------------------------------

def coag_gain(fld: MassField, problem: Problem) -> tuple[np.ndarray, float]:
    """K+ rate field and the overflow mass rate (density units per unit time).

    gain_j = 1/2 sum_{i,l} split_{il->j} K(m_i, m_l) mu_i mu_l, with the
    fixed-pivot split conserving number and mass per event.
    """
    J = problem.grid.J
    mu = fld.values.reshape(-1, J)
    outer = np.einsum("ci,cl->cil", mu, mu).reshape(mu.shape[0], J * J)
    gain = outer @ problem.gain_table
    over_rate = float((outer @ problem.overflow_mass).sum()) * fld.cell_volume
    return gain.reshape(fld.values.shape), over_rate


def coag_loss(fld: MassField, problem: Problem) -> np.ndarray:
    """K- rate field: loss_j = mu_j sum_l K(m_j, m_l) mu_l, pointwise in x."""
    return fld.values * (fld.values @ problem.Kmat)


def _coag_rate(values: np.ndarray, problem: Problem) -> tuple[np.ndarray, float]:
    """(gain - loss, overflow mass rate per cell-sum) for raw value arrays."""
    J = problem.grid.J
    mu = values.reshape(-1, J)
    outer = np.einsum("ci,cl->cil", mu, mu).reshape(mu.shape[0], J * J)
    gain = (outer @ problem.gain_table).reshape(values.shape)
    loss = values * (values @ problem.Kmat)
    over = float((outer @ problem.overflow_mass).sum())
    return gain - loss, over


def strang_step(fld: MassField, dt: float, problem: Problem,
                use_drift: bool = False) -> MassField:
    """One split step: half diffusion, explicit midpoint coagulation, half diffusion.

    The midpoint (second-order Runge-Kutta) coagulation substep keeps the
    whole step second-order in dt even for spatially uniform fields where the
    diffusion halves are the identity.  Negative values produced by the
    explicit substep are clipped and the clipped mass accounted.
    """
    if dt <= 0:
        raise ValueError("dt must be strictly positive")
    w2 = fld.sup_moment(problem.w_vec ** 2)
    bound = dt * w2 * problem.max_rowsum()
    if bound > 0.5:
        raise StabilityError(dt, 0.5 / (w2 * problem.max_rowsum()))
    prop = apply_drift_semigroup if use_drift else apply_heat_semigroup
    half = prop(fld, dt / 2.0, problem)
    k1, over1 = _coag_rate(half.values, problem)
    mid = half.values + 0.5 * dt * k1
    np.maximum(mid, 0.0, out=mid)
    k2, over2 = _coag_rate(mid, problem)
    new = half.values + dt * k2
    neg = np.clip(new, None, 0.0)
    clipped = -float((neg.reshape(-1, problem.grid.J)
                      @ problem.grid.pivots).sum()) * fld.cell_volume
    np.maximum(new, 0.0, out=new)
    stepped = dataclass_replace(half, values=new,
                                overflow=half.overflow + dt * over2,
                                clipped=half.clipped + clipped)
    return prop(stepped, dt / 2.0, problem)


# ---------------------------------------------------------------------------
# linearized equation and Picard iteration
# ---------------------------------------------------------------------------

def _lin_substep(values: np.ndarray, nu_values: np.ndarray, dt: float,
                 problem: Problem) -> tuple[np.ndarray, float]:
    """Exact-decay / explicit-gain update of the frozen-background equation.

    Each source bin l decays at rate c_l = sum_i K_li nu_i and feeds the gain
    with the matched factor (1 - e^{-c_l dt}) / c_l, so the w-weighted mass
    added never exceeds the w-weighted mass removed (discrete contraction).
    """
    J = problem.grid.J
    q = values.reshape(-1, J)
    nu = nu_values.reshape(-1, J)
    c = nu @ problem.Kmat  # (cells, J): death rate per source bin
    decay = np.exp(-c * dt)
    c_safe = np.where(c > 0, c, 1.0)
    eff = np.where(c > 0, (1.0 - decay) / c_safe, dt)
    pair = np.einsum("ci,cl->cil", nu, q * eff).reshape(q.shape[0], J * J)
    gain = pair @ problem.lin_gain_table
    over = float(np.abs(pair @ problem.lin_overflow_mass).sum())
    out = q * decay + gain
    return out.reshape(values.shape), over


def linearized_solve(nu_path, q0: MassField, T: float, problem: Problem,
                     n_steps: int, use_drift: bool = False) -> list[MassField]:
    """Solve the frozen-background linear evolution q = f(nu) on [0, T].

    ``nu_path`` is a list of nonnegative background fields at the time nodes
    (length n_steps + 1) or a single field used as a constant background.
    Returns the q path at the same nodes.  Nonnegative q0 stays nonnegative;
    signed q0 contracts in || <w, |q|> ||_1.
    """
    if isinstance(nu_path, MassField):
        nu_path = [nu_path] * (n_steps + 1)
    if len(nu_path) != n_steps + 1:
        raise ValueError("background path must have n_steps + 1 nodes")
    for nu in nu_path:
        if np.any(nu.values < -1e-12):
            raise ValueError("background must be nonnegative")
        if not np.isfinite(nu.sup_moment(problem.w_vec ** 2)):
            raise ValueError("background has non-integrable w^2 moment")
    dt = T / n_steps
    prop = apply_drift_semigroup if use_drift else apply_heat_semigroup
    path = [q0.copy()]
    cur = q0
    for k in range(n_steps):
        half = prop(cur, dt / 2.0, problem)
        newvals, over = _lin_substep(half.values, nu_path[k].values, dt, problem)
        stepped = dataclass_replace(half, values=newvals,
                                    overflow=half.overflow + over * q0.cell_volume)
        cur = prop(stepped, dt / 2.0, problem)
        cur = dataclass_replace(cur, t=q0.t + (k + 1) * dt)
        path.append(cur)
    return path


def w_distance(path1: list[MassField], path2: list[MassField],
               problem: Problem) -> float:
    """Contraction metric d_T = sup_t || <w, |mu1 - mu2|_t> ||_1."""
    best = 0.0
    for f1, f2 in zip(path1, path2):
        diff = np.abs(f1.values - f2.values)
        best = max(best, float((diff @ problem.w_vec).sum()) * f1.cell_volume)
    return best


@dataclass
class MomentReport:
    """Time series of the monitored norms and bounds for one solver run."""

    t: np.ndarray
    mass_l1: np.ndarray
    w2_sup: np.ndarray
    riccati_bound: np.ndarray
    C: float
    T_star: float
    contraction_factors: list = field(default_factory=list)
    wv_max_excess: float | None = None

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "mass_l1", "w2_sup", "riccati_bound",
                            "contraction_factor"])
            for k in range(self.t.size):
                cf = (self.contraction_factors[k]
                      if k < len(self.contraction_factors) else "")
                writer.writerow([self.t[k], self.mass_l1[k], self.w2_sup[k],
                                 self.riccati_bound[k], cf])


def measured_inequality_constant(problem: Problem) -> float:
    """Grid constant of the weight/diffusivity inequality feeding the monitor.

    For non-increasing power-law diffusivities the heat-kernel ratio
    p(y)/p(y+y') is minimized at zero separation where it equals
    (a(y+y')/a(y))^(d/2); substituting that worst case into
    (y/(y+y')) w^2(y+y') p(y+y') - w^2(y) p(y) <= C w(y) w(y') [p(y)+p(y')]
    and dropping the p(y') term leaves a pure bin-pair maximum.
    """
    m = problem.grid.pivots
    w = problem.w_vec
    s = m[:, None] + m[None, :]
    w_s = np.asarray(problem.weight.w(s), dtype=float)
    a_ratio = (np.asarray(problem.a(s), dtype=float) / problem.a_vec[:, None]) \
        ** (problem.d / 2.0)
    lhs = (m[:, None] / s) * w_s ** 2 - (w[:, None] ** 2) * a_ratio
    denom = (w[:, None] * w[None, :]) * a_ratio
    return float(np.max(np.maximum(lhs, 0.0) / denom))


def moment_monitor(path: list[MassField], problem: Problem,
                   C: float | None = None, mu0: MassField | None = None,
                   check_wv: bool = False) -> MomentReport:
    """Norm time series, the Riccati bound h(t) <= (h(0)^-1 - 2Ct)^-1, and T*.

    ``C`` defaults to the measured grid constant.  With ``check_wv`` the
    report also carries the worst pointwise excess of <wv, mu_t> over
    <wv, P_t mu0> (the global-existence criterion for the pair-bound weight).
    """
    if C is None:
        C = measured_inequality_constant(problem)
    t = np.array([f.t for f in path])
    mass = np.array([f.mass_l1() for f in path])
    w2 = np.array([f.sup_moment(problem.w_vec ** 2) for f in path])
    h0 = w2[0]
    T_star = math.inf if C * h0 == 0 else 1.0 / (2.0 * C * h0)
    elapsed = t - t[0]
    with np.errstate(divide="ignore"):
        bound = np.where(elapsed < T_star, 1.0 / (1.0 / h0 - 2.0 * C * elapsed),
                         math.inf)
    wv_excess = None
    if check_wv:
        if problem.v_vec is None:
            raise ValueError("wv check needs a pair-bound weight with v configured")
        if mu0 is None:
            mu0 = path[0]
        wv = problem.w_vec * problem.v_vec
        wv_excess = 0.0
        for f in path:
            ref = apply_heat_semigroup(mu0, f.t - mu0.t, problem) if f.t > mu0.t else mu0
            excess = f.bracket(wv) - ref.bracket(wv)
            wv_excess = max(wv_excess, float(excess.max()))
    return MomentReport(t=t, mass_l1=mass, w2_sup=w2, riccati_bound=bound,
                        C=C, T_star=T_star, wv_max_excess=wv_excess)


def picard_solve(mu0: MassField, T: float, problem: Problem, n_steps: int = 40,
                 max_sweeps: int = 12, tol: float = 1e-8,
                 use_drift: bool = False) -> tuple[list[MassField], MomentReport]:
    """Fixed-point iteration nu <- f(nu) for the mild equation on [0, T].

    Starts from the heat-only path, records the contraction metric per sweep,
    and aborts with the Gronwall-suggested horizon if the distances fail to
    contract for three consecutive sweeps.
    """
    if mu0.mass_l1() == math.inf:
        raise ValueError("initial mass must be finite")
    if np.any(mu0.values[..., mu0.grid.pivots < mu0.grid.delta] > 0):
        raise ValueError("initial data must be supported on bins >= delta")
    dt = T / n_steps
    nu = [_propagate_chain(mu0, k * dt, problem, use_drift) for k in range(n_steps + 1)]
    factors = []
    prev_dist = None
    bad = 0
    for _ in range(max_sweeps):
        new = linearized_solve(nu, mu0, T, problem, n_steps, use_drift=use_drift)
        dist = w_distance(new, nu, problem)
        if prev_dist is not None and prev_dist > 0:
            ratio = dist / prev_dist
            factors.append(ratio)
            bad = bad + 1 if ratio >= 1.0 else 0
            if bad >= 3:
                report = moment_monitor(nu, problem)
                raise RuntimeError(
                    "Picard iteration not contracting: T too large; "
                    f"suggested horizon T* = {report.T_star:g}")
        nu = new
        if dist < tol and (prev_dist is None or dist < prev_dist):
            prev_dist = dist
            break
        prev_dist = dist
    report = moment_monitor(nu, problem)
    report.contraction_factors = factors
    return nu, report


def _propagate_chain(mu0: MassField, t: float, problem: Problem,
                     use_drift: bool) -> MassField:
    if t == 0:
        return mu0.copy()
    if use_drift:
        return apply_drift_semigroup(mu0, t, problem)
    return apply_heat_semigroup(mu0, t, problem)


def mild_residual(path: list[MassField], T: float, problem: Problem,
                  n_steps: int, use_drift: bool = False) -> float:
    """d_T distance between the path and one more application of the Picard map."""
    new = linearized_solve(path, path[0], T, problem, n_steps, use_drift=use_drift)
    return w_distance(new, path, problem)


# ---------------------------------------------------------------------------
# space-homogeneous oracle
# ---------------------------------------------------------------------------

def homogeneous_oracle(problem: Problem, mu0_bins, T: float, n_eval: int = 200):
    """High-accuracy 0-D integration of mu' = K+(mu) - K-(mu) on the mass grid.

    Returns (times, trajectory) with trajectory[k] the per-bin number
    densities; serves as the oracle for every spatially uniform solver test.
    """
    from scipy.integrate import solve_ivp

    mu0_bins = np.asarray(mu0_bins, dtype=float)
    J = problem.grid.J

    def rhs(t, mu):
        outer = np.outer(mu, mu).reshape(1, J * J)
        gain = (outer @ problem.gain_table).ravel()
        loss = mu * (problem.Kmat @ mu)
        return gain - loss

    t_eval = np.linspace(0.0, T, n_eval)
    sol = solve_ivp(rhs, (0.0, T), mu0_bins, method="RK45", rtol=1e-10,
                    atol=1e-13, t_eval=t_eval, dense_output=False)
    if not sol.success:
        raise RuntimeError(f"oracle integration failed at t = {sol.t[-1]:g}: "
                           f"{sol.message}")
    return sol.t, sol.y.T


def constant_kernel_number(n0: float, t) -> np.ndarray:
    """Closed-form total number n0 / (1 + n0 t / 2) for the constant kernel."""
    return n0 / (1.0 + 0.5 * n0 * np.asarray(t, dtype=float))


# ---------------------------------------------------------------------------
# checkpoints and diagnostics
# ---------------------------------------------------------------------------

def save_checkpoint(fld: MassField, path, kernel_id: str = "") -> None:
    """Self-describing checkpoint: JSON header + row-major cell x bin values."""
    header = {"d": fld.d, "L": fld.L, "n": fld.n, "delta": fld.grid.delta,
              "rho": fld.grid.rho, "J": fld.grid.J, "kernel": kernel_id,
              "t": fld.t, "overflow": fld.overflow, "clipped": fld.clipped,
              "signed": fld.signed}
    np.savez_compressed(path, header=json.dumps(header), values=fld.values)


def load_checkpoint(path) -> MassField:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        values = data["values"]
    grid = MassGrid(delta=header["delta"], rho=header["rho"], J=header["J"])
    cls = SignedMassField if header.get("signed") else MassField
    return cls(grid=grid, d=header["d"], L=header["L"], n=header["n"],
               values=values, t=header["t"], overflow=header["overflow"],
               clipped=header["clipped"])


def boundary_mass_fraction(fld: MassField) -> float:
    """Mass fraction in the outermost cell layer (torus wrap diagnostic).

    For initial data concentrated near the box center, this bounds the mass
    that has diffused far enough for periodic images to contaminate the run.
    """
    total = fld.mass_l1()
    if total == 0:
        return 0.0
    mask = np.zeros((fld.n,) * fld.d, dtype=bool)
    for axis in range(fld.d):
        idx = [slice(None)] * fld.d
        idx[axis] = 0
        mask[tuple(idx)] = True
        idx[axis] = fld.n - 1
        mask[tuple(idx)] = True
    edge_mass = float((fld.values[mask] @ fld.grid.pivots).sum()) * fld.cell_volume
    return edge_mass / total
