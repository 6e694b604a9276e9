"""Collision-rate constants, coagulation kernels, diffusivity laws and weight functions.

All quantities here are closed forms; the defining integrals are kept in the
test suite as independent oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class MotionModel(Enum):
    BROWNIAN_CONSTANT = "brownian_constant"
    BROWNIAN_FIELD = "brownian_field"
    OU_FAST = "ou_fast"
    OU_SLOW = "ou_slow"


class DragLaw(Enum):
    EINSTEIN = "einstein"
    MECHANICAL = "mechanical"


@dataclass
class KernelSpec:
    """Which collision kernel / free-motion model is in force.

    ``d`` below 3 is accepted for cheap tests but flagged off-theory: the
    collision-rate constants only exist for d >= 3.
    """

    d: int
    model: MotionModel
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        for name, val in self.params.items():
            if name in ("a1", "a2", "r1", "r2", "b1", "b2", "tau1", "tau2",
                        "y1", "y2", "delta") and not val > 0:
                raise ValueError(f"parameter {name!r} must be strictly positive, got {val}")
        alpha = self.params.get("alpha")
        if self.model is MotionModel.OU_FAST:
            if alpha is None or not alpha > 0.5:
                raise ValueError("fast-radius model requires a declared radius exponent alpha > 1/2")
        if self.model is MotionModel.OU_SLOW:
            if alpha is None or not alpha < 0.5:
                raise ValueError("slow-radius model requires a declared radius exponent alpha < 1/2")

    @property
    def off_theory(self) -> bool:
        return self.d < 3

    @property
    def delta(self) -> float:
        return self.params.get("delta", 1.0)


def c_brownian(d: int) -> float:
    """Collision-rate constant for Brownian pairs in dimension d >= 3.

    Defined through 1/c_d = int_0^inf (2*pi*t)^(-d/2) exp(-1/(2t)) dt, which
    evaluates to c_d = 2*pi^(d/2) / Gamma(d/2 - 1).
    """
    if d < 3:
        raise ValueError(
            "c_brownian requires d >= 3: the defining time integral of the "
            "heat kernel at unit separation diverges for d <= 2"
        )
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0 - 1.0)


def c_ou(d: int) -> float:
    """Collision-rate constant for the fast-radius Ornstein-Uhlenbeck regime.

    Equals pi^((d-1)/2) / Gamma(d/2); equivalently 1/sqrt(2) times the volume
    of the unit ball in R^(d-1) times the expected norm of a d-dimensional
    standard normal vector.
    """
    if d < 2:
        raise ValueError("c_ou requires d >= 2")
    return math.pi ** ((d - 1) / 2.0) / math.gamma(d / 2.0)


def brownian_kernel(a_sum: float, r_sum: float, d: int) -> float:
    """Constant collision kernel c_d * a * r^(d-2) for a Brownian pair.

    ``a_sum`` is the summed diffusivity of the two particles and ``r_sum``
    the summed (unscaled) radius.
    """
    if not (a_sum > 0 and r_sum > 0):
        raise ValueError("a_sum and r_sum must be strictly positive")
    return c_brownian(d) * a_sum * r_sum ** (d - 2)


def ou_mass_kernel(y1, y2):
    """Coagulation kernel (y1^(1/3)+y2^(1/3))^2 * sqrt(1/y1 + 1/y2).

    Symmetric and positively homogeneous of degree 1/6. Accepts scalars or
    arrays.
    """
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if np.any(y1 <= 0) or np.any(y2 <= 0):
        raise ValueError("masses must be strictly positive")
    out = (np.cbrt(y1) + np.cbrt(y2)) ** 2 * np.sqrt(1.0 / y1 + 1.0 / y2)
    return out if out.ndim else float(out)


def diffusivity_law(model: DragLaw, y) -> tuple:
    """Mass-dependent OU parameters (a, tau, b) for a particle of mass y.

    Mechanical drag: tau = y^(-1/3), b = y^(-2/3), hence a = y^(-2/3).
    Einstein relation: tau = y^(-2/3), b = y^(-5/6), hence a = y^(-1/3).
    The macroscopic diffusivity a = (b/tau)^2 is enforced exactly.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("mass must be strictly positive")
    if model is DragLaw.MECHANICAL:
        tau = y ** (-1.0 / 3.0)
        b = y ** (-2.0 / 3.0)
    elif model is DragLaw.EINSTEIN:
        tau = y ** (-2.0 / 3.0)
        b = y ** (-5.0 / 6.0)
    else:
        raise ValueError(f"unknown drag law {model!r}")
    a = (b / tau) ** 2
    if y.ndim == 0:
        return float(a), float(tau), float(b)
    return a, tau, b


@dataclass
class WeightSpec:
    """Sublinear weight w(y) = c1 * y^u, optionally paired with v(y) = c2 * y^(-s).

    ``u`` must lie in (0, 1] so that w is non-decreasing and sublinear.  When
    ``c2`` is given the pair (w, v) is used in the two-sided kernel bound
    K(y, y') <= w(y) v(y') + w(y') v(y).
    """

    c1: float
    u: float
    c2: float | None = None
    s: float | None = None

    def __post_init__(self):
        if not (0 < self.u <= 1):
            raise ValueError("weight exponent u must lie in (0, 1] for sublinearity")
        if self.c1 <= 0:
            raise ValueError("weight coefficient must be positive")
        if (self.c2 is None) != (self.s is None):
            raise ValueError("pair bound needs both c2 and s")
        if self.c2 is not None and self.c2 <= 0:
            raise ValueError("pair-bound coefficient must be positive")

    def w(self, y):
        return self.c1 * np.asarray(y, dtype=float) ** self.u

    def v(self, y):
        if self.c2 is None:
            raise ValueError("no v form configured")
        return self.c2 * np.asarray(y, dtype=float) ** (-self.s)

    @property
    def has_pair_bound(self) -> bool:
        return self.c2 is not None


def default_weight(delta: float = 1.0) -> WeightSpec:
    """w(y) = 4 delta^(-7/6) y^(2/3): dominates the OU mass kernel on y >= delta."""
    if delta <= 0:
        raise ValueError("mass floor delta must be positive")
    return WeightSpec(c1=4.0 * delta ** (-7.0 / 6.0), u=2.0 / 3.0)


def pair_bound_weight() -> WeightSpec:
    """w(y) = 4 sqrt(2) y^(2/3) with v(y) = y^(-1/2); global-existence pair for the OU kernel."""
    return WeightSpec(c1=4.0 * math.sqrt(2.0), u=2.0 / 3.0, c2=1.0, s=0.5)


@dataclass
class DominationReport:
    holds: bool
    worst_ratio: float
    counterexample: tuple | None  # (y, y', K, bound) at the first violation


def check_kernel_domination(kernel, spec: WeightSpec, delta: float = 1.0,
                            y_max: float = 1e6, n: int = 200) -> DominationReport:
    """Check K(y, y') <= w(y) w(y') (or the pair bound) on a log grid of [delta, y_max]^2.

    The inequality is stated for all masses; both K and the power-law bounds
    are smooth and the ratio K/bound is monotone between grid nodes for the
    shipped kernels, so a dense log grid is the testable surrogate.
    """
    ys = np.geomspace(delta, y_max, n)
    y1, y2 = np.meshgrid(ys, ys, indexing="ij")
    kvals = kernel(y1, y2)
    if spec.has_pair_bound:
        bound = spec.w(y1) * spec.v(y2) + spec.w(y2) * spec.v(y1)
    else:
        bound = spec.w(y1) * spec.w(y2)
    ratio = kvals / bound
    worst = float(ratio.max())
    if worst <= 1.0 + 1e-12:
        return DominationReport(True, worst, None)
    i, j = np.unravel_index(np.argmax(ratio), ratio.shape)
    return DominationReport(False, worst,
                            (float(ys[i]), float(ys[j]), float(kvals[i, j]), float(bound[i, j])))
