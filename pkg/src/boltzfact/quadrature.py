"""Gauss-type quadrature rules and sizing of the 5D kinematic grid.

Node/weight generation follows the Golub-Welsch approach: the rule of an
orthogonal polynomial family is recovered from the eigen-decomposition of
the symmetric tridiagonal Jacobi matrix built from the family's three-term
recurrence.  This is stable well past the sizes needed here (N ~ 200).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal


@dataclass(frozen=True)
class Rule1D:
    """One-dimensional quadrature rule: sum(weights * f(nodes)) ~ integral."""

    nodes: np.ndarray
    weights: np.ndarray
    domain: str  # "finite" | "half_line" | "periodic"

    def __post_init__(self):
        if self.nodes.shape != self.weights.shape or self.nodes.ndim != 1:
            raise ValueError("nodes/weights must be 1D arrays of equal length")

    @property
    def n(self) -> int:
        return self.nodes.size

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


def _golub_welsch(alpha: np.ndarray, beta: np.ndarray, mu0: float):
    """Nodes and weights from recurrence coefficients.

    alpha[k], beta[k] are the diagonal / squared off-diagonal recurrence
    coefficients of the monic orthogonal polynomials; mu0 is the zeroth
    moment of the weight function.  beta[0] is unused.
    """
    n = alpha.size
    if n == 1:
        return alpha.copy(), np.array([mu0])
    off = np.sqrt(beta[1:])
    vals, vecs = eigh_tridiagonal(alpha, off)
    weights = mu0 * vecs[0, :] ** 2
    return vals, weights


def _legendre_pair(n: int, x: np.ndarray):
    """P_n(x) and P_{n-1}(x) by the three-term recurrence."""
    p_prev = np.ones_like(x)
    p = x.copy()
    for k in range(1, n):
        p, p_prev = ((2 * k + 1) * x * p - k * p_prev) / (k + 1), p
    return p, p_prev


def gauss_legendre(n: int) -> Rule1D:
    """Gauss-Legendre rule on [-1, 1]; exact for polynomial degree <= 2n-1."""
    if n < 1:
        raise ValueError(f"need at least one node, got n={n}")
    alpha = np.zeros(n)
    k = np.arange(n, dtype=float)
    beta = np.zeros(n)
    beta[1:] = k[1:] ** 2 / (4.0 * k[1:] ** 2 - 1.0)
    nodes, _ = _golub_welsch(alpha, beta, 2.0)
    if n == 1:
        return Rule1D(nodes, np.array([2.0]), "finite")
    # one Newton polish pass, then weights from the derivative identity
    for _ in range(2):
        p, p_prev = _legendre_pair(n, nodes)
        dp = n * (nodes * p - p_prev) / (nodes**2 - 1.0)
        nodes = nodes - p / dp
    p, p_prev = _legendre_pair(n, nodes)
    dp = n * (nodes * p - p_prev) / (nodes**2 - 1.0)
    weights = 2.0 / ((1.0 - nodes**2) * dp**2)
    return Rule1D(nodes, weights, "finite")


def gauss_legendre_01(n: int) -> Rule1D:
    """Gauss-Legendre rule mapped to [0, 1]."""
    rule = gauss_legendre(n)
    return Rule1D(0.5 * (rule.nodes + 1.0), 0.5 * rule.weights, "finite")


def _laguerre_pair(n: int, a: float, x: np.ndarray):
    """L_n^{(a)}(x) and L_{n-1}^{(a)}(x) by the three-term recurrence."""
    p_prev = np.ones_like(x)
    p = 1.0 + a - x
    for k in range(1, n):
        p, p_prev = ((2 * k + a + 1 - x) * p - (k + a) * p_prev) / (k + 1), p
    return p, p_prev


def gauss_laguerre_gen(n: int, a: float) -> Rule1D:
    """Generalized Gauss-Laguerre rule for weight x^a e^{-x} on [0, inf).

    Exact for polynomial degree <= 2n-1 against the weight.  Requires a > -1
    for the weight to be integrable.
    """
    if n < 1:
        raise ValueError(f"need at least one node, got n={n}")
    if a <= -1.0:
        raise ValueError(f"generalized Laguerre weight requires a > -1, got a={a}")
    k = np.arange(n, dtype=float)
    alpha = 2.0 * k + a + 1.0
    beta = np.zeros(n)
    beta[1:] = k[1:] * (k[1:] + a)
    nodes, weights = _golub_welsch(alpha, beta, math.gamma(a + 1.0))
    if n == 1:
        return Rule1D(nodes, weights, "half_line")
    # Newton polish; weights from the standard derivative formula
    for _ in range(2):
        p, p_prev = _laguerre_pair(n, a, nodes)
        dp = (n * p - (n + a) * p_prev) / nodes
        nodes = nodes - p / dp
    _, p_prev = _laguerre_pair(n, a, nodes)
    log_w = (
        math.lgamma(n + a) - math.lgamma(n + 1.0)
        + np.log(nodes) - 2.0 * np.log(np.abs(p_prev))
    )
    weights = np.exp(log_w) / (n + a)
    return Rule1D(nodes, weights, "half_line")


def trapezoid_periodic(n: int) -> Rule1D:
    """Equispaced rule on [0, 2pi); integrates e^{i m x} exactly for |m| < n."""
    if n < 1:
        raise ValueError(f"need at least one node, got n={n}")
    nodes = 2.0 * np.pi * np.arange(n) / n
    weights = np.full(n, 2.0 * np.pi / n)
    return Rule1D(nodes, weights, "periodic")


@dataclass(frozen=True)
class GridSpec:
    """Per-axis point counts of the 5D kinematic grid, for both Duffy patches.

    The baseline counts resolve the polynomial content generated by radial
    truncation k_max and angular truncation l_max exactly.  Padding extends
    only the coupled kinematic axes (energy, fractional coordinate,
    half-angle and the Duffy coordinates); the scattering angles never need
    it because their integrands stay polynomial/periodic.
    """

    n_e: int
    n_rho1: int
    n_t1: int
    n_h2: int
    n_t2: int
    n_chi: int
    n_eps: int
    pad_rad: int
    pad_ang: int

    def as_tuple(self):
        return (self.n_e, self.n_rho1, self.n_t1, self.n_h2, self.n_t2,
                self.n_chi, self.n_eps, self.pad_rad, self.pad_ang)


def grid_baseline(k_max: int, l_max: int) -> GridSpec:
    """Minimum exactness counts for the polynomial part of the integrand."""
    if k_max < 0 or l_max < 0:
        raise ValueError("truncation limits must be non-negative")
    n_e = (6 * k_max + 3 * l_max + 9) // 4  # ceil((3K + 1.5L + 3)/2)
    n_outer = 4 * k_max + 3 * l_max + 4
    n_t1 = k_max + (3 * l_max + 1) // 2 + 1  # K + ceil(1.5 L) + 1
    n_t2 = 3 * k_max + (3 * l_max) // 2 + 3  # 3K + floor(1.5 L) + 3
    n_chi = k_max + (l_max + 1) // 2 + 1  # K + ceil(0.5 L) + 1
    n_eps = 2 * k_max + l_max + 1
    return GridSpec(n_e, n_outer, n_t1, n_outer, n_t2, n_chi, n_eps, 0, 0)


def grid_sizes(k_max: int, l_max: int, pad_rad: int = 16, pad_ang: int = 16) -> GridSpec:
    """Grid sizes with selective padding on the coupled kinematic axes.

    Patch 1 integrates the fractional radial coordinate on its outer axis
    (radial padding) and the mapped half-angle on its inner Duffy axis
    (angular padding); patch 2 swaps the roles.  The energy axis always
    takes the radial padding; the deflection and azimuthal axes take none.
    """
    if pad_rad < 0 or pad_ang < 0:
        raise ValueError("padding must be non-negative")
    base = grid_baseline(k_max, l_max)
    return GridSpec(
        n_e=base.n_e + pad_rad,
        n_rho1=base.n_rho1 + pad_rad,
        n_t1=base.n_t1 + pad_ang,
        n_h2=base.n_h2 + pad_ang,
        n_t2=base.n_t2 + pad_rad,
        n_chi=base.n_chi,
        n_eps=base.n_eps,
        pad_rad=pad_rad,
        pad_ang=pad_ang,
    )


def check_grid(spec: GridSpec, k_max: int, l_max: int) -> None:
    """Raise if any axis is below the exactness baseline for (k_max, l_max)."""
    base = grid_baseline(k_max, l_max)
    pairs = [
        ("n_e", spec.n_e, base.n_e),
        ("n_rho1", spec.n_rho1, base.n_rho1),
        ("n_t1", spec.n_t1, base.n_t1),
        ("n_h2", spec.n_h2, base.n_h2),
        ("n_t2", spec.n_t2, base.n_t2),
        ("n_chi", spec.n_chi, base.n_chi),
        ("n_eps", spec.n_eps, base.n_eps),
    ]
    for name, got, need in pairs:
        if got < need:
            raise ValueError(
                f"grid axis {name}={got} below exactness baseline {need} "
                f"for k_max={k_max}, l_max={l_max}"
            )
