"""Spectral velocity-space basis: Laguerre radial functions x real spherical
harmonics, index maps, projection and macroscopic moments.

Basis functions are psi_{klm}(v) = phi_{k,l}(|v|) Y_{lm}(v/|v|) with

    phi_{k,l}(v) = N_{k,l} v^l L_k^{(l+1/2)}(v^2 / 2),

normalized so that the Gram matrix under the reference Maxwellian weight
M(v) = (2 pi)^{-3/2} exp(-v^2/2) is the identity.  In particular
psi_{000} = 1 identically, so the field with c_{0,q(0,0)} = 1 is the unit
Maxwellian itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import lpmv

from .quadrature import gauss_laguerre_gen, gauss_legendre, trapezoid_periodic

__all__ = [
    "SpectralConfig",
    "CoefficientField",
    "q_index",
    "q_degree",
    "state_index",
    "state_unpack",
    "radial_norm",
    "radial_eval",
    "radial_eval_all",
    "real_sph_harm",
    "project",
    "project_isotropic",
    "evaluate_field",
    "moments",
]


@dataclass(frozen=True)
class SpectralConfig:
    """Truncation limits and kernel exponent of a spectral discretization."""

    k_max: int
    l_max: int
    gamma: float = 1.0

    def __post_init__(self):
        if self.k_max < 0 or self.l_max < 0:
            raise ValueError("truncation limits must be non-negative")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"kernel exponent gamma={self.gamma} outside [0, 1]")

    @property
    def n_k(self) -> int:
        return self.k_max + 1

    @property
    def n_q(self) -> int:
        return (self.l_max + 1) ** 2

    @property
    def n_dof(self) -> int:
        return self.n_k * self.n_q


def q_index(l: int, m: int) -> int:
    """Angular index q = l^2 + l + m + 1, a bijection onto 1..(l_max+1)^2."""
    if l < 0 or abs(m) > l:
        raise ValueError(f"invalid angular numbers l={l}, m={m}")
    return l * l + l + m + 1


def q_degree(q: int) -> tuple[int, int]:
    """Inverse of q_index: 1-based q -> (l, m)."""
    if q < 1:
        raise ValueError(f"angular index must be >= 1, got {q}")
    l = int(math.isqrt(q - 1))
    m = q - 1 - l * l - l
    return l, m


def state_index(k: int, l: int, m: int, cfg: SpectralConfig) -> int:
    """Flatten (k, l, m) into the 1-based composite index alpha."""
    if not 0 <= k <= cfg.k_max:
        raise ValueError(f"radial index k={k} outside [0, {cfg.k_max}]")
    if not 0 <= l <= cfg.l_max:
        raise ValueError(f"polar degree l={l} outside [0, {cfg.l_max}]")
    if abs(m) > l:
        raise ValueError(f"azimuthal mode m={m} invalid for l={l}")
    return k * cfg.n_q + q_index(l, m)


def state_unpack(alpha: int, cfg: SpectralConfig) -> tuple[int, int, int]:
    """Inverse of state_index."""
    if not 1 <= alpha <= cfg.n_dof:
        raise ValueError(f"state index {alpha} outside [1, {cfg.n_dof}]")
    k, q = divmod(alpha - 1, cfg.n_q)
    l, m = q_degree(q + 1)
    return k, l, m


def radial_norm(k: int, l: int) -> float:
    """Normalization constant making the radial functions M-orthonormal."""
    log_n2 = (
        1.5 * math.log(2.0 * math.pi)
        + math.lgamma(k + 1.0)
        - (l + 0.5) * math.log(2.0)
        - math.lgamma(k + l + 1.5)
    )
    return math.exp(0.5 * log_n2)


def _laguerre_all(n_k: int, a: float, x: np.ndarray) -> np.ndarray:
    """L_k^{(a)}(x) for k = 0..n_k-1 by the three-term recurrence."""
    out = np.empty((n_k,) + x.shape)
    out[0] = 1.0
    if n_k > 1:
        out[1] = 1.0 + a - x
    for k in range(1, n_k - 1):
        out[k + 1] = ((2 * k + a + 1 - x) * out[k] - (k + a) * out[k - 1]) / (k + 1)
    return out


def radial_eval_all(l: int, v: np.ndarray, n_k: int) -> np.ndarray:
    """phi_{k,l}(v) for all k = 0..n_k-1, vectorized over v."""
    v = np.asarray(v, dtype=float)
    lag = _laguerre_all(n_k, l + 0.5, 0.5 * v * v)
    scale = v**l
    norms = np.array([radial_norm(k, l) for k in range(n_k)])
    return norms.reshape((n_k,) + (1,) * v.ndim) * scale * lag


def radial_eval(k: int, l: int, v) -> float | np.ndarray:
    """Normalized radial basis function phi_{k,l}(v)."""
    if k < 0 or l < 0:
        raise ValueError("radial/polar indices must be non-negative")
    arr = np.asarray(v, dtype=float)
    if np.any(arr < 0):
        raise ValueError("speed must be non-negative")
    out = radial_eval_all(l, arr, k + 1)[k]
    return float(out) if np.isscalar(v) or arr.ndim == 0 else out


def laguerre_monomial_coeffs(n_k: int, a: float) -> np.ndarray:
    """C[k, j] with L_k^{(a)}(x) = sum_j C[k, j] x^j.

    Only safe for the small k used here; monomial form is used to factor the
    energy dependence out of precomputed scattering manifolds.
    """
    coeffs = np.zeros((n_k, n_k))
    for k in range(n_k):
        for j in range(k + 1):
            log_binom = (
                math.lgamma(k + a + 1.0)
                - math.lgamma(j + a + 1.0)
                - math.lgamma(k - j + 1.0)
            )
            coeffs[k, j] = (-1.0) ** j * math.exp(log_binom - math.lgamma(j + 1.0))
    return coeffs


def _sph_norm(l: int, m: int) -> float:
    return math.exp(
        0.5 * (
            math.log((2 * l + 1) / (4.0 * math.pi))
            + math.lgamma(l - m + 1.0)
            - math.lgamma(l + m + 1.0)
        )
    )


def sph_harm_theta(l: int, m: int, cos_theta: np.ndarray) -> np.ndarray:
    """Polar part N_{lm} P_l^m(cos theta) of the spherical harmonic, m >= 0.

    Includes the Condon-Shortley phase through scipy's Ferrers function.
    """
    return _sph_norm(l, m) * lpmv(m, l, cos_theta)


def real_sph_harm(l: int, m: int, direction) -> float | np.ndarray:
    """Orthonormal real spherical harmonic evaluated at a unit vector.

    Built from the complex harmonics (Condon-Shortley phase) by the standard
    unitary combination: cosine type for m > 0, sine type for m < 0.
    """
    if l < 0 or abs(m) > l:
        raise ValueError(f"invalid angular numbers l={l}, m={m}")
    d = np.asarray(direction, dtype=float)
    if d.shape[-1] != 3:
        raise ValueError("direction must have 3 components on the last axis")
    norm = np.sqrt(np.sum(d * d, axis=-1))
    if np.any(np.abs(norm - 1.0) > 1e-12):
        raise ValueError("direction must be a unit vector (within 1e-12)")
    cos_t = np.clip(d[..., 2], -1.0, 1.0)
    phi = np.arctan2(d[..., 1], d[..., 0])
    am = abs(m)
    base = sph_harm_theta(l, am, cos_t)
    if m == 0:
        out = base
    elif m > 0:
        out = math.sqrt(2.0) * (-1.0) ** m * base * np.cos(am * phi)
    else:
        out = math.sqrt(2.0) * (-1.0) ** am * base * np.sin(am * phi)
    return float(out) if d.ndim == 1 else out


@dataclass
class CoefficientField:
    """Spectral coefficients c_{k,q} of a distribution, shape (n_k, n_q)."""

    values: np.ndarray
    cfg: SpectralConfig = field(repr=False)

    def __post_init__(self):
        expected = (self.cfg.n_k, self.cfg.n_q)
        if self.values.shape != expected:
            raise ValueError(f"coefficient array must have shape {expected}")

    @classmethod
    def zeros(cls, cfg: SpectralConfig) -> "CoefficientField":
        return cls(np.zeros((cfg.n_k, cfg.n_q)), cfg)

    @classmethod
    def equilibrium(cls, cfg: SpectralConfig) -> "CoefficientField":
        out = cls.zeros(cfg)
        out.values[0, 0] = 1.0
        return out

    def copy(self) -> "CoefficientField":
        return CoefficientField(self.values.copy(), self.cfg)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


def _angular_grid(n_theta: int, n_phi: int):
    gl = gauss_legendre(n_theta)
    tp = trapezoid_periodic(n_phi)
    return gl.nodes, gl.weights, tp.nodes, tp.weights


def _real_sph_table(l_max: int, cos_t: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Y[q-1, it, ip] table of real harmonics on a (theta, phi) product grid."""
    n_q = (l_max + 1) ** 2
    out = np.empty((n_q, cos_t.size, phi.size))
    sqrt2 = math.sqrt(2.0)
    for l in range(l_max + 1):
        for m in range(0, l + 1):
            theta_part = sph_harm_theta(l, m, cos_t)
            if m == 0:
                out[q_index(l, 0) - 1] = theta_part[:, None]
            else:
                sign = (-1.0) ** m * sqrt2
                out[q_index(l, m) - 1] = sign * theta_part[:, None] * np.cos(m * phi)
                out[q_index(l, -m) - 1] = sign * theta_part[:, None] * np.sin(m * phi)
    return out


def project(f, cfg: SpectralConfig, radial_quad_order: int) -> CoefficientField:
    """Project a velocity-space function onto the basis: c_a = int f psi_a dv.

    The rule is a generalized Gauss-Laguerre rule in x = v^2/2 (weight
    x^{1/2} e^{-x}) tensorized with Gauss-Legendre in cos(theta) and a
    periodic trapezoid in phi.  ``f`` is called with an array of shape
    (n_points, 3) and must return the distribution values; any Maxwellian
    decay belongs to f itself.  The caller picks the radial order; angular
    orders follow it.
    """
    if radial_quad_order < 1:
        raise ValueError("radial quadrature order must be positive")
    ggl = gauss_laguerre_gen(radial_quad_order, 0.5)
    v_nodes = np.sqrt(2.0 * ggl.nodes)
    # v^2 dv = sqrt(2) x^{1/2} e^{-x} [e^{x} dx]; fold the inverse weight in.
    r_weights = math.sqrt(2.0) * ggl.weights * np.exp(ggl.nodes)

    n_theta = max(cfg.l_max + 1, radial_quad_order)
    n_phi = 2 * n_theta + 1
    cos_t, w_t, phi, w_p = _angular_grid(n_theta, n_phi)
    sin_t = np.sqrt(1.0 - cos_t**2)

    vx = v_nodes[:, None, None] * (sin_t[:, None] * np.cos(phi)[None, :])[None]
    vy = v_nodes[:, None, None] * (sin_t[:, None] * np.sin(phi)[None, :])[None]
    vz = v_nodes[:, None, None] * (cos_t[:, None] * np.ones_like(phi))[None]
    pts = np.stack([vx, vy, vz], axis=-1).reshape(-1, 3)
    fv = np.asarray(f(pts), dtype=float).reshape(v_nodes.size, n_theta, n_phi)

    ylm = _real_sph_table(cfg.l_max, cos_t, phi)
    ang = np.einsum("vtp,qtp,t,p->vq", fv, ylm, w_t, w_p)

    rad = np.empty((cfg.n_k, cfg.n_q, v_nodes.size))
    for l in range(cfg.l_max + 1):
        phis = radial_eval_all(l, v_nodes, cfg.n_k)
        for m in range(-l, l + 1):
            rad[:, q_index(l, m) - 1, :] = phis
    coeffs = np.einsum("kqv,vq,v->kq", rad, ang, r_weights)
    return CoefficientField(coeffs, cfg)


def project_isotropic(f_radial, cfg: SpectralConfig, radial_quad_order: int) -> CoefficientField:
    """Project an isotropic distribution f(|v|); only l = 0 modes are filled.

    Isotropy is structural here: every l > 0 coefficient is exactly zero by
    construction rather than by quadrature cancellation.
    """
    ggl = gauss_laguerre_gen(radial_quad_order, 0.5)
    v_nodes = np.sqrt(2.0 * ggl.nodes)
    r_weights = math.sqrt(2.0) * ggl.weights * np.exp(ggl.nodes)
    fv = np.asarray(f_radial(v_nodes), dtype=float)
    phis = radial_eval_all(0, v_nodes, cfg.n_k)
    out = CoefficientField.zeros(cfg)
    # angular integral of Y_00 over the sphere = 4 pi * Y_00 = 2 sqrt(pi)
    out.values[:, 0] = 2.0 * math.sqrt(math.pi) * (phis * fv * r_weights).sum(axis=1)
    return out


def evaluate_field(c: CoefficientField, points: np.ndarray) -> np.ndarray:
    """Reconstruct f(v) = M(v) sum_a c_a psi_a(v) at velocity points (n, 3)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    v = np.linalg.norm(pts, axis=1)
    safe = np.where(v > 0, v, 1.0)
    cos_t = np.where(v > 0, pts[:, 2] / safe, 1.0)
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    cfg = c.cfg
    total = np.zeros(pts.shape[0])
    sqrt2 = math.sqrt(2.0)
    for l in range(cfg.l_max + 1):
        phis = radial_eval_all(l, v, cfg.n_k)
        for m in range(0, l + 1):
            theta_part = sph_harm_theta(l, m, np.clip(cos_t, -1, 1))
            if m == 0:
                ylm = theta_part
                total += ylm * np.einsum("kp,k->p", phis, c.values[:, q_index(l, 0) - 1])
            else:
                sign = (-1.0) ** m * sqrt2
                yc = sign * theta_part * np.cos(m * phi)
                ys = sign * theta_part * np.sin(m * phi)
                total += yc * np.einsum("kp,k->p", phis, c.values[:, q_index(l, m) - 1])
                total += ys * np.einsum("kp,k->p", phis, c.values[:, q_index(l, -m) - 1])
    maxw = (2.0 * math.pi) ** -1.5 * np.exp(-0.5 * v * v)
    return maxw * total


# Moment weights in the orthonormal basis.  The collision invariants map to
# the lowest modes exactly: 1 = psi_{000}, v_i = psi_{0,1,m}, and
# v^2 = 3 psi_{000} - sqrt(6) psi_{100}; verified by quadrature in the tests.
_ENERGY_K1_WEIGHT = -math.sqrt(6.0)


def moments(c: CoefficientField) -> tuple[float, np.ndarray, float]:
    """Mass, momentum and total kinetic energy of the represented field."""
    vals = c.values
    mass = vals[0, 0]
    momentum = np.array([
        vals[0, q_index(1, 1) - 1] if c.cfg.l_max >= 1 else 0.0,
        vals[0, q_index(1, -1) - 1] if c.cfg.l_max >= 1 else 0.0,
        vals[0, q_index(1, 0) - 1] if c.cfg.l_max >= 1 else 0.0,
    ])
    e2 = vals[1, 0] if c.cfg.k_max >= 1 else 0.0
    energy = 0.5 * (3.0 * mass + _ENERGY_K1_WEIGHT * e2)
    return float(mass), momentum, float(energy)
