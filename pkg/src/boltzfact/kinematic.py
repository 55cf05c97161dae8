"""Assembly of the dense physical tensor R[k1,k2,k3,tau] over the 5D
kinematic core, plus the geometric gain/loss filters and the null-space
corrections for conservation and detailed balance.

Coordinates.  Incoming speeds are rotated into mean/relative form and the
assembler integrates over

    q = ((v + w)/2)^2   (energy variable; v = sqrt(q)(1+rho), w = sqrt(q)(1-rho))
    rho in [0, 1]       (fractional relative coordinate, restricted to v >= w)
    h = sin(beta/2)     (incidence half-angle)
    t in [0, 1]         (Duffy coordinate splitting the (rho, h) square)
    cos(chi), eps       (scattering sphere)

With these variables dv dw = dq drho, sin(beta) dbeta = 4 h dh, and the
Maxwellian pair weight becomes exp(-q) exp(-q rho^2), so a generalized
Gauss-Laguerre rule with weight q^{gamma/2} e^{-q} absorbs both the
background envelope and the kernel singularity u^gamma = q^{gamma/2} u0^gamma
(u0 is the unit-energy relative speed 2 sqrt(rho^2 + (1-rho^2) h^2)).  The
public kinematic API uses the center-of-mass energy E = ((v+w)/sqrt(2))^2;
the two conventions differ by the fixed factor q = E/2.

The quadrature covers the half plane v >= w; the other half is recovered by
relabeling the incoming pair.  Under that relabeling the gain integrand maps
onto the channel-swapped ((l2,k2) <-> (l3,k3)) half integral because the
post-collision velocity is symmetric in the incoming pair, while the loss
integrand keeps its channel but moves the test state onto the slower
particle.  The assembled tensor is therefore

    R ~ gain + swap(gain) - loss_fast - loss_slow,

symmetrized over the (2,3) slots afterwards so the bilinear form is exact
against rounding asymmetry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from .angular import ChannelTable, enumerate_channels, wigner3j
from .basis import (
    SpectralConfig,
    laguerre_monomial_coeffs,
    radial_eval_all,
    radial_norm,
    sph_harm_theta,
)
from .quadrature import (
    GridSpec,
    Rule1D,
    check_grid,
    gauss_laguerre_gen,
    gauss_legendre,
    gauss_legendre_01,
    grid_sizes,
    trapezoid_periodic,
)

__all__ = [
    "KinematicState",
    "RTensor",
    "vhs_kernel",
    "post_collision_direction",
    "gain_filter",
    "loss_filter",
    "scattering_manifold",
    "assemble_r_tensor",
    "apply_conservation",
    "apply_detailed_balance",
]

_U_FLOOR = 1e-300  # below this relative speed the collision is the identity


def vhs_kernel(u, cos_chi, gamma: float):
    """Variable-hard-sphere kernel u^gamma / (4 pi).

    Isotropic in the deflection angle; the constant makes the total cross
    section unity at u = 1.  cos_chi is accepted for interface generality.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("relative speed must be non-negative")
    cc = np.asarray(cos_chi, dtype=float)
    if np.any(np.abs(cc) > 1.0 + 1e-12):
        raise ValueError("cos_chi must lie in [-1, 1]")
    out = u**gamma / (4.0 * math.pi)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class KinematicState:
    """One point of the 5D kinematic core in mapped coordinates.

    E is the center-of-mass energy ((v+w)/sqrt(2))^2; patch 1 covers
    rho > h with h = rho*t, patch 2 covers h > rho with rho = h*t.
    """

    e: float
    rho: float
    h: float
    t: float
    chi: float
    eps: float

    @property
    def v(self) -> float:
        return math.sqrt(self.e) * (1.0 + self.rho) / math.sqrt(2.0)

    @property
    def w(self) -> float:
        return math.sqrt(self.e) * (1.0 - self.rho) / math.sqrt(2.0)

    @property
    def beta(self) -> float:
        return 2.0 * math.asin(self.h)

    @property
    def u(self) -> float:
        return math.sqrt(2.0 * self.e) * math.sqrt(
            self.rho**2 + (1.0 - self.rho**2) * self.h**2
        )


def _zonal_at_pole(l: int) -> float:
    return math.sqrt((2 * l + 1) / (4.0 * math.pi))


def post_collision_direction(v: float, w: float, beta: float, chi: float, eps: float):
    """Post-collision speed and direction of the target particle.

    The target moves along z with speed v, the incident particle lies in the
    x-z plane at polar angle beta with speed w.  The scattering direction is
    built on the orthonormal triad (u_hat, e1, e2) where e1 is the part of
    z_hat orthogonal to u_hat (x_hat when u_hat is parallel to z) and
    e2 = u_hat x e1.
    """
    if v < 0 or w < 0:
        raise ValueError("speeds must be non-negative")
    vvec = np.array([0.0, 0.0, v])
    wvec = np.array([w * math.sin(beta), 0.0, w * math.cos(beta)])
    uvec = vvec - wvec
    u = float(np.linalg.norm(uvec))
    if u < _U_FLOOR:
        return v, np.array([0.0, 0.0, 1.0])
    uhat = uvec / u
    # u lies in the x-z plane, so the triad has the closed cancellation-free
    # form: e1 = (-uz*ux, 0, ux^2)/|ux|, e2 = u_hat x e1 = (0, -sign(ux), 0)
    if abs(uhat[0]) < 1e-14:
        e1 = np.array([1.0, 0.0, 0.0])
        e2 = np.cross(uhat, e1)
    else:
        sgn = math.copysign(1.0, uhat[0])
        e1 = np.array([-uhat[2] * sgn, 0.0, abs(uhat[0])])
        e2 = np.array([0.0, -sgn, 0.0])
    sigma = (
        math.cos(chi) * uhat
        + math.sin(chi) * (math.cos(eps) * e1 + math.sin(eps) * e2)
    )
    vpost = 0.5 * (vvec + wvec) + 0.5 * u * sigma
    vp = float(np.linalg.norm(vpost))
    if vp < _U_FLOOR:
        return 0.0, np.array([0.0, 0.0, 1.0])
    return vp, vpost / vp


def gain_filter(channel: tuple[int, int, int], v_hat_prime, beta: float) -> float:
    """Geometric gain filter of one interaction channel.

    Couples the post-collision direction to the incidence angle through the
    local 3-j symbols; evaluated with the conjugate-pair reduction so the
    result is manifestly real.
    """
    l1, l2, l3 = channel
    d = np.asarray(v_hat_prime, dtype=float)
    cos_tp = float(np.clip(d[2], -1.0, 1.0))
    phi_p = math.atan2(d[1], d[0])
    cos_b = math.cos(beta)
    total = 0.0
    for m in range(0, min(l1, l3) + 1):
        w3 = wigner3j(l1, l2, l3, m, 0, -m)
        if w3 == 0.0:
            continue
        y3 = (-1.0) ** m * sph_harm_theta(l3, m, np.array(cos_b))
        re_y1 = sph_harm_theta(l1, m, np.array(cos_tp)) * math.cos(m * phi_p)
        fac = 1.0 if m == 0 else 2.0
        total += fac * w3 * float(y3) * float(re_y1)
    return _zonal_at_pole(l2) * total


def loss_filter(channel: tuple[int, int, int], beta: float) -> float:
    """Geometric loss filter; a pure zonal mode of the incidence angle."""
    l1, l2, l3 = channel
    if (l1 + l2 + l3) % 2 == 1:
        return 0.0
    w3 = wigner3j(l1, l2, l3, 0, 0, 0)
    y3 = float(sph_harm_theta(l3, 0, np.array(math.cos(beta))))
    return _zonal_at_pole(l1) * _zonal_at_pole(l2) * w3 * y3


def scattering_manifold(
    e: float,
    rho: float,
    h: float,
    channel: tuple[int, int, int],
    k1: int,
    chi_rule: Rule1D,
    eps_rule: Rule1D,
    gamma: float,
    kernel_scale: float = 1.0,
) -> float:
    """Innermost scattering integral at one kinematic point.

    Integrates the kernel-weighted difference between the azimuthally
    integrated gain term and the loss term (whose azimuthal integral is
    2 pi) over the deflection angle.  e is the center-of-mass energy.
    """
    l1 = channel[0]
    v = math.sqrt(e) * (1.0 + rho) / math.sqrt(2.0)
    w = math.sqrt(e) * (1.0 - rho) / math.sqrt(2.0)
    beta = 2.0 * math.asin(h)
    u = math.sqrt(2.0 * e) * math.sqrt(rho**2 + (1.0 - rho**2) * h**2)
    if u < _U_FLOOR and gamma > 0:
        return 0.0
    phi_v = float(radial_eval_all(l1, np.array(v), k1 + 1)[k1])
    p_loss = loss_filter(channel, beta)
    total = 0.0
    for cos_chi, w_chi in zip(chi_rule.nodes, chi_rule.weights):
        chi = math.acos(float(np.clip(cos_chi, -1, 1)))
        gain = 0.0
        for eps, w_eps in zip(eps_rule.nodes, eps_rule.weights):
            vp, vp_hat = post_collision_direction(v, w, beta, chi, eps)
            phi_vp = float(radial_eval_all(l1, np.array(vp), k1 + 1)[k1])
            gain += w_eps * phi_vp * gain_filter(channel, vp_hat, beta)
        kern = kernel_scale * vhs_kernel(u, float(cos_chi), gamma)
        total += w_chi * kern * (gain - 2.0 * math.pi * phi_v * p_loss)
    return total


@dataclass
class RTensor:
    """Dense physical tensor R[k1, k2, k3, tau] with its channel table."""

    values: np.ndarray
    channels: ChannelTable
    gamma: float
    grid: GridSpec
    conservation_applied: bool = False
    detailed_balance_applied: bool = False
    max_zeroed: float = 0.0  # largest magnitude overwritten by corrections

    @property
    def n_k(self) -> int:
        return self.values.shape[0]


class _PatchGeometry:
    """Precomputed kinematics of one Duffy patch on its tensor grid.

    Scattering-dependent arrays carry axes (chi, eps, outer, t) so the inner
    Duffy index is the fastest-moving one during the contractions; purely
    kinematic arrays carry (outer, t).
    """

    def __init__(self, patch: int, outer_rule: Rule1D, t_rule: Rule1D,
                 chi_rule: Rule1D, eps_rule: Rule1D):
        self.patch = patch
        self.outer_rule = outer_rule
        self.t_rule = t_rule
        self.chi_rule = chi_rule
        self.eps_rule = eps_rule

        x = outer_rule.nodes[:, None]
        t = t_rule.nodes[None, :]
        if patch == 1:
            rho = np.broadcast_to(x, (x.size, t.size)).copy()
            h = x * t
            duffy = rho**2 * t  # includes the rho Jacobian of h = rho t
        else:
            h = np.broadcast_to(x, (x.size, t.size)).copy()
            rho = x * t
            duffy = np.broadcast_to(x, (x.size, t.size)) ** 2  # h * (h = x)
        self.rho, self.h = rho, h
        self.cos_b = 1.0 - 2.0 * h**2
        sin_b = 2.0 * h * np.sqrt(np.clip(1.0 - h**2, 0.0, None))

        v0 = 1.0 + rho
        w0 = 1.0 - rho
        self.v0, self.w0 = v0, w0
        self.u0 = 2.0 * np.sqrt(rho**2 + (1.0 - rho**2) * h**2)

        # measure factor: 4 (2 pi)^-3 * duffy * (1 - rho^2)^2
        self.f_geo = 4.0 * (2.0 * math.pi) ** -3 * duffy * (1.0 - rho**2) ** 2

        # privileged-frame vectors at unit energy
        cx = 0.5 * w0 * sin_b
        cz = 0.5 * (v0 + w0 * self.cos_b)
        ux = -w0 * sin_b
        uz = v0 - w0 * self.cos_b
        safe_u = np.where(self.u0 > 0, self.u0, 1.0)
        uhx = ux / safe_u
        uhz = uz / safe_u
        n1 = np.abs(uhx)
        deg = n1 < 1e-14
        e1x = np.where(deg, 1.0, -uhz * uhx / np.where(deg, 1.0, n1))
        e1z = np.where(deg, 0.0, uhx * uhx / np.where(deg, 1.0, n1))
        e2y = uhz * e1x - uhx * e1z

        cos_chi = chi_rule.nodes[:, None, None, None]
        sin_chi = np.sqrt(np.clip(1.0 - cos_chi**2, 0.0, None))
        cos_eps = np.cos(eps_rule.nodes)[None, :, None, None]
        sin_eps = np.sin(eps_rule.nodes)[None, :, None, None]

        half_u = 0.5 * self.u0[None, None]
        vpx = cx[None, None] + half_u * (cos_chi * uhx[None, None]
                                         + sin_chi * cos_eps * e1x[None, None])
        vpy = half_u * sin_chi * sin_eps * e2y[None, None]
        vpz = cz[None, None] + half_u * (cos_chi * uhz[None, None]
                                         + sin_chi * cos_eps * e1z[None, None])
        vps = np.sqrt(vpx**2 + vpy**2 + vpz**2)
        safe_vp = np.where(vps > 0, vps, 1.0)
        self.vps = vps
        self.cos_tp = np.clip(np.where(vps > 0, vpz / safe_vp, 1.0), -1.0, 1.0)
        self.phi_p = np.arctan2(vpy, vpx)

        self._cos_m_phi = [np.ones_like(self.phi_p), np.cos(self.phi_p)]
        self._legendre_cache: dict[int, list[np.ndarray]] = {}
        self._radial_cache: dict[tuple[int, str], np.ndarray] = {}

    def cos_m_phi(self, m: int) -> np.ndarray:
        while len(self._cos_m_phi) <= m:
            k = len(self._cos_m_phi)
            self._cos_m_phi.append(
                2.0 * self._cos_m_phi[1] * self._cos_m_phi[k - 1]
                - self._cos_m_phi[k - 2]
            )
        return self._cos_m_phi[m]

    def re_harmonics(self, l: int) -> list[np.ndarray]:
        """Re Y_{l,m} at the post-collision direction, m = 0..l."""
        if l not in self._legendre_cache:
            self._legendre_cache.clear()  # channels arrive grouped by l1
            self._legendre_cache[l] = [
                sph_harm_theta(l, m, self.cos_tp) * self.cos_m_phi(m)
                for m in range(l + 1)
            ]
        return self._legendre_cache[l]

    def radial_pair(self, l: int, which: str, eta: np.ndarray, n_k: int) -> np.ndarray:
        """phi_{k,l} at the pre-collision speeds sqrt(eta) v0 / sqrt(eta) w0.

        Patch 1 speeds do not depend on the Duffy coordinate, so the arrays
        are (n_k, n_e, n_outer); patch 2 rebuilds them per t node giving
        (n_k, n_e, n_outer, n_t).
        """
        key = (l, which)
        if key not in self._radial_cache:
            base = self.v0 if which == "v" else self.w0
            if self.patch == 1:
                speeds = np.sqrt(eta)[:, None] * base[:, 0][None, :]
            else:
                speeds = np.sqrt(eta)[:, None, None] * base[None, :, :]
            self._radial_cache[key] = radial_eval_all(l, speeds, n_k)
        return self._radial_cache[key]


class _AssemblyContext:
    """Shared rules, grids and caches for one tensor assembly."""

    def __init__(self, cfg: SpectralConfig, grid: GridSpec, kernel_scale: float):
        check_grid(grid, cfg.k_max, cfg.l_max)
        self.cfg = cfg
        self.grid = grid
        self.kernel_scale = kernel_scale
        self.e_rule = gauss_laguerre_gen(grid.n_e, 0.5 * cfg.gamma)
        chi_rule = gauss_legendre(grid.n_chi)
        eps_rule = trapezoid_periodic(grid.n_eps)
        self.patches = [
            _PatchGeometry(1, gauss_legendre_01(grid.n_rho1),
                           gauss_legendre_01(grid.n_t1), chi_rule, eps_rule),
            _PatchGeometry(2, gauss_legendre_01(grid.n_h2),
                           gauss_legendre_01(grid.n_t2), chi_rule, eps_rule),
        ]
        self.eta = self.e_rule.nodes
        n_k = cfg.n_k
        self.eta_pow = np.vstack([self.eta**j for j in range(n_k)])
        self._mono = {
            l: laguerre_monomial_coeffs(n_k, l + 0.5) for l in range(cfg.l_max + 1)
        }
        self._norms = {
            l: np.array([radial_norm(k, l) for k in range(n_k)])
            for l in range(cfg.l_max + 1)
        }

    def channel_half(self, l1: int, l2: int, l3: int):
        """Half-plane (v >= w) gain and loss integrals over both patches.

        Returns (gain, loss_fast, loss_slow) blocks of shape (n_k,)*3; the
        loss branches differ in whether the test/target states sit on the
        faster or the slower incoming particle.
        """
        n_k = self.cfg.n_k
        gain = np.zeros((n_k, n_k, n_k))
        loss_f = np.zeros((n_k, n_k, n_k))
        loss_s = np.zeros((n_k, n_k, n_k))
        for geo in self.patches:
            g, lf, ls = self._patch_half(geo, l1, l2, l3)
            gain += g
            loss_f += lf
            loss_s += ls
        return gain, loss_f, loss_s

    def _patch_half(self, geo: _PatchGeometry, l1: int, l2: int, l3: int):
        cfg = self.cfg
        n_k = cfg.n_k
        eta = self.eta
        w_e = self.e_rule.weights
        w_chi = geo.chi_rule.weights
        w_eps = geo.eps_rule.weights

        # incidence-angle factors of the gain filter, (outer, t)
        b_gain = []
        for m in range(min(l1, l3) + 1):
            w3 = wigner3j(l1, l2, l3, m, 0, -m)
            if w3 == 0.0:
                b_gain.append(None)
                continue
            fac = (1.0 if m == 0 else 2.0) * (-1.0) ** m
            b_gain.append(fac * w3 * sph_harm_theta(l3, m, geo.cos_b))

        re_y = geo.re_harmonics(l1)
        p_gain = None
        for m, b in enumerate(b_gain):
            if b is None:
                continue
            term = b[None, None] * re_y[m]
            p_gain = term if p_gain is None else p_gain + term
        if p_gain is None:
            p_gain = np.zeros_like(geo.vps)
        p_gain *= _zonal_at_pole(l2)

        p_loss = (
            _zonal_at_pole(l1) * _zonal_at_pole(l2)
            * wigner3j(l1, l2, l3, 0, 0, 0)
            * sph_harm_theta(l3, 0, geo.cos_b)
        )

        # kernel residual after the energy power is absorbed by the E-rule
        kern = self.kernel_scale * geo.u0**cfg.gamma / (4.0 * math.pi)

        # azimuthal then deflection contractions of the gain integrand,
        # factored over the monomial energy powers of the radial polynomial
        pow_arr = geo.vps**l1 if l1 > 0 else np.ones_like(geo.vps)
        step = 0.5 * geo.vps**2
        g_stack = np.empty((n_k,) + geo.u0.shape)
        for j in range(n_k):
            if j > 0:
                pow_arr = pow_arr * step
            s_j = np.tensordot(pow_arr * p_gain, w_eps, axes=(1, 0))
            g_stack[j] = np.tensordot(s_j, w_chi, axes=(0, 0)) * kern

        mono = self._mono[l1]
        norms = self._norms[l1]
        pref = norms[:, None] * self.eta**(0.5 * l1)
        gain_core = np.einsum("kj,jE,jot->kEot", mono, self.eta_pow, g_stack,
                              optimize=True)
        gain_core *= pref[:, :, None, None]

        phi1v = geo.radial_pair(l1, "v", eta, n_k)
        phi1w = geo.radial_pair(l1, "w", eta, n_k)
        phi2v = geo.radial_pair(l2, "v", eta, n_k)
        phi2w = geo.radial_pair(l2, "w", eta, n_k)
        phi3v = geo.radial_pair(l3, "v", eta, n_k)
        phi3w = geo.radial_pair(l3, "w", eta, n_k)
        loss_kern = (w_chi.sum() * 2.0 * math.pi) * kern * p_loss

        if geo.patch == 1:
            rho1 = geo.rho[:, 0]
            w_env = (
                w_e[:, None] * eta[:, None] ** 2
                * np.exp(-eta[:, None] * rho1[None, :] ** 2)
                * geo.outer_rule.weights[None, :]
            )
            theta = np.tensordot(gain_core * geo.f_geo[None, None],
                                 geo.t_rule.weights, axes=(3, 0))
            gain = np.einsum("kEo,aEo,bEo,Eo->kab", theta, phi2v, phi3w, w_env,
                             optimize=True)
            loss_env = w_env * np.tensordot(geo.f_geo * loss_kern,
                                            geo.t_rule.weights, axes=(1, 0))
            loss_f = np.einsum("kEo,aEo,bEo,Eo->kab", phi1v, phi2v, phi3w,
                               loss_env, optimize=True)
            loss_s = np.einsum("kEo,aEo,bEo,Eo->kab", phi1w, phi2w, phi3v,
                               loss_env, optimize=True)
            return gain, loss_f, loss_s

        w_env = (
            w_e[:, None, None] * eta[:, None, None] ** 2
            * np.exp(-eta[:, None, None] * geo.rho[None] ** 2)
            * (geo.outer_rule.weights[:, None] * geo.t_rule.weights[None, :]
               * geo.f_geo)[None]
        )
        gain = np.einsum("kEot,aEot,bEot,Eot->kab", gain_core, phi2v, phi3w,
                         w_env, optimize=True)
        loss_env = w_env * loss_kern[None]
        loss_f = np.einsum("kEot,aEot,bEot,Eot->kab", phi1v, phi2v, phi3w,
                           loss_env, optimize=True)
        loss_s = np.einsum("kEot,aEot,bEot,Eot->kab", phi1w, phi2w, phi3v,
                           loss_env, optimize=True)
        return gain, loss_f, loss_s


def _channel_scale(l1: int, l2: int, l3: int) -> float:
    lam = math.sqrt(
        (2 * l1 + 1) * (2 * l2 + 1) * (2 * l3 + 1) / (4.0 * math.pi)
    ) * wigner3j(l1, l2, l3, 0, 0, 0)
    return 8.0 * math.pi**2 / lam


def assemble_r_tensor(
    cfg: SpectralConfig,
    grid: GridSpec | None = None,
    *,
    kernel_scale: float = 1.0,
    threads: int = 1,
) -> RTensor:
    """Integrate the physical tensor for every interaction channel.

    Channels are processed grouped by their test-state degree so the
    precomputed angular manifolds are reused; the half-plane integrals are
    then combined with their channel-swapped partners, which symmetrizes the
    (k2, l2) <-> (k3, l3) slots exactly.
    """
    if grid is None:
        grid = grid_sizes(cfg.k_max, cfg.l_max)
    channels = enumerate_channels(cfg.l_max)
    ctx = _AssemblyContext(cfg, grid, kernel_scale)

    order = sorted(range(channels.n_t),
                   key=lambda i: (channels.triplets[i][0], channels.triplets[i]))
    n_k = cfg.n_k
    gains = np.empty((channels.n_t, n_k, n_k, n_k))
    losses = np.empty((channels.n_t, n_k, n_k, n_k))  # loss_fast + loss_slow
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        chunks = [order[i::threads] for i in range(threads)]
        with ProcessPoolExecutor(
            max_workers=threads,
            initializer=_worker_init,
            initargs=(cfg, grid, kernel_scale),
        ) as pool:
            for idx_list, blocks in zip(
                chunks,
                pool.map(_worker_run,
                         [[channels.triplets[i] for i in c] for c in chunks]),
            ):
                for i, (g, lf, ls) in zip(idx_list, blocks):
                    gains[i] = g
                    losses[i] = lf + ls
    else:
        for i in order:
            g, lf, ls = ctx.channel_half(*channels.triplets[i])
            gains[i] = g
            losses[i] = lf + ls

    # full-plane tensor: gain + channel-swapped gain - both loss branches,
    # then slot-(2,3) symmetrization and the channel scale
    full = np.empty_like(gains)
    for tau0, (l1, l2, l3) in enumerate(channels.triplets):
        swapped = channels.tau(l1, l3, l2) - 1
        full[tau0] = (gains[tau0] + gains[swapped].transpose(0, 2, 1)
                      - losses[tau0])
    values = np.empty((n_k, n_k, n_k, channels.n_t))
    for tau0, (l1, l2, l3) in enumerate(channels.triplets):
        swapped = channels.tau(l1, l3, l2) - 1
        sym = 0.5 * (full[tau0] + full[swapped].transpose(0, 2, 1))
        values[:, :, :, tau0] = _channel_scale(l1, l2, l3) * sym
    return RTensor(values, channels, cfg.gamma, grid)


_WORKER_CTX: _AssemblyContext | None = None


def _worker_init(cfg: SpectralConfig, grid: GridSpec, kernel_scale: float) -> None:
    global _WORKER_CTX
    _WORKER_CTX = _AssemblyContext(cfg, grid, kernel_scale)


def _worker_run(triplets) -> list[np.ndarray]:
    return [_WORKER_CTX.channel_half(*t) for t in triplets]


def apply_conservation(r: RTensor) -> RTensor:
    """Zero the tensor rows that map onto the collision invariants.

    Every channel whose test degree is 0 or 1 has its lowest radial row
    zeroed (mass, momentum); isotropic test channels additionally lose the
    k1 = 1 row (energy).  Idempotent.
    """
    values = r.values.copy()
    worst = r.max_zeroed
    for tau0, (l1, _, _) in enumerate(r.channels.triplets):
        if l1 <= 1:
            worst = max(worst, float(np.max(np.abs(values[0, :, :, tau0]))))
            values[0, :, :, tau0] = 0.0
        if l1 == 0 and r.n_k > 1:
            worst = max(worst, float(np.max(np.abs(values[1, :, :, tau0]))))
            values[1, :, :, tau0] = 0.0
    return replace(r, values=values, conservation_applied=True, max_zeroed=worst)


def apply_detailed_balance(r: RTensor) -> RTensor:
    """Zero the equilibrium input column so Q at the reference Maxwellian
    vanishes identically.  Touches only the single fully isotropic channel."""
    values = r.values.copy()
    tau0 = r.channels.tau(0, 0, 0) - 1
    worst = max(r.max_zeroed, float(np.max(np.abs(values[:, 0, 0, tau0]))))
    values[:, 0, 0, tau0] = 0.0
    return replace(r, values=values, detailed_balance_applied=True, max_zeroed=worst)
