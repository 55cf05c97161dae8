"""Evaluation of the bilinear collision operator Q(c, c) through four
interchangeable contraction strategies, plus the linearized operator at a
background state.

All factorized strategies consume the same two structures: the dense
physical tensor R[k1,k2,k3,tau] and the sparse geometric routing table in
COO form.  They differ only in how the sums are ordered, which is exactly
what the benchmark harness measures.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .angular import GauntCOO, build_gaunt_coo
from .basis import CoefficientField, SpectralConfig
from .kinematic import (
    RTensor,
    apply_conservation,
    apply_detailed_balance,
    assemble_r_tensor,
)
from .quadrature import GridSpec, grid_sizes

__all__ = [
    "CapacityError",
    "ContractionStats",
    "FactorizedOperator",
    "DenseOperator",
    "build_operator",
    "assemble_dense",
    "q_dense",
    "q_naive",
    "q_radial_first",
    "q_angular_first",
    "evaluate",
    "linearize",
    "STRATEGIES",
]

DENSE_GUARD_DEFAULT = 1024  # n_dof ceiling for the dense baseline (~8.6 GB)


class CapacityError(RuntimeError):
    """Raised when the dense baseline would exceed its memory guard."""


@dataclass
class ContractionStats:
    """Arithmetic and traffic accounting of one strategy invocation.

    ``flops`` counts multiply-accumulate pairs by the strategy's nominal
    formula; ``bytes_touched`` is a coarse traffic estimate (8-byte words
    fetched or written once each), not a hardware measurement.
    """

    strategy: str = ""
    flops: int = 0
    bytes_touched: int = 0
    wall_time: float = 0.0
    n_calls: int = 0

    def as_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "flops": self.flops,
            "bytes_touched": self.bytes_touched,
            "wall_time": self.wall_time,
            "n_calls": self.n_calls,
        }


@dataclass
class FactorizedOperator:
    """Physical tensor + geometric routing table + spectral configuration."""

    r: RTensor
    g: GauntCOO
    cfg: SpectralConfig
    _psi_groups: tuple | None = field(default=None, repr=False)
    _angular_cache: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.g.l_max != self.cfg.l_max:
            raise ValueError("routing table and configuration disagree on l_max")
        if self.r.values.shape != (self.cfg.n_k,) * 3 + (self.g.channels.n_t,):
            raise ValueError("physical tensor shape inconsistent with table")
        if self.g.tau.min() < 1 or self.g.tau.max() > self.g.channels.n_t:
            raise ValueError("channel index out of range")
        for q in (self.g.q1, self.g.q2, self.g.q3):
            if q.min() < 1 or q.max() > self.cfg.n_q:
                raise ValueError("angular index out of range")
        if self.g.n_s > self.g.n_g:
            raise ValueError("slice count cannot exceed row count")
        # 0-based views used by the contraction kernels
        self.q1_0 = self.g.q1.astype(np.int64) - 1
        self.q2_0 = self.g.q2.astype(np.int64) - 1
        self.q3_0 = self.g.q3.astype(np.int64) - 1
        self.tau_0 = self.g.tau.astype(np.int64) - 1
        self.slice_tau_0 = self.g.slice_tau.astype(np.int64) - 1
        self.slice_q1_0 = self.g.slice_q1.astype(np.int64) - 1
        # channel-contiguous row ranges (rows are sorted by (tau, q1))
        bounds = np.flatnonzero(np.diff(self.tau_0)) + 1
        self.channel_starts = np.concatenate(([0], bounds, [self.tau_0.size]))
        self.channel_ids = self.tau_0[self.channel_starts[:-1]]

    @property
    def n_s(self) -> int:
        return self.g.n_s

    def angular_workspace(self):
        """Static pieces of the sliced contraction: the row->slice segment-sum
        operator and the per-slice gather of the physical tensor."""
        if self._angular_cache is None:
            import scipy.sparse as sp

            counts = np.diff(self.g.slice_starts)
            ids = np.repeat(np.arange(self.n_s), counts)
            seg = sp.csr_matrix(
                (np.ones(self.g.n_g), ids, np.arange(self.g.n_g + 1)),
                shape=(self.g.n_g, self.n_s),
            )
            n_k = self.cfg.n_k
            r_slices = np.ascontiguousarray(
                self.r.values[:, :, :, self.slice_tau_0].reshape(n_k, n_k * n_k,
                                                                 self.n_s)
            )
            self._angular_cache = (seg, r_slices)
        return self._angular_cache

    def psi_groups(self):
        """Unique (tau, q2, q3) combinations and the row->combination map."""
        if self._psi_groups is None:
            n_q = self.cfg.n_q
            key = (self.tau_0 * n_q + self.q2_0) * n_q + self.q3_0
            uniq, inverse = np.unique(key, return_inverse=True)
            u_tau = uniq // (n_q * n_q)
            u_q2 = (uniq // n_q) % n_q
            u_q3 = uniq % n_q
            starts = np.concatenate(
                ([0], np.flatnonzero(np.diff(u_tau)) + 1, [uniq.size])
            )
            self._psi_groups = (u_tau, u_q2, u_q3, inverse, starts)
        return self._psi_groups


@dataclass
class DenseOperator:
    """Fully assembled Cartesian collision tensor; baseline and oracle only."""

    c: np.ndarray
    cfg: SpectralConfig


def build_operator(
    cfg: SpectralConfig,
    pad_rad: int = 16,
    pad_ang: int = 16,
    *,
    grid: GridSpec | None = None,
    threads: int = 1,
    conservation: bool = True,
    detailed_balance: bool = True,
    kernel_scale: float = 1.0,
) -> FactorizedOperator:
    """Assemble the factorized operator with the null-space corrections."""
    if grid is None:
        grid = grid_sizes(cfg.k_max, cfg.l_max, pad_rad, pad_ang)
    r = assemble_r_tensor(cfg, grid, kernel_scale=kernel_scale, threads=threads)
    if conservation:
        r = apply_conservation(r)
    if detailed_balance:
        r = apply_detailed_balance(r)
    return FactorizedOperator(r, build_gaunt_coo(cfg.l_max), cfg)


def assemble_dense(op: FactorizedOperator, guard: int = DENSE_GUARD_DEFAULT) -> DenseOperator:
    """Expand the factorized operator into the dense Cartesian tensor."""
    n_dof = op.cfg.n_dof
    if n_dof > guard:
        raise CapacityError(
            f"dense tensor with n_dof={n_dof} exceeds the guard {guard} "
            f"({8 * n_dof**3 / 2**30:.2f} GiB)"
        )
    n_k, n_q = op.cfg.n_k, op.cfg.n_q
    c = np.zeros((n_dof, n_dof, n_dof))
    r = op.r.values
    # each (q1, q2, q3) triple appears in at most one COO row, so plain
    # fancy assignment is exact
    for k1 in range(n_k):
        for k2 in range(n_k):
            for k3 in range(n_k):
                c[k1 * n_q + op.q1_0, k2 * n_q + op.q2_0, k3 * n_q + op.q3_0] = (
                    op.g.g * r[k1, k2, k3, op.tau_0]
                )
    return DenseOperator(c, op.cfg)


def _field_pair(op: FactorizedOperator, c: CoefficientField,
                c2: CoefficientField | None):
    f2 = c.values
    f3 = f2 if c2 is None else c2.values
    return f2, f3


def _record(stats: ContractionStats | None, strategy: str, flops: int,
            nbytes: int, dt: float) -> None:
    if stats is None:
        return
    stats.strategy = strategy
    stats.flops += flops
    stats.bytes_touched += nbytes
    stats.wall_time += dt
    stats.n_calls += 1


def q_dense(dense: DenseOperator, c: CoefficientField,
            stats: ContractionStats | None = None) -> CoefficientField:
    """Baseline full contraction Q_a1 = sum C[a1,a2,a3] c_a2 c_a3."""
    cfg = dense.cfg
    if c.cfg.n_dof != cfg.n_dof:
        raise ValueError("coefficient field does not match the operator")
    t0 = time.perf_counter()
    f = c.values.reshape(-1)
    ff = np.outer(f, f).reshape(-1)
    q = dense.c.reshape(cfg.n_dof, -1) @ ff
    dt = time.perf_counter() - t0
    n = cfg.n_dof
    _record(stats, "dense", n**3, 8 * (n**3 + n * n + 2 * n), dt)
    return CoefficientField(q.reshape(cfg.n_k, cfg.n_q), cfg)


def q_naive(op: FactorizedOperator, c: CoefficientField,
            c2: CoefficientField | None = None,
            stats: ContractionStats | None = None) -> CoefficientField:
    """Stream the COO rows, full radial contraction for every row."""
    cfg = op.cfg
    t0 = time.perf_counter()
    f2, f3 = _field_pair(op, c, c2)
    n_k, n_q = cfg.n_k, cfg.n_q
    q_out = np.zeros((n_k, n_q))
    r = op.r.values
    for i, tau in enumerate(op.channel_ids):
        lo, hi = op.channel_starts[i], op.channel_starts[i + 1]
        blk2 = f2[:, op.q2_0[lo:hi]]
        blk3 = f3[:, op.q3_0[lo:hi]]
        psi = np.einsum("kab,az,bz->kz", r[:, :, :, tau], blk2, blk3,
                        optimize=True)
        psi *= op.g.g[lo:hi]
        q1s = op.q1_0[lo:hi]
        for k1 in range(n_k):
            q_out[k1] += np.bincount(q1s, weights=psi[k1], minlength=n_q)
    dt = time.perf_counter() - t0
    n_g = op.g.n_g
    _record(stats, "naive", n_g * n_k**3,
            8 * n_g * (2 * n_k + n_k**3 + n_k + 2), dt)
    return CoefficientField(q_out, cfg)


def q_radial_first(op: FactorizedOperator, c: CoefficientField,
                   c2: CoefficientField | None = None,
                   stats: ContractionStats | None = None) -> CoefficientField:
    """Materialize the radial intermediate for the distinct (q2,q3,tau)
    combinations, then route it geometrically in one streaming pass."""
    cfg = op.cfg
    t0 = time.perf_counter()
    f2, f3 = _field_pair(op, c, c2)
    n_k, n_q = cfg.n_k, cfg.n_q
    u_tau, u_q2, u_q3, inverse, starts = op.psi_groups()
    r = op.r.values
    psi = np.empty((n_k, u_tau.size))
    for i in range(starts.size - 1):
        lo, hi = starts[i], starts[i + 1]
        tau = u_tau[lo]
        psi[:, lo:hi] = np.einsum(
            "kab,au,bu->ku", r[:, :, :, tau], f2[:, u_q2[lo:hi]],
            f3[:, u_q3[lo:hi]], optimize=True,
        )
    routed = op.g.g[None, :] * psi[:, inverse]
    q_out = np.empty((n_k, n_q))
    for k1 in range(n_k):
        q_out[k1] = np.bincount(op.q1_0, weights=routed[k1], minlength=n_q)
    dt = time.perf_counter() - t0
    n_u = u_tau.size
    _record(stats, "radial_first", n_u * n_k**3 + op.g.n_g * n_k,
            8 * (n_u * (2 * n_k + n_k**3) + op.g.n_g * (2 * n_k + 2)), dt)
    return CoefficientField(q_out, cfg)


def q_angular_first(op: FactorizedOperator, c: CoefficientField,
                    c2: CoefficientField | None = None,
                    stats: ContractionStats | None = None) -> CoefficientField:
    """Aggregate the geometry per (tau, q1) slice into a small radial matrix,
    then contract each slice against the physical tensor."""
    cfg = op.cfg
    key = op.tau_0 * cfg.n_q + op.q1_0
    if np.any(np.diff(key) < 0):
        raise ValueError("COO rows must be sorted and grouped by (tau, q1)")
    seg, r_slices = op.angular_workspace()
    t0 = time.perf_counter()
    f2, f3 = _field_pair(op, c, c2)
    n_k, n_q = cfg.n_k, cfg.n_q
    gf2 = op.g.g * f2[:, op.q2_0]
    prod = gf2[:, None, :] * f3[None, :, op.q3_0]
    phi = np.asarray(prod.reshape(n_k * n_k, -1) @ seg)
    out = np.einsum("kaS,aS->kS", r_slices, phi, optimize=True)
    q_out = np.empty((n_k, n_q))
    for k1 in range(n_k):
        q_out[k1] = np.bincount(op.slice_q1_0, weights=out[k1], minlength=n_q)
    dt = time.perf_counter() - t0
    _record(stats, "angular_first", op.g.n_g * n_k**2 + op.n_s * n_k**3,
            8 * (op.g.n_g * (2 * n_k + 1 + n_k**2)
                 + op.n_s * (n_k**2 + n_k**3)), dt)
    return CoefficientField(q_out, cfg)


STRATEGIES = {
    "naive": q_naive,
    "radial_first": q_radial_first,
    "angular_first": q_angular_first,
}


def evaluate(op: FactorizedOperator, c: CoefficientField, strategy: str = "angular_first",
             stats: ContractionStats | None = None,
             dense: DenseOperator | None = None) -> CoefficientField:
    """Dispatch Q(c, c) to a strategy by name ('dense' needs the expanded
    tensor, built on demand if not supplied)."""
    if strategy == "dense":
        if dense is None:
            dense = assemble_dense(op)
        return q_dense(dense, c, stats)
    try:
        fn = STRATEGIES[strategy]
    except KeyError:
        raise ValueError(f"unknown strategy {strategy!r}") from None
    return fn(op, c, stats=stats)


def linearize(op: FactorizedOperator, c_eq: CoefficientField) -> np.ndarray:
    """Jacobian of Q at the given state, as a dense (n_dof, n_dof) matrix.

    Works directly on the factorized pieces; the dense Cartesian tensor is
    never formed.  At an isotropic background the result is block-diagonal
    in the angular index.
    """
    cfg = op.cfg
    n_k, n_q, n_dof = cfg.n_k, cfg.n_q, cfg.n_dof
    f = c_eq.values
    r = op.r.values
    jac = np.zeros(n_dof * n_dof)
    for i, tau in enumerate(op.channel_ids):
        lo, hi = op.channel_starts[i], op.channel_starts[i + 1]
        g = op.g.g[lo:hi]
        q1s, q2s, q3s = op.q1_0[lo:hi], op.q2_0[lo:hi], op.q3_0[lo:hi]
        r_t = r[:, :, :, tau]
        # derivative through slot 3: rows couple (k1, q1) to (k3, q3)
        t3 = np.einsum("kab,az->kbz", r_t, f[:, q2s]) * g
        # derivative through slot 2: rows couple (k1, q1) to (k2, q2)
        t2 = np.einsum("kab,bz->kaz", r_t, f[:, q3s]) * g
        for k1 in range(n_k):
            row = (k1 * n_q + q1s) * n_dof
            for kj in range(n_k):
                np.add.at(jac, row + kj * n_q + q3s, t3[k1, kj])
                np.add.at(jac, row + kj * n_q + q2s, t2[k1, kj])
    return jac.reshape(n_dof, n_dof)
