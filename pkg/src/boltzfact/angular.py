"""Exact angular-coupling machinery: Wigner 3-j symbols, the complex-to-real
spherical-harmonic transform, interaction-channel enumeration and the sparse
COO routing table of real Gaunt coefficients.

The 3-j symbols are evaluated with exact integer/rational arithmetic (Racah
factorial sum over big integers, one square root of an exact rational at the
end), so the geometric side of the operator carries no quadrature error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .basis import q_degree, q_index

__all__ = [
    "wigner3j",
    "ChannelTable",
    "enumerate_channels",
    "complex_to_real_U",
    "real_gaunt",
    "GauntCOO",
    "build_gaunt_coo",
]

# Real-basis azimuthal coupling: a real Gaunt entry can be nonzero only if
# |m1| matches |m2 +- m3|; entries smaller than this after the unitary
# transform are exact zeros contaminated by rounding.
ZERO_THRESHOLD = 1e-15


@lru_cache(maxsize=None)
def _wigner3j_exact(l1: int, l2: int, l3: int, m1: int, m2: int, m3: int) -> float:
    # Racah single-sum formula over exact big integers; the only inexact
    # steps are one correctly-rounded big-int division and one sqrt.
    t_min = max(0, l2 - l3 - m1, l1 - l3 + m2)
    t_max = min(l1 + l2 - l3, l1 - m1, l2 + m2)
    f = math.factorial
    num, den = 0, 1
    for t in range(t_min, t_max + 1):
        d_t = (
            f(t)
            * f(l3 - l2 + t + m1)
            * f(l3 - l1 + t - m2)
            * f(l1 + l2 - l3 - t)
            * f(l1 - t - m1)
            * f(l2 - t + m2)
        )
        num = num * d_t + (-1) ** t * den
        den *= d_t
    if num == 0:
        return 0.0
    norm_num = f(l1 + l2 - l3) * f(l1 - l2 + l3) * f(-l1 + l2 + l3)
    for l, m in ((l1, m1), (l2, m2), (l3, m3)):
        norm_num *= f(l + m) * f(l - m)
    norm_den = f(l1 + l2 + l3 + 1)
    sq = (num * num * norm_num) / (den * den * norm_den)
    sign = (-1) ** (l1 - l2 - m3) * (1 if num > 0 else -1)
    return sign * math.sqrt(sq)


def wigner3j(l1: int, l2: int, l3: int, m1: int, m2: int, m3: int) -> float:
    """Wigner 3-j symbol; returns 0 when selection rules fail."""
    l1, l2, l3 = int(l1), int(l2), int(l3)
    m1, m2, m3 = int(m1), int(m2), int(m3)
    for l in (l1, l2, l3):
        if l < 0:
            raise ValueError("polar degrees must be non-negative")
    if abs(m1) > l1 or abs(m2) > l2 or abs(m3) > l3:
        return 0.0
    if m1 + m2 + m3 != 0:
        return 0.0
    if l3 < abs(l1 - l2) or l3 > l1 + l2:
        return 0.0
    # Canonicalize via column-permutation and m-negation symmetries so the
    # exact-arithmetic evaluation is shared across equivalent requests.
    cols = [(l1, m1), (l2, m2), (l3, m3)]
    order = sorted(range(3), key=lambda i: cols[i])
    parity = sum(1 for i in range(3) for j in range(i + 1, 3)
                 if order[i] > order[j]) % 2
    cols = [cols[i] for i in order]
    phase = 1.0
    if parity and (l1 + l2 + l3) % 2 == 1:
        phase = -1.0
    ms = tuple(c[1] for c in cols)
    neg = tuple(-m for m in ms)
    if neg < ms:
        ms = neg
        if (l1 + l2 + l3) % 2 == 1:
            phase = -phase
    return phase * _wigner3j_exact(
        cols[0][0], cols[1][0], cols[2][0], ms[0], ms[1], ms[2]
    )


@dataclass(frozen=True)
class ChannelTable:
    """Valid polar triplets (l1, l2, l3) with their 1-based channel index."""

    l_max: int
    triplets: tuple[tuple[int, int, int], ...]
    _lookup: dict = field(repr=False, hash=False, compare=False)

    @property
    def n_t(self) -> int:
        return len(self.triplets)

    def tau(self, l1: int, l2: int, l3: int) -> int:
        return self._lookup[(l1, l2, l3)]

    def triplet(self, tau: int) -> tuple[int, int, int]:
        return self.triplets[tau - 1]


def channel_valid(l1: int, l2: int, l3: int) -> bool:
    return abs(l2 - l3) <= l1 <= l2 + l3 and (l1 + l2 + l3) % 2 == 0


def enumerate_channels(l_max: int) -> ChannelTable:
    """All triplets surviving the triangle + parity rules, lexicographic."""
    if l_max < 0:
        raise ValueError("l_max must be non-negative")
    triplets = [
        (l1, l2, l3)
        for l1 in range(l_max + 1)
        for l2 in range(l_max + 1)
        for l3 in range(l_max + 1)
        if channel_valid(l1, l2, l3)
    ]
    lookup = {t: i + 1 for i, t in enumerate(triplets)}
    return ChannelTable(l_max, tuple(triplets), lookup)


@lru_cache(maxsize=None)
def complex_to_real_U(l: int) -> np.ndarray:
    """Unitary matrix mapping complex-harmonic components to real ones.

    Rows/columns are ordered m = -l..l.  Row mu > 0 combines (+mu, -mu) into
    the cosine harmonic, row mu < 0 into the sine harmonic, so that
    Y^real_{l mu} = sum_m U[mu, m] Y^complex_{l m}.
    """
    if l < 0:
        raise ValueError("l must be non-negative")
    dim = 2 * l + 1
    u = np.zeros((dim, dim), dtype=complex)
    inv_sqrt2 = 1.0 / math.sqrt(2.0)

    def idx(m):
        return m + l

    u[idx(0), idx(0)] = 1.0
    for m in range(1, l + 1):
        cs = (-1.0) ** m
        u[idx(m), idx(m)] = cs * inv_sqrt2
        u[idx(m), idx(-m)] = inv_sqrt2
        u[idx(-m), idx(m)] = -1j * cs * inv_sqrt2
        u[idx(-m), idx(-m)] = 1j * inv_sqrt2
    return u


def _triple_product_tensor(l1: int, l2: int, l3: int) -> np.ndarray:
    """Integrals of three complex harmonics over the sphere, all m combos."""
    pref = math.sqrt(
        (2 * l1 + 1) * (2 * l2 + 1) * (2 * l3 + 1) / (4.0 * math.pi)
    ) * wigner3j(l1, l2, l3, 0, 0, 0)
    t = np.zeros((2 * l1 + 1, 2 * l2 + 1, 2 * l3 + 1))
    if pref == 0.0:
        return t
    for m2 in range(-l2, l2 + 1):
        for m3 in range(-l3, l3 + 1):
            m1 = -(m2 + m3)
            if abs(m1) <= l1:
                t[m1 + l1, m2 + l2, m3 + l3] = pref * wigner3j(l1, l2, l3, m1, m2, m3)
    return t


def _real_gaunt_block(l1: int, l2: int, l3: int) -> np.ndarray:
    """Real Gaunt coefficients for one channel, indexed by (mu1, mu2, mu3)."""
    t = _triple_product_tensor(l1, l2, l3)
    u1, u2, u3 = complex_to_real_U(l1), complex_to_real_U(l2), complex_to_real_U(l3)
    block = np.tensordot(u1, t.astype(complex), axes=(1, 0))
    block = np.tensordot(u2, block, axes=(1, 1)).transpose(1, 0, 2)
    block = np.tensordot(block, u3, axes=(2, 1))
    if not np.allclose(block.imag, 0.0, atol=1e-13):
        raise AssertionError("real Gaunt block has a non-negligible imaginary part")
    return block.real


def real_gaunt(l1: int, m1: int, l2: int, m2: int, l3: int, m3: int) -> float:
    """Integral of three real spherical harmonics over the unit sphere."""
    for l, m in ((l1, m1), (l2, m2), (l3, m3)):
        if l < 0:
            raise ValueError("polar degrees must be non-negative")
        if abs(m) > l:
            return 0.0
    if not channel_valid(l1, l2, l3):
        return 0.0
    block = _real_gaunt_block(l1, l2, l3)
    val = block[m1 + l1, m2 + l2, m3 + l3]
    return float(val) if abs(val) >= ZERO_THRESHOLD else 0.0


@dataclass
class GauntCOO:
    """Flat routing table of all nonzero real Gaunt couplings.

    Rows are sorted by (tau, q1, q2, q3) with 1-based angular indices q and
    channel indices tau, and grouped into contiguous (tau, q1) slices for the
    angular-first contraction.
    """

    l_max: int
    n_q: int
    channels: ChannelTable
    q1: np.ndarray
    q2: np.ndarray
    q3: np.ndarray
    tau: np.ndarray
    g: np.ndarray
    slice_starts: np.ndarray  # (n_s + 1,) row offsets of each (tau, q1) slice
    slice_tau: np.ndarray
    slice_q1: np.ndarray

    @property
    def n_g(self) -> int:
        return self.g.size

    @property
    def n_s(self) -> int:
        return self.slice_tau.size

    def validate(self) -> None:
        if not (self.g != 0.0).all():
            raise AssertionError("stored Gaunt weights must be nonzero")
        n_t = self.channels.n_t
        for arr, hi, name in ((self.tau, n_t, "tau"), (self.q1, self.n_q, "q1"),
                              (self.q2, self.n_q, "q2"), (self.q3, self.n_q, "q3")):
            if arr.min() < 1 or arr.max() > hi:
                raise AssertionError(f"COO column {name} out of range 1..{hi}")
        for q1, q2, q3 in zip(self.q1, self.q2, self.q3):
            m1 = q_degree(int(q1))[1]
            m2 = q_degree(int(q2))[1]
            m3 = q_degree(int(q3))[1]
            if abs(m1) not in (abs(m2 + m3), abs(m2 - m3)):
                raise AssertionError("row violates the real azimuthal coupling rule")


def build_gaunt_coo(l_max: int) -> GauntCOO:
    """Assemble the sparse real Gaunt table for all channels up to l_max."""
    channels = enumerate_channels(l_max)
    rows_q1, rows_q2, rows_q3, rows_tau, rows_g = [], [], [], [], []
    for tau0, (l1, l2, l3) in enumerate(channels.triplets):
        block = _real_gaunt_block(l1, l2, l3)
        nz = np.argwhere(np.abs(block) >= ZERO_THRESHOLD)
        for i1, i2, i3 in nz:
            rows_q1.append(q_index(l1, int(i1) - l1))
            rows_q2.append(q_index(l2, int(i2) - l2))
            rows_q3.append(q_index(l3, int(i3) - l3))
            rows_tau.append(tau0 + 1)
            rows_g.append(block[i1, i2, i3])

    q1 = np.array(rows_q1, dtype=np.int32)
    q2 = np.array(rows_q2, dtype=np.int32)
    q3 = np.array(rows_q3, dtype=np.int32)
    tau = np.array(rows_tau, dtype=np.int32)
    g = np.array(rows_g, dtype=float)

    order = np.lexsort((q3, q2, q1, tau))
    q1, q2, q3, tau, g = q1[order], q2[order], q3[order], tau[order], g[order]

    key = tau.astype(np.int64) * (channels.l_max + 1) ** 2 + (q1 - 1)
    boundaries = np.flatnonzero(np.diff(key)) + 1
    starts = np.concatenate(([0], boundaries, [g.size]))
    coo = GauntCOO(
        l_max=l_max,
        n_q=(l_max + 1) ** 2,
        channels=channels,
        q1=q1, q2=q2, q3=q3, tau=tau, g=g,
        slice_starts=starts.astype(np.int64),
        slice_tau=tau[starts[:-1]].copy(),
        slice_q1=q1[starts[:-1]].copy(),
    )
    coo.validate()
    return coo
