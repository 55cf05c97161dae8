"""Binary operator cache: header, channel table, COO rows, dense tensor.

Layout (all little-endian):

    magic   4 bytes  "BFCT"
    u32     format version (currently 1)
    u32     k_max
    u32     l_max
    f64     gamma
    9x u32  grid spec (n_e, n_rho1, n_t1, n_h2, n_t2, n_chi, n_eps,
                       pad_rad, pad_ang)
    u32     N_T
    u64     N_G
    u32     flags (bit 0: conservation applied, bit 1: detailed balance)
    u32     CRC-32 of the payload
    payload: channel triplets (N_T x 3 u32), COO columns q1, q2, q3, tau
             (u32 each), weights g (f64), dense tensor values (f64,
             C-order, shape (n_k, n_k, n_k, N_T))
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .angular import ChannelTable, GauntCOO
from .basis import SpectralConfig
from .contraction import FactorizedOperator
from .kinematic import RTensor
from .quadrature import GridSpec

__all__ = ["CacheFormatError", "CacheIntegrityError", "save_cache", "load_cache"]

MAGIC = b"BFCT"
FORMAT_VERSION = 1
FLAG_CONSERVATION = 1
FLAG_DETAILED_BALANCE = 2

_HEADER = struct.Struct("<4sIIId9IIQII")


class CacheFormatError(RuntimeError):
    """Unrecognized or incompatible cache layout."""


class CacheIntegrityError(RuntimeError):
    """Cache payload does not match its checksum or advertised sizes."""


def _payload_bytes(op: FactorizedOperator) -> bytes:
    chans = np.asarray(op.g.channels.triplets, dtype="<u4")
    parts = [
        chans.tobytes(),
        op.g.q1.astype("<u4").tobytes(),
        op.g.q2.astype("<u4").tobytes(),
        op.g.q3.astype("<u4").tobytes(),
        op.g.tau.astype("<u4").tobytes(),
        op.g.g.astype("<f8").tobytes(),
        op.r.values.astype("<f8").tobytes(),
    ]
    return b"".join(parts)


def save_cache(path, op: FactorizedOperator) -> int:
    """Serialize an operator; returns the number of bytes written."""
    payload = _payload_bytes(op)
    flags = 0
    if op.r.conservation_applied:
        flags |= FLAG_CONSERVATION
    if op.r.detailed_balance_applied:
        flags |= FLAG_DETAILED_BALANCE
    header = _HEADER.pack(
        MAGIC,
        FORMAT_VERSION,
        op.cfg.k_max,
        op.cfg.l_max,
        op.cfg.gamma,
        *op.r.grid.as_tuple(),
        op.g.channels.n_t,
        op.g.n_g,
        flags,
        zlib.crc32(payload) & 0xFFFFFFFF,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    return len(header) + len(payload)


def load_cache(path) -> FactorizedOperator:
    """Load a serialized operator, verifying format and checksum."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise CacheFormatError("file too short for a cache header")
    fields = _HEADER.unpack_from(blob)
    magic, version = fields[0], fields[1]
    if magic != MAGIC:
        raise CacheFormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CacheFormatError(
            f"cache format version {version} unsupported (expected {FORMAT_VERSION})"
        )
    k_max, l_max = fields[2], fields[3]
    gamma = fields[4]
    grid = GridSpec(*fields[5:14])
    n_t, n_g = fields[14], fields[15]
    flags, checksum = fields[16], fields[17]

    payload = blob[_HEADER.size:]
    if (zlib.crc32(payload) & 0xFFFFFFFF) != checksum:
        raise CacheIntegrityError("payload checksum mismatch")

    n_k = k_max + 1
    expected = (
        n_t * 3 * 4 + n_g * (4 * 4 + 8) + n_k**3 * n_t * 8
    )
    if len(payload) != expected:
        raise CacheIntegrityError(
            f"payload size {len(payload)} != expected {expected}"
        )

    off = 0

    def take(dtype, count):
        nonlocal off
        arr = np.frombuffer(payload, dtype=dtype, count=count, offset=off)
        off += arr.nbytes
        return arr

    chans = take("<u4", n_t * 3).reshape(n_t, 3).astype(int)
    q1 = take("<u4", n_g).astype(np.int32)
    q2 = take("<u4", n_g).astype(np.int32)
    q3 = take("<u4", n_g).astype(np.int32)
    tau = take("<u4", n_g).astype(np.int32)
    g = take("<f8", n_g).astype(float)
    values = take("<f8", n_k**3 * n_t).astype(float).reshape(n_k, n_k, n_k, n_t)

    triplets = tuple(tuple(row) for row in chans)
    lookup = {t: i + 1 for i, t in enumerate(triplets)}
    channels = ChannelTable(l_max, triplets, lookup)

    key = tau.astype(np.int64) * (l_max + 1) ** 2 + (q1 - 1)
    boundaries = np.flatnonzero(np.diff(key)) + 1
    starts = np.concatenate(([0], boundaries, [n_g]))
    coo = GauntCOO(
        l_max=l_max,
        n_q=(l_max + 1) ** 2,
        channels=channels,
        q1=q1, q2=q2, q3=q3, tau=tau, g=g,
        slice_starts=starts.astype(np.int64),
        slice_tau=tau[starts[:-1]].copy(),
        slice_q1=q1[starts[:-1]].copy(),
    )
    r = RTensor(
        values=values,
        channels=channels,
        gamma=gamma,
        grid=grid,
        conservation_applied=bool(flags & FLAG_CONSERVATION),
        detailed_balance_applied=bool(flags & FLAG_DETAILED_BALANCE),
    )
    cfg = SpectralConfig(k_max, l_max, gamma)
    return FactorizedOperator(r, coo, cfg)
