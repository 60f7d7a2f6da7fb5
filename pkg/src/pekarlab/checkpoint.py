"""Binary checkpoints of complex fields and ansatz states.

Field record (little-endian): magic b"PKLB", u32 version, u32 n, f64 spacing,
3 x f64 field B, then n^3 interleaved (re, im) f64 pairs in x-fastest order.

A state file wraps field records: magic b"PKLS", u32 version, u16 tag
length, ASCII variant tag, u8 periodic_z, u32 record count, variant
parameters (spins and q for determinants, (c, w) for the pair factor), then
the records.  Two-body states store one record per first-particle point.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .ansatz import HartreeProduct, PairCorrelated, PairFactor, SlaterDeterminant, TwoBodyFull
from .errors import UsageError
from .grid import Grid3D, MagneticGauge

FIELD_MAGIC = b"PKLB"
STATE_MAGIC = b"PKLS"
VERSION = 1
_HEADER = struct.Struct("<4sII4d")


def encode_field(psi: np.ndarray, grid: Grid3D, gauge: MagneticGauge) -> bytes:
    grid.check_field(psi)
    head = _HEADER.pack(FIELD_MAGIC, VERSION, grid.n, grid.spacing, *gauge.B)
    flat = np.asarray(psi, dtype="<c16").ravel(order="F")
    return head + flat.view("<f8").tobytes()


def decode_field(buf: bytes, offset: int = 0):
    """(psi, n, spacing, B, next offset) from a field record at ``offset``."""
    if len(buf) - offset < _HEADER.size:
        raise UsageError("truncated field header")
    magic, version, n, h, bx, by, bz = _HEADER.unpack_from(buf, offset)
    if magic != FIELD_MAGIC:
        raise UsageError(f"bad field magic {magic!r}")
    if version != VERSION:
        raise UsageError(f"unsupported field version {version}")
    start = offset + _HEADER.size
    end = start + 16 * n**3
    if len(buf) < end:
        raise UsageError("truncated field data")
    data = np.frombuffer(buf[start:end], dtype="<f8")
    psi = (data[0::2] + 1j * data[1::2]).reshape((n, n, n), order="F")
    return psi, n, h, (bx, by, bz), end


def write_field(path, psi, grid, gauge) -> None:
    Path(path).write_bytes(encode_field(psi, grid, gauge))


def read_field(path):
    psi, n, h, B, _ = decode_field(Path(path).read_bytes())
    return psi, Grid3D(n, h), MagneticGauge(B)


def _records(state):
    if isinstance(state, (HartreeProduct, SlaterDeterminant)):
        return list(state.orbitals)
    if isinstance(state, PairCorrelated):
        return [state.orbital]
    if isinstance(state, TwoBodyFull):
        n = state.grid.n
        return list(state.psi.reshape((n**3,) + state.grid.shape, order="F"))
    raise UsageError(f"cannot serialize {type(state).__name__}")


def encode_state(state) -> bytes:
    tag = state.variant.encode("ascii")
    out = [STATE_MAGIC, struct.pack("<IH", VERSION, len(tag)), tag]
    recs = _records(state)
    out.append(struct.pack("<BI", int(state.grid.periodic_z), len(recs)))
    if isinstance(state, SlaterDeterminant):
        out.append(struct.pack("<I", state.q))
        out.append(struct.pack(f"<{state.N}i", *state.spins))
    if isinstance(state, PairCorrelated):
        if state.pair.table is not None:
            raise UsageError("tabulated pair factors are not serializable")
        out.append(struct.pack("<2d", state.pair.c, state.pair.w))
    out.extend(encode_field(r, state.grid, state.gauge) for r in recs)
    return b"".join(out)


def decode_state(buf: bytes):
    if buf[:4] != STATE_MAGIC:
        raise UsageError(f"bad state magic {buf[:4]!r}")
    version, tlen = struct.unpack_from("<IH", buf, 4)
    if version != VERSION:
        raise UsageError(f"unsupported state version {version}")
    pos = 10
    tag = buf[pos : pos + tlen].decode("ascii")
    pos += tlen
    periodic, count = struct.unpack_from("<BI", buf, pos)
    pos += 5
    extra = {}
    if tag == "slater":
        (extra["q"],) = struct.unpack_from("<I", buf, pos)
        pos += 4
        extra["spins"] = list(struct.unpack_from(f"<{count}i", buf, pos))
        pos += 4 * count
    elif tag == "pair":
        c, w = struct.unpack_from("<2d", buf, pos)
        extra["pair"] = PairFactor(c, w)
        pos += 16
    recs = []
    for _ in range(count):
        psi, n, h, B, pos = decode_field(buf, pos)
        recs.append(psi)
    grid = Grid3D(n, h, periodic_z=bool(periodic))
    gauge = MagneticGauge(B)
    # direct construction keeps the stored samples bit for bit
    if tag == "hartree":
        state = HartreeProduct(np.array(recs), grid, gauge)
    elif tag == "slater":
        state = SlaterDeterminant(np.array(recs), tuple(extra["spins"]), extra["q"], grid, gauge)
    elif tag == "pair":
        state = PairCorrelated(recs[0], extra["pair"], grid, gauge)
    elif tag == "twobody":
        state = TwoBodyFull(np.array(recs).reshape((n, n, n) + grid.shape, order="F"), grid, gauge)
    else:
        raise UsageError(f"unknown state tag {tag!r}")
    state.check_normalized()
    return state


def save_state(path, state) -> None:
    Path(path).write_bytes(encode_state(state))


def load_state(path):
    return decode_state(Path(path).read_bytes())
