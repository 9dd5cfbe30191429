"""Binary containers for trains (``FTT1``) and dense tensors (``FUL1``).

Both formats are one ASCII header line terminated by ``\\n`` followed by raw
little-endian float64 values. Train cores are stored one after another,
each in ``(left rank, grid, right rank)`` C order; dense tensors in C order.
"""
from __future__ import annotations

from math import prod

import numpy as np

from .errors import FormatError
from .ftt import FttTensor
from .grid import GridSet, fourier_grid

_LE = np.dtype("<f8")


def _ints(values):
    return ",".join(str(int(v)) for v in values)


def _floats(values):
    return ",".join(repr(float(v)) for v in values)


def _parse_header(line, magic):
    try:
        text = line.decode("ascii")
    except UnicodeDecodeError as exc:
        raise FormatError("header is not ASCII") from exc
    parts = text.split(" ")
    if parts[0] != magic:
        raise FormatError(f"expected {magic} header, got {parts[0]!r}")
    fields = {}
    for part in parts[1:]:
        key, sep, val = part.partition("=")
        if not sep:
            raise FormatError(f"malformed header field {part!r}")
        fields[key] = val
    return fields


def _read(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror}") from exc
    nl = data.find(b"\n")
    if nl < 0:
        raise FormatError(f"{path}: missing header line")
    return data[:nl], data[nl + 1 :]


def ftt_header(t: FttTensor) -> str:
    grids = t.grids
    return (
        f"FTT1 d={t.d} n={_ints(grids.shape)} r={_ints(t.ranks)} "
        f"a={_floats(g.a for g in grids)} b={_floats(g.b for g in grids)}"
    )


def write_ftt(path, t: FttTensor):
    with open(path, "wb") as fh:
        fh.write(ftt_header(t).encode("ascii") + b"\n")
        for core in t.cores:
            fh.write(np.ascontiguousarray(core, dtype=_LE).tobytes())


def read_ftt(path) -> FttTensor:
    """Read an ``FTT1`` file; the grids are rebuilt as periodic Fourier grids."""
    header, body = _read(path)
    f = _parse_header(header, "FTT1")
    try:
        d = int(f["d"])
        n = [int(v) for v in f["n"].split(",")]
        r = [int(v) for v in f["r"].split(",")]
        a = [float(v) for v in f["a"].split(",")]
        b = [float(v) for v in f["b"].split(",")]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad FTT1 header ({exc})") from exc
    if not (len(n) == len(a) == len(b) == d and len(r) == d + 1):
        raise FormatError(f"{path}: inconsistent header lengths")
    sizes = [r[k] * n[k] * r[k + 1] for k in range(d)]
    values = np.frombuffer(body, dtype=_LE)
    if values.size != sum(sizes) or len(body) != 8 * sum(sizes):
        raise FormatError(f"{path}: expected {sum(sizes)} values, found {len(body) / 8:g}")
    grids = GridSet(tuple(fourier_grid(n[k], a[k], b[k]) for k in range(d)))
    cores, off = [], 0
    for k in range(d):
        cores.append(values[off : off + sizes[k]].astype(float).reshape(r[k], n[k], r[k + 1]))
        off += sizes[k]
    return FttTensor(tuple(cores), grids)


def ful_header(shape) -> str:
    return f"FUL1 d={len(shape)} n={_ints(shape)}"


def write_full(path, u):
    u = np.asarray(u, dtype=float)
    with open(path, "wb") as fh:
        fh.write(ful_header(u.shape).encode("ascii") + b"\n")
        fh.write(np.ascontiguousarray(u, dtype=_LE).tobytes())


def read_full(path, grids: GridSet | None = None) -> np.ndarray:
    header, body = _read(path)
    f = _parse_header(header, "FUL1")
    try:
        d = int(f["d"])
        shape = tuple(int(v) for v in f["n"].split(","))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad FUL1 header ({exc})") from exc
    if len(shape) != d:
        raise FormatError(f"{path}: inconsistent header lengths")
    if len(body) != 8 * prod(shape):
        raise FormatError(f"{path}: expected {prod(shape)} values, found {len(body) / 8:g}")
    if grids is not None and grids.shape != shape:
        raise FormatError(f"{path}: shape {shape} does not match grid {grids.shape}")
    return np.frombuffer(body, dtype=_LE).astype(float).reshape(shape)
