"""Little-endian tensor and checkpoint files, sinogram/network containers, PGM export.

TensorFile layout::

    b"ITOM" | version u32 | dtype u8 (0 = f32, 1 = f64) | rank u8 | dims u32[rank] | payload

Checkpoint layout::

    b"ITCK" | version u32 | count u32 | count x (name_len u16 | utf8 name | TensorFile)
"""

from __future__ import annotations

import io as _io
import re
import struct
from collections import OrderedDict

import numpy as np

from intomo.fbp import FilterSpec
from intomo.neural.unet import NetSpec, NetworkParams
from intomo.projector import Geometry, Sinogram

TENSOR_MAGIC = b"ITOM"
CHECKPOINT_MAGIC = b"ITCK"
VERSION = 1

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_FILTER_CODES = {"ram-lak": 0, "hann": 1}


class FormatError(ValueError):
    pass


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated {what}: need {n} bytes at offset {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


# -- tensors -----------------------------------------------------------------

def tensor_to_bytes(a: np.ndarray) -> bytes:
    a = np.asarray(a)
    code = _CODES.get(a.dtype)
    if code is None:
        raise FormatError(f"unsupported dtype {a.dtype}; use float32 or float64")
    if a.ndim > 255:
        raise FormatError("rank exceeds 255")
    head = TENSOR_MAGIC + struct.pack("<IBB", VERSION, code, a.ndim)
    head += struct.pack(f"<{a.ndim}I", *a.shape)
    return head + np.ascontiguousarray(a, dtype=_DTYPES[code]).tobytes()


def _read_tensor(r: _Reader) -> np.ndarray:
    if r.take(4, "magic") != TENSOR_MAGIC:
        raise FormatError("bad tensor magic")
    version, code, rank = r.unpack("<IBB", "tensor header")
    if version != VERSION:
        raise FormatError(f"unsupported tensor version {version}")
    if code not in _DTYPES:
        raise FormatError(f"unknown dtype code {code}")
    dims = r.unpack(f"<{rank}I", "tensor dims")
    dt = _DTYPES[code]
    count = int(np.prod(dims, dtype=np.int64))
    payload = r.take(count * dt.itemsize, "tensor payload")
    return np.frombuffer(payload, dtype=dt).reshape(dims).astype(dt.newbyteorder("="))


def tensor_from_bytes(buf: bytes) -> np.ndarray:
    r = _Reader(buf)
    a = _read_tensor(r)
    if r.pos != len(buf):
        raise FormatError("trailing bytes after tensor payload")
    return a


def write_tensor(path, a: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(tensor_to_bytes(a))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return tensor_from_bytes(fh.read())


# -- checkpoints ---------------------------------------------------------------

def checkpoint_to_bytes(entries) -> bytes:
    """``entries``: mapping or sequence of (name, array) pairs; order is preserved."""
    items = list(entries.items()) if hasattr(entries, "items") else list(entries)
    names = [k for k, _ in items]
    if len(set(names)) != len(names):
        raise FormatError("duplicate tensor names")
    out = _io.BytesIO()
    out.write(CHECKPOINT_MAGIC + struct.pack("<II", VERSION, len(items)))
    for name, a in items:
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise FormatError(f"name too long: {name[:40]}...")
        out.write(struct.pack("<H", len(raw)) + raw + tensor_to_bytes(a))
    return out.getvalue()


def checkpoint_from_bytes(buf: bytes) -> "OrderedDict[str, np.ndarray]":
    r = _Reader(buf)
    if r.take(4, "magic") != CHECKPOINT_MAGIC:
        raise FormatError("bad checkpoint magic")
    version, count = r.unpack("<II", "checkpoint header")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    out = OrderedDict()
    for _ in range(count):
        (length,) = r.unpack("<H", "entry name length")
        try:
            name = r.take(length, "entry name").decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"entry name is not utf-8: {e}") from None
        if name in out:
            raise FormatError(f"duplicate tensor name {name!r}")
        out[name] = _read_tensor(r)
    if r.pos != len(buf):
        raise FormatError("trailing bytes after last checkpoint entry")
    return out


def write_checkpoint(path, entries) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_to_bytes(entries))


def read_checkpoint(path) -> "OrderedDict[str, np.ndarray]":
    with open(path, "rb") as fh:
        return checkpoint_from_bytes(fh.read())


# -- domain containers ---------------------------------------------------------

def _geometry_entries(g: Geometry) -> list:
    return [("geometry", np.array([g.n_views, g.n_det, g.det_pitch, g.n_det_kept], dtype=np.float64)),
            ("angles", g.angles)]


def _geometry_from(entries) -> Geometry:
    try:
        nv, nd, pitch, kept = entries["geometry"]
        angles = entries["angles"]
    except (KeyError, ValueError) as e:
        raise FormatError(f"missing or malformed geometry: {e}") from None
    return Geometry(int(nv), int(nd), float(pitch), int(kept), angles=angles)


def sinogram_entries(y: Sinogram) -> list:
    return [("sinogram", y.data), *_geometry_entries(y.geometry),
            ("truncated", np.array([float(y.truncated)]))]


def write_sinogram(path, y: Sinogram) -> None:
    write_checkpoint(path, sinogram_entries(y))


def read_sinogram(path) -> Sinogram:
    e = read_checkpoint(path)
    if "sinogram" not in e:
        raise FormatError("checkpoint holds no 'sinogram' entry")
    truncated = bool(e["truncated"][0]) if "truncated" in e else False
    return Sinogram(e["sinogram"], _geometry_from(e), truncated=truncated)


def params_entries(p: NetworkParams) -> list:
    s = p.spec
    items = [("__arch__", np.array([s.stages, s.base_channels, s.input_channels,
                                    s.output_channels], dtype=np.float64))]
    if p.meta:
        m = p.meta
        filt = m["filter"]
        items.append(("__pipeline__", np.array([m["image_n"], m["roi_n"], _FILTER_CODES[filt.kind],
                                                filt.padded_len or 0], dtype=np.float64)))
        items += [("__" + k + "__", v) for k, v in _geometry_entries(m["geometry"])]
    return items + list(p.tensors.items())


def write_params(path, p: NetworkParams) -> None:
    write_checkpoint(path, params_entries(p))


def read_params(path) -> NetworkParams:
    e = read_checkpoint(path)
    if "__arch__" not in e:
        raise FormatError("checkpoint holds no network architecture")
    st, c0, cin, cout = (int(v) for v in e.pop("__arch__"))
    meta = {}
    if "__pipeline__" in e:
        image_n, roi_n, code, padded = (int(v) for v in e.pop("__pipeline__"))
        kind = {v: k for k, v in _FILTER_CODES.items()}[code]
        g = _geometry_from({"geometry": e.pop("__geometry__"), "angles": e.pop("__angles__")})
        meta = {"image_n": image_n, "roi_n": roi_n,
                "filter": FilterSpec(kind, padded or None), "geometry": g}
    return NetworkParams(NetSpec(st, c0, cin, cout), OrderedDict(e), meta)


# -- images --------------------------------------------------------------------

def export_pgm(f: np.ndarray, path, window: tuple[float, float]) -> None:
    """16-bit binary PGM with [lo, hi] mapped linearly onto [0, 65535], clamped."""
    lo, hi = (float(v) for v in window)
    if not lo < hi:
        raise ValueError("window needs lo < hi")
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError("PGM export needs a 2-D image")
    scaled = np.clip((f - lo) / (hi - lo), 0.0, 1.0) * 65535.0
    pix = np.rint(scaled).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n65535\n" % (f.shape[1], f.shape[0]))
        fh.write(pix.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", buf)
    if m is None:
        raise FormatError("not a binary PGM")
    w, h, maxval = (int(v) for v in m.groups())
    if maxval != 65535:
        raise FormatError("only 16-bit PGM is supported")
    data = buf[m.end():m.end() + 2 * w * h]
    if len(data) != 2 * w * h:
        raise FormatError("truncated PGM payload")
    return np.frombuffer(data, dtype=">u2").reshape(h, w).astype(np.uint16)
