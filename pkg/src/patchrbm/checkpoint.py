"""Self-describing binary checkpoints.

Layout (all integers little-endian u32 unless noted):

    magic      4 bytes  b"PRBM"
    version    u32      1 = generative model, 2 = classifier
    n_v        u32
    n_h        u32
    height     u32      pixel grid (0 if unknown, e.g. a bare dense model)
    width      u32
    nnz        u64
    spec_len   u32      + spec_len bytes: structure spec string, utf-8
    dtype_len  u32      + dtype_len bytes: array dtype string (always "<f4")
    a          n_v  f4 little-endian
    b          n_h  f4
    w          nnz  f4  (support order)
    --- version 2 only ---
    n_classes  u32
    c          n_classes f4
    u          n_classes * n_h f4, row-major

Loading then saving a file reproduces it byte for byte.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .classifier import ClassRbmParams
from .rbm import RbmParams
from .structure import (StructureSpec, build_structure, dense_structure,
                        format_structure_spec, parse_structure_spec)

MAGIC = b"PRBM"
VERSION_GENERATIVE = 1
VERSION_CLASSIFIER = 2
_DTYPE = "<f4"


class CheckpointError(ValueError):
    pass


def _pack_string(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _write_f4(fh, arr):
    fh.write(np.ascontiguousarray(arr, dtype=_DTYPE).tobytes())


def save_checkpoint(params, path):
    """Write RbmParams or ClassRbmParams to `path`."""
    is_classifier = isinstance(params, ClassRbmParams)
    base = params.base if is_classifier else params
    s = base.structure
    spec = s.spec if s.spec is not None else StructureSpec(dense_hidden=s.n_h)
    height, width = spec.grid if spec.grid is not None else (0, 0)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIIIIQ",
                             VERSION_CLASSIFIER if is_classifier else VERSION_GENERATIVE,
                             s.n_v, s.n_h, height, width, s.nnz))
        fh.write(_pack_string(format_structure_spec(spec)))
        fh.write(_pack_string(_DTYPE))
        _write_f4(fh, base.a)
        _write_f4(fh, base.b)
        _write_f4(fh, base.w)
        if is_classifier:
            fh.write(struct.pack("<I", params.n_classes))
            _write_f4(fh, params.c)
            _write_f4(fh, params.u)


class _Reader:
    def __init__(self, fh, path):
        self.fh = fh
        self.path = path

    def read(self, n):
        raw = self.fh.read(n)
        if len(raw) != n:
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        return raw

    def unpack(self, fmt):
        return struct.unpack(fmt, self.read(struct.calcsize(fmt)))

    def string(self):
        (n,) = self.unpack("<I")
        return self.read(n).decode("utf-8")

    def f4(self, count):
        raw = self.read(4 * count)
        return np.frombuffer(raw, dtype=_DTYPE).astype(np.float64)


def load_checkpoint(path):
    """Read a checkpoint; returns RbmParams or ClassRbmParams by version."""
    with open(path, "rb") as fh:
        r = _Reader(fh, path)
        if r.read(4) != MAGIC:
            raise CheckpointError(f"{path}: not a model checkpoint (bad magic)")
        version, n_v, n_h, height, width, nnz = r.unpack("<IIIIIQ")
        if version not in (VERSION_GENERATIVE, VERSION_CLASSIFIER):
            raise CheckpointError(f"{path}: unsupported version {version}")
        spec_string = r.string()
        dtype = r.string()
        if dtype != _DTYPE:
            raise CheckpointError(f"{path}: unsupported dtype {dtype!r}")

        spec = parse_structure_spec(spec_string)
        if spec.is_dense:
            structure = dense_structure(n_v, spec.dense_hidden,
                                        spec=spec if height == 0 else
                                        spec.with_grid(height, width))
        else:
            structure = build_structure(spec.with_grid(height, width))
        if structure.n_v != n_v or structure.n_h != n_h or structure.nnz != nnz:
            raise CheckpointError(
                f"{path}: header ({n_v}, {n_h}, nnz={nnz}) does not match the "
                f"rebuilt structure {structure!r}")

        a = r.f4(n_v)
        b = r.f4(n_h)
        w = r.f4(nnz)
        base = RbmParams(structure, w, a, b)
        if version == VERSION_GENERATIVE:
            return base
        (n_classes,) = r.unpack("<I")
        c = r.f4(n_classes)
        u = r.f4(n_classes * n_h).reshape(n_classes, n_h)
        return ClassRbmParams(base, u, c)


def describe_checkpoint(path) -> dict:
    """Header summary without materialising the parameters."""
    params = load_checkpoint(Path(path))
    is_classifier = isinstance(params, ClassRbmParams)
    base = params.base if is_classifier else params
    s = base.structure
    info = {
        "kind": "classifier" if is_classifier else "generative",
        "structure": s.spec_string(),
        "n_v": s.n_v,
        "n_h": s.n_h,
        "nnz": s.nnz,
        "n_weights": s.nnz + (params.n_classes * s.n_h if is_classifier else 0),
        "n_biases": s.n_v + s.n_h + (params.n_classes if is_classifier else 0),
    }
    if is_classifier:
        info["n_classes"] = params.n_classes
    return info
