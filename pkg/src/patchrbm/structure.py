"""Visible-hidden connectivity: dense, or restricted to pixel patches.

A patch structure places one hidden unit at every neighbourhood centre of a
pixel grid and connects it to the pixels within Chebyshev distance w of the
centre (a square window of side 2w+1, clipped at the image border).  Centres
start at (w, w) and advance with stride t, so a block is fully described by
the pair (w, t); several blocks can be stacked into one model.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class StructureSpec:
    """Parsed connectivity description.

    Exactly one of `blocks` (window/stride pairs) or `dense_hidden` (fully
    connected, that many hidden units) is set.  `grid` is (height, width) in
    pixels and is required to build; the string form omits it.
    """

    blocks: tuple[tuple[int, int], ...] = ()
    dense_hidden: int | None = None
    grid: tuple[int, int] | None = None

    def with_grid(self, height: int, width: int) -> "StructureSpec":
        return replace(self, grid=(int(height), int(width)))

    @property
    def is_dense(self) -> bool:
        return self.dense_hidden is not None


_DENSE_RE = re.compile(r"^dense\((\d+)\)$")
_BLOCKS_RE = re.compile(r"^M\(([\d,;]+)\)$")


def parse_structure_spec(text: str) -> StructureSpec:
    """Parse "M(w1,t1;w2,t2;...)" or "dense(n_hidden)"."""
    s = text.strip().replace(" ", "")
    m = _DENSE_RE.match(s)
    if m:
        return StructureSpec(dense_hidden=int(m.group(1)))
    m = _BLOCKS_RE.match(s)
    if m:
        blocks = []
        for part in m.group(1).split(";"):
            fields = part.split(",")
            if len(fields) != 2 or not all(fields):
                raise ValueError(f"bad block {part!r} in structure spec {text!r}")
            blocks.append((int(fields[0]), int(fields[1])))
        return StructureSpec(blocks=tuple(blocks))
    raise ValueError(f"cannot parse structure spec {text!r}")


def format_structure_spec(spec: StructureSpec) -> str:
    if spec.is_dense:
        return f"dense({spec.dense_hidden})"
    return "M(" + ";".join(f"{w},{t}" for w, t in spec.blocks) + ")"


def _check_block(w: int, t: int, d: int) -> None:
    if w < 0 or t < 1 or 2 * w + 1 > d:
        raise ValueError(f"invalid block (w={w}, t={t}) on grid side {d}")


def _axis_centres(w: int, t: int, d: int) -> np.ndarray:
    # Centres run over {w, w+t, w+2t, ...} up to coordinate d-w on the
    # 0-indexed pixel axis 0..d-1 (so the far-edge window gets clipped).
    _check_block(w, t, d)
    hi = min(d - w, d - 1)
    return np.arange(w, hi + 1, t, dtype=np.int64)


def build_centres(w: int, t: int, d: int) -> np.ndarray:
    """Neighbourhood centres of one (w, t) block on a d x d grid.

    Returns an (m, 2) array of (row, col) pixel coordinates in row-major
    order; (w, w) is always the first centre.
    """
    ax = _axis_centres(w, t, d)
    rr, cc = np.meshgrid(ax, ax, indexing="ij")
    return np.stack([rr.ravel(), cc.ravel()], axis=1)


class ConnectivityStructure:
    """The bipartite visible-hidden adjacency (support of the weight matrix).

    Support positions are stored grouped by hidden unit: hidden unit j owns
    the slice col_indptr[j]:col_indptr[j+1] of col_rows, a sorted list of
    visible indices.  Weight value arrays elsewhere in the package follow
    this ordering.
    """

    def __init__(self, n_v, n_h, col_indptr, col_rows, centres=None, spec=None):
        self.n_v = int(n_v)
        self.n_h = int(n_h)
        self.col_indptr = np.ascontiguousarray(col_indptr, dtype=np.int64)
        self.col_rows = np.ascontiguousarray(col_rows, dtype=np.int64)
        self.centres = None if centres is None else np.asarray(centres, dtype=np.int64)
        self.spec = spec
        self._validate()
        self.col_hids = np.repeat(np.arange(self.n_h, dtype=np.int64),
                                  np.diff(self.col_indptr))
        self._row_cache = None
        self._mask_cache = None

    def _validate(self):
        if self.n_v < 1 or self.n_h < 1:
            raise ValueError("need at least one visible and one hidden unit")
        if self.col_indptr.shape != (self.n_h + 1,):
            raise ValueError("col_indptr length must be n_h + 1")
        if self.col_indptr[0] != 0 or self.col_indptr[-1] != self.col_rows.shape[0]:
            raise ValueError("col_indptr does not cover col_rows")
        if np.any(np.diff(self.col_indptr) < 0):
            raise ValueError("col_indptr must be non-decreasing")
        if self.col_rows.size:
            if self.col_rows.min() < 0 or self.col_rows.max() >= self.n_v:
                raise ValueError("visible index out of range in support")
        # strictly increasing within each column: sorted and duplicate-free
        same_col = np.repeat(np.arange(self.n_h), np.diff(self.col_indptr))
        interior = same_col[1:] == same_col[:-1]
        if np.any(self.col_rows[1:][interior] <= self.col_rows[:-1][interior]):
            raise ValueError("neighbourhood lists must be sorted and duplicate-free")

    @property
    def nnz(self) -> int:
        return int(self.col_rows.shape[0])

    def neighbourhood(self, j: int) -> np.ndarray:
        """Sorted visible indices connected to hidden unit j."""
        return self.col_rows[self.col_indptr[j]:self.col_indptr[j + 1]]

    def row_arrays(self):
        """Row-major view of the support: (row_indptr, row_hids, row_perm).

        row_perm maps row-major support positions back into the canonical
        column-major weight ordering.
        """
        if self._row_cache is None:
            order = np.lexsort((self.col_hids, self.col_rows))
            row_hids = np.ascontiguousarray(self.col_hids[order])
            counts = np.bincount(self.col_rows, minlength=self.n_v)
            row_indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
            self._row_cache = (row_indptr, row_hids, order)
        return self._row_cache

    def hidden_of_visible(self, i: int) -> np.ndarray:
        """Sorted hidden indices connected to visible unit i (the reverse map)."""
        row_indptr, row_hids, _ = self.row_arrays()
        return row_hids[row_indptr[i]:row_indptr[i + 1]]

    def mask(self) -> np.ndarray:
        """Dense n_v x n_h 0/1 matrix of the support (reference path)."""
        if self._mask_cache is None:
            m = np.zeros((self.n_v, self.n_h))
            m[self.col_rows, self.col_hids] = 1.0
            self._mask_cache = m
        return self._mask_cache

    def spec_string(self) -> str:
        if self.spec is None:
            return f"dense({self.n_h})"
        return format_structure_spec(self.spec)

    def __repr__(self):
        return (f"ConnectivityStructure({self.spec_string()}, n_v={self.n_v}, "
                f"n_h={self.n_h}, nnz={self.nnz})")


def build_structure(spec: StructureSpec) -> ConnectivityStructure:
    """Build the connectivity described by `spec` (grid must be set)."""
    if spec.grid is None:
        raise ValueError("structure spec has no grid; call spec.with_grid(height, width)")
    height, width = spec.grid
    n_v = height * width
    if spec.is_dense:
        return dense_structure(n_v, spec.dense_hidden, spec=spec)
    if not spec.blocks:
        raise ValueError("structure spec has no blocks")

    neighbourhoods = []
    centres = []
    for w, t in spec.blocks:
        row_centres = _axis_centres(w, t, height)
        col_centres = _axis_centres(w, t, width)
        for r in row_centres:
            for c in col_centres:
                r0, r1 = max(r - w, 0), min(r + w, height - 1)
                c0, c1 = max(c - w, 0), min(c + w, width - 1)
                patch = (np.arange(r0, r1 + 1)[:, None] * width
                         + np.arange(c0, c1 + 1)).ravel()
                neighbourhoods.append(patch)
                centres.append((r, c))

    sizes = np.array([len(p) for p in neighbourhoods], dtype=np.int64)
    col_indptr = np.concatenate([[0], np.cumsum(sizes)])
    col_rows = np.concatenate(neighbourhoods)
    return ConnectivityStructure(n_v, len(neighbourhoods), col_indptr, col_rows,
                                 centres=np.array(centres), spec=spec)


def dense_structure(n_v: int, n_h: int, spec: StructureSpec | None = None) -> ConnectivityStructure:
    """Fully connected structure: every hidden unit sees every visible unit."""
    if n_v < 1 or n_h < 1:
        raise ValueError("n_v and n_h must be positive")
    col_indptr = np.arange(n_h + 1, dtype=np.int64) * n_v
    col_rows = np.tile(np.arange(n_v, dtype=np.int64), n_h)
    if spec is None:
        spec = StructureSpec(dense_hidden=n_h)
    return ConnectivityStructure(n_v, n_h, col_indptr, col_rows, centres=None, spec=spec)


def mask_matrix(structure: ConnectivityStructure) -> np.ndarray:
    """Dense 0/1 support matrix; entry (i, j) is 1 iff i is connected to j."""
    return structure.mask().copy()
