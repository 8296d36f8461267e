"""Energy model core: energy, free energy, conditionals, Gibbs sampling,
contrastive-divergence gradients, and exact enumeration oracles for tiny
models.

Conventions:
  * weights live in a flat array over the structure support (column-major
    support order, see ConnectivityStructure); entries outside the support
    are identically zero by construction,
  * gradients returned by cd_gradient / exact_ll_gradient point in the
    direction that increases the data loglikelihood,
  * visible values may be binary or probabilities in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit as sigmoid
from scipy.special import logsumexp

from . import kernels
from .structure import ConnectivityStructure

EXACT_ENUM_LIMIT = 20  # largest n_v for which 2**n_v enumeration is allowed
_ENUM_CHUNK = 1 << 14


def softplus(x):
    """ln(1 + exp(x)), stable for large |x|."""
    return np.logaddexp(0.0, x)


@dataclass
class RbmParams:
    """Model parameters: support weights w, visible biases a, hidden biases b."""

    structure: ConnectivityStructure
    w: np.ndarray
    a: np.ndarray
    b: np.ndarray
    _dense_cache: np.ndarray | None = field(default=None, repr=False)
    _dense_version: int = field(default=-1, repr=False)
    _version: int = field(default=0, repr=False)

    def __post_init__(self):
        self.w = np.ascontiguousarray(self.w, dtype=np.float64)
        self.a = np.ascontiguousarray(self.a, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)
        s = self.structure
        if self.w.shape != (s.nnz,) or self.a.shape != (s.n_v,) or self.b.shape != (s.n_h,):
            raise ValueError("parameter shapes do not match the structure")

    @property
    def n_v(self):
        return self.structure.n_v

    @property
    def n_h(self):
        return self.structure.n_h

    @classmethod
    def zeros(cls, structure):
        return cls(structure, np.zeros(structure.nnz), np.zeros(structure.n_v),
                   np.zeros(structure.n_h))

    def copy(self):
        return RbmParams(self.structure, self.w.copy(), self.a.copy(), self.b.copy())

    def param_arrays(self):
        return {"w": self.w, "a": self.a, "b": self.b}

    def bump_version(self):
        """Invalidate caches after in-place edits of the parameter arrays."""
        self._version += 1

    def dense_w(self) -> np.ndarray:
        """Dense n_v x n_h weight matrix (zeros off support), cached."""
        if self._dense_cache is None or self._dense_version != self._version:
            s = self.structure
            m = np.zeros((s.n_v, s.n_h))
            m[s.col_rows, s.col_hids] = self.w
            self._dense_cache = m
            self._dense_version = self._version
        return self._dense_cache


@dataclass
class GradientSet:
    """Gradient (or velocity) with the same layout as RbmParams."""

    w: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def arrays(self):
        return {"w": self.w, "a": self.a, "b": self.b}


def _as_batch(x, n):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != n:
            raise ValueError(f"expected length {n}, got {x.shape[0]}")
        return x[None, :], True
    if x.ndim != 2 or x.shape[1] != n:
        raise ValueError(f"expected (batch, {n}) array, got {x.shape}")
    return x, False


def hidden_preact(v, params, backend=None):
    v2, squeeze = _as_batch(v, params.n_v)
    out = kernels.hidden_preact(v2, params.structure, params.w, params.b, backend=backend)
    return out[0] if squeeze else out


def visible_preact(h, params, backend=None):
    h2, squeeze = _as_batch(h, params.n_h)
    out = kernels.visible_preact(h2, params.structure, params.w, params.a, backend=backend)
    return out[0] if squeeze else out


def energy(v, h, params) -> float:
    """E(v,h) = -sum_ij v_i W_ij h_j - sum_i v_i a_i - sum_j h_j b_j,
    with the interaction restricted to the support."""
    v = np.asarray(v, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if v.shape != (params.n_v,) or h.shape != (params.n_h,):
        raise ValueError("state lengths do not match the model")
    interaction = h @ (hidden_preact(v, params) - params.b)
    return float(-interaction - v @ params.a - h @ params.b)


def free_energy(v, params):
    """F(v) = -sum_i v_i a_i - sum_j softplus(sum_i v_i W_ij + b_j).

    Accepts a single vector or a batch; returns a scalar or a vector.
    """
    v2, squeeze = _as_batch(v, params.n_v)
    if not np.all(np.isfinite(v2)):
        raise ValueError("non-finite visible input")
    x = kernels.hidden_preact(v2, params.structure, params.w, params.b)
    f = -(v2 @ params.a) - softplus(x).sum(axis=1)
    return float(f[0]) if squeeze else f


def prob_h_given_v(v, params):
    """p(h_j = 1 | v) = sigmoid(sum_i W_ij v_i + b_j)."""
    return sigmoid(hidden_preact(v, params))


def prob_v_given_h(h, params):
    """p(v_i = 1 | h) = sigmoid(sum_j W_ij h_j + a_i)."""
    return sigmoid(visible_preact(h, params))


@dataclass
class GibbsState:
    """Visible/hidden state of a Gibbs chain plus the chain's own RNG."""

    v: np.ndarray
    h: np.ndarray
    rng: np.random.Generator

    @classmethod
    def from_visible(cls, v, params, seed_or_rng=0):
        rng = np.random.default_rng(seed_or_rng)
        v = np.asarray(v, dtype=np.float64)
        return cls(v=v, h=np.zeros(params.n_h), rng=rng)


def gibbs_step(state: GibbsState, params: RbmParams,
               sample_visible: bool = False) -> GibbsState:
    """One block-Gibbs sweep: sample h from p(h|v), then update v.

    The new visible state is the conditional mean p(v|h') by default, or a
    Bernoulli sample of it when sample_visible is set.
    """
    ph = prob_h_given_v(state.v, params)
    h = (state.rng.random(ph.shape) < ph).astype(np.float64)
    pv = prob_v_given_h(h, params)
    if sample_visible:
        v = (state.rng.random(pv.shape) < pv).astype(np.float64)
    else:
        v = pv
    return GibbsState(v=v, h=h, rng=state.rng)


def cd_gradient(batch, params, k: int = 1, rng=None, sample_visible: bool = False,
                path: str = "sparse", backend=None) -> GradientSet:
    """CD-k estimate of the loglikelihood gradient over a mini-batch.

    Positive phase uses the data with hidden probabilities; the negative
    phase runs k Gibbs steps from the data (binary hidden samples, visible
    mean-field unless sample_visible).  path="dense" computes everything
    with dense masked matrices and is the reference implementation; both
    paths consume the RNG identically.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    v0, _ = _as_batch(batch, params.n_v)
    if v0.shape[0] == 0:
        raise ValueError("empty batch")
    if path not in ("sparse", "dense"):
        raise ValueError(f"unknown gradient path {path!r}")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    n = v0.shape[0]
    s = params.structure

    if path == "dense":
        wd = params.dense_w()
        ph0 = sigmoid(v0 @ wd + params.b)
        hs = (rng.random(ph0.shape) < ph0).astype(np.float64)
        for step in range(k):
            pv = sigmoid(hs @ wd.T + params.a)
            vk = (rng.random(pv.shape) < pv).astype(np.float64) if sample_visible else pv
            phk = sigmoid(vk @ wd + params.b)
            if step < k - 1:
                hs = (rng.random(phk.shape) < phk).astype(np.float64)
        dw_dense = (v0.T @ ph0 - vk.T @ phk) / n
        dw = dw_dense[s.col_rows, s.col_hids]
    else:
        ph0 = sigmoid(kernels.hidden_preact(v0, s, params.w, params.b, backend=backend))
        hs = (rng.random(ph0.shape) < ph0).astype(np.float64)
        for step in range(k):
            pv = sigmoid(kernels.visible_preact(hs, s, params.w, params.a, backend=backend))
            vk = (rng.random(pv.shape) < pv).astype(np.float64) if sample_visible else pv
            phk = sigmoid(kernels.hidden_preact(vk, s, params.w, params.b, backend=backend))
            if step < k - 1:
                hs = (rng.random(phk.shape) < phk).astype(np.float64)
        pos = kernels.support_outer(v0, ph0, s, backend=backend)
        neg = kernels.support_outer(vk, phk, s, backend=backend)
        dw = (pos - neg) / n

    da = (v0 - vk).mean(axis=0)
    db = (ph0 - phk).mean(axis=0)
    return GradientSet(w=dw, a=da, b=db)


def _check_enumerable(params):
    if params.n_v > EXACT_ENUM_LIMIT:
        raise ValueError(f"exact enumeration limited to n_v <= {EXACT_ENUM_LIMIT}")


def _state_chunks(n):
    """All 2**n binary vectors (bit 0 = unit 0), yielded in bounded chunks."""
    total = 1 << n
    bits = np.arange(n)
    for start in range(0, total, _ENUM_CHUNK):
        codes = np.arange(start, min(start + _ENUM_CHUNK, total), dtype=np.uint32)
        yield ((codes[:, None] >> bits) & 1).astype(np.float64)


def exact_log_z(params) -> float:
    """log Z by summing exp(-F(v)) over all 2**n_v visible states."""
    _check_enumerable(params)
    parts = [logsumexp(-free_energy(states, params))
             for states in _state_chunks(params.n_v)]
    return float(logsumexp(parts))


def exact_ll_gradient(batch, params) -> GradientSet:
    """Exact loglikelihood gradient: data statistics minus exact model
    expectations obtained by enumerating all visible states."""
    _check_enumerable(params)
    v0, _ = _as_batch(batch, params.n_v)
    if v0.shape[0] == 0:
        raise ValueError("empty batch")
    s = params.structure
    n = v0.shape[0]
    log_z = exact_log_z(params)

    ph_data = prob_h_given_v(v0, params)
    pos_w = kernels.support_outer(v0, ph_data, s) / n
    pos_a = v0.mean(axis=0)
    pos_b = ph_data.mean(axis=0)

    neg_w = np.zeros(s.nnz)
    neg_a = np.zeros(s.n_v)
    neg_b = np.zeros(s.n_h)
    for states in _state_chunks(params.n_v):
        q = np.exp(-free_energy(states, params) - log_z)
        ph = prob_h_given_v(states, params)
        neg_w += kernels.support_outer(states * q[:, None], ph, s)
        neg_a += q @ states
        neg_b += q @ ph
    return GradientSet(w=pos_w - neg_w, a=pos_a - neg_a, b=pos_b - neg_b)
