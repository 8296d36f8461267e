"""Classification RBM: one-hot class units attached to the hidden layer.

The class units connect to every hidden unit through a dense matrix U with
biases c, while the visible-hidden block keeps whatever support its
structure prescribes.  The class posterior p(y|v) has a closed form, so the
discriminative objective -log p(y|v) is trained with exact gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit as sigmoid
from scipy.special import log_softmax

from . import kernels
from .rbm import RbmParams, _as_batch, energy, hidden_preact, softplus


@dataclass
class ClassRbmParams:
    """Base RBM parameters plus class-hidden weights u (C x n_h) and class biases c."""

    base: RbmParams
    u: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.u = np.ascontiguousarray(self.u, dtype=np.float64)
        self.c = np.ascontiguousarray(self.c, dtype=np.float64)
        if self.u.ndim != 2 or self.u.shape[1] != self.base.n_h:
            raise ValueError("u must have shape (n_classes, n_h)")
        if self.c.shape != (self.u.shape[0],):
            raise ValueError("c length must equal the number of classes")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")

    @property
    def n_classes(self):
        return self.u.shape[0]

    @property
    def structure(self):
        return self.base.structure

    @property
    def n_v(self):
        return self.base.n_v

    @property
    def n_h(self):
        return self.base.n_h

    def copy(self):
        return ClassRbmParams(self.base.copy(), self.u.copy(), self.c.copy())

    def param_arrays(self):
        arrays = self.base.param_arrays()
        arrays.update({"u": self.u, "c": self.c})
        return arrays

    def bump_version(self):
        self.base.bump_version()


@dataclass
class DiscGradientSet:
    """Gradient/velocity layout for a classification RBM; a is always zero
    for the discriminative objective but kept for uniform updates."""

    w: np.ndarray
    a: np.ndarray
    b: np.ndarray
    u: np.ndarray
    c: np.ndarray

    def arrays(self):
        return {"w": self.w, "a": self.a, "b": self.b, "u": self.u, "c": self.c}


def class_energy(v, y, h, params: ClassRbmParams) -> float:
    """Joint energy E(v,y,h): the base energy minus y.c and y U h terms."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (params.n_classes,):
        raise ValueError("y length must equal the number of classes")
    if not (np.all((y == 0) | (y == 1)) and y.sum() == 1):
        raise ValueError("y must be one-hot")
    h = np.asarray(h, dtype=np.float64)
    return energy(v, h, params.base) - float(y @ params.c) - float(y @ params.u @ h)


def _class_scores(v2, params):
    # s[n,k] = c_k + sum_j softplus(o_kj), o_kj = b_j + U_kj + sum_i W_ij v_i
    x = kernels.hidden_preact(v2, params.structure, params.base.w, params.base.b)
    o = x[:, None, :] + params.u[None, :, :]
    return params.c + softplus(o).sum(axis=2), o


def predict_proba(v, params: ClassRbmParams):
    """Class posterior p(y|v), computed in log space; rows sum to 1."""
    v2, squeeze = _as_batch(v, params.n_v)
    scores, _ = _class_scores(v2, params)
    p = np.exp(log_softmax(scores, axis=1))
    return p[0] if squeeze else p


def classify(v, params: ClassRbmParams):
    """Most probable class; ties resolve to the lowest index."""
    v2, squeeze = _as_batch(v, params.n_v)
    scores, _ = _class_scores(v2, params)
    idx = np.argmax(scores, axis=1)
    return int(idx[0]) if squeeze else idx


def disc_gradient(batch, labels, params: ClassRbmParams,
                  path: str = "sparse", backend=None) -> DiscGradientSet:
    """Exact gradient of the batch-mean negative log class posterior.

    Returned arrays are loss gradients (descent direction).  The visible
    biases get a zero gradient because -log p(y|v) does not depend on them;
    dw is restricted to the structure support.
    """
    v2, _ = _as_batch(batch, params.n_v)
    n = v2.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ValueError("labels must be one integer per batch row")
    if labels.min() < 0 or labels.max() >= params.n_classes:
        raise ValueError("label out of range")
    if path not in ("sparse", "dense"):
        raise ValueError(f"unknown gradient path {path!r}")

    scores, o = _class_scores(v2, params)
    p = np.exp(log_softmax(scores, axis=1))          # (n, C)
    sig = sigmoid(o)                                 # (n, C, n_h)
    onehot = np.zeros_like(p)
    onehot[np.arange(n), labels] = 1.0

    dc = (p - onehot).mean(axis=0)
    du = np.einsum("nk,nkj->kj", p - onehot, sig) / n
    # g[n,j] = sum_k p_k sig_kj - sig_{y_n j}: shared by db and dw
    g = np.einsum("nk,nkj->nj", p, sig) - sig[np.arange(n), labels]
    db = g.mean(axis=0)
    s = params.structure
    if path == "dense":
        dw_dense = (v2.T @ g) / n
        dw = dw_dense[s.col_rows, s.col_hids]
    else:
        dw = kernels.support_outer(v2, g, s, backend=backend) / n
    return DiscGradientSet(w=dw, a=np.zeros(params.n_v), b=db, u=du, c=dc)
