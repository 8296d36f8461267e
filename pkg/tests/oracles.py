"""Brute-force reference computations, independent of the library's
analytic/sparse code paths.  Everything here works on dense matrices and
explicit enumeration only."""

import itertools

import numpy as np


def all_states(n):
    """All binary vectors of length n as a (2**n, n) float matrix."""
    return np.array(list(itertools.product([0.0, 1.0], repeat=n)))


def dense_energy(v, h, w_dense, a, b):
    return float(-(v @ w_dense @ h) - v @ a - h @ b)


def brute_unnormalised_marginal(v, params):
    """sum_h exp(-E(v, h)) by enumerating every hidden configuration."""
    wd = params.dense_w()
    return sum(np.exp(-dense_energy(v, h, wd, params.a, params.b))
               for h in all_states(params.n_h))


def brute_log_z_joint(params):
    """log sum_{v,h} exp(-E) by joint enumeration."""
    wd = params.dense_w()
    energies = []
    for v in all_states(params.n_v):
        for h in all_states(params.n_h):
            energies.append(-dense_energy(v, h, wd, params.a, params.b))
    m = max(energies)
    return m + np.log(np.sum(np.exp(np.array(energies) - m)))


def brute_class_posterior(v, params):
    """p(y|v) by enumerating classes and hidden configurations jointly."""
    wd = params.base.dense_w()
    weights = np.zeros(params.n_classes)
    for k in range(params.n_classes):
        total = 0.0
        for h in all_states(params.n_h):
            e = (dense_energy(v, h, wd, params.base.a, params.base.b)
                 - params.c[k] - params.u[k] @ h)
            total += np.exp(-e)
        weights[k] = total
    return weights / weights.sum()


def neighbourhood_size(centre, w, height, width):
    """Pixels within Chebyshev distance w of `centre`, clipped to the grid,
    counted one by one."""
    count = 0
    for r in range(height):
        for c in range(width):
            if max(abs(r - centre[0]), abs(c - centre[1])) <= w:
                count += 1
    return count


def patch_block_counts(w, t, d):
    """(n_hidden, nnz) of one (w, t) block on a d x d grid, by enumeration."""
    hi = min(d - w, d - 1)
    axis = list(range(w, hi + 1, t))
    nnz = 0
    for r in axis:
        for c in axis:
            nnz += neighbourhood_size((r, c), w, d, d)
    return len(axis) ** 2, nnz


def finite_difference(fun, arrays, step=1e-4):
    """Central finite differences of a scalar function of several arrays.

    `arrays` maps names to parameter arrays that are perturbed in place;
    returns same-shaped difference arrays.
    """
    grads = {}
    for name, arr in arrays.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for idx in range(flat.shape[0]):
            keep = flat[idx]
            flat[idx] = keep + step
            fp = fun()
            flat[idx] = keep - step
            fm = fun()
            flat[idx] = keep
            gflat[idx] = (fp - fm) / (2 * step)
        grads[name] = g
    return grads


def relative_errors(reference, candidate, floor=1e-6):
    """|ref - cand| / max(|ref|, |cand|) with an absolute floor for values
    that are numerically zero on both sides."""
    reference = np.asarray(reference, dtype=np.float64)
    candidate = np.asarray(candidate, dtype=np.float64)
    scale = np.maximum(np.abs(reference), np.abs(candidate))
    err = np.abs(reference - candidate)
    rel = np.where(scale > floor, err / np.maximum(scale, 1e-300), err / floor)
    return rel
