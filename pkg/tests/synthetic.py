"""Synthetic image families shared by the tests."""

import numpy as np


def stripe_images(n, side, rng):
    """Binary images whose rows are constant (random horizontal stripes)."""
    bits = rng.integers(0, 2, size=(n, side)).astype(np.float64)
    return np.repeat(bits[:, :, None], side, axis=2).reshape(n, side * side)


def oriented_stripes(n, side, rng):
    """Two-class task: horizontal (label 0) vs vertical (label 1) stripes.

    Constant (all-on / all-off) patterns are resampled because they belong
    to both classes.
    """
    images = np.empty((n, side * side))
    labels = rng.integers(0, 2, size=n)
    for i in range(n):
        bits = rng.integers(0, 2, size=side).astype(np.float64)
        while bits.min() == bits.max():
            bits = rng.integers(0, 2, size=side).astype(np.float64)
        if labels[i] == 0:
            img = np.repeat(bits[:, None], side, axis=1)
        else:
            img = np.repeat(bits[None, :], side, axis=0)
        images[i] = img.ravel()
    return images, labels


def salt_pepper(images, flip_fraction, rng):
    """Flip a random fraction of the pixels of binary images."""
    out = images.copy()
    flips = rng.random(images.shape) < flip_fraction
    out[flips] = 1.0 - out[flips]
    return out


def random_tiny_model(n_v, n_h, rng, scale=0.5, structure=None):
    """Random dense-connectivity parameters for enumeration-sized models."""
    from patchrbm import RbmParams, dense_structure

    s = structure if structure is not None else dense_structure(n_v, n_h)
    return RbmParams(s, rng.normal(scale=scale, size=s.nnz),
                     rng.normal(scale=scale, size=s.n_v),
                     rng.normal(scale=scale, size=s.n_h))
