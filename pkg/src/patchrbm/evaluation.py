"""Model assessment: AIS partition-function estimation, loglikelihood,
denoising error, accuracy and Log-loss."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit as sigmoid

from . import kernels
from .rbm import GibbsState, RbmParams, _as_batch, free_energy, gibbs_step, softplus


@dataclass
class AisConfig:
    """Annealing schedule: n_runs independent chains over n_betas linearly
    spaced inverse temperatures from 0 to 1 (endpoints included)."""

    n_runs: int = 1000
    n_betas: int = 2900
    seed: int = 0

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        if self.n_betas < 2:
            raise ValueError("n_betas must be >= 2")


def ais_log_z(params: RbmParams, config: AisConfig | None = None) -> tuple[float, float]:
    """Estimate log Z by annealed importance sampling.

    The base distribution is the zero-weight model with the same visible
    biases (log Z_base = sum_i softplus(a_i) + n_h ln 2); intermediate
    models scale W and b by beta.  Returns (estimate, stderr) where the
    standard error is propagated from the spread of the importance weights.
    """
    config = config or AisConfig()
    rng = np.random.default_rng(config.seed)
    s = params.structure
    betas = np.linspace(0.0, 1.0, config.n_betas)

    v = (rng.random((config.n_runs, s.n_v)) < sigmoid(params.a)).astype(np.float64)
    log_w = np.zeros(config.n_runs)
    zero_bias = np.zeros(s.n_v)
    for prev, beta in zip(betas[:-1], betas[1:]):
        x = kernels.hidden_preact(v, s, params.w, params.b)
        log_w += softplus(beta * x).sum(axis=1) - softplus(prev * x).sum(axis=1)
        h = (rng.random(x.shape) < sigmoid(beta * x)).astype(np.float64)
        m = kernels.visible_preact(h, s, params.w, zero_bias)
        v = (rng.random(m.shape) < sigmoid(params.a + beta * m)).astype(np.float64)

    finite = np.isfinite(log_w)
    n_bad = int(config.n_runs - finite.sum())
    if n_bad:
        warnings.warn(f"excluded {n_bad} non-finite AIS weights", RuntimeWarning)
        log_w = log_w[finite]
        if log_w.size == 0:
            raise FloatingPointError("all AIS importance weights were non-finite")

    log_z_base = softplus(params.a).sum() + s.n_h * np.log(2.0)
    shift = log_w.max()
    u = np.exp(log_w - shift)
    mean_u = u.mean()
    estimate = log_z_base + shift + np.log(mean_u)
    if log_w.size > 1:
        stderr = u.std(ddof=1) / (np.sqrt(log_w.size) * mean_u)
    else:
        stderr = 0.0
    return float(estimate), float(stderr)


def mean_loglikelihood(images, params: RbmParams, log_z: float) -> float:
    """Mean loglikelihood of a dataset: -mean F(v) - log Z."""
    v2, _ = _as_batch(images, params.n_v)
    if v2.shape[0] == 0:
        raise ValueError("empty dataset")
    return float(-free_energy(v2, params).mean() - log_z)


def denoise(images, params: RbmParams, steps: int = 1, rng=0):
    """Reconstruct images by Gibbs sampling started at the (corrupted) input.

    Runs `steps` Gibbs sweeps; the reconstruction is the visible mean-field
    of the final sweep, so outputs lie in (0, 1).  Accepts one image or a
    batch.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    v2, squeeze = _as_batch(images, params.n_v)
    state = GibbsState(v=v2, h=np.zeros((v2.shape[0], params.n_h)),
                       rng=np.random.default_rng(rng))
    for _ in range(steps):
        state = gibbs_step(state, params, sample_visible=False)
    return state.v[0] if squeeze else state.v


def mse(x, y) -> float:
    """Mean squared error between two equally sized images (or batches)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("mse arguments must have identical shapes")
    return float(np.mean((x - y) ** 2))


def mse_per_image(x, y) -> np.ndarray:
    """Row-wise MSE for batches of flattened images."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2:
        raise ValueError("expected two equally shaped (n, n_v) batches")
    return np.mean((x - y) ** 2, axis=1)


def balanced_class_weights(labels, n_classes: int) -> np.ndarray:
    """Per-class weights N / (C * count_k), inverse to class frequency."""
    labels = np.asarray(labels)
    counts = np.bincount(labels, minlength=n_classes)
    if np.any(counts == 0):
        raise ValueError("every class must appear at least once for balancing")
    return labels.shape[0] / (n_classes * counts.astype(np.float64))


def log_loss(labels, probabilities, class_weights=None) -> float:
    """Mean negative log probability of the true class.

    class_weights, when given, holds one weight per class (e.g. from
    balanced_class_weights).  Probabilities are clamped at 1e-12 below.
    """
    labels = np.asarray(labels)
    p = np.asarray(probabilities, dtype=np.float64)
    if p.ndim != 2 or labels.shape != (p.shape[0],):
        raise ValueError("need one probability row per label")
    if np.any(p < 0) or not np.allclose(p.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError("probability rows must be non-negative and sum to 1")
    p_true = np.clip(p[np.arange(p.shape[0]), labels], 1e-12, None)
    losses = -np.log(p_true)
    if class_weights is not None:
        losses = losses * np.asarray(class_weights, dtype=np.float64)[labels]
    return float(losses.mean())


def accuracy(labels, predictions, balanced: bool = False) -> float:
    """Fraction of correct predictions; the balanced variant averages the
    per-class accuracies (each class weighted by its inverse frequency)."""
    labels = np.asarray(labels)
    predictions = np.asarray(predictions)
    if labels.shape != predictions.shape:
        raise ValueError("labels and predictions must have equal length")
    correct = (labels == predictions).astype(np.float64)
    if not balanced:
        return float(correct.mean())
    classes = np.unique(labels)
    return float(np.mean([correct[labels == k].mean() for k in classes]))


@dataclass
class MetricsRecord:
    """One scalar metric emitted by an evaluation run."""

    name: str
    value: float
    split: str = ""
    model_id: str = ""
    seed: int | None = None
    wall_time: float | None = None


def write_metrics_csv(path, records: list[MetricsRecord]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "value", "split", "model_id", "seed", "wall_time"])
        for r in records:
            writer.writerow([r.name, repr(r.value), r.split, r.model_id,
                             "" if r.seed is None else r.seed,
                             "" if r.wall_time is None else f"{r.wall_time:.6f}"])


def write_metrics_json(path, records: list[MetricsRecord]):
    payload = [{"name": r.name, "value": r.value, "split": r.split,
                "model_id": r.model_id, "seed": r.seed, "wall_time": r.wall_time}
               for r in records]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
