"""Mini-batch SGD with momentum, validation cadence and best-checkpoint
selection, for the generative (CD) and discriminative objectives."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .classifier import ClassRbmParams, disc_gradient, predict_proba
from .data import BatchSampler, ImageDataset
from .evaluation import (AisConfig, ais_log_z, balanced_class_weights, log_loss,
                         mean_loglikelihood)
from .rbm import EXACT_ENUM_LIMIT, RbmParams, cd_gradient, exact_log_z
from .structure import ConnectivityStructure


class NonFiniteMetricError(RuntimeError):
    """A validation metric became NaN/Inf during training."""


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    batch_size: int = 16
    total_updates: int = 10000
    cd_steps: int = 1
    eval_interval: int = 200
    seed: int = 0
    objective: str = "generative"             # generative | discriminative
    validation_metric: str = "loglikelihood"  # loglikelihood | logloss | balanced_logloss
    sample_visible: bool = False
    gradient_path: str = "sparse"             # sparse | dense (reference)
    ll_mode: str = "auto"                     # auto | exact | ais
    val_ais_runs: int = 50
    val_ais_betas: int = 2900

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1 or self.total_updates < 1 or self.eval_interval < 1:
            raise ValueError("batch_size, total_updates and eval_interval must be >= 1")
        if self.cd_steps < 1:
            raise ValueError("cd_steps must be >= 1")
        if self.objective not in ("generative", "discriminative"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.validation_metric not in ("loglikelihood", "logloss", "balanced_logloss"):
            raise ValueError(f"unknown validation metric {self.validation_metric!r}")
        if self.ll_mode not in ("auto", "exact", "ais"):
            raise ValueError(f"unknown ll_mode {self.ll_mode!r}")


@dataclass
class TrainState:
    params: object
    velocity: dict
    update: int = 0
    best_metric: float | None = None
    best_update: int = -1
    best_params: object = None
    history: list = field(default_factory=list)  # (update, metric_name, value, wall_time)


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0) / np.sqrt(fan_in + fan_out))


def init_params(structure: ConnectivityStructure, seed: int = 0,
                n_classes: int | None = None):
    """Glorot-uniform supported weights, zero biases.

    The uniform bound uses the global unit counts sqrt(6)/sqrt(n_v + n_h)
    (and sqrt(6)/sqrt(C + n_h) for the class weights of a classifier).
    """
    rng = np.random.default_rng(seed)
    bound = glorot_bound(structure.n_v, structure.n_h)
    w = rng.uniform(-bound, bound, size=structure.nnz)
    base = RbmParams(structure, w, np.zeros(structure.n_v), np.zeros(structure.n_h))
    if n_classes is None:
        return base
    ubound = glorot_bound(n_classes, structure.n_h)
    u = rng.uniform(-ubound, ubound, size=(n_classes, structure.n_h))
    return ClassRbmParams(base, u, np.zeros(n_classes))


def zero_velocity(params) -> dict:
    return {name: np.zeros_like(arr) for name, arr in params.param_arrays().items()}


def momentum_step(params, velocity: dict, ascent_gradient, learning_rate: float,
                  momentum: float):
    """velocity <- momentum * velocity + lr * gradient; params += velocity.

    The gradient must point in the ascent direction of the objective being
    maximised.  Parameter arrays are updated in place.
    """
    arrays = params.param_arrays()
    grads = ascent_gradient.arrays() if hasattr(ascent_gradient, "arrays") else ascent_gradient
    if set(grads) != set(arrays):
        raise ValueError("gradient fields do not match parameter fields")
    for name, g in grads.items():
        if g.shape != arrays[name].shape:
            raise ValueError(f"gradient shape mismatch for {name!r}")
        v = velocity[name]
        v *= momentum
        v += learning_rate * g
        arrays[name] += v
    params.bump_version()


def _metric_direction(name: str) -> int:
    return 1 if name == "loglikelihood" else -1


def _improved(value: float, best: float | None, direction: int) -> bool:
    return best is None or direction * (value - best) > 0


def _validation_metric(params, val: ImageDataset, config: TrainConfig,
                       update: int) -> float:
    if config.objective == "generative":
        use_exact = config.ll_mode == "exact" or (
            config.ll_mode == "auto" and params.n_v <= EXACT_ENUM_LIMIT)
        if use_exact:
            log_z = exact_log_z(params)
        else:
            ais = AisConfig(n_runs=config.val_ais_runs, n_betas=config.val_ais_betas,
                            seed=np.random.SeedSequence([config.seed, 7, update]))
            log_z, _ = ais_log_z(params, ais)
        return mean_loglikelihood(val.images, params, log_z)
    probs = predict_proba(val.images, params)
    if config.validation_metric == "balanced_logloss":
        weights = balanced_class_weights(val.labels, params.n_classes)
        return log_loss(val.labels, probs, class_weights=weights)
    return log_loss(val.labels, probs)


def train(params, train_set: ImageDataset, val_set: ImageDataset,
          config: TrainConfig) -> TrainState:
    """Run `total_updates` momentum steps of CD or discriminative SGD.

    The validation metric is computed before the first update, every
    eval_interval updates, and at the last update; parameters are
    snapshotted whenever the metric improves.
    """
    if config.objective == "discriminative":
        if not isinstance(params, ClassRbmParams):
            raise ValueError("discriminative objective needs ClassRbmParams")
        if train_set.labels is None or val_set.labels is None:
            raise ValueError("discriminative objective needs labelled data")
        metric_name = config.validation_metric
        if metric_name == "loglikelihood":
            metric_name = "logloss"
    else:
        if isinstance(params, ClassRbmParams):
            raise ValueError("generative objective trains a plain RBM")
        metric_name = "loglikelihood"
    direction = _metric_direction(metric_name)

    root = np.random.SeedSequence(config.seed)
    sampler_seed, chain_seed = root.spawn(2)
    sampler = BatchSampler(train_set, config.batch_size, seed=sampler_seed)
    chain_rng = np.random.default_rng(chain_seed)

    state = TrainState(params=params, velocity=zero_velocity(params))
    t0 = time.perf_counter()

    def evaluate(update):
        value = _validation_metric(params, val_set, config, update)
        if not np.isfinite(value):
            raise NonFiniteMetricError(
                f"validation {metric_name} is {value} at update {update}")
        state.history.append((update, metric_name, value, time.perf_counter() - t0))
        if _improved(value, state.best_metric, direction):
            state.best_metric = value
            state.best_update = update
            state.best_params = params.copy()

    evaluate(0)
    for update in range(1, config.total_updates + 1):
        batch, labels = sampler.next_batch()
        if config.objective == "generative":
            grad = cd_gradient(batch, params, k=config.cd_steps, rng=chain_rng,
                               sample_visible=config.sample_visible,
                               path=config.gradient_path)
        else:
            loss_grad = disc_gradient(batch, labels, params, path=config.gradient_path)
            grad = {name: -g for name, g in loss_grad.arrays().items()}
        momentum_step(params, state.velocity, grad, config.learning_rate,
                      config.momentum)
        state.update = update
        if update % config.eval_interval == 0 or update == config.total_updates:
            evaluate(update)
    return state


def write_history_csv(path, history, with_wall_time: bool = False):
    """Metric history as CSV.

    The wall_time column is omitted by default so that two identical runs
    produce byte-identical files; pass with_wall_time=True for the timed
    variant.
    """
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if with_wall_time:
            writer.writerow(["update_index", "metric_name", "value", "wall_time"])
            for update, name, value, wall in history:
                writer.writerow([update, name, repr(value), f"{wall:.6f}"])
        else:
            writer.writerow(["update_index", "metric_name", "value"])
            for update, name, value, _ in history:
                writer.writerow([update, name, repr(value)])


def measure_gradient_time(params, batch, repetitions: int = 100, cd_steps: int = 1,
                          labels=None, backend=None) -> dict:
    """Wall-clock statistics of one gradient computation, for the sparse
    path and the dense masked reference path.

    With labels given, times disc_gradient instead of cd_gradient.  Returns
    {"sparse": {"mean": .., "std": ..}, "dense": {...}} in seconds.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    results = {}
    for path in ("sparse", "dense"):
        # warm-up: populate caches (dense weight matrix, row-major support)
        if labels is None:
            cd_gradient(batch, params, k=cd_steps, rng=np.random.default_rng(0),
                        path=path, backend=backend)
        else:
            disc_gradient(batch, labels, params, path=path, backend=backend)
        times = np.empty(repetitions)
        for rep in range(repetitions):
            rng = np.random.default_rng(rep)
            start = time.perf_counter()
            if labels is None:
                cd_gradient(batch, params, k=cd_steps, rng=rng, path=path,
                            backend=backend)
            else:
                disc_gradient(batch, labels, params, path=path, backend=backend)
            times[rep] = time.perf_counter() - start
        results[path] = {"mean": float(times.mean()), "std": float(times.std())}
    return results
