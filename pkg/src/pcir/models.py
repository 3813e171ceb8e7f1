"""Trainable detectors: a compactness encoder and an MLP autoencoder.

Both share the same encoder architecture and train on normal-only,
environment-labeled data with the composite objective
`task_loss + weight * invariance_penalty`, where the penalty is the sum of
pairwise biased squared MMDs between the per-environment representation
batches of each step.

The compactness objective pulls representations toward a center that is
the mean representation of the training set, re-estimated at the start of
every epoch and held constant while differentiating (chasing a live
center would admit trivial collapse).  The autoencoder objective mirrors
the encoder into a decoder and penalizes squared input reconstruction
error.

Training is deterministic given the seed: batching order, initialization
and every arithmetic step are fixed.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .datagen import Dataset
from .ioutil import atomic_write_text, dumps_json_17g
from .mmd import EnvBatch, KernelConfig, median_heuristic, pcir_penalty
from .optim import AdamState, SgdState, adam_step, sgd_step
from .rng import Rng

_ACTIVATIONS = {"tanh": (ad.tanh, np.tanh),
                "relu": (ad.relu, lambda x: np.maximum(x, 0.0))}


@dataclass(frozen=True)
class EncoderConfig:
    """Layer widths input -> hidden... -> representation dimension."""

    layers: tuple[int, ...] = (6, 32, 32, 8)
    activation: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        if len(self.layers) < 3:
            raise ValueError("need at least one hidden layer")
        if self.layers[-1] < 2:
            raise ValueError("representation dimension must be >= 2")
        if any(w < 1 for w in self.layers):
            raise ValueError("layer widths must be positive")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class TrainConfig:
    weight: float = 1.0            # invariance-penalty coefficient
    epochs: int = 60
    batch_size: int = 64           # per environment
    optimizer: str = "adam"
    learning_rate: float = 0.01
    lr_decay: str = "linear"       # "linear" anneals the rate to 0; "none" holds it
    clip_norm: float = 1.0         # global gradient-norm cap; 0 disables
    objective: str = "compactness"  # "compactness" | "autoencoder"
    kernel: KernelConfig = field(default_factory=KernelConfig)
    seed: int = 0

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("penalty weight must be >= 0")
        if self.clip_norm < 0:
            raise ValueError("clip_norm must be >= 0")
        if self.lr_decay not in ("linear", "none"):
            raise ValueError(f"unknown lr_decay {self.lr_decay!r}")
        if self.batch_size < 2:
            raise ValueError("batch size must be >= 2 per environment")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.objective not in ("compactness", "autoencoder"):
            raise ValueError(f"unknown objective {self.objective!r}")


class Mlp:
    """Fully connected layers with the configured activation on hidden
    layers and a linear output layer."""

    def __init__(self, widths: tuple[int, ...], activation: str, rng: Rng):
        self.widths = tuple(widths)
        self.activation = activation
        self.params: list[Tensor] = []
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            w = (rng.split("w", i).uniform((fan_in, fan_out)) * 2.0 - 1.0) * bound
            self.params.append(Tensor(w))
            self.params.append(Tensor(np.zeros(fan_out)))

    def forward(self, x: Tensor) -> Tensor:
        act, _ = _ACTIVATIONS[self.activation]
        h = x
        n_layers = len(self.widths) - 1
        for i in range(n_layers):
            w, b = self.params[2 * i], self.params[2 * i + 1]
            h = ad.add(ad.matmul(h, w), b)
            if i < n_layers - 1:
                h = act(h)
        return h

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        """Graph-free forward pass; same arithmetic as `forward`."""
        _, act = _ACTIVATIONS[self.activation]
        h = np.asarray(x, dtype=np.float64)
        n_layers = len(self.widths) - 1
        for i in range(n_layers):
            h = h @ self.params[2 * i].data + self.params[2 * i + 1].data
            if i < n_layers - 1:
                h = act(h)
        return h


def encode(mlp: Mlp, x: np.ndarray) -> np.ndarray:
    if np.ndim(x) != 2 or np.shape(x)[1] != mlp.widths[0]:
        raise ShapeError(f"expected (n, {mlp.widths[0]}) input, got {np.shape(x)}")
    return mlp.forward_np(x)


def compactness_loss(z: Tensor, center: np.ndarray) -> Tensor:
    """Mean squared distance of each representation row from the center."""
    center = np.asarray(center, dtype=np.float64)
    if z.shape[-1] != center.shape[-1]:
        raise ShapeError(f"center dim {center.shape[-1]} != representation dim {z.shape[-1]}")
    d = ad.sub(z, ad.constant(center))
    return ad.tmean(ad.tsum(ad.square(d), axis=1))


def reconstruction_loss(x: Tensor, x_hat: Tensor) -> Tensor:
    """Mean squared reconstruction error over the batch."""
    if x.shape != x_hat.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    d = ad.sub(x, x_hat)
    if len(x.shape) == 1:
        return ad.tsum(ad.square(d))
    return ad.tmean(ad.tsum(ad.square(d), axis=1))


def composite_loss(task_loss, penalty, weight: float):
    """task + weight * penalty, for floats or graph scalars."""
    if weight < 0:
        raise ValueError("penalty weight must be >= 0")
    if isinstance(task_loss, Tensor) or isinstance(penalty, Tensor):
        return ad.add(ad.as_tensor(task_loss), ad.scale(ad.as_tensor(penalty), weight))
    return task_loss + weight * penalty


@dataclass
class FitResult:
    """A trained detector plus its per-epoch loss history."""

    objective: str
    encoder: Mlp
    decoder: Mlp | None
    center: np.ndarray | None
    history: dict[str, list[float]]
    encoder_cfg: EncoderConfig
    train_cfg: TrainConfig

    def encode(self, x: np.ndarray) -> np.ndarray:
        return encode(self.encoder, x)

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        if self.decoder is None:
            raise ValueError("this detector has no decoder")
        return self.decoder.forward_np(self.encode(x))

    @property
    def params(self) -> list[Tensor]:
        ps = list(self.encoder.params)
        if self.decoder is not None:
            ps += self.decoder.params
        return ps


def _env_batches(rows_by_env, batch_size, epoch_rng, replace_warned):
    """One epoch of per-environment batch index lists, aligned across envs."""
    env_ids = sorted(rows_by_env)
    n_steps = max(1, min(len(rows_by_env[e]) // batch_size for e in env_ids))
    plans = {}
    for e in env_ids:
        rows = rows_by_env[e]
        rng = epoch_rng.split("env", e)
        if len(rows) < batch_size:
            if not replace_warned[0]:
                warnings.warn(
                    f"environment {e} has {len(rows)} < batch_size={batch_size} samples;"
                    " sampling with replacement", stacklevel=3)
                replace_warned[0] = True
            plans[e] = [rows[[rng.below(len(rows)) for _ in range(batch_size)]]
                        for _ in range(n_steps)]
        else:
            perm = rows[epoch_rng.split("perm", e).permutation(len(rows))]
            plans[e] = [perm[i * batch_size:(i + 1) * batch_size] for i in range(n_steps)]
    return env_ids, n_steps, plans


def fit(train_cfg: TrainConfig, encoder_cfg: EncoderConfig, dataset: Dataset) -> FitResult:
    """Train a detector on normal-only multi-environment data.

    Each step draws one batch per environment, evaluates the task loss on
    the pooled batch and the invariance penalty across the per-environment
    representation batches, and takes one optimizer step.  Raw penalty
    values are recorded even when the weight is zero (the penalty then
    stays out of the differentiated graph entirely).
    """
    if np.any(dataset.labels != 0):
        raise ValueError("training data must contain only normal samples (label 0)")
    if dataset.dim != encoder_cfg.layers[0]:
        raise ShapeError(f"dataset dim {dataset.dim} != encoder input {encoder_cfg.layers[0]}")
    rows_by_env = {e: dataset.rows_for_env(e) for e in dataset.env_ids()}
    for e, rows in rows_by_env.items():
        if len(rows) < 2:
            raise ValueError(f"environment {e} has fewer than 2 samples")

    rng = Rng(train_cfg.seed)
    encoder = Mlp(encoder_cfg.layers, encoder_cfg.activation, rng.split("encoder"))
    decoder = None
    if train_cfg.objective == "autoencoder":
        decoder = Mlp(tuple(reversed(encoder_cfg.layers)), encoder_cfg.activation,
                      rng.split("decoder"))

    # Resolve a median-heuristic kernel once, on the initial representations,
    # and keep it fixed for the whole run.  A per-batch median bandwidth
    # tracks the representation scale and makes the penalty scale-free, so
    # over-weighting it could never collapse the encoder; an absolute
    # bandwidth preserves that failure mode, which the diagnostics are
    # meant to expose.
    kernel = train_cfg.kernel
    if kernel.mode == "median":
        z0 = encoder.forward_np(dataset.features)
        med = median_heuristic(z0, z0)
        kernel = KernelConfig(mode="fixed",
                              bandwidths=tuple(s * med for s in kernel.scales),
                              weights=kernel.weights)
    params = list(encoder.params) + (decoder.params if decoder else [])
    if train_cfg.optimizer == "adam":
        opt_state, step_fn = AdamState(train_cfg.learning_rate), adam_step
    else:
        opt_state, step_fn = SgdState(train_cfg.learning_rate), sgd_step

    center: np.ndarray | None = None
    history = {"task": [], "penalty": [], "total": []}
    replace_warned = [False]
    multi_env = len(rows_by_env) > 1
    total_steps = train_cfg.epochs * max(
        1, min(len(r) // train_cfg.batch_size for r in rows_by_env.values()))
    global_step = 0

    for epoch in range(train_cfg.epochs):
        if train_cfg.objective == "compactness":
            center = encoder.forward_np(dataset.features).mean(axis=0)
        env_ids, n_steps, plans = _env_batches(
            rows_by_env, train_cfg.batch_size, rng.split("epoch", epoch), replace_warned)
        ep_task = ep_pen = ep_total = 0.0
        for step in range(n_steps):
            z_by_env = {}
            x_by_env = {}
            for e in env_ids:
                xb = Tensor(dataset.features[plans[e][step]])
                x_by_env[e] = xb
                z_by_env[e] = encoder.forward(xb)
            z_pool = (ad.concat([z_by_env[e] for e in env_ids])
                      if multi_env else z_by_env[env_ids[0]])
            if train_cfg.objective == "compactness":
                task = compactness_loss(z_pool, center)
            else:
                x_pool = (ad.concat([x_by_env[e] for e in env_ids])
                          if multi_env else x_by_env[env_ids[0]])
                x_hat = decoder.forward(z_pool)
                task = reconstruction_loss(x_pool, x_hat)
            if train_cfg.weight > 0 and multi_env:
                penalty = pcir_penalty(
                    [EnvBatch(e, z_by_env[e]) for e in env_ids], kernel)
                total = composite_loss(task, penalty, train_cfg.weight)
                pen_val = penalty.item()
            else:
                # Penalty logged but kept out of the graph: a zero-weighted
                # run must be arithmetically identical to a task-only run.
                total = task
                if multi_env:
                    pen_val = float(pcir_penalty(
                        [EnvBatch(e, z_by_env[e].data) for e in env_ids], kernel))
                else:
                    pen_val = 0.0
            grads = ad.gradients(total, params)
            if train_cfg.clip_norm > 0:
                gnorm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
                if gnorm > train_cfg.clip_norm:
                    grads = [g * (train_cfg.clip_norm / gnorm) for g in grads]
            if train_cfg.lr_decay == "linear":
                opt_state.learning_rate = train_cfg.learning_rate * (
                    1.0 - global_step / total_steps)
            global_step += 1
            step_fn(opt_state, params, grads)
            ep_task += task.item()
            ep_pen += pen_val
            ep_total += task.item() + train_cfg.weight * pen_val
        history["task"].append(ep_task / n_steps)
        history["penalty"].append(ep_pen / n_steps)
        history["total"].append(ep_total / n_steps)

    if train_cfg.objective == "compactness":
        center = encoder.forward_np(dataset.features).mean(axis=0)
    return FitResult(train_cfg.objective, encoder, decoder, center, history,
                     encoder_cfg, train_cfg)


# -- checkpoints ---------------------------------------------------------------

def _mlp_weights(mlp: Mlp) -> list[dict]:
    return [{"shape": list(p.data.shape), "values": p.data.ravel().tolist()}
            for p in mlp.params]


def _load_mlp(widths, activation, entries) -> Mlp:
    mlp = Mlp(tuple(widths), activation, Rng(0))
    if len(entries) != len(mlp.params):
        raise ValueError("checkpoint parameter count mismatch")
    for p, entry in zip(mlp.params, entries):
        arr = np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
        if arr.shape != p.data.shape:
            raise ShapeError(f"checkpoint shape {arr.shape} != expected {p.data.shape}")
        p.data = arr
    return mlp


def save_checkpoint(result: FitResult, path) -> None:
    payload = {
        "objective": result.objective,
        "encoder_cfg": {"layers": list(result.encoder_cfg.layers),
                        "activation": result.encoder_cfg.activation,
                        "seed": result.encoder_cfg.seed},
        "train_cfg": {"weight": result.train_cfg.weight,
                      "epochs": result.train_cfg.epochs,
                      "batch_size": result.train_cfg.batch_size,
                      "optimizer": result.train_cfg.optimizer,
                      "learning_rate": result.train_cfg.learning_rate,
                      "lr_decay": result.train_cfg.lr_decay,
                      "clip_norm": result.train_cfg.clip_norm,
                      "objective": result.train_cfg.objective,
                      "kernel": {"mode": result.train_cfg.kernel.mode,
                                 "bandwidths": list(result.train_cfg.kernel.bandwidths),
                                 "scales": list(result.train_cfg.kernel.scales),
                                 "weights": (None if result.train_cfg.kernel.weights is None
                                             else list(result.train_cfg.kernel.weights))},
                      "seed": result.train_cfg.seed},
        "encoder": _mlp_weights(result.encoder),
        "decoder": None if result.decoder is None else _mlp_weights(result.decoder),
        "center": None if result.center is None else result.center.tolist(),
        "history": result.history,
    }
    atomic_write_text(path, dumps_json_17g(payload) + "\n")


def load_checkpoint(path) -> FitResult:
    payload = json.loads(open(path).read())
    enc_cfg = EncoderConfig(tuple(payload["encoder_cfg"]["layers"]),
                            payload["encoder_cfg"]["activation"],
                            payload["encoder_cfg"]["seed"])
    kc = payload["train_cfg"]["kernel"]
    kernel = KernelConfig(kc["mode"], tuple(kc["bandwidths"]), tuple(kc["scales"]),
                          None if kc["weights"] is None else tuple(kc["weights"]))
    tc = payload["train_cfg"]
    train_cfg = TrainConfig(tc["weight"], tc["epochs"], tc["batch_size"], tc["optimizer"],
                            tc["learning_rate"], tc["lr_decay"], tc["clip_norm"],
                            tc["objective"], kernel, tc["seed"])
    encoder = _load_mlp(enc_cfg.layers, enc_cfg.activation, payload["encoder"])
    decoder = None
    if payload["decoder"] is not None:
        decoder = _load_mlp(tuple(reversed(enc_cfg.layers)), enc_cfg.activation,
                            payload["decoder"])
    center = None if payload["center"] is None else np.array(payload["center"])
    return FitResult(payload["objective"], encoder, decoder, center,
                     payload["history"], enc_cfg, train_cfg)
