"""Heteroscedastic convolutional regressor with hand-rolled reverse mode.

Fixed architecture, channels 5 -> 16 -> 32 -> 16 -> 2 with 3x3 kernels,
same zero-padding, ReLU between layers, and one channel-dropout site
after the second convolution. The two output channels parameterize a
per-pixel Laplacian: mean mu and log-scale s, sigma = exp(s).

Training minimizes the normalized negative log-likelihood

    L = mean( |y - mu| * exp(-s) + s + log 2 )

with an adaptive-moment optimizer. Everything is numpy, double
precision, and deterministic given the seeds.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DivergedLoss,
    EmptyDataset,
    NonFiniteInput,
    ShapeMismatch,
    SizeMismatch,
)
from .grid import RealRaster

CHANNELS = (5, 16, 32, 16, 2)
ARCH_ID = "puq-cnn-" + "x".join(str(c) for c in CHANNELS) + "-v1"
LOG2 = math.log(2.0)
SPLITS = ("train", "validation", "test")


# ---------------------------------------------------------------- types


@dataclass(frozen=True)
class RegressorParams:
    """Kernels and biases, in layer order. Also used for gradients."""

    k1: np.ndarray
    b1: np.ndarray
    k2: np.ndarray
    b2: np.ndarray
    k3: np.ndarray
    b3: np.ndarray
    k4: np.ndarray
    b4: np.ndarray

    def __post_init__(self):
        for i, (k, b) in enumerate(zip(self.kernels(), self.biases())):
            cin, cout = CHANNELS[i], CHANNELS[i + 1]
            if k.shape != (cout, cin, 3, 3) or b.shape != (cout,):
                raise ShapeMismatch(
                    f"layer {i + 1} expects kernel {(cout, cin, 3, 3)} and "
                    f"bias {(cout,)}, got {k.shape} and {b.shape}"
                )
            if not (np.isfinite(k).all() and np.isfinite(b).all()):
                raise NonFiniteInput(f"layer {i + 1} has non-finite entries")

    def kernels(self) -> tuple[np.ndarray, ...]:
        return (self.k1, self.k2, self.k3, self.k4)

    def biases(self) -> tuple[np.ndarray, ...]:
        return (self.b1, self.b2, self.b3, self.b4)

    def as_list(self) -> list[np.ndarray]:
        return [self.k1, self.b1, self.k2, self.b2, self.k3, self.b3, self.k4, self.b4]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 16
    epochs: int = 500
    dropout_rate: float = 0.1
    seed: int = 0
    ensemble_size: int = 8

    def __post_init__(self):
        if not (self.lr > 0.0):
            raise NonFiniteInput(f"learning rate must be > 0, got {self.lr}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise NonFiniteInput("moment coefficients must lie in [0, 1)")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise NonFiniteInput(f"dropout rate must be in [0, 1), got {self.dropout_rate}")
        if self.batch_size < 1 or self.epochs < 1 or self.ensemble_size < 1:
            raise NonFiniteInput("batch size, epochs and ensemble size must be >= 1")


@dataclass(frozen=True)
class SamplePair:
    """One training example plus its split and region tags."""

    inputs: np.ndarray  # (5, H, W) measurement stack, upsampled
    target: np.ndarray  # (H, W) normalized phase in [0, 1]
    split: str = "train"
    region: str = ""
    frame: int = 0
    sample_id: str = ""


@dataclass(frozen=True)
class Dataset:
    pairs: tuple[SamplePair, ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        shapes = set()
        for p in self.pairs:
            if p.split not in SPLITS:
                raise NonFiniteInput(f"unknown split tag {p.split!r}")
            if p.inputs.ndim != 3 or p.inputs.shape[0] != CHANNELS[0]:
                raise ShapeMismatch(
                    f"inputs must be ({CHANNELS[0]}, H, W), got {p.inputs.shape}"
                )
            if p.target.shape != p.inputs.shape[1:]:
                raise ShapeMismatch(
                    f"target {p.target.shape} does not match inputs {p.inputs.shape}"
                )
            if not (np.isfinite(p.inputs).all() and np.isfinite(p.target).all()):
                raise NonFiniteInput("dataset contains non-finite values")
            if p.target.min() < 0.0 or p.target.max() > 1.0:
                raise NonFiniteInput("targets must lie in [0, 1]")
            shapes.add(p.inputs.shape)
        if len(shapes) > 1:
            raise ShapeMismatch(f"pairs must share one shape, found {sorted(shapes)}")

    def split(self, tag: str) -> list[SamplePair]:
        if tag not in SPLITS:
            raise NonFiniteInput(f"unknown split tag {tag!r}")
        return [p for p in self.pairs if p.split == tag]


@dataclass(frozen=True)
class PredictiveMap:
    """One member's per-pixel Laplacian parameters."""

    mu: RealRaster
    log_scale: RealRaster

    def __post_init__(self):
        if self.mu.shape != self.log_scale.shape:
            raise ShapeMismatch(
                f"mu {self.mu.shape} and log_scale {self.log_scale.shape} differ"
            )

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.log_scale.data)


@dataclass(frozen=True)
class PredictiveEnsemble:
    members: tuple[PredictiveMap, ...]
    source: str  # deep-ensemble | mc-dropout

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise SizeMismatch("ensemble needs at least one member")
        if self.source not in ("deep-ensemble", "mc-dropout"):
            raise NonFiniteInput(f"unknown ensemble source {self.source!r}")
        shapes = {m.mu.shape for m in self.members}
        if len(shapes) != 1:
            raise ShapeMismatch("ensemble members must share one shape")

    @property
    def size(self) -> int:
        return len(self.members)


# ------------------------------------------------------------ plumbing


def _windows(x: np.ndarray) -> np.ndarray:
    # (n, c, h, w) -> (n, c, h, w, 3, 3) view of the zero-padded input
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    return np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))


def _conv3(x: np.ndarray, k: np.ndarray, b: np.ndarray) -> np.ndarray:
    # x (n, c, h, w) -> (n, o, h, w), 3x3 kernels, zero same-padding
    out = np.tensordot(_windows(x), k, axes=([1, 4, 5], [1, 2, 3]))
    return out.transpose(0, 3, 1, 2) + b[None, :, None, None]


def _conv3_grad(x, k, dy):
    """Gradients of y = conv3(x, k, b) given upstream dy."""
    dk = np.tensordot(dy, _windows(x), axes=([0, 2, 3], [0, 2, 3]))
    db = dy.sum(axis=(0, 2, 3))
    kf = k[:, :, ::-1, ::-1]
    dx = np.tensordot(_windows(dy), kf, axes=([1, 4, 5], [0, 2, 3]))
    return dk, db, dx.transpose(0, 3, 1, 2)


def _sample_mask(n: int, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Per-sample channel mask at the dropout site, inverted scaling."""
    if rate == 0.0:
        return np.ones((n, CHANNELS[2]))
    keep = rng.random((n, CHANNELS[2])) >= rate
    return keep.astype(float) / (1.0 - rate)


def _forward_batch(params, x, mask):
    z1 = _conv3(x, params.k1, params.b1)
    a1 = np.maximum(z1, 0.0)
    z2 = _conv3(a1, params.k2, params.b2)
    a2 = np.maximum(z2, 0.0)
    d2 = a2 * mask[:, :, None, None]
    z3 = _conv3(d2, params.k3, params.b3)
    a3 = np.maximum(z3, 0.0)
    out = _conv3(a3, params.k4, params.b4)
    return out, (x, z1, a1, z2, d2, z3, a3)


def _loss_and_grad_out(out, y):
    mu = out[:, 0]
    s = out[:, 1]
    r = y - mu
    es = np.exp(-s)
    n = y.size
    loss = float(np.mean(np.abs(r) * es + s) + LOG2)
    dmu = -np.sign(r) * es / n
    ds = (1.0 - np.abs(r) * es) / n
    return loss, np.stack([dmu, ds], axis=1)


def _backward_batch(params, x, y, mask):
    out, (x0, z1, a1, z2, d2, z3, a3) = _forward_batch(params, x, mask)
    loss, dout = _loss_and_grad_out(out, y)
    if not math.isfinite(loss):
        raise DivergedLoss(f"loss became {loss}")
    dk4, db4, da3 = _conv3_grad(a3, params.k4, dout)
    dz3 = da3 * (z3 > 0.0)
    dk3, db3, dd2 = _conv3_grad(d2, params.k3, dz3)
    dz2 = dd2 * mask[:, :, None, None] * (z2 > 0.0)
    dk2, db2, da1 = _conv3_grad(a1, params.k2, dz2)
    dz1 = da1 * (z1 > 0.0)
    dk1, db1, _ = _conv3_grad(x0, params.k1, dz1)
    return RegressorParams(dk1, db1, dk2, db2, dk3, db3, dk4, db4), loss


def _check_stack(inputs) -> np.ndarray:
    arr = np.asarray(inputs, dtype=float)
    if arr.ndim != 3 or arr.shape[0] != CHANNELS[0]:
        raise ShapeMismatch(f"expected ({CHANNELS[0]}, H, W) stack, got {arr.shape}")
    return arr


def _mask_for(rate: float, seed) -> np.ndarray:
    if rate == 0.0:
        return np.ones((1, CHANNELS[2]))
    if seed is None:
        raise NonFiniteInput("sampled dropout requires a seed")
    return _sample_mask(1, rate, np.random.default_rng(seed))


# ------------------------------------------------------------ operations


def init_params(seed: int) -> RegressorParams:
    """He-normal kernels (variance 2/fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    tensors = []
    for i in range(4):
        cin, cout = CHANNELS[i], CHANNELS[i + 1]
        std = math.sqrt(2.0 / (9 * cin))
        tensors.append(rng.normal(0.0, std, (cout, cin, 3, 3)))
        tensors.append(np.zeros(cout))
    return RegressorParams(*tensors)


def forward(
    params: RegressorParams,
    inputs,
    dropout_rate: float = 0.0,
    dropout_seed=None,
    pitch: float = 1.0,
) -> PredictiveMap:
    arr = _check_stack(inputs)
    mask = _mask_for(dropout_rate, dropout_seed)
    out, _ = _forward_batch(params, arr[None], mask)
    return PredictiveMap(RealRaster(out[0, 0], pitch), RealRaster(out[0, 1], pitch))


def nll_loss(pred: PredictiveMap, target: RealRaster) -> float:
    if pred.mu.shape != target.shape:
        raise ShapeMismatch(f"prediction {pred.mu.shape} vs target {target.shape}")
    r = target.data - pred.mu.data
    s = pred.log_scale.data
    return float(np.mean(np.abs(r) * np.exp(-s) + s) + LOG2)


def backward(
    params: RegressorParams,
    inputs,
    target,
    dropout_rate: float = 0.0,
    dropout_seed=None,
) -> tuple[RegressorParams, float]:
    """Exact loss gradient for one sample, same masks as forward."""
    arr = _check_stack(inputs)
    y = np.asarray(target, dtype=float)
    if y.shape != arr.shape[1:]:
        raise ShapeMismatch(f"target {y.shape} does not match inputs {arr.shape}")
    mask = _mask_for(dropout_rate, dropout_seed)
    return _backward_batch(params, arr[None], y[None], mask)


def train(dataset: Dataset, cfg: TrainConfig, loss_history=None) -> RegressorParams:
    """Mini-batch optimization of the likelihood, deterministic by seed."""
    pairs = dataset.split("train")
    if not pairs:
        raise EmptyDataset("dataset has no training pairs")
    x = np.stack([p.inputs for p in pairs]).astype(float)
    y = np.stack([p.target for p in pairs]).astype(float)
    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg.seed)
    m = [np.zeros_like(a) for a in params.as_list()]
    v = [np.zeros_like(a) for a in params.as_list()]
    t = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(pairs))
        for start in range(0, len(pairs), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            mask = _sample_mask(len(idx), cfg.dropout_rate, rng)
            grads, loss = _backward_batch(params, x[idx], y[idx], mask)
            if not math.isfinite(loss):
                raise DivergedLoss(f"loss became {loss} at step {t}")
            if loss_history is not None:
                loss_history.append(loss)
            t += 1
            new = []
            for j, (p, g) in enumerate(zip(params.as_list(), grads.as_list())):
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g
                mh = m[j] / (1.0 - cfg.beta1**t)
                vh = v[j] / (1.0 - cfg.beta2**t)
                new.append(p - cfg.lr * mh / (np.sqrt(vh) + cfg.eps))
            if any(not np.isfinite(a).all() for a in new):
                raise DivergedLoss(f"parameters became non-finite at step {t}")
            params = RegressorParams(*new)
    return params


def train_ensemble(dataset: Dataset, cfg: TrainConfig, threads=None) -> list[RegressorParams]:
    """Independent members on disjoint seeds cfg.seed + 0 .. P-1."""
    cfgs = [replace(cfg, seed=cfg.seed + i) for i in range(cfg.ensemble_size)]
    workers = threads if threads else min(cfg.ensemble_size, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: train(dataset, c), cfgs))


def predict_ensemble(models, inputs, pitch: float = 1.0) -> PredictiveEnsemble:
    """One deterministic forward per trained member."""
    models = list(models)
    if not models:
        raise SizeMismatch("need at least one model")
    maps = [forward(p, inputs, pitch=pitch) for p in models]
    return PredictiveEnsemble(tuple(maps), "deep-ensemble")


def predict_mc_dropout(
    params: RegressorParams,
    inputs,
    n_samples: int = 8,
    dropout_rate: float = 0.1,
    seed: int = 0,
    pitch: float = 1.0,
) -> PredictiveEnsemble:
    """P stochastic forwards of a single model under sampled dropout."""
    if n_samples < 1:
        raise SizeMismatch(f"need at least one sample, got {n_samples}")
    arr = _check_stack(inputs)
    maps = []
    for child in np.random.SeedSequence(seed).spawn(n_samples):
        mask = _sample_mask(1, dropout_rate, np.random.default_rng(child))
        out, _ = _forward_batch(params, arr[None], mask)
        maps.append(
            PredictiveMap(RealRaster(out[0, 0], pitch), RealRaster(out[0, 1], pitch))
        )
    return PredictiveEnsemble(tuple(maps), "mc-dropout")
