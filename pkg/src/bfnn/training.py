"""Unsupervised training loop: maximize average rate, no labels.

The loss is the negative batch-average spectral efficiency evaluated with
the true channels, while the network input carries only the (possibly
imperfect) estimates. Its gradient with respect to the phase outputs is
exact: with z = h^H v and v = e^(j theta),

    d|z|^2 / d theta_i = -2 Im{ conj(z) * conj(h_i) * e^(j theta_i) },

chained with -gamma/n_t / ((1 + gamma/n_t |z|^2) ln 2 N) per sample.

Optimization is plain Adam with bias correction. Two learning-rate policies
exist: "plateau" halves the rate when validation stalls, and "warmup-tail"
ramps linearly to the peak rate, holds, then finishes with a low-rate tail
whose weights are averaged (running statistics are then recomputed exactly
over the training set). Whichever candidate scores the best validation loss
is returned: the averaged tail, the final weights, or the best epoch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import rng_from_seed
from .layers import BatchNorm
from .network import BfnnModel, lambda_forward

LN2 = math.log(2.0)


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 30
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    lr_schedule: str = "plateau"  # "plateau" | "warmup-tail" | "constant"
    plateau_patience: int = 5
    warmup_steps: int = 0
    tail_epochs: int = 0
    tail_lr: float | None = None

    def validate(self) -> None:
        if self.learning_rate < 0:
            raise ValueError("learning_rate must not be negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.lr_schedule not in ("plateau", "warmup-tail", "constant"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "seed": self.seed,
            "lr_schedule": self.lr_schedule,
            "plateau_patience": self.plateau_patience,
            "warmup_steps": self.warmup_steps,
            "tail_epochs": self.tail_epochs,
            "tail_lr": self.tail_lr,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def se_loss(H: np.ndarray, gammas, V: np.ndarray, n_t: int) -> float:
    """Negative mean of log2(1 + (gamma/n_t)|h^H v|^2) over the batch."""
    H = np.atleast_2d(H)
    if H.shape[0] == 0:
        raise ValueError("empty batch")
    V = np.atleast_2d(V)
    g = np.broadcast_to(np.asarray(gammas, dtype=np.float64), (H.shape[0],))
    z2 = np.abs(np.sum(np.conj(H) * V, axis=1)) ** 2
    return float(-np.mean(np.log2(1.0 + (g / n_t) * z2)))


def se_loss_and_grad_theta(
    theta: np.ndarray, H: np.ndarray, gammas, n_t: int
) -> tuple[float, np.ndarray]:
    """Loss plus its exact gradient w.r.t. the phase outputs."""
    theta = np.atleast_2d(theta)
    H = np.atleast_2d(H)
    n = theta.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    g = np.broadcast_to(np.asarray(gammas, dtype=np.float64), (n,))
    v = lambda_forward(theta)
    z = np.sum(np.conj(H) * v, axis=1)
    s = (g / n_t) * np.abs(z) ** 2
    loss = float(-np.mean(np.log2(1.0 + s)))
    coef = 2.0 * (g / n_t) / ((1.0 + s) * LN2 * n)
    d_theta = coef[:, None] * np.imag(np.conj(z)[:, None] * np.conj(H) * v)
    return loss, d_theta


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            t=0,
        )


def adam_step(params, grads, state: AdamState, cfg: TrainConfig, lr: float | None = None) -> None:
    """One in-place bias-corrected Adam update over aligned param/grad lists."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameter/gradient/state length mismatch")
    step_lr = cfg.learning_rate if lr is None else lr
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= step_lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


@dataclass
class TrainResult:
    model: BfnnModel
    history: dict
    picked: str


def _exact_bn_refresh(model: BfnnModel, X: np.ndarray) -> None:
    """Replace running statistics with exact feature statistics over X."""
    acts = X
    for layer in model.layers:
        if isinstance(layer, BatchNorm):
            layer.running_mean = acts.mean(axis=0)
            layer.running_var = acts.var(axis=0)
        acts = layer.forward(acts, train=False)


def _lr_at(cfg: TrainConfig, lr_base: float, epoch: int, step: int) -> float:
    lr = lr_base
    if cfg.lr_schedule == "warmup-tail":
        if cfg.tail_epochs and epoch >= cfg.epochs - cfg.tail_epochs:
            lr = cfg.tail_lr if cfg.tail_lr is not None else lr_base / 8.0
        if cfg.warmup_steps:
            lr *= min(1.0, (step + 1) / cfg.warmup_steps)
    return lr


def train(
    model: BfnnModel,
    train_data: tuple[np.ndarray, np.ndarray, np.ndarray],
    val_data: tuple[np.ndarray, np.ndarray, np.ndarray],
    cfg: TrainConfig,
) -> TrainResult:
    """Mini-batch training of the phase network.

    train_data and val_data are (X, H, gamma) triples: packed inputs, true
    channels and linear SNRs, index aligned. Epochs are reshuffled from the
    config seed; a ragged final batch is dropped so every update sees a full
    batch of statistics. Fully deterministic for a fixed config and data.
    """
    cfg.validate()
    X, H, gam = train_data
    Xv, Hv, gv = val_data
    n_t = model.n_t
    if X.shape[0] != H.shape[0]:
        raise ValueError("inputs and channels must be index aligned")
    rng = rng_from_seed(cfg.seed)
    params = [arr for _, arr in model.parameters()]
    state = AdamState.for_params(params)
    n_batches = max(1, X.shape[0] // cfg.batch_size) if X.shape[0] >= cfg.batch_size else 1
    history = {"train_loss": [], "val_loss": [], "lr": []}

    def val_loss() -> float:
        theta = model.forward(Xv, train=False)
        return se_loss(Hv, gv, lambda_forward(theta), n_t)

    lr_base = cfg.learning_rate
    best_val = math.inf
    stall = 0
    best_snap = None
    tail_sum = None
    tail_count = 0
    step = 0

    for epoch in range(cfg.epochs):
        order = rng.permutation(X.shape[0])
        epoch_losses = []
        for b in range(n_batches):
            sel = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            if len(sel) == 0:
                continue
            theta = model.forward(X[sel], train=True)
            loss, d_theta = se_loss_and_grad_theta(theta, H[sel], gam[sel], n_t)
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss} at epoch {epoch} step {step}"
                )
            model.backward(d_theta)
            lr = _lr_at(cfg, lr_base, epoch, step)
            adam_step(params, model.gradients(), state, cfg, lr=lr)
            epoch_losses.append(loss)
            step += 1
        vl = val_loss()
        history["train_loss"].append(float(np.mean(epoch_losses)) if epoch_losses else math.nan)
        history["val_loss"].append(vl)
        history["lr"].append(_lr_at(cfg, lr_base, epoch, step - 1))
        if vl < best_val - 1e-4:
            best_val = vl
            stall = 0
            best_snap = model.snapshot()
        elif cfg.lr_schedule == "plateau":
            stall += 1
            if stall >= cfg.plateau_patience:
                lr_base *= 0.5
                stall = 0
        in_tail = (
            cfg.lr_schedule == "warmup-tail"
            and cfg.tail_epochs
            and epoch >= cfg.epochs - cfg.tail_epochs
        )
        if in_tail:
            current = [arr.copy() for _, arr in model.parameters()]
            if tail_sum is None:
                tail_sum = current
            else:
                for acc, cur in zip(tail_sum, current):
                    acc += cur
            tail_count += 1

    candidates: list[tuple[str, tuple, float]] = []
    if cfg.epochs > 0:
        _exact_bn_refresh(model, X)
        candidates.append(("final", model.snapshot(), val_loss()))
        if tail_sum is not None:
            model.set_parameters([acc / tail_count for acc in tail_sum])
            _exact_bn_refresh(model, X)
            candidates.append(("tail-average", model.snapshot(), val_loss()))
        if best_snap is not None:
            model.restore(best_snap)
            candidates.append(("best-epoch", best_snap, val_loss()))
        picked, snap, _ = min(candidates, key=lambda c: c[2])
        model.restore(snap)
    else:
        picked = "init"
    history["picked"] = picked
    model.meta["epochs_trained"] = cfg.epochs
    model.meta["train_config"] = cfg.to_dict()
    model.meta["final_val_loss"] = val_loss() if cfg.epochs > 0 else None
    return TrainResult(model=model, history=history, picked=picked)


def make_training_arrays(samples, estimates=None):
    """(X, H, gamma) arrays from samples and optional aligned estimates.

    With estimates omitted the network input is the true channel (perfect
    CSI); gamma is each sample's own SNR, used both as the input feature and
    in the loss.
    """
    from .network import pack_inputs

    sample_list = list(getattr(samples, "samples", samples))
    H = np.array([s.h for s in sample_list])
    gam = np.array([s.snr for s in sample_list])
    if estimates is None:
        Hin = H
    else:
        est_list = list(estimates)
        if len(est_list) != len(sample_list):
            raise ValueError("estimates must align with samples")
        Hin = np.array([e.h_est for e in est_list])
    return pack_inputs(Hin, gam), H, gam
