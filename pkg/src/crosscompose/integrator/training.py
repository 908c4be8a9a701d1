"""Training loop for the residual integrator.

The objective regresses the network output toward content + style - stylized
(the residual form); the ``direct`` flag instead regresses toward the stylized
feature, kept for the robustness comparison between the two schemes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from ..errors import TrainingDivergedError
from .features import StyleTriplet
from .mlp import IntegratorModel


@dataclass(frozen=True)
class TrainerConfig:
    lr: float = 1e-4
    batch_size: int = 64
    epochs: int = 30
    val_fraction: float = 0.1
    patience: int = 5
    seed: int = 0
    direct: bool = False
    hidden_width: int | None = None
    lr_schedule: str = "constant"  # or "cosine" (decay to zero over the run)
    init_scale: float = 1.0  # multiplier on the hidden-layer init; small values start near the linear regime
    beta2: float = 0.999  # Adam second-moment decay; lower adapts faster

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not (0.0 <= self.val_fraction < 1.0):
            raise ValueError("val_fraction must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr schedule {self.lr_schedule!r}")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")
        if not (0.0 < self.beta2 < 1.0):
            raise ValueError("beta2 must lie in (0, 1)")


@dataclass
class TrainingResult:
    model: IntegratorModel
    train_loss: float
    val_loss: float
    history: list[dict] = field(default_factory=list)


class _Adam:
    def __init__(self, params: list[np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def _stack_triplets(triplets: list[StyleTriplet]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    fc = np.stack([t.f_c.flat() for t in triplets])
    fs = np.stack([t.f_s.flat() for t in triplets])
    fl = np.stack([t.f_l.flat() for t in triplets])
    return fc, fs, fl


def _data_hash(fc: np.ndarray, fs: np.ndarray, fl: np.ndarray) -> str:
    h = hashlib.sha256()
    for a in (fc, fs, fl):
        h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _forward_backward(model: IntegratorModel, x: np.ndarray, target: np.ndarray):
    """Mean-squared-error loss and gradients for one batch (erf shared
    between the GELU value and its derivative)."""
    z1 = x @ model.w1 + model.b1
    cdf1 = 0.5 * (1.0 + erf(z1 * np.sqrt(0.5)))
    h1 = z1 * cdf1
    z2 = h1 @ model.w2 + model.b2
    cdf2 = 0.5 * (1.0 + erf(z2 * np.sqrt(0.5)))
    h2 = z2 * cdf2
    out = h2 @ model.w3 + model.b3

    diff = out - target
    n = x.shape[0]
    loss = float(np.mean(diff * diff))

    d_out = (2.0 / (n * target.shape[1])) * diff
    g_w3 = h2.T @ d_out
    g_b3 = d_out.sum(axis=0)
    d_h2 = d_out @ model.w3.T
    d_z2 = d_h2 * (cdf2 + z2 * (np.exp(-0.5 * z2 * z2) * _INV_SQRT_2PI))
    g_w2 = h1.T @ d_z2
    g_b2 = d_z2.sum(axis=0)
    d_h1 = d_z2 @ model.w2.T
    d_z1 = d_h1 * (cdf1 + z1 * (np.exp(-0.5 * z1 * z1) * _INV_SQRT_2PI))
    g_w1 = x.T @ d_z1
    g_b1 = d_z1.sum(axis=0)
    return loss, [g_w1, g_b1, g_w2, g_b2, g_w3, g_b3]


def _eval_loss(model: IntegratorModel, x: np.ndarray, target: np.ndarray, batch: int = 512) -> float:
    total, count = 0.0, 0
    for i in range(0, len(x), batch):
        out = model.forward_flat(x[i : i + batch])
        d = out - target[i : i + batch]
        total += float(np.sum(d * d))
        count += d.size
    return total / max(count, 1)


def train_integrator(triplets: list[StyleTriplet], hyper: TrainerConfig | None = None) -> TrainingResult:
    """Fit the integrator on (content, style, stylized) triplets.

    Splits off a validation fraction, early-stops on its loss, and records the
    training setup verbatim in the model metadata. Raises
    TrainingDivergedError (carrying the last stable checkpoint) if the loss
    goes non-finite.
    """
    hyper = hyper or TrainerConfig()
    if len(triplets) < 2:
        raise ValueError(f"need at least 2 triplets to train, got {len(triplets)}")
    t, d = triplets[0].f_c.shape
    fc, fs, fl = _stack_triplets(triplets)
    x_all = np.concatenate([fc, fs], axis=1)
    target_all = fl if hyper.direct else fc + fs - fl

    rng = np.random.default_rng(hyper.seed)
    order = rng.permutation(len(triplets))
    n_val = int(round(len(triplets) * hyper.val_fraction))
    n_val = min(n_val, len(triplets) - 1)
    val_idx, train_idx = order[:n_val], order[n_val:]
    x_train, y_train = x_all[train_idx], target_all[train_idx]
    x_val, y_val = x_all[val_idx], target_all[val_idx]

    hidden = hyper.hidden_width or max(t * d, 64)
    model = IntegratorModel.initialize(t, d, hidden, seed=hyper.seed)
    if hyper.init_scale != 1.0:
        model.w1 *= hyper.init_scale
        model.w2 *= hyper.init_scale
    # optimization runs in float32 for throughput; checkpoints and the final
    # model come back as float64 through IntegratorModel.__init__
    for name in ("w1", "b1", "w2", "b2", "w3", "b3"):
        setattr(model, name, getattr(model, name).astype(np.float32))
    x_train = x_train.astype(np.float32)
    y_train = y_train.astype(np.float32)
    x_val = x_val.astype(np.float32)
    y_val = y_val.astype(np.float32)
    params = model.weights()
    adam = _Adam(params, hyper.lr, beta2=hyper.beta2)

    history: list[dict] = []
    best_val = np.inf
    best_model = model.copy()
    stale = 0
    last_stable = model.copy()

    for epoch in range(hyper.epochs):
        if hyper.lr_schedule == "cosine":
            adam.lr = hyper.lr * 0.5 * (1.0 + np.cos(np.pi * epoch / hyper.epochs))
        perm = rng.permutation(len(x_train))
        epoch_losses = []
        for i in range(0, len(perm), hyper.batch_size):
            idx = perm[i : i + hyper.batch_size]
            loss, grads = _forward_backward(model, x_train[idx], y_train[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {i // hyper.batch_size}",
                    checkpoint=last_stable,
                    history=history,
                )
            adam.step(params, grads)
            epoch_losses.append(loss)
        last_stable = model.copy()

        train_loss = float(np.mean(epoch_losses))
        val_loss = _eval_loss(model, x_val, y_val) if len(x_val) else train_loss
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})

        if val_loss < best_val - 1e-12:
            best_val = val_loss
            best_model = model.copy()
            stale = 0
        else:
            stale += 1
            if len(x_val) and stale >= hyper.patience:
                break

    final = best_model if len(x_val) else model.copy()
    final_train = history[-1]["train_loss"]
    final_val = float(best_val) if len(x_val) else final_train
    final.metadata.update(
        {
            "optimizer": "adam",
            "lr": hyper.lr,
            "batch_size": hyper.batch_size,
            "epochs_run": len(history),
            "epochs_max": hyper.epochs,
            "val_fraction": hyper.val_fraction,
            "seed": hyper.seed,
            "variant": "direct" if hyper.direct else "residual",
            "data_hash": _data_hash(fc, fs, fl),
            "n_triplets": len(triplets),
            "train_loss": final_train,
            "val_loss": final_val,
            "activation": "gelu",
            "flatten": "row-major",
        }
    )
    return TrainingResult(model=final, train_loss=final_train, val_loss=final_val, history=history)
