"""The 3-layer residual integrator network.

The network maps concatenated (content, style) token features to a predicted
residual; at inference the integrated feature is content + style - residual.
Weights live in plain numpy arrays so forward passes are deterministic and the
model file stays a self-describing archive.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import erf

from .features import PromptFeature

PARAM_TARGET_DEFAULT = 25_450_000  # for the SDXL-class token profile

_SQRT2 = float(np.sqrt(2.0))
_INV_SQRT_2PI = float(1.0 / np.sqrt(2.0 * np.pi))


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    phi = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * phi


def hidden_width_for_param_target(in_dim: int, out_dim: int, target: int) -> int:
    """Width of the two equal hidden layers that makes the parameter count hit ``target``.

    params(h) = h^2 + h (in + out + 2) + out for layers in->h, h->h, h->out
    with biases; solved as the positive root of the quadratic.
    """
    b = in_dim + out_dim + 2
    disc = b * b + 4 * (target - out_dim)
    if disc <= 0:
        raise ValueError(f"parameter target {target} too small for dims {in_dim}->{out_dim}")
    h = int(round((-b + np.sqrt(disc)) / 2))
    if h < 1:
        raise ValueError(f"parameter target {target} too small for dims {in_dim}->{out_dim}")
    return h


def parameter_count(in_dim: int, hidden: int, out_dim: int) -> int:
    return in_dim * hidden + hidden + hidden * hidden + hidden + hidden * out_dim + out_dim


@dataclass(frozen=True)
class IntegratorProfile:
    """Token geometry plus the hidden width derived from it."""

    name: str
    token_count: int
    token_dim: int
    hidden_width: int

    @property
    def in_dim(self) -> int:
        return 2 * self.token_count * self.token_dim

    @property
    def out_dim(self) -> int:
        return self.token_count * self.token_dim


def default_profile(name: str = "sdxl") -> IntegratorProfile:
    if name == "sdxl":
        t, d = 4, 2048
        hidden = hidden_width_for_param_target(2 * t * d, t * d, PARAM_TARGET_DEFAULT)
        return IntegratorProfile("sdxl", t, d, hidden)
    if name == "toy":
        return IntegratorProfile("toy", 4, 64, 256)
    raise ValueError(f"unknown integrator profile {name!r}")


class IntegratorModel:
    """Three affine layers with GELU between, in -> h -> h -> out."""

    def __init__(self, weights: list[np.ndarray], token_count: int, token_dim: int, metadata: dict | None = None):
        w1, b1, w2, b2, w3, b3 = weights
        in_dim = 2 * token_count * token_dim
        out_dim = token_count * token_dim
        ok = (
            w1.ndim == 2 and w2.ndim == 2 and w3.ndim == 2
            and w1.shape[0] == in_dim
            and w2.shape[0] == w1.shape[1]
            and w3.shape == (w2.shape[1], out_dim)
            and b1.shape == (w1.shape[1],)
            and b2.shape == (w2.shape[1],)
            and b3.shape == (out_dim,)
        )
        if not ok:
            raise ValueError(
                f"inconsistent layer shapes {[w.shape for w in (w1, w2, w3)]} "
                f"for token profile {token_count}x{token_dim}"
            )
        self.w1, self.b1 = w1.astype(np.float64), b1.astype(np.float64)
        self.w2, self.b2 = w2.astype(np.float64), b2.astype(np.float64)
        self.w3, self.b3 = w3.astype(np.float64), b3.astype(np.float64)
        self.token_count = token_count
        self.token_dim = token_dim
        self.metadata = dict(metadata or {})

    # -- construction -------------------------------------------------------

    @classmethod
    def initialize(cls, token_count: int, token_dim: int, hidden_width: int, seed: int = 0) -> "IntegratorModel":
        in_dim = 2 * token_count * token_dim
        out_dim = token_count * token_dim
        rng = np.random.default_rng(seed)

        def glorot(fan_in, fan_out):
            return rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / (fan_in + fan_out))

        weights = [
            glorot(in_dim, hidden_width),
            np.zeros(hidden_width),
            glorot(hidden_width, hidden_width),
            np.zeros(hidden_width),
            glorot(hidden_width, out_dim),
            np.zeros(out_dim),
        ]
        return cls(weights, token_count, token_dim, {"init_seed": seed, "activation": "gelu", "flatten": "row-major"})

    @classmethod
    def from_profile(cls, profile: IntegratorProfile, seed: int = 0) -> "IntegratorModel":
        model = cls.initialize(profile.token_count, profile.token_dim, profile.hidden_width, seed)
        model.metadata["profile"] = profile.name
        return model

    @classmethod
    def zero(cls, token_count: int, token_dim: int, hidden_width: int) -> "IntegratorModel":
        in_dim = 2 * token_count * token_dim
        out_dim = token_count * token_dim
        weights = [
            np.zeros((in_dim, hidden_width)),
            np.zeros(hidden_width),
            np.zeros((hidden_width, hidden_width)),
            np.zeros(hidden_width),
            np.zeros((hidden_width, out_dim)),
            np.zeros(out_dim),
        ]
        return cls(weights, token_count, token_dim, {"activation": "gelu", "flatten": "row-major"})

    # -- inspection ----------------------------------------------------------

    @property
    def hidden_width(self) -> int:
        return self.w1.shape[1]

    @property
    def param_count(self) -> int:
        return sum(a.size for a in (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3))

    def weights(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]

    def copy(self) -> "IntegratorModel":
        return IntegratorModel([a.copy() for a in self.weights()], self.token_count, self.token_dim, dict(self.metadata))

    def data_fingerprint(self) -> str:
        h = hashlib.sha256()
        for a in self.weights():
            h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return h.hexdigest()[:16]

    # -- forward -------------------------------------------------------------

    def forward_flat(self, x: np.ndarray) -> np.ndarray:
        """Forward pass on already-flattened inputs of shape (N, 2*T*D)."""
        if x.ndim != 2 or x.shape[1] != 2 * self.token_count * self.token_dim:
            raise ValueError(f"expected input (N, {2 * self.token_count * self.token_dim}), got {x.shape}")
        h1 = gelu(x @ self.w1 + self.b1)
        h2 = gelu(h1 @ self.w2 + self.b2)
        return h2 @ self.w3 + self.b3

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Self-describing archive: little-endian float32 weights + metadata block."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(
            path,
            w1=self.w1.astype("<f4"),
            b1=self.b1.astype("<f4"),
            w2=self.w2.astype("<f4"),
            b2=self.b2.astype("<f4"),
            w3=self.w3.astype("<f4"),
            b3=self.b3.astype("<f4"),
            token_shape=np.array([self.token_count, self.token_dim], dtype="<i8"),
            metadata=np.frombuffer(json.dumps(self.metadata, sort_keys=True).encode(), dtype=np.uint8),
        )

    @classmethod
    def load(cls, path: str | Path) -> "IntegratorModel":
        with np.load(path) as z:
            token_count, token_dim = (int(v) for v in z["token_shape"])
            metadata = json.loads(bytes(z["metadata"]).decode())
            weights = [z[k].astype(np.float64) for k in ("w1", "b1", "w2", "b2", "w3", "b3")]
        return cls(weights, token_count, token_dim, metadata)


def _check_feature(model: IntegratorModel, f: PromptFeature, role: str) -> None:
    if f.shape != (model.token_count, model.token_dim):
        raise ValueError(
            f"{role} feature shape {f.shape} does not match model profile "
            f"{model.token_count}x{model.token_dim}"
        )


def mlp_forward(model: IntegratorModel, f_c: PromptFeature, f_s: PromptFeature) -> PromptFeature:
    """Predicted residual for a (content, style) pair."""
    _check_feature(model, f_c, "content")
    _check_feature(model, f_s, "style")
    x = np.concatenate([f_c.flat(), f_s.flat()])[None, :]
    out = model.forward_flat(x)[0].reshape(model.token_count, model.token_dim)
    return PromptFeature(out, "residual")


def integrate_features(model: IntegratorModel, f_c: PromptFeature, f_s: PromptFeature) -> PromptFeature:
    """Integrated prompt: content + style - predicted residual.

    With a zero model this degrades gracefully to the additive combination
    content + style, which already carries usable content and style signal.
    """
    residual = mlp_forward(model, f_c, f_s)
    return PromptFeature(f_c.tokens + f_s.tokens - residual.tokens, "integrated")
