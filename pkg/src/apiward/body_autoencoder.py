"""Content-stage anomaly detection: a dense autoencoder over hashed text.

Serialized request content (headers, query params, body) is token-hashed
into a signed 256-dimensional vector. An autoencoder with a
256-128-64-16-64-128-256 layer chain, batch normalization after every
dense affine and rectifiers on the hidden layers learns to reconstruct
benign vectors; the anomaly score of a request is the mean squared
reconstruction error, and anything above a high percentile of the
training errors is flagged.

Everything here is plain numpy (float64) so the arithmetic is
deterministic, inspectable and matched exactly by the compiled scoring
kernel.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels
from .request_model import SerializedContent

FEATURE_DIM = 256
LAYER_DIMS = (256, 128, 64, 16, 64, 128, 256)
RELU_FLAGS = (True, True, False, True, True, False)  # bottleneck/output: identity
BN_EPS = 1e-8
BN_MOMENTUM = 0.99
THRESHOLD_PERCENTILE = 99.99999


class DegenerateInput(UserWarning):
    """All training vectors identical: the threshold collapses to ~0."""


@dataclass
class TrainConfig:
    """Optimizer and schedule settings for autoencoder training."""

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 20
    batch_size: int = 128
    seed: int = 7

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class AEThreshold:
    """Calibrated flagging threshold over training reconstruction errors."""

    value: float
    percentile: float = THRESHOLD_PERCENTILE
    training_error_count: int = 0

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "percentile": self.percentile,
            "training_error_count": self.training_error_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AEThreshold":
        return cls(data["value"], data["percentile"], data["training_error_count"])


@dataclass
class ScoreResult:
    """Outcome of scoring one feature vector."""

    score: float
    reconstruction: np.ndarray
    flagged: bool


@dataclass
class _Layer:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    relu: bool

    @classmethod
    def init(cls, n_in: int, n_out: int, relu: bool, rng: np.random.Generator) -> "_Layer":
        bound = 1.0 / np.sqrt(n_in)
        return cls(
            W=rng.uniform(-bound, bound, size=(n_out, n_in)),
            b=np.zeros(n_out),
            gamma=np.ones(n_out),
            beta=np.zeros(n_out),
            running_mean=np.zeros(n_out),
            running_var=np.ones(n_out),
            relu=relu,
        )


def hash_features(content: Union[SerializedContent, str], seed: int = _kernels.FNV_OFFSET) -> np.ndarray:
    """Hash serialized content into the fixed 256-dim signed vector.

    Tokens are the ASCII-whitespace-separated chunks of the utf-8 text;
    each adds +-1 at a hash-derived index, repeats accumulate. Output is
    identical across platforms and process restarts.
    """
    text = content.text if isinstance(content, SerializedContent) else content
    return _kernels.hash_tokens(text.encode("utf-8"), seed)


def quantile_weibull(sorted_scores: np.ndarray, q: float) -> float:
    """Empirical quantile, Weibull convention: position (n+1)*q, clamped.

    With this convention any percentile above 1 - 1/(n+1) returns the
    maximum, which gives the zero-false-positive training guarantee for
    every realistic training-set size.
    """
    n = len(sorted_scores)
    if n == 0:
        raise ValueError("no scores to take a quantile of")
    h = (n + 1) * q
    if h <= 1.0:
        return float(sorted_scores[0])
    if h >= n:
        return float(sorted_scores[-1])
    j = int(np.floor(h))
    g = h - j
    return float(sorted_scores[j - 1] + g * (sorted_scores[j] - sorted_scores[j - 1]))


class AEModel:
    """The trained autoencoder: weights, batch-norm stats, threshold."""

    def __init__(self, layers: list[_Layer], seed: int, hash_seed: int = _kernels.FNV_OFFSET):
        self.layers = layers
        self.seed = seed
        self.hash_seed = hash_seed
        self.threshold: Optional[AEThreshold] = None
        self._kernel_layers: Optional[list[tuple]] = None

    @classmethod
    def initialize(cls, seed: int, hash_seed: int = _kernels.FNV_OFFSET) -> "AEModel":
        rng = np.random.default_rng(seed)
        layers = [
            _Layer.init(LAYER_DIMS[i], LAYER_DIMS[i + 1], RELU_FLAGS[i], rng)
            for i in range(len(LAYER_DIMS) - 1)
        ]
        return cls(layers, seed, hash_seed)

    # ---------------------------------------------------------------- train

    def _forward_train(self, X: np.ndarray) -> dict:
        """Training-mode forward pass (batch statistics), with caches."""
        cache = {"A": [X], "Z": [], "mu": [], "var": [], "Zhat": [], "Y": []}
        A = X
        for layer in self.layers:
            Z = A @ layer.W.T + layer.b
            mu = Z.mean(axis=0)
            var = Z.var(axis=0)  # biased, matching inference eps semantics
            Zhat = (Z - mu) / np.sqrt(var + BN_EPS)
            Y = layer.gamma * Zhat + layer.beta
            A = np.maximum(Y, 0.0) if layer.relu else Y
            cache["Z"].append(Z)
            cache["mu"].append(mu)
            cache["var"].append(var)
            cache["Zhat"].append(Zhat)
            cache["Y"].append(Y)
            cache["A"].append(A)
        return cache

    def training_loss(self, X: np.ndarray) -> float:
        """Batch-statistics loss with no side effects (for grad checks)."""
        cache = self._forward_train(X)
        diff = cache["A"][-1] - X
        return float(np.mean(diff * diff))

    def loss_and_grads(self, X: np.ndarray) -> tuple[float, list[dict], dict]:
        """Loss, per-layer parameter gradients and batch stats for X."""
        B = X.shape[0]
        cache = self._forward_train(X)
        out = cache["A"][-1]
        diff = out - X
        loss = float(np.mean(diff * diff))
        dA = 2.0 * diff / diff.size
        grads: list[dict] = [None] * len(self.layers)  # type: ignore[list-item]
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            Y = cache["Y"][i]
            Zhat = cache["Zhat"][i]
            Z = cache["Z"][i]
            mu = cache["mu"][i]
            var = cache["var"][i]
            A_prev = cache["A"][i]
            dY = dA * (Y > 0.0) if layer.relu else dA
            dgamma = np.sum(dY * Zhat, axis=0)
            dbeta = np.sum(dY, axis=0)
            dZhat = dY * layer.gamma
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            Zc = Z - mu
            dvar = np.sum(dZhat * Zc, axis=0) * (-0.5) * inv_std**3
            dmu = -np.sum(dZhat, axis=0) * inv_std + dvar * np.mean(-2.0 * Zc, axis=0)
            dZ = dZhat * inv_std + dvar * 2.0 * Zc / B + dmu / B
            grads[i] = {
                "W": dZ.T @ A_prev,
                "b": np.sum(dZ, axis=0),
                "gamma": dgamma,
                "beta": dbeta,
            }
            dA = dZ @ layer.W
        stats = {"mu": cache["mu"], "var": cache["var"]}
        return loss, grads, stats

    # ---------------------------------------------------------------- score

    def _as_kernel_layers(self) -> list[tuple]:
        if self._kernel_layers is None:
            self._kernel_layers = [
                (
                    np.ascontiguousarray(l.W),
                    np.ascontiguousarray(l.b),
                    np.ascontiguousarray(l.gamma),
                    np.ascontiguousarray(l.beta),
                    np.ascontiguousarray(l.running_mean),
                    np.ascontiguousarray(l.running_var),
                    True,
                    l.relu,
                )
                for l in self.layers
            ]
        return self._kernel_layers

    def score(self, x: np.ndarray) -> ScoreResult:
        """Score one vector with running statistics (inference mode).

        Calibration scores the training set through this same code path,
        so a replayed training vector can never exceed the threshold by
        a rounding difference between implementations.
        """
        mse, recon = _kernels.ae_score(
            np.ascontiguousarray(x, dtype=np.float64), self._as_kernel_layers(), BN_EPS
        )
        thr = self.threshold.value if self.threshold is not None else float("inf")
        return ScoreResult(score=mse, reconstruction=recon, flagged=mse > thr)

    # ----------------------------------------------------------- persistence

    def save(self, path: str) -> None:
        arrays: dict[str, np.ndarray] = {}
        for i, l in enumerate(self.layers):
            arrays[f"W{i}"] = l.W
            arrays[f"b{i}"] = l.b
            arrays[f"gamma{i}"] = l.gamma
            arrays[f"beta{i}"] = l.beta
            arrays[f"rmean{i}"] = l.running_mean
            arrays[f"rvar{i}"] = l.running_var
        meta = {
            "format": 1,
            "dims": list(LAYER_DIMS),
            "relu": list(RELU_FLAGS),
            "seed": self.seed,
            "hash_seed": self.hash_seed,
            "threshold": self.threshold.to_dict() if self.threshold else None,
        }
        arrays["meta"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path: str) -> "AEModel":
        data = np.load(path)
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        layers = [
            _Layer(
                W=data[f"W{i}"],
                b=data[f"b{i}"],
                gamma=data[f"gamma{i}"],
                beta=data[f"beta{i}"],
                running_mean=data[f"rmean{i}"],
                running_var=data[f"rvar{i}"],
                relu=bool(meta["relu"][i]),
            )
            for i in range(len(meta["dims"]) - 1)
        ]
        model = cls(layers, meta["seed"], meta["hash_seed"])
        if meta["threshold"] is not None:
            model.threshold = AEThreshold.from_dict(meta["threshold"])
        return model


class _Adam:
    """Adam optimizer over the model's parameter list."""

    def __init__(self, model: AEModel, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = [
            {k: np.zeros_like(getattr(l, k)) for k in ("W", "b", "gamma", "beta")}
            for l in model.layers
        ]
        self.v = [
            {k: np.zeros_like(getattr(l, k)) for k in ("W", "b", "gamma", "beta")}
            for l in model.layers
        ]

    def step(self, model: AEModel, grads: list[dict]) -> None:
        cfg = self.cfg
        self.t += 1
        c1 = 1.0 - cfg.beta1**self.t
        c2 = 1.0 - cfg.beta2**self.t
        for i, layer in enumerate(model.layers):
            for key in ("W", "b", "gamma", "beta"):
                g = grads[i][key]
                m = self.m[i][key]
                v = self.v[i][key]
                m *= cfg.beta1
                m += (1.0 - cfg.beta1) * g
                v *= cfg.beta2
                v += (1.0 - cfg.beta2) * g * g
                param = getattr(layer, key)
                param -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)


def train(benign: Union[np.ndarray, Sequence[np.ndarray]], cfg: Optional[TrainConfig] = None) -> AEModel:
    """Train the autoencoder on benign feature vectors.

    Mini-batch Adam on MSE for `cfg.epochs` epochs; batch normalization
    uses batch statistics here and the accumulated running statistics at
    inference. Single-threaded numpy keeps runs with the same seed
    bit-identical.
    """
    if cfg is None:
        cfg = TrainConfig()
    X = np.asarray(benign, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != FEATURE_DIM:
        raise ValueError(f"expected (n, {FEATURE_DIM}) training matrix, got {X.shape}")
    if X.shape[0] < cfg.batch_size:
        raise ValueError(
            f"need at least batch_size={cfg.batch_size} vectors, got {X.shape[0]}"
        )
    if np.all(X == X[0]):
        warnings.warn(
            "all training vectors are identical; threshold will collapse to ~0",
            DegenerateInput,
        )
    model = AEModel.initialize(cfg.seed)
    adam = _Adam(model, cfg)
    rng = np.random.default_rng(cfg.seed)
    n = X.shape[0]
    for _epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = X[order[start : start + cfg.batch_size]]
            _loss, grads, stats = model.loss_and_grads(batch)
            for i, layer in enumerate(model.layers):
                layer.running_mean *= BN_MOMENTUM
                layer.running_mean += (1.0 - BN_MOMENTUM) * stats["mu"][i]
                layer.running_var *= BN_MOMENTUM
                layer.running_var += (1.0 - BN_MOMENTUM) * stats["var"][i]
            adam.step(model, grads)
    model._kernel_layers = None  # weights changed; rebuild lazily
    return model


def calibrate_threshold(model: AEModel, training_scores: Sequence[float]) -> AEThreshold:
    """Fix the flagging threshold at the high percentile of training error.

    For any training set smaller than ten million samples the percentile
    position clamps to the maximum observed error, so replaying the
    training set can never raise a flag (comparison is strictly greater).
    """
    scores = np.sort(np.asarray(training_scores, dtype=np.float64))
    value = quantile_weibull(scores, THRESHOLD_PERCENTILE / 100.0)
    threshold = AEThreshold(
        value=value,
        percentile=THRESHOLD_PERCENTILE,
        training_error_count=len(scores),
    )
    model.threshold = threshold
    return threshold
