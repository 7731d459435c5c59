"""GCN + GRU next-step congestion forecaster with hand-written gradients.

Shapes used throughout: a batch of windows is ``(B, N, T, F)`` (sample, node,
step, feature), targets are ``(B, N)``. Weight matrices act on row vectors,
so a layer computes ``x @ W + b`` with ``W`` of shape (in, out).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import kernels
from .geodata import SnapshotSeries, TrainTestSplit

VARIANTS = ("full", "gru_only", "gcn_only")

GRU_PARAMS = ("update_in", "update_rec", "update_bias",
              "reset_in", "reset_rec", "reset_bias",
              "cand_in", "cand_rec", "cand_bias")


@dataclass(frozen=True)
class NormalizedPropagator:
    matrix: np.ndarray

    @property
    def n(self) -> int:
        return len(self.matrix)


def build_propagator(adj) -> NormalizedPropagator:
    """D^-1/2 (A + I) D^-1/2 with D the row sums of A + I.

    ``adj`` may be directed; it is used as given, not symmetrised.
    """
    a = np.asarray(getattr(adj, "weights", adj), dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency must be square")
    if not np.all(np.isfinite(a)):
        raise ValueError("adjacency must be finite")
    a_tilde = a + np.eye(len(a))
    inv_sqrt = 1.0 / np.sqrt(a_tilde.sum(axis=1))
    return NormalizedPropagator(inv_sqrt[:, None] * a_tilde * inv_sqrt[None, :])


def gcn_forward(prop, H: np.ndarray, W: np.ndarray) -> np.ndarray:
    """ReLU(P @ H @ W)."""
    P = getattr(prop, "matrix", prop)
    if P.shape[1] != H.shape[0] or H.shape[1] != W.shape[0]:
        raise ValueError(f"shape mismatch: P{P.shape} H{H.shape} W{W.shape}")
    return np.maximum(P @ H @ W, 0.0)


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "full"
    input_dim: int = 3
    gcn_dim: int = 16
    gru_dim: int = 16
    window: int = 10
    seed: int = 0
    epochs: int = 200
    learning_rate: float = 0.5
    init_scale: float = 0.5
    momentum: float = 0.9

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if min(self.input_dim, self.gcn_dim, self.gru_dim, self.window) < 1:
            raise ValueError("dimensions and window must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.init_scale > 0:
            raise ValueError("init_scale must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    F, G, H = config.input_dim, config.gcn_dim, config.gru_dim
    shapes: dict[str, tuple[int, ...]] = {"gcn_weight": (F, G)}
    if config.variant == "gcn_only":
        shapes["readout_weight"] = (G, H)
        shapes["readout_bias"] = (H,)
    else:
        for gate in ("update", "reset", "cand"):
            shapes[f"{gate}_in"] = (G, H)
            shapes[f"{gate}_rec"] = (H, H)
            shapes[f"{gate}_bias"] = (H,)
    shapes["head_weight"] = (H,)
    shapes["head_bias"] = (1,)
    return shapes


@dataclass
class ModelState:
    variant: str
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "ModelState":
        return ModelState(self.variant, {k: v.copy() for k, v in self.params.items()})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.params.values())

    def to_json(self) -> dict:
        return {
            "variant": self.variant,
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                       for k, v in self.params.items()},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ModelState":
        params = {k: np.array(p["data"], dtype=np.float64).reshape(p["shape"])
                  for k, p in doc["params"].items()}
        return cls(doc["variant"], params)


def init_state(config: ModelConfig) -> ModelState:
    rng = np.random.default_rng(config.seed)
    a = config.init_scale
    params = {name: rng.uniform(-a, a, size=shape)
              for name, shape in param_shapes(config).items()}
    return ModelState(config.variant, params)


def gru_step(state: ModelState, x: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
    """One GRU update for a single input vector."""
    p = state.params
    z = expit(x @ p["update_in"] + h_prev @ p["update_rec"] + p["update_bias"])
    r = expit(x @ p["reset_in"] + h_prev @ p["reset_rec"] + p["reset_bias"])
    c = np.tanh(x @ p["cand_in"] + (r * h_prev) @ p["cand_rec"] + p["cand_bias"])
    return (1.0 - z) * h_prev + z * c


@dataclass(frozen=True)
class Forecast:
    values: np.ndarray


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {name}")


def _forward_batch(state: ModelState, config: ModelConfig, P: np.ndarray, X: np.ndarray):
    B, N, T, F = X.shape
    if T != config.window:
        raise ValueError(f"window has {T} steps, model expects {config.window}")
    if P.shape != (N, N):
        raise ValueError(f"propagator is {P.shape}, windows have {N} nodes")
    p = state.params
    mixed = X if config.variant == "gru_only" else np.einsum("ij,bjtf->bitf", P, X)
    pre = mixed @ p["gcn_weight"]
    emb = np.maximum(pre, 0.0)
    G = emb.shape[-1]
    cache = {"mixed": mixed, "pre": pre}
    if config.variant == "gcn_only":
        last = emb[:, :, -1, :].reshape(B * N, G)
        hid = np.tanh(last @ p["readout_weight"] + p["readout_bias"])
        cache["last"] = last
    else:
        rows = np.ascontiguousarray(emb.reshape(B * N, T, G))
        hs, zs, rs, cs = kernels.gru_forward(
            rows, *(np.ascontiguousarray(p[k]) for k in GRU_PARAMS))
        hid = hs[:, T]
        cache.update(rows=rows, hs=hs, zs=zs, rs=rs, cs=cs)
    cache["hid"] = hid
    pred = expit(hid @ p["head_weight"] + p["head_bias"][0]).reshape(B, N)
    _check_finite("forward output", pred)
    return pred, cache


def forward(state: ModelState, config: ModelConfig, prop, window: np.ndarray) -> Forecast:
    """Predict next-step risk for every node from one N x T x F window."""
    P = getattr(prop, "matrix", prop)
    pred, _ = _forward_batch(state, config, P, np.asarray(window, dtype=np.float64)[None])
    return Forecast(pred[0])


def mse_loss(pred, target) -> float:
    pred = np.asarray(getattr(pred, "values", pred), dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"pred {pred.shape} vs target {target.shape}")
    return float(np.mean((pred - target) ** 2))


def backward(state: ModelState, config: ModelConfig, prop, windows, targets,
             reduction: str = "mean"):
    """Loss and exact gradient of every parameter.

    ``windows`` is one N x T x F window or a batch (B, N, T, F) with matching
    targets. With ``reduction="mean"`` the loss is the MSE over all
    (sample, node) pairs; ``"sum"`` drops the division.
    """
    P = getattr(prop, "matrix", prop)
    X = np.asarray(windows, dtype=np.float64)
    Y = np.asarray(targets, dtype=np.float64)
    if X.ndim == 3:
        X, Y = X[None], Y[None]
    pred, cache = _forward_batch(state, config, P, X)
    B, N, T, F = X.shape
    p = state.params
    err = pred - Y
    scale = 1.0 / err.size if reduction == "mean" else 1.0
    loss = float(np.sum(err * err) * scale)

    d_out = (2.0 * scale * err * pred * (1.0 - pred)).reshape(B * N)
    hid = cache["hid"]
    grads = {"head_weight": hid.T @ d_out, "head_bias": np.array([d_out.sum()])}
    d_hid = np.outer(d_out, p["head_weight"])
    G = config.gcn_dim

    if config.variant == "gcn_only":
        d_a = d_hid * (1.0 - hid * hid)
        grads["readout_weight"] = cache["last"].T @ d_a
        grads["readout_bias"] = d_a.sum(axis=0)
        d_emb = np.zeros((B, N, T, G))
        d_emb[:, :, -1, :] = (d_a @ p["readout_weight"].T).reshape(B, N, G)
    else:
        gru_grads, d_rows = kernels.gru_backward(
            cache["rows"], cache["hs"], cache["zs"], cache["rs"], cache["cs"],
            np.ascontiguousarray(d_hid),
            *(np.ascontiguousarray(p[k]) for k in
              ("update_in", "update_rec", "reset_in", "reset_rec", "cand_in", "cand_rec")))
        grads.update(zip(GRU_PARAMS, gru_grads))
        d_emb = d_rows.reshape(B, N, T, G)

    d_pre = d_emb * (cache["pre"] > 0.0)
    grads["gcn_weight"] = cache["mixed"].reshape(-1, F).T @ d_pre.reshape(-1, G)
    for name, g in grads.items():
        _check_finite(f"gradient of {name}", g)
    return loss, {k: grads[k] for k in p}


def make_windows(series: SnapshotSeries, target_steps: range, window: int):
    """All (input window, target) pairs whose target step lies in ``target_steps``.

    Inputs span steps [s - window, s) over every feature; targets are channel 0
    at step s.
    """
    v = series.values
    steps = [s for s in target_steps if s - window >= 0]
    X = np.stack([v[:, s - window:s, :] for s in steps]) if steps else np.empty((0,))
    Y = np.stack([v[:, s, 0] for s in steps]) if steps else np.empty((0,))
    return X, Y


def train(series: SnapshotSeries, split: TrainTestSplit, prop, config: ModelConfig):
    """Full-batch gradient descent with heavy-ball momentum on the training MSE.

    Returns the trained state and the loss history; entry i is the training
    MSE at the start of epoch i + 1.
    """
    if series.num_features != config.input_dim:
        raise ValueError(f"series has {series.num_features} features, "
                         f"model expects {config.input_dim}")
    tr = split.train_steps
    X, Y = make_windows(series, range(tr.start + config.window, tr.stop), config.window)
    if len(X) == 0:
        raise ValueError(f"train range of {len(tr)} steps is too short for window {config.window}")
    state = init_state(config)
    history: list[float] = []
    lr, mu = config.learning_rate, config.momentum
    velocity = {k: np.zeros_like(v) for k, v in state.params.items()}
    for _ in range(config.epochs):
        loss, grads = backward(state, config, prop, X, Y)
        history.append(loss)
        for k, g in grads.items():
            velocity[k] = mu * velocity[k] - lr * g
            state.params[k] += velocity[k]
        if not state.is_finite():
            raise FloatingPointError(f"parameters diverged after epoch {len(history)}")
    return state, history


def predict_windows(state, config, prop, X) -> np.ndarray:
    P = getattr(prop, "matrix", prop)
    pred, _ = _forward_batch(state, config, P, X)
    return pred


def evaluate(state, config, prop, series: SnapshotSeries, split: TrainTestSplit) -> float:
    """Mean test MSE over every window whose target falls in the test range."""
    X, Y = make_windows(series, split.test_steps, config.window)
    if len(X) == 0:
        raise ValueError("no test window fits the series")
    return float(np.mean((predict_windows(state, config, prop, X) - Y) ** 2))


def save_model(path, state: ModelState, config: ModelConfig) -> None:
    doc = {"config": asdict(config), **state.to_json()}
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_model(path) -> tuple[ModelState, ModelConfig]:
    doc = json.loads(Path(path).read_text())
    return ModelState.from_json(doc), ModelConfig(**doc["config"])
