"""Trainable graph-spectral filter: convolution, MAE loss, gradient, training.

The filter is one free gain per graph frequency. Applying it is the graph
convolution ``U diag(h) U^T x``. Training runs subgradient descent on the
per-step mean absolute error against ground truth, with inputs corrupted
by the run's observation model so the filter learns the test-time noise
and masking. Gains start at all-ones (the identity filter) and are frozen
after training.
"""
import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .graphs import GftBasis
from .signals import ObservationModel, Observation, TimeVaryingSignal, augment_by_concatenation, observe


class FilterDivergenceError(RuntimeError):
    """Training produced a non-finite gain; carries the MAE trace so far."""

    def __init__(self, step: int, trace):
        super().__init__(f"filter gains diverged at training step {step}")
        self.step = step
        self.trace = np.asarray(trace, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class SpectralFilter:
    """Per-frequency gain vector pinned to the basis it was trained against."""
    gains: np.ndarray
    basis_ref: str

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=np.float64)
        if g.ndim != 1:
            raise ValueError("gains must be a 1-D vector")
        if not np.all(np.isfinite(g)):
            raise ValueError("gains must be finite")
        g = g.copy()
        g.setflags(write=False)
        object.__setattr__(self, "gains", g)


@dataclass(frozen=True)
class TrainConfig:
    """Gradient-descent hyperparameters for filter training.

    ``learning_rate=0`` is allowed and leaves the gains at initialization
    (useful to run the identity filter through the same pipeline).
    ``window`` is the running-mean width used by early stopping.
    """
    learning_rate: float = 1e-3
    max_iters: int = 2000
    patience: int = 10
    tol: float = 1e-4
    augment_copies: int = 1
    window: int = 50

    def __post_init__(self):
        if self.learning_rate < 0.0:
            raise ValueError("learning_rate must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.tol < 0.0:
            raise ValueError("tol must be >= 0")
        if self.augment_copies < 1:
            raise ValueError("augment_copies must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")


@dataclass(frozen=True, eq=False)
class TrainResult:
    filter: SpectralFilter
    mae_trace: np.ndarray
    stop_reason: str


def graph_convolve(basis: GftBasis, h: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Filter a node signal in the spectral domain: ``U diag(h) U^T x``."""
    h = np.asarray(h, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    n = basis.n_nodes
    if h.shape != (n,) or x.shape != (n,):
        raise ValueError(f"expected length-{n} gains and signal, got {h.shape} and {x.shape}")
    u = basis.eigenvectors
    return u @ (h * (u.T @ x))


def mae(x_g: np.ndarray, x_tilde: np.ndarray) -> float:
    """Mean absolute error (1/N) sum |x_g - x_tilde|."""
    x_g = np.asarray(x_g, dtype=np.float64)
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    if x_g.shape != x_tilde.shape:
        raise ValueError(f"length mismatch: {x_g.shape} vs {x_tilde.shape}")
    return float(np.mean(np.abs(x_g - x_tilde)))


def mae_gradient(basis: GftBasis, h: np.ndarray, x: np.ndarray, x_g: np.ndarray) -> np.ndarray:
    """Subgradient of the MAE with respect to the per-frequency gains.

    With ``s_n = sign(x_tilde_n - x_g_n)`` (sign(0) taken as 0) and
    ``x_tilde = graph_convolve(basis, h, x)``, component k is
    ``(1/N) * (U^T s)_k * (U^T x)_k``.
    """
    x_g = np.asarray(x_g, dtype=np.float64)
    x_tilde = graph_convolve(basis, h, x)
    if x_g.shape != x_tilde.shape:
        raise ValueError("ground truth length does not match basis dimension")
    s = np.sign(x_tilde - x_g)
    u = basis.eigenvectors
    return (u.T @ s) * (u.T @ np.asarray(x, dtype=np.float64)) / basis.n_nodes


def train_filter(
    basis: GftBasis,
    train_signal: TimeVaryingSignal,
    obs_model: ObservationModel,
    cfg: TrainConfig,
) -> TrainResult:
    """Learn filter gains by gradient descent over corrupted training steps.

    Each step t synthesizes a noisy masked input from ground-truth column
    t of the (augmented) training signal, fills missing nodes with their
    training-set mean, convolves, records the MAE against ground truth,
    and takes one gradient step. Halts on sample exhaustion, ``max_iters``,
    or when the running-window MAE stops improving by more than ``tol``
    for ``patience`` consecutive steps.

    Raises:
        FilterDivergenceError: if any gain becomes non-finite.
    """
    n = basis.n_nodes
    if train_signal.n_nodes != n:
        raise ValueError("training signal does not match basis dimension")
    if obs_model.n_nodes != n:
        raise ValueError("observation model does not match basis dimension")

    data = augment_by_concatenation(train_signal, cfg.augment_copies).values
    fill = train_signal.values.mean(axis=1)
    h = np.ones(n, dtype=np.float64)
    trace = []
    window = deque(maxlen=cfg.window)
    best = np.inf
    streak = 0
    stop_reason = "samples-exhausted"

    n_steps = min(cfg.max_iters, data.shape[1])
    if n_steps == cfg.max_iters:
        stop_reason = "max-iters"
    for t in range(n_steps):
        col = data[:, t]
        obs = observe(col, obs_model, t)
        x_in = np.where(obs.observed, obs.values, fill)
        x_tilde = graph_convolve(basis, h, x_in)
        loss = mae(col, x_tilde)
        trace.append(loss)

        h = h - cfg.learning_rate * mae_gradient(basis, h, x_in, col)
        if not np.all(np.isfinite(h)):
            raise FilterDivergenceError(t, trace)

        window.append(loss)
        if len(window) < cfg.window:
            continue  # no running-window MAE until a full window exists
        running = float(np.mean(window))
        if running < best - cfg.tol:
            best = running
            streak = 0
        else:
            streak += 1
            if streak >= cfg.patience:
                stop_reason = "early-stop"
                break

    filt = SpectralFilter(gains=h, basis_ref=basis.ref())
    return TrainResult(filter=filt, mae_trace=np.asarray(trace), stop_reason=stop_reason)


def denoise(filt: SpectralFilter, basis: GftBasis, obs: Observation, fill: np.ndarray) -> np.ndarray:
    """Fill missing entries of an observation, then apply the trained filter.

    ``fill`` supplies the values used at unobserved nodes (the online loop
    passes the previous estimate). Output is defined at every node.
    """
    if filt.basis_ref != basis.ref():
        raise ValueError("filter was trained against a different basis")
    fill = np.asarray(fill, dtype=np.float64)
    if fill.shape != obs.values.shape:
        raise ValueError("fill vector length does not match observation")
    x_in = np.where(obs.observed, obs.values, fill)
    return graph_convolve(basis, filt.gains, x_in)


def identity_filter(basis: GftBasis) -> SpectralFilter:
    """All-ones gains: convolution becomes the identity map."""
    return SpectralFilter(gains=np.ones(basis.n_nodes), basis_ref=basis.ref())


def save_filter_json(path, result: TrainResult, cfg: TrainConfig) -> None:
    """Export gains plus training metadata as JSON."""
    final_mae = float(result.mae_trace[-1]) if result.mae_trace.size else None
    payload = {
        "basis_ref": result.filter.basis_ref,
        "gains": [float(g) for g in result.filter.gains],
        "train_config": {
            "learning_rate": cfg.learning_rate,
            "max_iters": cfg.max_iters,
            "patience": cfg.patience,
            "tol": cfg.tol,
            "augment_copies": cfg.augment_copies,
            "window": cfg.window,
        },
        "final_mae": final_mae,
        "stop_reason": result.stop_reason,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_filter_json(path) -> SpectralFilter:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return SpectralFilter(gains=np.asarray(payload["gains"]), basis_ref=payload["basis_ref"])
