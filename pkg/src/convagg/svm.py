"""One-vs-all linear SVMs trained by dual coordinate descent.

Each class gets an independent L2-regularized L1-hinge binary SVM:

    min_w  0.5*||w||^2 + C * sum_i max(0, 1 - y_i * <w, x_i>)

with the bias folded in as an extra constant feature of value
``bias_scale`` (so the bias is regularized, liblinear-style). The dual is
solved coordinate-wise with a seeded random permutation per epoch, which
makes training deterministic for a fixed seed. The dual objective never
decreases across updates.

Feature L2 normalization for concatenated hybrids is a pipeline-level
preprocessing step (see pipeline.PipelineConfig.feature_normalize); this
module always sees the matrix it should train on, and ``decision_scores``
is the raw dot product plus bias.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DegenerateClassWarning, ShapeMismatchError

__all__ = ["TrainConfig", "LinearModel", "train_ova", "decision_scores",
           "primal_objective", "dual_objective", "C_GRID"]

C_GRID = tuple(2.0 ** p for p in range(-5, 6))


@dataclass(frozen=True)
class TrainConfig:
    c: float = 1.0
    max_epochs: int = 1000
    tol: float = 1e-8
    seed: int = 0
    bias_scale: float = 1.0

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("regularization constant C must be positive")


@dataclass(frozen=True)
class LinearModel:
    class_names: tuple[str, ...]
    weights: np.ndarray  # (n_classes, dim) float64
    biases: np.ndarray   # (n_classes,) float64
    config: TrainConfig
    skipped: tuple[str, ...] = ()
    dual_traces: dict = field(default_factory=dict, compare=False)

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def _train_binary(xaug: np.ndarray, y: np.ndarray, cfg: TrainConfig, rng):
    n = xaug.shape[0]
    qii = np.einsum("ij,ij->i", xaug, xaug)
    qii = np.maximum(qii, 1e-12)
    alpha = np.zeros(n)
    w = np.zeros(xaug.shape[1])
    trace = []
    for _ in range(cfg.max_epochs):
        order = rng.permutation(n).astype(np.int64)
        max_pg = kernels.dcd_epoch(xaug, y, alpha, w, float(cfg.c), order, qii)
        trace.append(float(alpha.sum() - 0.5 * (w @ w)))
        if max_pg < cfg.tol:
            break
    return w, alpha, trace


def train_ova(features: np.ndarray, labels: np.ndarray, class_names,
              config: TrainConfig = TrainConfig()) -> LinearModel:
    """Train one binary SVM per class on 0/1 indicator labels.

    ``features`` is (n, D); ``labels`` is (n, n_classes) with 1 marking
    membership. A class whose column is all-one-value is skipped with a
    DegenerateClassWarning and scored as the constant +-1.
    """
    x = np.ascontiguousarray(np.asarray(features, dtype=np.float64))
    lab = np.asarray(labels)
    class_names = tuple(str(c) for c in class_names)
    if x.ndim != 2 or lab.ndim != 2 or lab.shape != (x.shape[0], len(class_names)):
        raise ShapeMismatchError(
            f"features {x.shape} and labels {lab.shape} inconsistent with "
            f"{len(class_names)} classes"
        )
    if x.shape[0] < 2:
        raise ValueError("need at least two training examples")

    n, dim = x.shape
    xaug = np.empty((n, dim + 1))
    xaug[:, :dim] = x
    xaug[:, dim] = config.bias_scale

    weights = np.zeros((len(class_names), dim))
    biases = np.zeros(len(class_names))
    skipped = []
    traces = {}
    jobs = []
    for ci, cname in enumerate(class_names):
        y = np.where(lab[:, ci] > 0, 1.0, -1.0)
        if np.all(y == y[0]):
            warnings.warn(
                f"class {cname!r} has a single label value; scoring it as constant",
                DegenerateClassWarning,
            )
            skipped.append(cname)
            biases[ci] = y[0]
            continue
        jobs.append((ci, cname, y))

    # per-class trainers are independent; xaug is shared read-only, and each
    # class seeds its own generator, so results don't depend on scheduling
    def fit(job):
        ci, cname, y = job
        rng = np.random.default_rng([config.seed, ci])
        return ci, cname, _train_binary(xaug, y, config, rng)

    n_workers = min(len(jobs), os.cpu_count() or 1)
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            fitted = list(pool.map(fit, jobs))
    else:
        fitted = [fit(job) for job in jobs]
    for ci, cname, (w, _, trace) in fitted:
        weights[ci] = w[:dim]
        biases[ci] = w[dim] * config.bias_scale
        traces[cname] = tuple(trace)
    return LinearModel(class_names, weights, biases, config,
                       skipped=tuple(skipped), dual_traces=traces)


def decision_scores(model: LinearModel, feature) -> np.ndarray:
    """Per-class scores <w_c, f> + b_c (no calibration).

    Accepts a single feature vector (returns (n_classes,)) or a matrix of
    rows (returns (n, n_classes)).
    """
    f = np.asarray(feature, dtype=np.float64)
    single = f.ndim == 1
    f2 = f[None, :] if single else f
    if f2.shape[1] != model.dim:
        raise ShapeMismatchError(
            f"feature dim {f2.shape[1]} does not match model dim {model.dim}"
        )
    scores = f2 @ model.weights.T + model.biases
    return scores[0] if single else scores


def primal_objective(w: np.ndarray, bias: float, x: np.ndarray, y: np.ndarray,
                     c: float, bias_scale: float = 1.0) -> float:
    """0.5*(||w||^2 + (b/B)^2) + C * hinge, the objective DCD minimizes."""
    margins = y * (x @ w + bias)
    hinge = np.maximum(0.0, 1.0 - margins).sum()
    wb = bias / bias_scale
    return 0.5 * (w @ w + wb * wb) + c * hinge


def dual_objective(alpha: np.ndarray, w: np.ndarray) -> float:
    return float(alpha.sum() - 0.5 * (w @ w))


def l2_normalize_rows(x: np.ndarray) -> np.ndarray:
    """Unit-normalize each row, leaving zero rows untouched."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms > 0, norms, 1.0)
