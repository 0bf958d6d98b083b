"""Diagonal-covariance Gaussian mixtures and first-order residual encoding.

The mixture is fit by EM initialized from a k-means codebook. The encoder
averages posterior-weighted, variance-scaled residuals of the descriptors
against each component:

    segment_j = (1/M) * sum_k p(j|x_k) / sqrt(prior_j) * S_j (x_k - mean_j)

with S_j the elementwise inverse of the diagonal variances by default
(``scaling="inverse"``), or their inverse square root
(``scaling="inv_sqrt"``, the conventional whitening variant).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codebook import kmeans_train, nearest_codewords
from .descriptors import DescriptorSample, DescriptorSet
from .errors import ShapeMismatchError

__all__ = ["GmmModel", "gmm_train", "gmm_posterior", "fv_encode"]

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GmmModel:
    layer: int
    priors: np.ndarray     # (m,) float64, positive, sums to 1
    means: np.ndarray      # (m, dim) float64
    variances: np.ndarray  # (m, dim) float64, floored > 0
    log_likelihood_trace: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        p = np.asarray(self.priors, dtype=np.float64).ravel()
        mu = np.asarray(self.means, dtype=np.float64)
        var = np.asarray(self.variances, dtype=np.float64)
        if mu.ndim != 2 or var.shape != mu.shape or p.size != mu.shape[0]:
            raise ShapeMismatchError("inconsistent mixture parameter shapes")
        if (p <= 0).any():
            raise ValueError("priors must be positive")
        if abs(p.sum() - 1.0) > 1e-10:
            raise ValueError(f"priors sum to {p.sum()!r}, expected 1 within 1e-10")
        if (var <= 0).any():
            raise ValueError("variances must be positive")
        object.__setattr__(self, "priors", p)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def _log_densities(x: np.ndarray, gmm_priors, gmm_means, gmm_vars) -> np.ndarray:
    """log(prior_j * N(x_i; mean_j, var_j)) for all i, j. x is (M, dim)."""
    m = gmm_means.shape[0]
    out = np.empty((x.shape[0], m), dtype=np.float64)
    log_priors = np.log(gmm_priors)
    for j in range(m):
        diff = x - gmm_means[j]
        quad = np.einsum("ij,ij->i", diff * (1.0 / gmm_vars[j]), diff)
        log_norm = -0.5 * (gmm_means.shape[1] * _LOG_2PI + np.log(gmm_vars[j]).sum())
        out[:, j] = log_priors[j] + log_norm - 0.5 * quad
    return out


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    mx = a.max(axis=1)
    return mx + np.log(np.exp(a - mx[:, None]).sum(axis=1))


def gmm_train(sample, n_components: int, max_iters: int = 100, seed: int = 0,
              tol: float = 1e-9, floor_scale: float = 1e-6,
              layer: int | None = None) -> GmmModel:
    """EM for a diagonal-covariance mixture, initialized from k-means.

    Variances are floored at floor_scale times the per-dimension data
    variance. The per-point average log-likelihood is recorded once per
    iteration and is non-decreasing (up to 1e-9 slack; flooring can bite
    on degenerate data). tol=0 disables early stopping.
    """
    if isinstance(sample, DescriptorSample):
        pts = sample.descriptors
    else:
        pts = np.asarray(sample)
    x = np.ascontiguousarray(pts, dtype=np.float64)
    if layer is None:
        layer = getattr(sample, "layer", 0)
    m_points = x.shape[0]
    if m_points < n_components:
        raise ValueError(f"{m_points} descriptors cannot support {n_components} components")

    floor = floor_scale * x.var(axis=0) + 1e-12

    km = kmeans_train(x, n_components, max_iters=max_iters, seed=seed, layer=layer)
    labels, _ = nearest_codewords(x, km.centroids)
    counts = np.bincount(labels, minlength=n_components).astype(np.float64)
    counts = np.maximum(counts, 1.0)
    priors = counts / counts.sum()
    means = km.centroids.astype(np.float64).copy()
    variances = np.empty_like(means)
    for j in range(n_components):
        members = x[labels == j]
        if members.shape[0] > 0:
            variances[j] = np.maximum(members.var(axis=0), floor)
        else:
            variances[j] = np.maximum(x.var(axis=0), floor)

    trace: list[float] = []
    for _ in range(max_iters):
        logd = _log_densities(x, priors, means, variances)
        lse = _logsumexp_rows(logd)
        ll = float(lse.mean())
        trace.append(ll)
        resp = np.exp(logd - lse[:, None])

        nk = resp.sum(axis=0)
        alive = nk > 1e-12
        nk_safe = np.maximum(nk, 1e-12)
        new_means = (resp.T @ x) / nk_safe[:, None]
        sq = (resp.T @ (x * x)) / nk_safe[:, None]
        new_vars = np.maximum(sq - new_means * new_means, floor)
        # dead components keep their previous parameters
        means[alive] = new_means[alive]
        variances[alive] = new_vars[alive]
        priors = nk_safe / nk_safe.sum()

        if tol > 0 and len(trace) >= 2 and abs(trace[-1] - trace[-2]) < tol:
            break

    return GmmModel(layer=layer, priors=priors, means=means, variances=variances,
                    log_likelihood_trace=tuple(trace))


def _posteriors(x: np.ndarray, gmm: GmmModel) -> np.ndarray:
    logd = _log_densities(x, gmm.priors, gmm.means, gmm.variances)
    lse = _logsumexp_rows(logd)
    post = np.exp(logd - lse[:, None])
    return post / post.sum(axis=1, keepdims=True)


def gmm_posterior(x, gmm: GmmModel) -> np.ndarray:
    """Posterior component responsibilities for one descriptor (log-space)."""
    v = np.asarray(x, dtype=np.float64).ravel()
    if v.size != gmm.dim:
        raise ShapeMismatchError(f"descriptor dim {v.size} does not match mixture dim {gmm.dim}")
    return _posteriors(v[None, :], gmm)[0]


def fv_encode(dset: DescriptorSet, gmm: GmmModel, normalize: bool = False,
              scaling: str = "inverse") -> np.ndarray:
    """First-order residual encoding of a descriptor set against a mixture.

    Returns the concatenation over components of the averaged
    posterior-weighted scaled residuals (length components * dim, float64).
    Invariant to descriptor order. With ``normalize`` the signed square
    root is applied entrywise and the vector is L2-normalized.
    """
    if dset.count == 0:
        raise ValueError("cannot encode an empty descriptor set")
    if dset.dim != gmm.dim:
        raise ShapeMismatchError(f"descriptor dim {dset.dim} does not match mixture dim {gmm.dim}")
    if scaling not in ("inverse", "inv_sqrt"):
        raise ValueError(f"scaling must be 'inverse' or 'inv_sqrt', got {scaling!r}")

    x = dset.vectors.astype(np.float64)
    post = _posteriors(x, gmm)  # (M, m)
    m = gmm.components
    dim = gmm.dim
    out = np.empty(m * dim, dtype=np.float64)
    inv = 1.0 / gmm.variances if scaling == "inverse" else 1.0 / np.sqrt(gmm.variances)
    for j in range(m):
        pj = post[:, j]
        resid = pj @ x - pj.sum() * gmm.means[j]
        seg = resid * inv[j] / (dset.count * np.sqrt(gmm.priors[j]))
        out[j * dim:(j + 1) * dim] = seg
    if normalize:
        out = np.sign(out) * np.sqrt(np.abs(out))
        norm = np.linalg.norm(out)
        if norm > 0:
            out /= norm
    return out
