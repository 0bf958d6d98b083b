"""Average precision and mean average precision over ranked scores.

Default is the 11-point interpolated variant (the 2007 detection-benchmark
protocol): sort by descending score with ties broken by original index,
then average the maximum precision at recall >= r over
r in {0.0, 0.1, ..., 1.0}. The continuous all-points variant is available
behind ``interpolation="all_points"``.
"""

from __future__ import annotations

import numpy as np

__all__ = ["average_precision", "mean_ap", "format_ap_table"]


def _ranked_relevance(scores, relevant):
    s = np.asarray(scores, dtype=np.float64)
    rel = np.asarray(relevant).astype(bool)
    if s.shape != rel.shape or s.ndim != 1:
        raise ValueError("scores and relevance must be parallel 1-D lists")
    if not rel.any():
        raise ValueError("average precision undefined with no relevant items")
    order = np.lexsort((np.arange(s.size), -s))
    return rel[order]


def average_precision(scores, relevant, interpolation: str = "11point") -> float:
    """AP of a ranking given per-item scores and binary relevance."""
    rel = _ranked_relevance(scores, relevant)
    hits = np.cumsum(rel)
    ranks = np.arange(1, rel.size + 1)
    precision = hits / ranks
    recall = hits / hits[-1]

    if interpolation == "11point":
        total = 0.0
        for r in np.linspace(0.0, 1.0, 11):
            at_least = precision[recall >= r - 1e-10]
            total += at_least.max() if at_least.size else 0.0
        return total / 11.0
    if interpolation == "all_points":
        return float(precision[rel].sum() / hits[-1])
    raise ValueError(f"unknown interpolation {interpolation!r}")


def mean_ap(per_class) -> float:
    """Arithmetic mean of per-class APs."""
    vals = list(per_class)
    if not vals:
        raise ValueError("mean over an empty AP list")
    return float(np.mean(vals))


def format_ap_table(class_names, aps) -> str:
    """Tab-separated (class, AP) rows plus a final mAP line."""
    lines = [f"{name}\t{ap:.6f}" for name, ap in zip(class_names, aps)]
    lines.append(f"mAP\t{mean_ap(aps):.6f}")
    return "\n".join(lines) + "\n"
