"""Small log-domain helpers shared by the weight recursions."""

from __future__ import annotations

import numpy as np

NEG_INF = -np.inf


def logsumexp(logw: np.ndarray) -> float:
    logw = np.asarray(logw, dtype=float)
    m = np.max(logw)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(logw - m))))


def log_normalize(logw: np.ndarray) -> np.ndarray:
    """Shift log weights so they describe a probability vector."""
    total = logsumexp(logw)
    if not np.isfinite(total):
        raise ValueError("cannot normalise: all weights are zero")
    return np.asarray(logw, dtype=float) - total


def softmax(logw: np.ndarray) -> np.ndarray:
    p = np.exp(log_normalize(logw))
    return p / p.sum()


def safe_log(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    out = np.full(w.shape, NEG_INF)
    pos = w > 0
    out[pos] = np.log(w[pos])
    return out
