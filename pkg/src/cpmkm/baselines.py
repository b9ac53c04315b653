"""Baseline estimators of the class probability ratio: BBSE, RLLS-style, MLLS.

All three consume the same fitted KLR as the black-box predictor.  BBSE
solves confusion-matrix moment equations; RLLS-style shrinks the solution
toward no shift with ridge regularization; MLLS runs EM on the target class
priors through the fixed source posteriors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .klr import KlrModel, klr_predict


@dataclass(frozen=True)
class ConfusionMatrix:
    """values[i][j] = joint probability of predicted class i and true class j."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("confusion matrix must be square")
        if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-10:
            raise ValueError("confusion entries must be a joint distribution")


def confusion_estimate(model: KlrModel, holdout, soft: bool = False) -> ConfusionMatrix:
    """Joint (prediction, truth) distribution of the predictor on held-out data."""
    labels = np.asarray(holdout.labels, dtype=int)
    m = model.num_classes
    counts = np.bincount(labels - 1, minlength=m)
    if (counts == 0).any():
        missing = int(np.argmin(counts)) + 1
        raise ValueError(f"class {missing} missing from the holdout set")
    probs = klr_predict(model, holdout.features)
    n = len(labels)
    c = np.zeros((m, m))
    if soft:
        for j in range(m):
            mask = labels == j + 1
            c[:, j] = probs[mask].sum(axis=0) / n
    else:
        pred = np.argmax(probs, axis=1) + 1
        for j in range(m):
            mask = labels == j + 1
            c[:, j] = np.bincount(pred[mask] - 1, minlength=m) / n
    return ConfusionMatrix(values=c)


def bbse_solve(confusion: ConfusionMatrix, target_pred_dist) -> np.ndarray:
    """Solve C w = mu by least squares; negative components clipped to zero."""
    c = confusion.values
    mu = np.asarray(target_pred_dist, dtype=float)
    smin = np.linalg.svd(c, compute_uv=False).min()
    if smin < 1e-10:
        warnings.warn("confusion matrix is ill-conditioned; using pseudo-inverse",
                      RuntimeWarning)
        w = np.linalg.pinv(c) @ mu
    else:
        w, *_ = np.linalg.lstsq(c, mu, rcond=None)
    return np.maximum(w, 0.0)


def rlls_solve(confusion: ConfusionMatrix, target_pred_dist,
               reg: float | None = None) -> np.ndarray:
    """Ridge-regularized solve of C (1 + theta) = mu, shrinking toward w = 1."""
    c = confusion.values
    m = c.shape[0]
    mu = np.asarray(target_pred_dist, dtype=float)
    if reg is None:
        reg = 1e-3 * np.trace(c) / m
    if reg < 0:
        raise ValueError("regularization must be nonnegative")
    b = mu - c @ np.ones(m)
    theta = np.linalg.solve(c.T @ c + reg * np.eye(m), c.T @ b)
    return np.maximum(1.0 + theta, 0.0)


def mlls_em(target_probs, source_priors, tol: float = 1e-8,
            max_iter: int = 10000) -> np.ndarray:
    """EM on the target class priors; returns the ratio w_m = q(m)/p(m).

    The update q_{t+1}(m) = mean_i of the posterior responsibility
    q_t(m) p(m|x_i)/p(m) / sum_j q_t(j) p(j|x_i)/p(j) is the standard
    prior-shift EM; the target log-likelihood is non-decreasing.
    """
    probs = np.atleast_2d(np.asarray(target_probs, dtype=float))
    priors = np.asarray(source_priors, dtype=float)
    if np.any(probs <= 0):
        raise ValueError("posterior entries must be strictly positive")
    if np.any(priors <= 0):
        raise ValueError("source priors must be strictly positive")
    ratio = probs / priors
    q = priors.copy()
    for _ in range(max_iter):
        weighted = ratio * q
        denom = weighted.sum(axis=1, keepdims=True)
        if not np.all(np.isfinite(denom)) or np.any(denom <= 0):
            raise ValueError("non-finite likelihood in EM iteration")
        q_next = (weighted / denom).mean(axis=0)
        if np.abs(q_next - q).sum() <= tol:
            q = q_next
            break
        q = q_next
    return q / priors


def mlls_log_likelihood(target_probs, source_priors, q) -> float:
    """Mean target log-likelihood of priors q under the fixed source posteriors."""
    ratio = np.atleast_2d(np.asarray(target_probs, dtype=float)) / np.asarray(source_priors)
    return float(np.mean(np.log(ratio @ np.asarray(q, dtype=float))))
