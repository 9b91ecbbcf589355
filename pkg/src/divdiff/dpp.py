"""Joint batch-diversity guidance through a determinantal kernel.

Features are L2-normalized per sample, combined into a Gram matrix, and
weighted by the quality outer product. The loss is the negative log-det
ratio of the jittered kernel; its analytic gradient flows through the
kernel, the normalization, and the feature extractor back to the masked
logits. Unlike the sequential guidance, every sample's update depends on
the whole batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import (
    DegenerateInputError,
    FactorizationError,
    InvalidInputError,
    NumericalError,
)
from .features import FeatureSet, backprop_to_logits, feature_set
from .odd import anneal_alpha
from .state import MaskState


@dataclass
class DppParams:
    alpha: float
    jitter: float = 1e-3
    anneal: str = "factor"

    def __post_init__(self):
        if self.alpha < 0:
            raise InvalidInputError("DppParams: alpha must be >= 0")
        if self.jitter <= 0:
            raise InvalidInputError("DppParams: jitter must be > 0")


def _normalized_features(fs: FeatureSet) -> tuple[np.ndarray, np.ndarray]:
    v = fs.features
    norms = np.linalg.norm(v, axis=1)
    if np.any(norms <= 0):
        raise DegenerateInputError("build_l_ensemble: zero-norm feature vector")
    return v / norms[:, None], norms


def build_l_ensemble(fs: FeatureSet) -> np.ndarray:
    """Quality-weighted similarity kernel of the normalized batch features."""
    if fs.qualities is None:
        raise InvalidInputError("build_l_ensemble: feature set is missing qualities")
    normed, _ = _normalized_features(fs)
    gram = normed @ normed.T
    return gram * np.outer(fs.qualities, fs.qualities)


def _logdet_with_retry(m: np.ndarray, eps: float) -> float:
    # One bounded recovery attempt: add 10*eps of extra jitter, then give up.
    try:
        return linalg.cholesky_logdet(m)
    except FactorizationError:
        pass
    try:
        return linalg.cholesky_logdet(m + 10.0 * eps * np.eye(m.shape[0]))
    except FactorizationError as exc:
        raise NumericalError(f"log-det failed after jitter retry: {exc}") from exc


def _inverse_with_retry(m: np.ndarray, eps: float) -> np.ndarray:
    try:
        return linalg.spd_inverse(m)
    except FactorizationError:
        pass
    try:
        return linalg.spd_inverse(m + 10.0 * eps * np.eye(m.shape[0]))
    except FactorizationError as exc:
        raise NumericalError(f"SPD inverse failed after jitter retry: {exc}") from exc


def dpp_loss(l_matrix, eps: float) -> float:
    """Negative log-likelihood of batch diversity under the L-ensemble.

    Lower loss means a larger volume spanned by the batch features.
    """
    a = np.asarray(l_matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError("dpp_loss: expected a square kernel matrix")
    if eps <= 0:
        raise InvalidInputError("dpp_loss: eps must be > 0")
    eye = np.eye(a.shape[0])
    first = _logdet_with_retry(a + eps * eye, eps)
    second = _logdet_with_retry(a + (1.0 + eps) * eye, eps)
    return float(-(first - second))


def dpp_grad_logits(logits, state: MaskState, eps: float,
                    top_k: int | None = None) -> np.ndarray:
    """Analytic gradient of the DPP loss with respect to the logits.

    Quality scores are treated as constants, matching the sequential
    guidance; one-hot rows stay constants inside the feature extractor.
    """
    x = np.asarray(logits, dtype=np.float64)
    fs, ud = feature_set(x, state, top_k=top_k)
    normed, norms = _normalized_features(fs)
    q = fs.qualities
    l_matrix = (normed @ normed.T) * np.outer(q, q)
    eye = np.eye(l_matrix.shape[0])
    grad_l = -(
        _inverse_with_retry(l_matrix + eps * eye, eps)
        - _inverse_with_retry(l_matrix + (1.0 + eps) * eye, eps)
    )
    grad_gram = grad_l * np.outer(q, q)
    grad_normed = 2.0 * grad_gram @ normed
    radial = np.sum(grad_normed * normed, axis=1, keepdims=True)
    grad_features = (grad_normed - radial * normed) / norms[:, None]
    return backprop_to_logits(grad_features, fs, ud)


def dpp_step(logits, state: MaskState, params: DppParams, t: int,
             total_steps: int | None = None, top_k: int | None = None) -> np.ndarray:
    """One joint update: X - alpha_t * grad of the DPP loss."""
    x = np.asarray(logits, dtype=np.float64)
    alpha_t = anneal_alpha(params.alpha, t, params.anneal, total_steps)
    if alpha_t == 0.0:
        return x.copy()
    grad = dpp_grad_logits(x, state, params.jitter, top_k=top_k)
    if not grad.any():
        return x.copy()
    return x - alpha_t * grad
