"""Dense numerical kernels shared by the guidance modules.

Everything operates on float64 numpy arrays: stable row softmax, the
softmax vector-Jacobian product used for analytic backprop, and SPD
helpers (log-determinant and inverse via Cholesky). Inputs are validated
against the documented preconditions; callers are expected to hold the
returned arrays immutable.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import FactorizationError, InvalidInputError

# Matrices are symmetrized silently when the asymmetry is below this bound;
# larger asymmetry is treated as caller error.
SYMMETRY_TOL = 1e-10


def _as_vector(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise InvalidInputError(f"{name}: expected a non-empty 1-D vector")
    return v


def softmax_row(logits) -> np.ndarray:
    """Softmax of a single logits vector, computed with max-subtraction.

    The output sums to 1 and preserves the argmax of the input. Raises
    InvalidInputError on non-finite entries.
    """
    v = _as_vector(logits, "softmax_row")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("softmax_row: non-finite logits")
    e = np.exp(v - v.max())
    return e / e.sum()


def softmax_rows(logits) -> np.ndarray:
    """Stable softmax along the last axis of an n-D array."""
    x = np.asarray(logits, dtype=np.float64)
    if x.shape[-1] == 0:
        raise InvalidInputError("softmax_rows: empty last axis")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("softmax_rows: non-finite logits")
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_vjp(probs, upstream) -> np.ndarray:
    """Backpropagate a probability-space gradient through softmax.

    Given probabilities p = softmax(z) and an upstream gradient u = dL/dp,
    returns dL/dz = p * (u - (u . p)).
    """
    p = _as_vector(probs, "softmax_vjp")
    u = _as_vector(upstream, "softmax_vjp")
    if p.shape != u.shape:
        raise InvalidInputError(
            f"softmax_vjp: length mismatch ({p.size} probs vs {u.size} upstream)"
        )
    return p * (u - np.dot(u, p))


def _as_spd_input(m, name: str) -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise InvalidInputError(f"{name}: expected a non-empty square matrix")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name}: non-finite entries")
    scale = max(1.0, np.abs(a).max())
    if np.abs(a - a.T).max() > SYMMETRY_TOL * scale:
        raise InvalidInputError(f"{name}: matrix is not symmetric within {SYMMETRY_TOL:g}")
    # Kernel construction introduces rounding asymmetry; remove it here.
    return 0.5 * (a + a.T)


def cholesky_logdet(m) -> float:
    """Log-determinant of a symmetric positive definite matrix.

    Uses a triangular factorization; raises FactorizationError when the
    matrix is not positive definite (callers may add jitter and retry).
    """
    a = _as_spd_input(m, "cholesky_logdet")
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"cholesky_logdet: {exc}") from exc
    return float(2.0 * np.sum(np.log(np.diag(chol))))


def spd_inverse(m) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via Cholesky."""
    a = _as_spd_input(m, "spd_inverse")
    try:
        factor = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise FactorizationError(f"spd_inverse: {exc}") from exc
    inv = scipy.linalg.cho_solve(factor, np.eye(a.shape[0]), check_finite=False)
    return 0.5 * (inv + inv.T)
