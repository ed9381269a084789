"""Probability-simplex and logit primitives.

Distributions are plain float64 numpy arrays whose last axis indexes the
C classes; leading axes are treated as a batch. Nothing here mutates its
inputs.
"""

import numpy as np

from .errors import InputValidationError, ParameterError

EPS_FLOOR = 1e-12
SUM_TOL = 1e-12


def as_logits(f):
    f = np.asarray(f, dtype=np.float64)
    if f.ndim == 0 or f.shape[-1] < 2:
        raise InputValidationError(f"logits need at least 2 classes, got shape {f.shape}")
    if not np.all(np.isfinite(f)):
        raise InputValidationError("logits contain non-finite entries")
    return f


def as_simplex(q, tol=1e-9):
    """Validate ``q`` as a (batch of) distribution(s) and return it as float64."""
    q = np.asarray(q, dtype=np.float64)
    if q.ndim == 0 or q.shape[-1] < 2:
        raise InputValidationError(f"a distribution needs at least 2 classes, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise InputValidationError("distribution contains non-finite entries")
    if np.any(q < 0):
        raise InputValidationError("distribution contains negative entries")
    if np.any(np.abs(q.sum(axis=-1) - 1.0) > tol):
        raise InputValidationError("distribution entries do not sum to 1")
    return q


def floor(q, eps=EPS_FLOOR):
    """Clamp every entry to at least ``eps`` and renormalize.

    A no-op (up to rounding of the final division) when every entry already
    exceeds ``eps``.
    """
    q = np.maximum(np.asarray(q, dtype=np.float64), eps)
    return q / q.sum(axis=-1, keepdims=True)


def normalize(raw, eps=EPS_FLOOR):
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim == 0 or raw.shape[-1] < 2:
        raise InputValidationError(f"need at least 2 entries, got shape {raw.shape}")
    if not np.all(np.isfinite(raw)) or np.any(raw < 0):
        raise InputValidationError("entries must be finite and non-negative")
    total = raw.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise InputValidationError("cannot normalize an all-zero vector")
    return floor(raw / total, eps)


def log_softmax(f, temperature=1.0):
    f = as_logits(f)
    if not temperature > 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    z = f / temperature
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(f, temperature=1.0):
    """Max-stabilized softmax of ``f / temperature`` along the last axis.

    Examples
    --------
    >>> softmax([np.log(9.0), 0.0])
    array([0.9, 0.1])
    """
    f = as_logits(f)
    if not temperature > 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    z = f / temperature
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_jacobian(q):
    """d softmax_i / d f_j = q_i (delta_ij - q_j); symmetric, rows sum to zero."""
    q = as_simplex(q)
    return np.einsum("...i,ij->...ij", q, np.eye(q.shape[-1])) - q[..., :, None] * q[..., None, :]


def jacobian_vector(q, v):
    """Apply the softmax Jacobian at ``q`` to ``v`` without forming the matrix."""
    return q * v - q * np.sum(q * v, axis=-1, keepdims=True)


def shannon_entropy(q):
    """Entropy in nats with 0 ln 0 := 0."""
    q = as_simplex(q)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(q > 0, q * np.log(np.where(q > 0, q, 1.0)), 0.0)
    return np.maximum(-terms.sum(axis=-1), 0.0)
