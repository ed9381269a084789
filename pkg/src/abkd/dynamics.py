"""Single-step probability-mass dynamics under gradient descent on the logits.

One step moves f to f - eta * grad, and the per-class log mass ratio
ln(q_{t+1}(y) / q_t(y)) splits into -eta * grad(y) plus a normalizer
shared by every class.
"""

from dataclasses import dataclass

import numpy as np

from .divergence import TAU_BRANCH, Family, _pair
from .errors import InputValidationError, ParameterError
from .gradient import logit_gradient
from .prob import as_logits, log_softmax


@dataclass(frozen=True)
class StepTrace:
    p: np.ndarray
    q_before: np.ndarray
    q_after: np.ndarray
    eta: float
    log_r: np.ndarray
    grad: np.ndarray
    normalizer: float
    bound_rhs: np.ndarray
    spec: object = None


def _ab_bound(p, q, alpha, beta):
    lp, lq = np.log(p), np.log(q)
    if abs(alpha) < TAU_BRANCH:
        gap = lp - lq
    else:
        gap = (np.exp(alpha * lp) - np.exp(alpha * lq)) / alpha
    weighted = np.exp(beta * lq) * np.abs(gap)
    return weighted + q * weighted.sum()


def _rkld_bound(p, q):
    err = np.abs(np.log(p) - np.log(q))
    return q * (err + np.sum(q * err))


def gradient_bound(p, q, spec):
    """Per-class upper bound on |grad(y)| from the triangle inequality.

    FKLD/RKLD follow the forward/reverse KL bounds, alpha-beta members the
    (a)(b) + q(y) sum (a1)(b1) form; WSD and JSD use the same argument
    applied to their own closed-form gradients.
    """
    p, q = _pair(p, q)
    spec = spec.canonical()
    fam = spec.family
    if fam is Family.FKLD:
        return np.abs(p - q)
    if fam is Family.RKLD:
        return _rkld_bound(p, q)
    if fam is Family.WSD:
        return spec.wsd_forward_weight * np.abs(p - q) + spec.wsd_reverse_weight * _rkld_bound(p, q)
    if fam is Family.JSD:
        err = np.abs(np.log(q) - np.log(0.5 * (p + q)))
        return 0.5 * q * (err + np.sum(q * err))
    alpha, beta = spec.ab_params
    return _ab_bound(p, q, alpha, beta)


def step(p, f, spec, eta):
    """Take one gradient step on the logits and record the mass dynamics.

    Examples
    --------
    >>> from abkd.divergence import DivergenceSpec
    >>> tr = step([0.9, 0.1], [0.0, 0.0], DivergenceSpec("fkld"), 0.1)
    >>> np.round(tr.q_after, 6)
    array([0.519989, 0.480011])
    """
    if not eta > 0:
        raise ParameterError(f"learning rate must be positive, got {eta}")
    f = as_logits(f)
    if f.ndim != 1:
        raise InputValidationError("step expects a single logit vector")
    p = np.asarray(p, dtype=np.float64)
    log_q = log_softmax(f)
    q = np.exp(log_q)
    grad = logit_gradient(p, q, spec)
    f_next = f - eta * grad
    log_q_next = log_softmax(f_next)
    log_r = log_q_next - log_q
    offsets = log_r + eta * grad
    normalizer = float(offsets.mean())
    bound = eta * gradient_bound(p, q, spec) + abs(normalizer)
    return StepTrace(
        p=p,
        q_before=q,
        q_after=np.exp(log_q_next),
        eta=float(eta),
        log_r=log_r,
        grad=grad,
        normalizer=normalizer,
        bound_rhs=bound,
        spec=spec,
    )


def normalizer_spread(trace):
    """max_y |log_r(y) + eta grad(y) - N|; zero up to rounding."""
    return float(np.max(np.abs(trace.log_r + trace.eta * trace.grad - trace.normalizer)))


def delta(trace, y1, y2):
    """Difference of log mass ratios log_r(y1) - log_r(y2)."""
    c = trace.log_r.shape[0]
    for y in (y1, y2):
        if not 0 <= y < c:
            raise InputValidationError(f"class index {y} out of range for C={c}")
    if y1 == y2:
        raise InputValidationError("delta needs two distinct classes")
    return float(trace.log_r[y1] - trace.log_r[y2])


def first_order_delta(trace, y1, y2):
    return float(-trace.eta * (trace.grad[y1] - trace.grad[y2]))


def bound_check(trace):
    """Largest excess of |log_r(y)| over its bound; <= 0 when the bound holds."""
    return float(np.max(np.abs(trace.log_r) - trace.bound_rhs))
