"""Closed-form divergence gradients and a finite-difference oracle.

Gradients are taken of the divergence term alone, either w.r.t. the
student distribution entries (treated as free variables) or w.r.t. the
student logits (pushed through the softmax Jacobian).
"""

from dataclasses import dataclass

import numpy as np

from .divergence import TAU_BRANCH, DivergenceSpec, Family, _guard, _pair, check_ab, divergence
from .errors import ParameterError
from .prob import as_logits, softmax

FD_STEP = 1e-5


@dataclass(frozen=True)
class GradResult:
    wrt_probs: np.ndarray
    wrt_logits: np.ndarray
    spec: DivergenceSpec


def _scaled_power_gap(lp, lq, alpha):
    """(p^alpha - q^alpha) / alpha divided by q^alpha, with the alpha -> 0 limit ln(p/q)."""
    log_ratio = lp - lq
    if abs(alpha) < TAU_BRANCH:
        return log_ratio
    return _guard(np.expm1(alpha * log_ratio), "(p/q)^alpha") / alpha


def ab_grad_probs(p, q, alpha, beta):
    """dD_AB/dq(k) = -q^(alpha+beta-1) ((p/q)^alpha - 1) / alpha."""
    check_ab(alpha, beta)
    p, q = _pair(p, q)
    lp, lq = np.log(p), np.log(q)
    with np.errstate(over="ignore", invalid="ignore"):
        weight = _guard(np.exp((alpha + beta - 1.0) * lq), "q^(alpha+beta-1)")
        return -weight * _scaled_power_gap(lp, lq, float(alpha))


def ab_grad_logits(p, q, alpha, beta):
    """Gradient of D_AB(p || softmax(f)) w.r.t. the logits f, evaluated at q = softmax(f).

    Entry y is -(1/alpha)[q(y)^beta (p(y)^alpha - q(y)^alpha)
    + q(y) sum_k q(k)^beta (q(k)^alpha - p(k)^alpha)]; at (1, 0) this is
    exactly q - p, and alpha -> 0 replaces (p^alpha - q^alpha)/alpha by ln(p/q).
    """
    p, q = _pair(p, q)
    alpha, beta = float(alpha), float(beta)
    check_ab(alpha, beta)
    if (alpha, beta) == (1.0, 0.0):
        return q - p
    lp, lq = np.log(p), np.log(q)
    with np.errstate(over="ignore", invalid="ignore"):
        # u(k) = q(k)^beta (p(k)^alpha - q(k)^alpha) / alpha
        u = _guard(np.exp((alpha + beta) * lq), "q^(alpha+beta)") * _scaled_power_gap(lp, lq, alpha)
        u = _guard(u, "weighted error")
    return -(u - q * u.sum(axis=-1, keepdims=True))


def _fkld_logits(p, q):
    return q - p


def _rkld_logits(p, q):
    log_ratio = np.log(p) - np.log(q)
    kl_qp = -np.sum(q * log_ratio, axis=-1, keepdims=True)
    return -q * (log_ratio + kl_qp)


def _jsd_logits(p, q):
    # dJSD/dq(k) = 0.5 ln(q(k)/m(k)); through the softmax this becomes
    # 0.5 q (ln(q/m) - KL(q || m))
    m = 0.5 * (p + q)
    log_qm = np.log(q) - np.log(m)
    return 0.5 * q * (log_qm - np.sum(q * log_qm, axis=-1, keepdims=True))


def baseline_grad_logits(p, q, spec):
    """Logit gradients of FKLD, RKLD, WSD and JSD."""
    p, q = _pair(p, q)
    fam = spec.family
    if fam is Family.FKLD:
        return _fkld_logits(p, q)
    if fam is Family.RKLD:
        return _rkld_logits(p, q)
    if fam is Family.WSD:
        return spec.wsd_forward_weight * _fkld_logits(p, q) + spec.wsd_reverse_weight * _rkld_logits(p, q)
    if fam is Family.JSD:
        return _jsd_logits(p, q)
    raise ParameterError(f"no baseline gradient for family {fam.value!r}")


def logit_gradient(p, q, spec):
    """Closed-form dD/df for any supported family, at q = softmax(f)."""
    spec = spec.canonical()
    if spec.family in (Family.FKLD, Family.RKLD, Family.WSD, Family.JSD):
        return baseline_grad_logits(p, q, spec)
    alpha, beta = spec.ab_params
    return ab_grad_logits(p, q, alpha, beta)


def prob_gradient(p, q, spec):
    """dD/dq(k) with the entries of q treated as independent variables."""
    pf, qf = _pair(p, q)
    fam = spec.family
    if fam is Family.FKLD:
        return -pf / qf
    if fam is Family.RKLD:
        return np.log(qf) - np.log(pf) + 1.0
    if fam is Family.WSD:
        return spec.wsd_forward_weight * (-pf / qf) + spec.wsd_reverse_weight * (np.log(qf) - np.log(pf) + 1.0)
    if fam is Family.JSD:
        return 0.5 * (np.log(qf) - np.log(0.5 * (pf + qf)))
    if fam is Family.ALPHA:
        # differs from the alpha-beta form by the constant 1/alpha, which the
        # softmax Jacobian annihilates
        a = spec.alpha
        return -np.exp(a * (np.log(pf) - np.log(qf))) / a
    alpha, beta = spec.ab_params
    return ab_grad_probs(pf, qf, alpha, beta)


def gradient(p, q, spec):
    return GradResult(wrt_probs=prob_gradient(p, q, spec), wrt_logits=logit_gradient(p, q, spec), spec=spec)


def fd_grad_logits(p, f, spec, h=FD_STEP):
    """Central-difference estimate of dD(p || softmax(f))/df.

    Independent of the closed forms above: it only calls ``divergence``.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ParameterError(f"finite-difference step must lie in [1e-7, 1e-3], got {h}")
    f = as_logits(f)
    if f.ndim != 1:
        raise ParameterError("fd_grad_logits expects a single logit vector")
    shift = h * np.eye(f.shape[0])
    p_rows = np.broadcast_to(np.asarray(p, dtype=np.float64), shift.shape)
    up = divergence(p_rows, softmax(f + shift), spec)
    down = divergence(p_rows, softmax(f - shift), spec)
    return (np.asarray(up) - np.asarray(down)) / (2.0 * h)


def fd_relative_error(closed, fd):
    """max_k |closed_k - fd_k| / (1 + |fd_k|)."""
    closed, fd = np.asarray(closed), np.asarray(fd)
    return float(np.max(np.abs(closed - fd) / (1.0 + np.abs(fd))))
