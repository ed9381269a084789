"""Divergences between discrete distributions.

The alpha-beta family is evaluated through five closed forms: the generic
expression and the four continuous extensions that take over when alpha,
beta or alpha + beta vanishes. All functions reduce over the last axis, so
a (batch, C) pair of arrays yields a (batch,) vector of divergences.
"""

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import InputValidationError, NumericOverflowError, ParameterError
from .prob import EPS_FLOOR, floor

TAU_BRANCH = 1e-8
OVERFLOW_CAP = 1e300


class Family(str, Enum):
    ALPHA_BETA = "ab"
    FKLD = "fkld"
    RKLD = "rkld"
    ALPHA = "alpha"
    BETA = "beta"
    HELLINGER = "hellinger"
    SQUARED_EUCLIDEAN = "sqeuclid"
    WSD = "wsd"
    JSD = "jsd"


# (alpha, beta) for the named members of the alpha-beta family; None means
# the value comes from DivergenceSpec.beta.
_AB_MEMBERS = {
    Family.FKLD: (1.0, 0.0),
    Family.RKLD: (0.0, 1.0),
    Family.HELLINGER: (0.5, 0.5),
    Family.SQUARED_EUCLIDEAN: (1.0, 1.0),
    Family.BETA: (1.0, None),
}


@dataclass(frozen=True)
class DivergenceSpec:
    """Family selector plus parameters.

    ``alpha``/``beta`` are read by the alpha-beta, alpha and beta families;
    the WSD weights only by ``Family.WSD``.
    """

    family: Family = Family.ALPHA_BETA
    alpha: float = 1.0
    beta: float = 0.0
    wsd_forward_weight: float = 0.5
    wsd_reverse_weight: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))
        check_ab(self.alpha, self.beta)
        if self.family is Family.WSD:
            w_f, w_r = self.wsd_forward_weight, self.wsd_reverse_weight
            if w_f < 0 or w_r < 0 or (w_f == 0 and w_r == 0):
                raise ParameterError("WSD weights must be non-negative and not both zero")

    @property
    def ab_params(self):
        """(alpha, beta) when the family lives inside the alpha-beta family, else None."""
        if self.family is Family.ALPHA_BETA:
            return self.alpha, self.beta
        if self.family is Family.ALPHA:
            return self.alpha, 1.0 - self.alpha
        if self.family in _AB_MEMBERS:
            a, b = _AB_MEMBERS[self.family]
            return a, self.beta if b is None else b
        return None

    def canonical(self):
        """Route the exact FKLD/RKLD corners of the alpha-beta family to their closed forms."""
        if self.family is Family.ALPHA_BETA:
            if (self.alpha, self.beta) == (1.0, 0.0):
                return replace(self, family=Family.FKLD)
            if (self.alpha, self.beta) == (0.0, 1.0):
                return replace(self, family=Family.RKLD)
        return self

    @classmethod
    def ab(cls, alpha, beta):
        return cls(Family.ALPHA_BETA, alpha, beta)


def _pair(p, q, eps=EPS_FLOOR):
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.ndim == 0 or q.ndim == 0 or p.shape[-1] != q.shape[-1]:
        raise InputValidationError(f"dimension mismatch: {p.shape} vs {q.shape}")
    if p.shape[-1] < 2:
        raise InputValidationError("distributions need at least 2 classes")
    for name, v in (("p", p), ("q", q)):
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise InputValidationError(f"{name} must be finite and non-negative")
    return floor(p, eps), floor(q, eps)


def _guard(x, what):
    if not np.all(np.isfinite(x)) or np.any(np.abs(x) > OVERFLOW_CAP):
        raise NumericOverflowError(f"{what} overflowed; alpha/beta too extreme for the floored inputs")
    return x


def check_ab(alpha, beta):
    if not (math.isfinite(alpha) and math.isfinite(beta)):
        raise ParameterError(f"alpha and beta must be finite, got ({alpha}, {beta})")


def _phi(x):
    # x - 1 + e^{-x} >= 0, accurate for small |x|
    return _guard(np.expm1(-x), "exponential term") + x


def _reduce(terms):
    out = _guard(terms.sum(axis=-1), "divergence")
    return float(out) if out.ndim == 0 else out


def ab_terms(p, q, alpha, beta):
    """Per-class summands of the alpha-beta divergence on floored inputs."""
    check_ab(alpha, beta)
    lp, lq = np.log(p), np.log(q)
    a_zero = abs(alpha) < TAU_BRANCH
    b_zero = abs(beta) < TAU_BRANCH
    if a_zero and b_zero:
        return 0.5 * (lp - lq) ** 2
    if a_zero:
        return _guard(np.exp(beta * lq), "q^beta") * _phi(beta * (lq - lp)) / beta**2
    if b_zero:
        return _guard(np.exp(alpha * lp), "p^alpha") * _phi(alpha * (lp - lq)) / alpha**2
    if abs(alpha + beta) < TAU_BRANCH:
        return _phi(alpha * (lq - lp)) / alpha**2
    # Expanding x^e in powers of e shows each summand equals
    # (ln p - ln q)^2 exp[a, b, c], the second divided difference of exp at
    # a = alpha ln p + beta ln q, b = s ln p, c = s ln q. That form has no
    # 1/(alpha beta) cancellation and is non-negative by construction.
    s = alpha + beta
    return (lp - lq) ** 2 * _exp_divided_difference(alpha * lp + beta * lq, s * lp, s * lq)


def _phi1(z):
    """(e^z - 1) / z with the value 1 at z = 0."""
    safe = np.where(z == 0, 1.0, z)
    return np.where(z == 0, 1.0, np.expm1(safe) / safe)


_SERIES_TERMS = 30


def _exp_divided_difference(a, b, c):
    """exp[a, b, c] = integral of exp over the 2-simplex with these vertices."""
    n0, n1, n2 = np.sort(np.stack(np.broadcast_arrays(a, b, c)), axis=0)
    x, y = n1 - n0, n2 - n0
    near = y < 1.0
    # clustered nodes: sum_m h_m(x, y) / (m + 2)!, h_m the complete
    # homogeneous polynomial, via h_m = y h_(m-1) + x^m
    xs, ys = np.where(near, x, 0.0), np.where(near, y, 0.0)
    h, xm, fact, series = np.ones_like(xs), np.ones_like(xs), 2.0, 0.5 * np.ones_like(xs)
    for m in range(1, _SERIES_TERMS):
        xm = xm * xs
        h = ys * h + xm
        fact *= m + 2
        series = series + h / fact
    ysafe = np.where(near, 1.0, y)
    spread = (np.exp(x) * _phi1(y - x) - _phi1(x)) / ysafe
    return _guard(np.exp(n0) * np.where(near, series, spread), "exponential term")


def ab_divergence(p, q, alpha, beta):
    """Alpha-beta divergence D(p || q) for any real (alpha, beta).

    Parameters within ``TAU_BRANCH`` of alpha = 0, beta = 0 or alpha + beta = 0
    use the corresponding limit expression.

    Examples
    --------
    >>> round(ab_divergence([0.9, 0.1], [0.5, 0.5], 1.0, 0.0), 6)
    0.368064
    """
    p, q = _pair(p, q)
    with np.errstate(over="ignore", invalid="ignore"):
        return _reduce(ab_terms(p, q, float(alpha), float(beta)))


def fkld(p, q):
    p, q = _pair(p, q)
    return _reduce(p * (np.log(p) - np.log(q)))


def rkld(p, q):
    p, q = _pair(p, q)
    return _reduce(q * (np.log(q) - np.log(p)))


def alpha_divergence(p, q, alpha):
    """Amari alpha-divergence; the alpha -> 0, 1 limits belong to rkld/fkld.

    For normalized inputs this coincides with ``ab_divergence(p, q, alpha, 1 - alpha)``.
    """
    alpha = float(alpha)
    if abs(alpha) < TAU_BRANCH or abs(alpha - 1.0) < TAU_BRANCH:
        raise ParameterError("alpha-divergence is undefined at alpha in {0, 1}; use rkld/fkld")
    p, q = _pair(p, q)
    with np.errstate(over="ignore"):
        mixed = _guard(np.exp(alpha * np.log(p) + (1.0 - alpha) * np.log(q)), "p^alpha q^(1-alpha)")
    out = _guard((mixed.sum(axis=-1) - 1.0) / (alpha * (alpha - 1.0)), "divergence")
    return float(out) if out.ndim == 0 else out


def wsd(p, q, w_f, w_r):
    if w_f < 0 or w_r < 0 or (w_f == 0 and w_r == 0):
        raise ParameterError("WSD weights must be non-negative and not both zero")
    return w_f * fkld(p, q) + w_r * rkld(p, q)


def jsd(p, q):
    p, q = _pair(p, q)
    m = 0.5 * (p + q)
    return 0.5 * fkld(p, m) + 0.5 * fkld(q, m)


def divergence(p, q, spec):
    """Evaluate ``spec`` on (p, q)."""
    fam = spec.family
    if fam is Family.FKLD:
        return fkld(p, q)
    if fam is Family.RKLD:
        return rkld(p, q)
    if fam is Family.WSD:
        return wsd(p, q, spec.wsd_forward_weight, spec.wsd_reverse_weight)
    if fam is Family.JSD:
        return jsd(p, q)
    if fam is Family.ALPHA:
        return alpha_divergence(p, q, spec.alpha)
    alpha, beta = spec.ab_params
    return ab_divergence(p, q, alpha, beta)
