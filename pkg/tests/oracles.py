"""High-precision reference implementations used only by the tests.

These follow the textbook formulas literally in mpmath (no expm1 rewrites,
no shared code with the package), so agreement with the package is a
genuine second route rather than a restatement.
"""

import mpmath as mp

mp.mp.dps = 50
EPS = mp.mpf("1e-12")


def floored(v):
    v = [max(mp.mpf(x), EPS) for x in v]
    s = sum(v)
    return [x / s for x in v]


def kl(p, q):
    return sum(a * mp.log(a / b) for a, b in zip(p, q))


def ab(p, q, alpha, beta):
    """Alpha-beta divergence on already-floored mp vectors, five closed forms."""
    a, b = mp.mpf(alpha), mp.mpf(beta)
    if a != 0 and b != 0 and a + b != 0:
        return -sum(x**a * y**b - a / (a + b) * x ** (a + b) - b / (a + b) * y ** (a + b)
                    for x, y in zip(p, q)) / (a * b)
    if a != 0 and b == 0:
        return sum(x**a * (mp.log(x**a) - mp.log(y**a)) - x**a + y**a for x, y in zip(p, q)) / a**2
    if a != 0 and a + b == 0:
        return sum(mp.log(y**a) - mp.log(x**a) + (y**a / x**a) ** -1 - 1 for x, y in zip(p, q)) / a**2
    if a == 0 and b != 0:
        return sum(y**b * (mp.log(y**b) - mp.log(x**b)) - y**b + x**b for x, y in zip(p, q)) / b**2
    return sum((mp.log(x) - mp.log(y)) ** 2 for x, y in zip(p, q)) / 2


def jsd(p, q):
    m = [(x + y) / 2 for x, y in zip(p, q)]
    return (kl(p, m) + kl(q, m)) / 2


def softmax(f):
    f = [mp.mpf(x) for x in f]
    top = max(f)
    e = [mp.exp(x - top) for x in f]
    s = sum(e)
    return [x / s for x in e]


def entropy(q):
    return -sum(x * mp.log(x) for x in q if x > 0)


def ab_logit_grad(p, f, alpha, beta):
    """d/df_k of ab(p, softmax(f)) by mpmath numerical differentiation."""
    p = [mp.mpf(x) for x in p]
    out = []
    for k in range(len(f)):
        def g(t, k=k):
            ff = [mp.mpf(x) for x in f]
            ff[k] += t
            return ab(p, softmax(ff), alpha, beta)
        out.append(mp.diff(g, 0))
    return out


def step_delta(p, f, grad_fn, eta, y1=0, y2=1):
    """Exact Delta(y1, y2) = ln(q'(y1)/q(y1)) - ln(q'(y2)/q(y2)) after one logit step."""
    q = softmax(f)
    g = grad_fn(p, q)
    f2 = [mp.mpf(x) - eta * gk for x, gk in zip(f, g)]
    q2 = softmax(f2)
    return mp.log(q2[y1] / q[y1]) - mp.log(q2[y2] / q[y2])


def fkld_grad(p, q):
    return [b - a for a, b in zip(p, q)]


def rkld_grad(p, q):
    d = kl(q, p)
    return [-b * (mp.log(a / b) + d) for a, b in zip(p, q)]


def ab_grad(alpha, beta):
    a, b = mp.mpf(alpha), mp.mpf(beta)

    def grad(p, q):
        u = [y**b * (x**a - y**a) / a for x, y in zip(p, q)]
        s = sum(u)
        return [-(uk - y * s) for uk, y in zip(u, q)]

    return grad
