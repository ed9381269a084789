"""Randomized verification of the two-class mass-allocation theorems.

Every case compares Delta(y1, y2) = log_r(y1) - log_r(y2) between two
divergences after one logit step from the same (p, q_t). The normalizer is
shared by all classes, so Delta = -eta (grad(y1) - grad(y2)) exactly and we
evaluate it from the closed-form logit gradients. Classes y1, y2 are the
first two coordinates; the other C - 2 entries are free.

Case hypotheses (y1 = 0, y2 = 1):

  case1  delta1 < q(y1) = q(y2) <= p(y1),  p(y1) >= p(y2) + zeta
  case2  p(y1) < q(y1) = q(y2) <= 1 - delta2,  p(y1) >= p(y2) + zeta
  case3  q(y2) + zeta <= q(y1) <= 1 - delta2,  p(y1) = p(y2) > c0 q(y1)
  case4  q(y2) + zeta <= q(y1) <= 1 - delta2,  c0 q(y2) < p(y1) = p(y2) < c1 q(y1),
         with p(y1) restricted to the upper half of its feasible interval
"""

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .divergence import DivergenceSpec, Family
from .errors import ConfigurationError
from .gradient import logit_gradient

FKLD = DivergenceSpec(Family.FKLD)
RKLD = DivergenceSpec(Family.RKLD)


@dataclass(frozen=True)
class TheoremCase:
    theorem_id: str
    comparison: str  # "fkld-rkld", "ab-alpha", "ab-beta", "alpha-div"
    hypothesis: str  # "case1".."case4", or "weights"
    strict: bool
    claim: str


CASES = {
    c.theorem_id: c
    for c in [
        TheoremCase("t32-case1", "fkld-rkld", "case1", True,
                    "RKLD moves mass from over- to under-estimated classes more aggressively than FKLD"),
        TheoremCase("t32-case2", "fkld-rkld", "case2", True,
                    "RKLD cuts over-estimated classes with larger error more aggressively than FKLD"),
        TheoremCase("t32-case3", "fkld-rkld", "case3", True,
                    "RKLD favours under-estimated classes with larger q_t more than FKLD"),
        TheoremCase("t32-case4", "fkld-rkld", "case4", True,
                    "RKLD cuts over-estimated high-q_t classes more conservatively than FKLD"),
        TheoremCase("t3-case1", "ab-alpha", "case1", False,
                    "smaller alpha transfers mass to under-estimated classes more aggressively"),
        TheoremCase("t3-case2", "ab-alpha", "case2", False,
                    "smaller alpha cuts classes with larger error more aggressively"),
        TheoremCase("t3-case3", "ab-beta", "weights", False,
                    "larger beta weights confident classes more heavily"),
        TheoremCase("tf-case1", "alpha-div", "case1", False,
                    "alpha-divergence: smaller alpha transfers mass more aggressively"),
        TheoremCase("tf-case2", "alpha-div", "case2", False,
                    "alpha-divergence: smaller alpha cuts larger errors more aggressively"),
        TheoremCase("tf-case3", "alpha-div", "case3", False,
                    "alpha-divergence: smaller alpha favours under-estimated high-q_t classes"),
        TheoremCase("tf-case4", "alpha-div", "case4", False,
                    "alpha-divergence: smaller alpha cuts over-estimated high-q_t classes more conservatively"),
    ]
}


def resolve_case(name):
    key = name.strip().lower().replace("_", "-")
    aliases = {"t43": "t3", "thm3": "t3", "t1": "t32", "thm1": "t32", "f": "tf"}
    head, _, tail = key.partition("-")
    key = f"{aliases.get(head, head)}-{tail}"
    if key not in CASES:
        raise ConfigurationError(f"unknown theorem case {name!r}; choose from {', '.join(CASES)}")
    return CASES[key]


@dataclass(frozen=True)
class SamplerConfig:
    n_classes: int = 5
    delta1: float = 0.2
    delta2: float = 0.05
    zeta: float = 0.05
    c0: float = 1.2
    c1: float = 0.8
    eta: float = 0.1
    draw_batch: int = 4096
    max_draws: int = 2_000_000
    # relative slack on the non-strict inequalities, absorbs rounding only
    rtol: float = 1e-10


@dataclass
class TheoremReport:
    theorem_id: str
    instances_tested: int
    violations: int
    witness: dict | None = None
    wall_time_ms: float = 0.0
    min_margin: float = field(default=float("inf"))

    def witness_json(self):
        return "" if self.witness is None else json.dumps(self.witness, sort_keys=True)


def _check_feasible(case, cfg):
    c = cfg.n_classes
    if c < 2:
        raise ConfigurationError("need at least 2 classes")
    if min(cfg.delta1, cfg.delta2, cfg.zeta, cfg.eta) <= 0:
        raise ConfigurationError("delta1, delta2, zeta and eta must be positive")
    h = case.hypothesis
    if h == "case1" and cfg.delta1 >= 0.5:
        raise ConfigurationError("case1 needs delta1 < 1/2 since q(y1) = q(y2)")
    if h in ("case3", "case4"):
        if c < 3:
            raise ConfigurationError(f"{case.theorem_id} needs C >= 3 (p(y1) = p(y2) and q(y1) > q(y2))")
        if cfg.c0 <= 1:
            raise ConfigurationError("c0 must exceed 1")
    if h == "case4" and not cfg.c1 < 1:
        raise ConfigurationError("c1 must be below 1")


def _hypothesis_mask(h, p, q, cfg):
    p1, p2, q1, q2 = p[:, 0], p[:, 1], q[:, 0], q[:, 1]
    if h == "case1":
        return (q1 > cfg.delta1) & (q1 <= p1) & (p1 >= p2 + cfg.zeta)
    if h == "case2":
        return (p1 < q1) & (q1 <= 1 - cfg.delta2) & (p1 >= p2 + cfg.zeta)
    if h == "case3":
        return (q2 + cfg.zeta <= q1) & (q1 <= 1 - cfg.delta2) & (p1 > cfg.c0 * q1)
    if h == "case4":
        lo = cfg.c0 * q2
        hi = np.minimum(cfg.c1 * q1, 0.5)
        return (q2 + cfg.zeta <= q1) & (q1 <= 1 - cfg.delta2) & (lo < p1) & (p1 < cfg.c1 * q1) & (p1 >= 0.5 * (lo + hi))
    if h == "weights":
        return q1 > q2
    raise ConfigurationError(f"unknown hypothesis {h!r}")


def _draw(case, cfg, rng, n):
    """Rejection-sample ``n`` (p, q) pairs satisfying the case hypotheses."""
    c, h = cfg.n_classes, case.hypothesis
    ones = np.ones(c)
    got_p, got_q, have, drawn = [], [], 0, 0
    while have < n:
        if drawn >= cfg.max_draws:
            raise ConfigurationError(
                f"{case.theorem_id}: hypotheses unsatisfiable (or nearly so) for C={c}; "
                f"accepted {have} of {drawn} draws"
            )
        b = cfg.draw_batch
        p = rng.dirichlet(ones, size=b)
        q = rng.dirichlet(ones, size=b)
        # project onto the equality constraints without leaving the simplex
        if h in ("case1", "case2"):
            q[:, :2] = q[:, :2].mean(axis=1, keepdims=True)
        if h in ("case3", "case4"):
            p[:, :2] = p[:, :2].mean(axis=1, keepdims=True)
        if h == "weights":
            swap = q[:, 0] < q[:, 1]
            q[swap, :2] = q[swap, 1::-1]
        drawn += b
        keep = _hypothesis_mask(h, p, q, cfg)
        got_p.append(p[keep])
        got_q.append(q[keep])
        have += int(keep.sum())
    return np.concatenate(got_p)[:n], np.concatenate(got_q)[:n]


def _delta(p, q, spec, eta):
    g = logit_gradient(p, q, spec)
    return -eta * (g[..., 0] - g[..., 1])


def _evaluate(case, cfg, rng, p, q):
    """Return (lhs, rhs, params) per instance; the claim is lhs > rhs (strict) or lhs >= rhs."""
    n = p.shape[0]
    eta = cfg.eta
    if case.comparison == "fkld-rkld":
        return _delta(p, q, RKLD, eta), _delta(p, q, FKLD, eta), [{} for _ in range(n)]
    if case.comparison == "ab-beta":
        b = np.sort(rng.uniform(0.0, 1.0, size=(n, 2)), axis=1)
        ratio = q[:, 0] / q[:, 1]
        return ratio ** b[:, 1], ratio ** b[:, 0], [{"beta1": b1, "beta2": b2} for b1, b2 in b]
    a = np.sort(rng.uniform(0.0, 1.0, size=(n, 2)), axis=1)
    if case.comparison == "ab-alpha":
        beta = rng.uniform(0.0, 1.0, size=n)
    else:
        beta = None
    lhs, rhs, params = np.empty(n), np.empty(n), []
    for i in range(n):
        a1, a2 = a[i]
        b1 = 1.0 - a1 if beta is None else beta[i]
        b2 = 1.0 - a2 if beta is None else beta[i]
        lhs[i] = _delta(p[i], q[i], DivergenceSpec.ab(a1, b1), eta)
        rhs[i] = _delta(p[i], q[i], DivergenceSpec.ab(a2, b2), eta)
        params.append({"alpha1": a1, "alpha2": a2, "beta1": b1, "beta2": b2})
    return lhs, rhs, params


def _run_shard(case, cfg, seed_seq, n):
    rng = np.random.default_rng(seed_seq)
    p, q = _draw(case, cfg, rng, n)
    lhs, rhs, params = _evaluate(case, cfg, rng, p, q)
    margin = lhs - rhs
    if case.strict:
        bad = ~(margin > 0)
    else:
        bad = margin < -cfg.rtol * (np.abs(lhs) + np.abs(rhs))
    witness = None
    if bad.any():
        i = int(np.argmax(bad))
        witness = {
            "case": case.theorem_id,
            "p": p[i].tolist(),
            "q": q[i].tolist(),
            "y1": 0,
            "y2": 1,
            "lhs": float(lhs[i]),
            "rhs": float(rhs[i]),
            **{k: float(v) for k, v in params[i].items()},
        }
    return int(bad.sum()), witness, float(margin.min())


def verify_theorem(theorem_id, sampler_config=None, n_instances=10_000, rng_seed=0, workers=1, shard_size=2500):
    """Count violations of one theorem case over constrained random instances.

    Shards draw from independent generators spawned from ``rng_seed``, so the
    report does not depend on ``workers``; the witness kept is the first
    violation of the lowest-numbered shard.
    """
    case = resolve_case(theorem_id) if isinstance(theorem_id, str) else theorem_id
    cfg = sampler_config or SamplerConfig()
    _check_feasible(case, cfg)
    if n_instances < 1:
        raise ConfigurationError("n_instances must be positive")
    sizes = [shard_size] * (n_instances // shard_size)
    if n_instances % shard_size:
        sizes.append(n_instances % shard_size)
    seeds = np.random.SeedSequence(rng_seed).spawn(len(sizes))
    start = time.perf_counter()
    jobs = list(zip(seeds, sizes))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: _run_shard(case, cfg, *job), jobs))
    else:
        results = [_run_shard(case, cfg, *job) for job in jobs]
    elapsed = (time.perf_counter() - start) * 1000.0
    witness = next((w for _, w, _ in results if w is not None), None)
    return TheoremReport(
        theorem_id=case.theorem_id,
        instances_tested=n_instances,
        violations=sum(v for v, _, _ in results),
        witness=witness,
        wall_time_ms=elapsed,
        min_margin=min(m for _, _, m in results),
    )


def report_row(report):
    d = asdict(report)
    return {
        "case": d["theorem_id"],
        "n": d["instances_tested"],
        "violations": d["violations"],
        "wall_time_ms": f"{d['wall_time_ms']:.1f}",
        "witness_json": report.witness_json(),
    }
