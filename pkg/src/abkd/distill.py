"""Teacher/student distillation on synthetic Gaussian blobs.

The student minimises ``use_ce * CE(y, q) + lam * D(p || q_T)`` with plain
minibatch SGD, where p and q_T are the teacher and student softmaxes at
temperature T. CE is taken at temperature 1; the KD logit gradient carries
the 1/T factor of the chain rule.

Batch order: ``numpy.random.default_rng(seed).permutation(n_train)`` drawn
once per epoch, batches taken as consecutive slices (last one may be short).
"""

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import spearmanr

from . import nn
from .divergence import DivergenceSpec, Family, divergence
from .errors import ABKDError, ConfigurationError, TrainingError
from .gradient import logit_gradient
from .prob import log_softmax, shannon_entropy, softmax

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DatasetSpec:
    n_classes: int = 10
    n_features: int = 20
    n_train: int = 2000
    n_test: int = 1000
    cluster_spread: float = 1.0
    seed: int = 0
    # class means sit on a sphere of this radius around the origin
    center_radius: float = 3.0

    def __post_init__(self):
        if self.n_features < 1:
            raise ConfigurationError("n_features must be at least 1")
        if self.n_classes < 2:
            raise ConfigurationError("n_classes must be at least 2")
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigurationError("n_train and n_test must be positive")
        if not self.cluster_spread > 0:
            raise ConfigurationError("cluster_spread must be positive")


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    n_classes: int


def make_blobs(spec):
    """Balanced Gaussian clusters, one per class, split into train and test.

    Labels cycle through the classes before shuffling, so every class count
    is within one of n / C in both splits.
    """
    rng = np.random.default_rng(spec.seed)
    c, d = spec.n_classes, spec.n_features
    centers = rng.normal(size=(c, d))
    norms = np.linalg.norm(centers, axis=1, keepdims=True)
    centers = spec.center_radius * centers / np.where(norms > 0, norms, 1.0)

    def split(n):
        y = rng.permutation(np.arange(n) % c)
        x = centers[y] + spec.cluster_spread * rng.normal(size=(n, d))
        return x, y

    x_tr, y_tr = split(spec.n_train)
    x_te, y_te = split(spec.n_test)
    return Dataset(x_tr, y_tr, x_te, y_te, c)


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 1.0
    beta: float = 0.0
    lam: float = 1.0
    use_ce: bool = True
    eta: float = 0.05
    temperature: float = 1.0
    epochs: int = 50
    batch_size: int = 64
    seed: int = 0
    teacher_spec: nn.MlpSpec = nn.MlpSpec((20, 64, 64, 10))
    student_spec: nn.MlpSpec = nn.MlpSpec((20, 16, 10))
    # None means the alpha-beta divergence at (alpha, beta)
    divergence: DivergenceSpec | None = None
    momentum: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be at least 1")
        if self.lam < 0:
            raise ConfigurationError("lam must be non-negative")
        if not self.eta > 0 or not self.temperature > 0:
            raise ConfigurationError("eta and temperature must be positive")

    @property
    def kd_spec(self):
        return self.divergence if self.divergence is not None else DivergenceSpec.ab(self.alpha, self.beta)

    def to_dict(self):
        d = asdict(self)
        d["teacher_spec"]["layer_sizes"] = list(self.teacher_spec.layer_sizes)
        d["student_spec"]["layer_sizes"] = list(self.student_spec.layer_sizes)
        if self.divergence is not None:
            d["divergence"]["family"] = self.divergence.family.value
        return d

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    ce: float
    kd: float
    acc: float
    entropy: float


@dataclass
class RunReport:
    config: TrainConfig
    epochs: list = field(default_factory=list)
    wall_time_s: float = 0.0
    error: str | None = None
    params: nn.MlpParams | None = None

    @property
    def final(self):
        return self.epochs[-1] if self.epochs else None

    @property
    def failed(self):
        return self.error is not None

    def summary(self):
        final = asdict(self.final) if self.final else None
        return {
            "config": self.config.to_dict(),
            "config_hash": self.config.config_hash(),
            "final": final,
            "wall_time_s": self.wall_time_s,
            "error": self.error,
        }


def evaluate(params, x, y, temperature=1.0):
    """Accuracy (argmax, ties to the lowest index) and mean output entropy."""
    x = np.asarray(x)
    if x.shape[0] == 0:
        raise ConfigurationError("empty test set")
    logits = nn.forward(params, x)
    pred = np.argmax(logits, axis=1)
    acc = float(np.mean(pred == np.asarray(y)))
    ent = float(np.mean(shannon_entropy(softmax(logits, temperature))))
    return acc, ent


def _train(params, data, config, teacher_probs=None):
    """Shared SGD loop. ``teacher_probs`` None or lam = 0 means CE only."""
    # divergence is detected explicitly below, so overflow warnings are noise
    with np.errstate(over="ignore", invalid="ignore"):
        return _train_loop(params, data, config, teacher_probs)


def _train_loop(params, data, config, teacher_probs):
    spec = config.kd_spec.canonical()
    lam = config.lam if teacher_probs is not None else 0.0
    t = config.temperature
    n, c = data.x_train.shape[0], data.n_classes
    onehot = np.eye(c)[data.y_train]
    rng = np.random.default_rng(config.seed)
    velocity = None
    report = RunReport(config)
    start = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        loss_sum = ce_sum = kd_sum = 0.0
        for batch_idx, lo in enumerate(range(0, n, config.batch_size)):
            idx = order[lo : lo + config.batch_size]
            xb = data.x_train[idx]
            logits, cache = nn.forward(params, xb, return_cache=True)
            g = np.zeros_like(logits)
            ce_b = kd_b = 0.0
            try:
                if config.use_ce:
                    logq = log_softmax(logits)
                    ce_b = float(-np.sum(logq * onehot[idx]))
                    g += np.exp(logq) - onehot[idx]
                if lam > 0:
                    q_t = softmax(logits, t)
                    p_t = teacher_probs[idx]
                    kd_b = float(np.sum(divergence(p_t, q_t, spec)))
                    g += (lam / t) * logit_gradient(p_t, q_t, spec)
            except ABKDError as exc:
                raise TrainingError(_diagnose(epoch, batch_idx, config, logits, exc)) from exc
            loss_b = ce_b + lam * kd_b
            if not np.isfinite(loss_b) or not np.all(np.isfinite(g)):
                raise TrainingError(_diagnose(epoch, batch_idx, config, logits, "non-finite loss"))
            grads = nn.backward(params, xb, g / len(idx), cache=cache)
            if config.momentum:
                params, velocity = nn.sgd_update(
                    params, grads, config.eta, config.momentum, config.weight_decay, velocity
                )
            else:
                params = nn.sgd_update(params, grads, config.eta, weight_decay=config.weight_decay)
            loss_sum += loss_b
            ce_sum += ce_b
            kd_sum += kd_b
        try:
            acc, ent = evaluate(params, data.x_test, data.y_test, t)
        except ABKDError as exc:
            raise TrainingError(f"training diverged at epoch {epoch} (alpha={config.alpha}, "
                                f"beta={config.beta}): evaluation failed: {exc}") from exc
        report.epochs.append(EpochRecord(epoch, loss_sum / n, ce_sum / n, kd_sum / n, acc, ent))
    report.wall_time_s = time.perf_counter() - start
    report.params = params
    return report


def _diagnose(epoch, batch, config, logits, cause):
    return (
        f"training diverged at epoch {epoch}, batch {batch} "
        f"(alpha={config.alpha}, beta={config.beta}, max |logit|={np.max(np.abs(logits)):.3g}): {cause}"
    )


def train_teacher(data, spec, config):
    """CE-only training; returns (params, final test accuracy)."""
    cfg = replace(config, lam=0.0, use_ce=True)
    report = _train(nn.init(spec), data, cfg)
    return report.params, report.final.acc


def teacher_probs(teacher, data, temperature):
    return softmax(nn.forward(teacher, data.x_train), temperature)


def distill_student(teacher, data, config):
    """One distillation run of ``config.student_spec`` against a frozen teacher."""
    if config.student_spec.n_params >= config.teacher_spec.n_params:
        log.warning("student (%d params) is not smaller than teacher (%d)",
                    config.student_spec.n_params, config.teacher_spec.n_params)
    probs = teacher_probs(teacher, data, config.temperature) if config.lam > 0 else None
    return _train(nn.init(config.student_spec), data, config, probs)


# ---------------------------------------------------------------- sweeps


@dataclass
class SweepResult:
    grid: list
    seeds: list
    reports: list  # grid-major, seed-minor
    teacher_acc: dict

    def rows(self):
        out = []
        k = 0
        for a, b in self.grid:
            for s in self.seeds:
                r = self.reports[k]
                k += 1
                final = r.final
                ok = final is not None and not r.failed
                out.append({
                    "alpha": a,
                    "beta": b,
                    "seed": s,
                    "final_acc": final.acc if ok else float("nan"),
                    "final_entropy": final.entropy if ok else float("nan"),
                })
        return out

    def surface(self):
        rows = self.rows()
        out = []
        for a, b in self.grid:
            pts = [r for r in rows if r["alpha"] == a and r["beta"] == b]
            acc = np.array([r["final_acc"] for r in pts])
            ent = np.array([r["final_entropy"] for r in pts])
            good = np.isfinite(acc)
            out.append({
                "alpha": a,
                "beta": b,
                "n": int(good.sum()),
                "mean_acc": float(acc[good].mean()) if good.any() else float("nan"),
                "std_acc": float(acc[good].std()) if good.any() else float("nan"),
                "mean_entropy": float(ent[good].mean()) if good.any() else float("nan"),
                "std_entropy": float(ent[good].std()) if good.any() else float("nan"),
            })
        return out


def worker_count(requested=None):
    cap = os.environ.get("ABKD_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def _seed_config(base, seed):
    return replace(
        base,
        seed=seed,
        teacher_spec=replace(base.teacher_spec, init_seed=seed),
        student_spec=replace(base.student_spec, init_seed=seed),
    )


def _prepare_seed(data_spec, base, seed):
    data = make_blobs(replace(data_spec, seed=data_spec.seed + seed))
    cfg = _seed_config(base, seed)
    teacher, acc = train_teacher(data, cfg.teacher_spec, cfg)
    return data, teacher, acc


def _run_point(teacher, data, cfg):
    try:
        report = distill_student(teacher, data, cfg)
    except ABKDError as exc:
        log.info("run alpha=%s beta=%s seed=%s failed: %s", cfg.alpha, cfg.beta, cfg.seed, exc)
        return RunReport(cfg, error=str(exc))
    report.params = None
    return report


def sweep(grid, base_config, n_seeds, data_spec=None, workers=None):
    """Distil one student per (grid point, seed); reports come back in grid order.

    Seed s uses dataset seed ``data_spec.seed + s``, its own teacher, and
    init/shuffle seed s for the student.
    """
    grid = [(float(a), float(b)) for a, b in grid]
    if not grid:
        raise ConfigurationError("sweep grid is empty")
    if n_seeds < 1:
        raise ConfigurationError("need at least one seed")
    data_spec = data_spec or DatasetSpec()
    seeds = list(range(n_seeds))
    n_workers = worker_count(workers)
    prepared = {s: _prepare_seed(data_spec, base_config, s) for s in seeds}
    jobs = []
    for a, b in grid:
        for s in seeds:
            cfg = replace(_seed_config(base_config, s), alpha=a, beta=b, divergence=None)
            data, teacher, _ = prepared[s]
            jobs.append((teacher, data, cfg))
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            reports = list(pool.map(_run_point, *zip(*jobs)))
    else:
        reports = [_run_point(*job) for job in jobs]
    return SweepResult(grid, seeds, reports, {s: prepared[s][2] for s in seeds})


def spearman(x, y):
    """Spearman rank correlation (average ranks for ties)."""
    return float(spearmanr(x, y).statistic)
