"""Command-line entry point: ``abkd <verb> [options]``.

Verbs: eval-divergence, grad-check, verify-theory, distill, sweep, report.
Numeric results go to CSV/JSON files in a fresh output directory (an
existing one is never reused; ``-1``, ``-2``, ... is appended instead).
Options may also come from ``--config FILE`` holding ``key = value`` lines;
flags given on the command line win.

Exit status: 0 ok, 2 usage, 3 numeric failure, 4 theorem violation, 1 any
other error. Failures print one line ``error:<category>: <message>`` to
stderr.
"""

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import nn, report as reporting
from .distill import DatasetSpec, TrainConfig, distill_student, make_blobs, sweep, train_teacher, worker_count
from .divergence import DivergenceSpec, Family, divergence
from .errors import ABKDError, ConfigurationError
from .gradient import FD_STEP, fd_grad_logits, fd_relative_error, logit_gradient
from .prob import softmax
from .theory import CASES, SamplerConfig, report_row, resolve_case, verify_theorem

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_NUMERIC, EXIT_VIOLATION = 0, 1, 2, 3, 4
GRADCHECK_TOL = 1e-6

log = logging.getLogger("abkd")


class UsageError(Exception):
    category = "usage"


class _Parser(argparse.ArgumentParser):
    def __init__(self, *a, **kw):
        # abbreviations would slip past the flags-beat-config check
        kw.setdefault("allow_abbrev", False)
        super().__init__(*a, **kw)

    def error(self, message):
        raise UsageError(message)


# ------------------------------------------------------------ arg types


def _floats(text):
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _names(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


# ------------------------------------------------------------ parser


def _common(p, verb):
    default = None if verb == "eval-divergence" else Path("runs") / verb
    p.add_argument("--out", type=Path, default=default, help="output directory (made unique)")
    p.add_argument("--config", type=Path, help="key = value file; command-line flags override it")
    p.add_argument("-v", "--verbose", action="store_true")


def _train_args(p):
    g = p.add_argument_group("training")
    g.add_argument("--alpha", type=float, default=1.0)
    g.add_argument("--beta", type=float, default=0.0)
    g.add_argument("--family", choices=[f.value for f in Family], default=None,
                   help="KD divergence family (default: alpha-beta at --alpha/--beta)")
    g.add_argument("--lam", type=float, default=1.0, help="KD loss weight")
    g.add_argument("--use-ce", type=_bool, default=True)
    g.add_argument("--eta", type=float, default=0.05)
    g.add_argument("--temperature", type=float, default=1.0)
    g.add_argument("--epochs", type=int, default=50)
    g.add_argument("--batch-size", type=int, default=64)
    g.add_argument("--momentum", type=float, default=0.0)
    g.add_argument("--weight-decay", type=float, default=0.0)
    g.add_argument("--teacher-sizes", type=_ints, default=[20, 64, 64, 10])
    g.add_argument("--student-sizes", type=_ints, default=[20, 16, 10])
    g.add_argument("--activation", choices=nn.ACTIVATIONS, default="relu")
    d = p.add_argument_group("data")
    d.add_argument("--classes", type=int, default=10)
    d.add_argument("--features", type=int, default=20)
    d.add_argument("--n-train", type=int, default=2000)
    d.add_argument("--n-test", type=int, default=1000)
    d.add_argument("--spread", type=float, default=1.0)
    d.add_argument("--data-seed", type=int, default=0)


def build_parser():
    parser = _Parser(prog="abkd", description="Alpha-beta divergence distillation lab.")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    parser.verbs = sub.choices

    p = sub.add_parser("eval-divergence", help="evaluate one divergence")
    p.add_argument("--p", type=_floats, required=True)
    p.add_argument("--q", type=_floats, required=True)
    p.add_argument("--family", choices=[f.value for f in Family], default="ab")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--wsd-weights", type=_floats, default=[0.5, 0.5])
    _common(p, "eval-divergence")

    p = sub.add_parser("grad-check", help="closed-form logit gradients vs central differences")
    p.add_argument("--families", type=_names, default=["ab", "fkld", "rkld", "wsd", "jsd"])
    p.add_argument("--alphas", type=_floats, default=[0.1, 0.5, 1.0, 1.5])
    p.add_argument("--betas", type=_floats, default=[0.0, 0.5, 1.0, 1.5])
    p.add_argument("--classes", type=_ints, default=[2, 5, 50])
    p.add_argument("--n", type=int, default=100, help="random instances per row")
    p.add_argument("--h", type=float, default=FD_STEP)
    p.add_argument("--seed", type=int, default=0)
    _common(p, "grad-check")

    p = sub.add_parser("verify-theory", help="randomized check of the mass-allocation theorem cases")
    p.add_argument("--case", type=_names, default=["all"], help=f"comma list or 'all'; ids: {', '.join(CASES)}")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--delta1", type=float, default=SamplerConfig.delta1)
    p.add_argument("--delta2", type=float, default=SamplerConfig.delta2)
    p.add_argument("--zeta", type=float, default=SamplerConfig.zeta)
    p.add_argument("--c0", type=float, default=SamplerConfig.c0)
    p.add_argument("--c1", type=float, default=SamplerConfig.c1)
    p.add_argument("--eta", type=float, default=SamplerConfig.eta)
    p.add_argument("--workers", type=int, default=1)
    _common(p, "verify-theory")

    p = sub.add_parser("distill", help="train a teacher, then distil one student")
    p.add_argument("--seed", type=int, default=0)
    _train_args(p)
    _common(p, "distill")

    p = sub.add_parser("sweep", help="distil students over an (alpha, beta) grid and several seeds")
    p.add_argument("--alphas", type=_floats, default=[0.0, 0.25, 0.5, 0.75, 1.0])
    p.add_argument("--betas", type=_floats, default=[0.0, 0.25, 0.5, 0.75, 1.0])
    p.add_argument("--seeds", type=int, default=5, help="number of seeds (0 .. seeds-1)")
    p.add_argument("--workers", type=int, default=None, help="process pool size (capped by ABKD_THREADS)")
    p.add_argument("--no-plots", action="store_true")
    _train_args(p)
    _common(p, "sweep")

    p = sub.add_parser("report", help="render plots and a summary table from a run directory")
    p.add_argument("run_dir", type=Path)
    p.add_argument("--out", type=Path, default=None, help="where to write (default: run_dir)")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


# ------------------------------------------------------------ config file


def _read_config(path):
    """Parse ``key = value`` lines; '#' starts a comment. Keys use flag names."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    out = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigurationError(f"{path} line {lineno}: expected key = value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def parse_args(argv):
    """Parse flags, then fill anything not given on the command line from --config."""
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg_path = getattr(args, "config", None)
    if cfg_path is None:
        return args
    actions = {a.dest: a for a in parser.verbs[args.verb]._actions if a.option_strings}
    given = set()
    for tok in argv:
        if tok.startswith("--"):
            opt = tok.split("=", 1)[0]
            for a in actions.values():
                if opt in a.option_strings:
                    given.add(a.dest)
    for key, raw in _read_config(cfg_path).items():
        if key not in actions or key in ("config", "out"):
            raise UsageError(f"unknown config key {key!r} for {args.verb}")
        if key in given:
            continue
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            value = _bool(raw)
        else:
            try:
                value = action.type(raw) if action.type else raw
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"config key {key}: {exc}") from None
            if action.choices is not None and value not in action.choices:
                raise UsageError(f"config key {key}: {value!r} not in {list(action.choices)}")
        setattr(args, key, value)
    return args


# ------------------------------------------------------------ helpers


def unique_dir(path):
    """Create and return ``path``, or ``path-1``, ``path-2``, ... if it exists."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    candidate, k = path, 0
    while True:
        try:
            candidate.mkdir()
            return candidate
        except FileExistsError:
            k += 1
            candidate = path.with_name(f"{path.name}-{k}")


def _spec_from_args(family, alpha, beta, wsd_weights=(0.5, 0.5)):
    fam = Family(family)
    if fam is Family.WSD:
        if len(wsd_weights) != 2:
            raise ConfigurationError("--wsd-weights takes two numbers")
        return DivergenceSpec(fam, alpha, beta, *wsd_weights)
    return DivergenceSpec(fam, alpha, beta)


def _configs(args):
    data_spec = DatasetSpec(
        n_classes=args.classes, n_features=args.features, n_train=args.n_train, n_test=args.n_test,
        cluster_spread=args.spread, seed=args.data_seed,
    )
    for name, sizes in (("teacher", args.teacher_sizes), ("student", args.student_sizes)):
        if sizes[0] != args.features or sizes[-1] != args.classes:
            raise ConfigurationError(
                f"{name} sizes {sizes} must start at --features {args.features} and end at --classes {args.classes}"
            )
    div = None if args.family is None else _spec_from_args(args.family, args.alpha, args.beta)
    config = TrainConfig(
        alpha=args.alpha, beta=args.beta, lam=args.lam, use_ce=args.use_ce, eta=args.eta,
        temperature=args.temperature, epochs=args.epochs, batch_size=args.batch_size,
        seed=getattr(args, "seed", 0),
        teacher_spec=nn.MlpSpec(tuple(args.teacher_sizes), args.activation),
        student_spec=nn.MlpSpec(tuple(args.student_sizes), args.activation),
        divergence=div, momentum=args.momentum, weight_decay=args.weight_decay,
    )
    return data_spec, config


# ------------------------------------------------------------ verbs


def cmd_eval_divergence(args):
    spec = _spec_from_args(args.family, args.alpha, args.beta, args.wsd_weights)
    if len(args.p) != len(args.q):
        raise ConfigurationError(f"--p has {len(args.p)} entries, --q has {len(args.q)}")
    value = divergence(np.array(args.p), np.array(args.q), spec)
    print(f"{value:.6f}")
    if args.out is not None:
        out = unique_dir(args.out)
        reporting.write_csv(out / "divergence.csv",
                            [{"family": spec.family.value, "alpha": spec.alpha, "beta": spec.beta, "value": value}])
    return EXIT_OK


def _grad_specs(args):
    for fam in args.families:
        fam = Family(fam)
        if fam in (Family.ALPHA_BETA, Family.BETA):
            alphas = [1.0] if fam is Family.BETA else args.alphas
            for a in alphas:
                for b in args.betas:
                    yield DivergenceSpec(fam, a, b)
        elif fam is Family.ALPHA:
            for a in args.alphas:
                if abs(a) > 1e-6 and abs(a - 1) > 1e-6:
                    yield DivergenceSpec(fam, a)
        else:
            yield DivergenceSpec(fam)


def cmd_grad_check(args):
    if args.n < 1:
        raise ConfigurationError("--n must be positive")
    out = unique_dir(args.out)
    rng = np.random.default_rng(args.seed)
    rows, worst = [], 0.0
    for spec in _grad_specs(args):
        ab = spec.ab_params
        for c in args.classes:
            err = 0.0
            for _ in range(args.n):
                p = rng.dirichlet(np.ones(c))
                f = rng.normal(size=c)
                q = softmax(f)
                err = max(err, fd_relative_error(logit_gradient(p, q, spec), fd_grad_logits(p, f, spec, args.h)))
            worst = max(worst, err)
            rows.append({
                "family": spec.family.value,
                "alpha": ab[0] if ab else float("nan"),
                "beta": ab[1] if ab else float("nan"),
                "C": c,
                "max_rel_err": err,
            })
    reporting.write_csv(out / "gradcheck.csv", rows)
    print(f"{len(rows)} rows, worst max_rel_err {worst:.3e} -> {out / 'gradcheck.csv'}")
    if worst > GRADCHECK_TOL:
        raise _NumericFailure(f"gradient check failed: max relative error {worst:.3e} > {GRADCHECK_TOL:g}")
    return EXIT_OK


class _NumericFailure(ABKDError):
    category = "numeric"


class _Violation(ABKDError):
    category = "theorem-violation"


def cmd_verify_theory(args):
    names = list(CASES) if [c.lower() for c in args.case] == ["all"] else [resolve_case(c).theorem_id for c in args.case]
    cfg = SamplerConfig(n_classes=args.classes, delta1=args.delta1, delta2=args.delta2, zeta=args.zeta,
                        c0=args.c0, c1=args.c1, eta=args.eta)
    out = unique_dir(args.out)
    rows, failing = [], []
    for name in names:
        rep = verify_theorem(name, cfg, n_instances=args.n, rng_seed=args.seed,
                             workers=worker_count(args.workers))
        rows.append(report_row(rep))
        status = "ok" if rep.violations == 0 else f"{rep.violations} VIOLATIONS"
        print(f"{rep.theorem_id:10s} n={rep.instances_tested} {status} ({rep.wall_time_ms:.0f} ms)")
        if rep.witness is not None:
            wdir = out / "witnesses"
            wdir.mkdir(exist_ok=True)
            reporting.write_json(wdir / f"{rep.theorem_id}.json", rep.witness)
            failing.append(rep.theorem_id)
    reporting.write_csv(out / "theory.csv", rows)
    print(f"-> {out / 'theory.csv'}")
    if failing:
        raise _Violation(f"violations in {', '.join(failing)}; witnesses in {out / 'witnesses'}")
    return EXIT_OK


def _run_rows(rep):
    return [vars(e) for e in rep.epochs]


def cmd_distill(args):
    data_spec, config = _configs(args)
    out = unique_dir(args.out)
    data = make_blobs(data_spec)
    start = time.perf_counter()
    teacher, t_acc = train_teacher(data, replace(config.teacher_spec, init_seed=config.seed), config)
    config = replace(config, student_spec=replace(config.student_spec, init_seed=config.seed))
    rep = distill_student(teacher, data, config)
    reporting.write_csv(out / "run.csv", _run_rows(rep))
    summary = rep.summary()
    summary.update(teacher_acc=t_acc, dataset=vars(data_spec), total_time_s=time.perf_counter() - start)
    reporting.write_json(out / "summary.json", summary)
    nn.save(rep.params, out / "student.json")
    nn.save(teacher, out / "teacher.json")
    f = rep.final
    print(f"teacher acc {t_acc:.4f}; student acc {f.acc:.4f}, entropy {f.entropy:.4f} -> {out}")
    return EXIT_OK


def cmd_sweep(args):
    data_spec, config = _configs(args)
    grid = [(a, b) for a in args.alphas for b in args.betas]
    if not grid:
        raise ConfigurationError("empty grid")
    out = unique_dir(args.out)
    start = time.perf_counter()
    res = sweep(grid, config, args.seeds, data_spec, workers=args.workers)
    rows = res.rows()
    reporting.write_csv(out / "sweep.csv", rows)
    reporting.write_csv(out / "surface.csv", reporting.surface_from_rows(rows))
    failures = [
        {"alpha": r.config.alpha, "beta": r.config.beta, "seed": r.config.seed, "error": r.error}
        for r in res.reports if r.failed
    ]
    reporting.write_json(out / "summary.json", {
        "base_config": config.to_dict(),
        "dataset": vars(data_spec),
        "grid": grid,
        "seeds": res.seeds,
        "teacher_acc": {str(k): v for k, v in res.teacher_acc.items()},
        "failures": failures,
        "wall_time_s": time.perf_counter() - start,
    })
    if not args.no_plots:
        reporting.report(out)
    print(f"{len(grid)} grid points x {args.seeds} seeds, {len(failures)} failed -> {out}")
    if failures and len(failures) == len(rows):
        raise _NumericFailure("every sweep run failed; see summary.json")
    return EXIT_OK


def cmd_report(args):
    produced = reporting.report(args.run_dir, args.out)
    print(f"{produced['kind']} report: {', '.join(produced['files'])}")
    return EXIT_OK


COMMANDS = {
    "eval-divergence": cmd_eval_divergence,
    "grad-check": cmd_grad_check,
    "verify-theory": cmd_verify_theory,
    "distill": cmd_distill,
    "sweep": cmd_sweep,
    "report": cmd_report,
}

_EXIT_FOR = {"usage": EXIT_USAGE, "numeric": EXIT_NUMERIC, "theorem-violation": EXIT_VIOLATION}


def _fail(category, message):
    text = " ".join(str(message).split())
    print(f"error:{category}: {text}", file=sys.stderr)
    return _EXIT_FOR.get(category, EXIT_ERROR)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        return _fail("usage", exc)
    except ABKDError as exc:
        return _fail(exc.category, exc)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except ABKDError as exc:
        return _fail(exc.category, exc)


if __name__ == "__main__":
    sys.exit(main())
