"""CSV schemas, readers/writers and the plots rendered from stored results.

Every CSV the CLI writes has a fixed header and per-column type. Readers
check both and raise DataError naming the file and row on any mismatch.
Plots are SVG with the date stripped and a fixed hash salt, so re-rendering
the same CSV gives byte-identical files.
"""

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import DataError  # noqa: E402

SCHEMAS = {
    "divergence.csv": (("family", str), ("alpha", float), ("beta", float), ("value", float)),
    "gradcheck.csv": (("family", str), ("alpha", float), ("beta", float), ("C", int), ("max_rel_err", float)),
    "theory.csv": (("case", str), ("n", int), ("violations", int), ("wall_time_ms", float), ("witness_json", "json")),
    "run.csv": (("epoch", int), ("loss", float), ("ce", float), ("kd", float), ("acc", float), ("entropy", float)),
    "sweep.csv": (("alpha", float), ("beta", float), ("seed", int), ("final_acc", float), ("final_entropy", float)),
    "surface.csv": (
        ("alpha", float), ("beta", float), ("n", int),
        ("mean_acc", float), ("std_acc", float), ("mean_entropy", float), ("std_entropy", float),
    ),
}

SVG_RC = {"svg.hashsalt": "abkd", "svg.fonttype": "none", "font.size": 9}


def _fmt(value, kind):
    if kind is float:
        return repr(float(value))
    if kind is int:
        return str(int(value))
    if kind == "json":
        if value in (None, ""):
            return ""
        return value if isinstance(value, str) else json.dumps(value, sort_keys=True)
    return str(value)


def write_csv(path, rows, schema=None):
    """Write ``rows`` (dicts) under the schema named after the file."""
    path = Path(path)
    cols = SCHEMAS[schema or path.name]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([name for name, _ in cols])
        for row in rows:
            w.writerow([_fmt(row[name], kind) for name, kind in cols])
    return path


def _parse(raw, kind):
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    if kind == "json":
        if raw == "":
            return None
        doc = json.loads(raw)
        if not isinstance(doc, dict):
            raise ValueError("witness must be a JSON object")
        return doc
    return raw


def read_csv(path, schema=None):
    path = Path(path)
    name = schema or path.name
    if name not in SCHEMAS:
        raise DataError(f"{path.name}: no schema registered for {name!r}")
    cols = SCHEMAS[name]
    expected = [c for c, _ in cols]
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != expected:
                raise DataError(f"{path.name}: header {header} does not match {expected}")
            out = []
            for lineno, raw in enumerate(reader, start=2):
                if len(raw) != len(cols):
                    raise DataError(f"{path.name} row {lineno}: expected {len(cols)} fields, got {len(raw)}")
                try:
                    out.append({c: _parse(v, kind) for (c, kind), v in zip(cols, raw)})
                except ValueError as exc:
                    raise DataError(f"{path.name} row {lineno}: {exc}") from None
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    return out


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def surface_from_rows(rows):
    """Per-(alpha, beta) mean/std of final accuracy and entropy; failed runs (NaN) excluded."""
    groups = {}
    for r in rows:
        groups.setdefault((r["alpha"], r["beta"]), []).append(r)
    out = []
    for (a, b), pts in sorted(groups.items()):
        acc = np.array([r["final_acc"] for r in pts])
        ent = np.array([r["final_entropy"] for r in pts])
        ok = np.isfinite(acc) & np.isfinite(ent)
        nan = float("nan")
        out.append({
            "alpha": a,
            "beta": b,
            "n": int(ok.sum()),
            "mean_acc": float(acc[ok].mean()) if ok.any() else nan,
            "std_acc": float(acc[ok].std()) if ok.any() else nan,
            "mean_entropy": float(ent[ok].mean()) if ok.any() else nan,
            "std_entropy": float(ent[ok].std()) if ok.any() else nan,
        })
    return out


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _heatmap(surface, path):
    alphas = sorted({r["alpha"] for r in surface})
    betas = sorted({r["beta"] for r in surface})
    grid = np.full((len(betas), len(alphas)), np.nan)
    for r in surface:
        grid[betas.index(r["beta"]), alphas.index(r["alpha"])] = r["mean_acc"]
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(alphas), 1.0 + 0.7 * len(betas)))
    im = ax.imshow(grid, origin="lower", cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(alphas)), [f"{a:g}" for a in alphas])
    ax.set_yticks(range(len(betas)), [f"{b:g}" for b in betas])
    ax.set_xlabel("alpha")
    ax.set_ylabel("beta")
    ax.set_title("mean student accuracy")
    finite = grid[np.isfinite(grid)]
    mid = float(finite.mean()) if finite.size else 0.0
    for i in range(len(betas)):
        for j in range(len(alphas)):
            v = grid[i, j]
            if np.isfinite(v):
                ax.text(j, i, f"{v:.4f}", ha="center", va="center", fontsize=7,
                        color="black" if v > mid else "white", gid=f"cell-{alphas[j]:g}-{betas[i]:g}")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    _save(fig, path)
    return alphas, betas, grid


def _sensitivity(surface, axis, path):
    other = "beta" if axis == "alpha" else "alpha"
    fig, (ax_acc, ax_ent) = plt.subplots(1, 2, figsize=(8, 3.2))
    for key in sorted({r[other] for r in surface}):
        pts = sorted((r for r in surface if r[other] == key), key=lambda r: r[axis])
        xs = [r[axis] for r in pts]
        ax_acc.plot(xs, [r["mean_acc"] for r in pts], marker="o", label=f"{other}={key:g}")
        ax_ent.plot(xs, [r["mean_entropy"] for r in pts], marker="o", label=f"{other}={key:g}")
    ax_acc.set_ylabel("mean accuracy")
    ax_ent.set_ylabel("mean entropy (nats)")
    for ax in (ax_acc, ax_ent):
        ax.set_xlabel(axis)
        ax.grid(alpha=0.3)
    ax_ent.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def _table(header, rows):
    cells = [header] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _num(x, digits=4):
    return "nan" if not math.isfinite(x) else f"{x:.{digits}f}"


def report(run_dir, out_dir=None):
    """Render plots and a summary table from the CSVs in ``run_dir``.

    A sweep directory (sweep.csv) gives the accuracy heatmap, the alpha and
    beta sensitivity plots and a per-point table; a single run (run.csv)
    gives the table only. Returns a dict describing what was produced,
    including the heatmap matrix for sweeps.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise DataError(f"{run_dir} is not a directory")
    out_dir = Path(out_dir) if out_dir else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    sweep_csv, run_csv = run_dir / "sweep.csv", run_dir / "run.csv"
    produced = {"kind": None, "files": []}
    with plt.rc_context(SVG_RC):
        if sweep_csv.exists():
            rows = read_csv(sweep_csv)
            if not rows:
                raise DataError(f"{sweep_csv.name}: no data rows")
            surface = surface_from_rows(rows)
            produced.update(kind="sweep", surface=surface)
            alphas = {r["alpha"] for r in surface}
            betas = {r["beta"] for r in surface}
            if len(surface) >= 2:
                a, b, grid = _heatmap(surface, out_dir / "heatmap_acc.svg")
                produced.update(heatmap={"alphas": a, "betas": b, "values": grid})
                produced["files"].append("heatmap_acc.svg")
            for axis, values in (("alpha", alphas), ("beta", betas)):
                if len(values) >= 2:
                    name = f"sensitivity_{axis}.svg"
                    _sensitivity(surface, axis, out_dir / name)
                    produced["files"].append(name)
            text = _table(
                ["alpha", "beta", "n", "mean_acc", "std_acc", "mean_entropy", "std_entropy"],
                [[f"{r['alpha']:g}", f"{r['beta']:g}", r["n"], _num(r["mean_acc"]), _num(r["std_acc"]),
                  _num(r["mean_entropy"]), _num(r["std_entropy"])] for r in surface],
            )
        elif run_csv.exists():
            rows = read_csv(run_csv)
            if not rows:
                raise DataError(f"{run_csv.name}: no data rows")
            produced["kind"] = "run"
            text = _table(
                ["epoch", "loss", "ce", "kd", "acc", "entropy"],
                [[r["epoch"], _num(r["loss"], 6), _num(r["ce"], 6), _num(r["kd"], 6), _num(r["acc"]),
                  _num(r["entropy"])] for r in rows],
            )
        else:
            raise DataError(f"{run_dir} holds neither sweep.csv nor run.csv")
    (out_dir / "summary.txt").write_text(text)
    produced["files"].append("summary.txt")
    return produced
