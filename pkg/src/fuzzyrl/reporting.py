"""Delimited outputs and the figures rendered next to them.

CSV files are the plot-ready contract (stable columns, exact float repr);
PNG figures are a convenience rendering of the same data and are excluded
from byte-level reproducibility guarantees.
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _write_rows(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_curve_csv(path, history) -> None:
    """Learning curve: one (evaluations_used, best_fitness) row per round."""
    rows = []
    for stats in history:
        best = getattr(stats, "global_best", None)
        if best is None:
            best = stats.best_fitness
        rows.append((stats.evaluations, float(best)))
    _write_rows(path, ["evaluations", "best_fitness"], rows)


def write_front_csv(path, entries) -> None:
    """Pareto front in plot axes: complexity vs penalty (negated fitness)."""
    _write_rows(path, ["complexity", "penalty"],
                [(e.complexity, -float(e.fitness)) for e in entries])


EVAL_COLUMNS = ["method", "complexity", "fitness_train", "fitness_model",
                "fitness_real", "gap", "penalty_model", "penalty_real"]


def write_eval_csv(path, rows: list[dict]) -> None:
    _write_rows(path, EVAL_COLUMNS, [[r[c] for c in EVAL_COLUMNS] for r in rows])


def read_eval_csv(path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parsed: dict = {"method": row["method"], "complexity": int(row["complexity"])}
            for key in EVAL_COLUMNS[2:]:
                parsed[key] = float(row[key])
            out.append(parsed)
    return out


COMPARE_COLUMNS = ["method", "complexity", "n",
                   "penalty_model_min", "penalty_model_median", "penalty_model_max",
                   "penalty_real_min", "penalty_real_median", "penalty_real_max"]


def write_compare_csv(path, table: list[dict]) -> None:
    _write_rows(path, COMPARE_COLUMNS, [[r[c] for c in COMPARE_COLUMNS] for r in table])


def read_compare_csv(path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {"method": row["method"], "complexity": int(row["complexity"]),
                      "n": int(row["n"])}
            for key in COMPARE_COLUMNS[3:]:
                parsed[key] = float(row[key])
            out.append(parsed)
    return out


def _read_curve(path):
    xs, ys = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            xs.append(int(row["evaluations"]))
            ys.append(float(row["best_fitness"]))
    return xs, ys


def render_curve(csv_path, png_path, title: str) -> None:
    xs, ys = _read_curve(csv_path)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(xs, ys, lw=1.2)
    ax.set_xlabel("fitness evaluations")
    ax.set_ylabel("best fitness")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)


def render_front(csv_path, png_path) -> None:
    comp, pen = [], []
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            comp.append(int(row["complexity"]))
            pen.append(float(row["penalty"]))
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.step(comp, pen, where="post", lw=1.2)
    ax.plot(comp, pen, "o", ms=4)
    ax.set_xlabel("complexity")
    ax.set_ylabel("penalty")
    ax.set_title("Pareto front (model)")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)


def render_compare(csv_path, png_path) -> None:
    table = read_compare_csv(csv_path)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4), sharey=True)
    for ax, kind in zip(axes, ("model", "real")):
        for method, style in (("fgprl", "-"), ("fpsrl", "x")):
            rows = [r for r in table if r["method"] == method]
            if not rows:
                continue
            xs = [r["complexity"] for r in rows]
            med = [r[f"penalty_{kind}_median"] for r in rows]
            if method == "fgprl":
                lo = [r[f"penalty_{kind}_min"] for r in rows]
                hi = [r[f"penalty_{kind}_max"] for r in rows]
                ax.fill_between(xs, lo, hi, alpha=0.25, color="tab:green", lw=0)
                ax.plot(xs, med, style, color="tab:green", label="fgprl median")
            else:
                for key in ("min", "median", "max"):
                    ys = [r[f"penalty_{kind}_{key}"] for r in rows]
                    ax.plot(xs, ys, style, color="black",
                            label="fpsrl" if key == "median" else None)
        ax.set_xlabel("complexity")
        ax.set_title(f"penalty vs complexity ({kind})")
        ax.grid(alpha=0.3)
    axes[0].set_ylabel("penalty")
    axes[0].legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
