"""Figure rendering from ntklab run artifacts.

Reads only the documented artifact files (train_trace.csv, eval_trace.csv,
summary.json, random_label_gammas.csv, complexity_curve.csv) and writes one
static image per figure spec.  Rendering never mutates inputs and is
deterministic given the same artifact bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIGURE_KINDS = ("risk_curve", "movement", "margin_hist", "complexity_scaling")


class SchemaError(ValueError):
    """An input artifact is missing or does not match its schema."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    in_dir: Path
    out_path: Path

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; expected one of {FIGURE_KINDS}")
        object.__setattr__(self, "in_dir", Path(self.in_dir))
        object.__setattr__(self, "out_path", Path(self.out_path))


def load_columns(path: Path, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    """Parse a harness CSV (optional leading # comment, then a header row)."""
    if not path.exists():
        raise SchemaError(f"missing artifact {path}")
    lines = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise SchemaError(f"{path} has no rows")
    header = lines[0].split(",")
    for col in required:
        if col not in header:
            raise SchemaError(f"{path} is missing column {col!r}")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if data.size == 0:
        raise SchemaError(f"{path} has a header but no data rows")
    return {name: data[:, i] for i, name in enumerate(header)}


def load_summary(in_dir: Path) -> dict:
    path = in_dir / "summary.json"
    if not path.exists():
        raise SchemaError(f"missing artifact {path}")
    return json.loads(path.read_text())


def _fit_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    xm, ym = x.mean(), y.mean()
    slope = float(np.sum((x - xm) * (y - ym)) / np.sum((x - xm) ** 2))
    return slope, float(ym - slope * xm)


def _render_risk_curve(spec: FigureSpec, ax) -> dict:
    cols = load_columns(spec.in_dir / "train_trace.csv", ("step", "risk"))
    steps, risk = cols["step"], cols["risk"]
    running = np.cumsum(risk) / (np.arange(len(risk)) + 1.0)
    ax.plot(steps, risk, lw=1.0, label="risk")
    ax.plot(steps, running, lw=1.2, ls="--", label="running average")
    meta = {}
    try:
        schedule = load_summary(spec.in_dir).get("metrics", {}).get("schedule", {})
        t_budget = schedule.get("steps")
    except SchemaError:
        t_budget = None
    if t_budget is not None:
        meta["t_budget"] = t_budget
        if t_budget <= steps[-1]:
            ax.axvline(t_budget, color="k", ls=":", lw=1.0, label=f"T = {t_budget}")
        else:
            ax.annotate(f"T = {t_budget} (beyond axis)", xy=(0.98, 0.95),
                        xycoords="axes fraction", ha="right", fontsize=8)
    ax.set_xlabel("step")
    ax.set_ylabel("logistic risk")
    ax.set_yscale("log")
    ax.legend(loc="best", fontsize=8)
    return meta


def _render_movement(spec: FigureSpec, ax) -> dict:
    cols = load_columns(spec.in_dir / "train_trace.csv",
                        ("step", "max_row_move", "move_bound"))
    ax.plot(cols["step"], cols["max_row_move"], lw=1.2, label="max row movement")
    bound = float(cols["move_bound"][-1])
    if np.isfinite(bound):
        ax.axhline(bound, color="r", ls="--", lw=1.0, label=f"bound {bound:.3g}")
    ax.set_xlabel("step")
    ax.set_ylabel("max_s ||w_s(t) - w_s(0)||")
    ax.legend(loc="best", fontsize=8)
    return {"bound": bound}


def _render_margin_hist(spec: FigureSpec, ax) -> dict:
    cols = load_columns(spec.in_dir / "random_label_gammas.csv", ("trial", "gamma"))
    gammas = cols["gamma"]
    ax.hist(gammas, bins=30, color="steelblue", alpha=0.85)
    meta = {"trials": int(len(gammas))}
    try:
        threshold = load_summary(spec.in_dir).get("metrics", {}).get("threshold")
    except SchemaError:
        threshold = None
    if threshold is not None:
        ax.axvline(threshold, color="r", ls="--", lw=1.2,
                   label=f"cap {threshold:.4g}")
        ax.legend(loc="best", fontsize=8)
        meta["threshold"] = threshold
    ax.set_xlabel("margin under random labels")
    ax.set_ylabel("count")
    return meta


def _render_complexity_scaling(spec: FigureSpec, ax) -> dict:
    cols = load_columns(spec.in_dir / "complexity_curve.csv",
                        ("d", "replicate", "samples_to_target"))
    ds = np.unique(cols["d"])
    medians = np.array([np.median(cols["samples_to_target"][cols["d"] == d]) for d in ds])
    slope, intercept = _fit_line(np.log(ds), np.log(medians))
    ax.scatter(cols["d"], cols["samples_to_target"], s=12, alpha=0.4, label="replicates")
    ax.plot(ds, medians, "o-", color="k", lw=1.2, label="median")
    fit = np.exp(intercept) * ds ** slope
    ax.plot(ds, fit, "r--", lw=1.0, label=f"slope {slope:.3f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("input dimension d")
    ax.set_ylabel("samples to reach target error")
    ax.legend(loc="best", fontsize=8)
    return {"slope": slope, "intercept": intercept,
            "medians": {str(int(d)): float(m) for d, m in zip(ds, medians)}}


_RENDERERS = {
    "risk_curve": _render_risk_curve,
    "movement": _render_movement,
    "margin_hist": _render_margin_hist,
    "complexity_scaling": _render_complexity_scaling,
}


def render(spec: FigureSpec) -> dict:
    """Render one figure; returns metadata including any fitted quantities."""
    fig, ax = plt.subplots(figsize=(5.0, 3.4), dpi=130)
    try:
        meta = _RENDERERS[spec.kind](spec, ax)
        ax.set_title(spec.kind.replace("_", " "))
        fig.tight_layout()
        spec.out_path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(spec.out_path)
    finally:
        plt.close(fig)
    meta["out_path"] = str(spec.out_path)
    return meta
