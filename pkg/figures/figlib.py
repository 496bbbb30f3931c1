"""Shared plumbing for the figure scripts.

The scripts are read-only consumers of the experiment artifacts: every
quantity they draw comes straight out of a CSV or JSON file, and a
schema mismatch aborts with a column diagnostic instead of a plot built
on guessed data.  Rendering is deterministic, so re-running a script on
unchanged inputs reproduces the image byte for byte.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd

# stable SVG ids; raster outputs carry no timestamps to begin with
plt.rcParams["svg.hashsalt"] = "oedpg-figures"

_FIXED_COLUMNS = {
    "surface": ["theta_1", "theta_2", "J_relaxed", "J_hat"],
    "designs": ["k", "bits", "active_count", "J"],
    "samples": ["bits", "J"],
}

# bits must stay text: '0011' is a design, not the number eleven
_TEXT_COLUMNS = {"bits"}


def fail(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)
    raise SystemExit(2)


def _check_columns(path: Path, found: list[str], expected: list[str]) -> None:
    if found != expected:
        fail(
            f"{path}: expected columns {expected}, found {found}"
        )


def _trace_theta_count(path: Path, columns: list[str]) -> int:
    """Validate a trace header and return how many policy components it has."""
    thetas = [c for c in columns if c.startswith("theta_")]
    expected = (
        ["n"]
        + [f"theta_{i + 1}" for i in range(len(thetas))]
        + ["obj_estimate", "exact_obj", "grad_norm", "new_evals", "baseline"]
    )
    if not thetas or columns != expected:
        fail(f"{path}: expected columns {expected}, found {columns}")
    return len(thetas)


def _gradients_theta_count(path: Path, columns: list[str]) -> int:
    thetas = [c for c in columns if c.startswith("theta_")]
    n = len(thetas)
    expected = (
        [f"theta_{i + 1}" for i in range(n)]
        + [f"exact_{i + 1}" for i in range(n)]
        + [f"mean_{i + 1}" for i in range(n)]
        + ["total_variance"]
    )
    if n == 0 or columns != expected:
        fail(f"{path}: expected columns {expected}, found {columns}")
    return n


def load_table(path, kind: str) -> pd.DataFrame:
    """Read one CSV artifact and enforce its schema."""
    path = Path(path)
    if not path.exists():
        fail(f"input not found: {path}")
    table = pd.read_csv(path, dtype={name: str for name in _TEXT_COLUMNS})
    columns = list(table.columns)
    if kind in _FIXED_COLUMNS:
        _check_columns(path, columns, _FIXED_COLUMNS[kind])
    elif kind == "trace":
        _trace_theta_count(path, columns)
    elif kind == "gradients":
        _gradients_theta_count(path, columns)
    else:
        raise ValueError(f"unknown table kind '{kind}'")
    return table


def load_optimum(path) -> dict:
    path = Path(path)
    if not path.exists():
        fail(f"input not found: {path}")
    record = json.loads(path.read_text())
    missing = sorted({"k", "bits", "active_count", "J"} - set(record))
    if missing:
        fail(f"{path}: optimum record is missing fields {missing}")
    return record


@dataclass
class FigureSpec:
    """One figure: a kind, its input files, and where the image goes."""

    kind: str
    inputs: dict
    output: Path
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        self.output = Path(self.output)
        if self.output.suffix not in (".png", ".svg"):
            fail(f"unsupported output format '{self.output.suffix}' (use .png or .svg)")


def save(fig, output: Path) -> None:
    output.parent.mkdir(parents=True, exist_ok=True)
    # blank out the only volatile metadata each backend writes
    metadata = {"Date": None} if output.suffix == ".svg" else {"Software": None}
    fig.savefig(output, dpi=150, metadata=metadata)
    plt.close(fig)


def _pivot(table: pd.DataFrame, value: str):
    grid = table.pivot(index="theta_2", columns="theta_1", values=value)
    return grid.columns.to_numpy(), grid.index.to_numpy(), grid.to_numpy()


def _overlay_trajectory(axes, trace: pd.DataFrame) -> None:
    if trace.empty:
        return
    for ax in axes:
        ax.plot(
            trace["theta_1"],
            trace["theta_2"],
            color="crimson",
            marker="o",
            markersize=3,
            linewidth=1.2,
        )
        ax.plot(
            trace["theta_1"].iloc[-1],
            trace["theta_2"].iloc[-1],
            color="crimson",
            marker="*",
            markersize=12,
        )


def render_surface(spec: FigureSpec):
    table = load_table(spec.inputs["surface"], "surface")
    fig, axes = plt.subplots(1, 2, figsize=(9.6, 4.2), sharey=True)
    for ax, column, title in zip(
        axes, ("J_relaxed", "J_hat"), ("relaxed objective", "policy expectation")
    ):
        x, y, z = _pivot(table, column)
        contours = ax.contourf(x, y, z, levels=25, cmap="viridis")
        fig.colorbar(contours, ax=ax)
        ax.set_title(title)
        ax.set_xlabel(r"$\theta_1$")
    axes[0].set_ylabel(r"$\theta_2$")
    if spec.inputs.get("trace") is not None:
        trace = load_table(spec.inputs["trace"], "trace")
        two_components = "theta_2" in trace.columns and "theta_3" not in trace.columns
        if not trace.empty and not two_components:
            fail(f"{spec.inputs['trace']}: trajectory overlay needs 2 components")
        _overlay_trajectory(axes, trace)
    if spec.options.get("title"):
        fig.suptitle(spec.options["title"])
    fig.tight_layout()
    return fig


def render_gradients(spec: FigureSpec):
    table = load_table(spec.inputs["gradients"], "gradients")
    if "theta_2" not in table.columns or "theta_3" in table.columns:
        fail(f"{spec.inputs['gradients']}: gradient panels need exactly 2 components")
    fig, axes = plt.subplots(1, 2, figsize=(9.6, 4.4), sharey=True)
    label = spec.options.get("label", "estimator mean")
    for ax, (u, v), title in zip(
        axes,
        (("exact_1", "exact_2"), ("mean_1", "mean_2")),
        ("exact gradient", label),
    ):
        ax.quiver(
            table["theta_1"],
            table["theta_2"],
            table[u],
            table[v],
            angles="xy",
            color="navy",
            width=0.004,
        )
        ax.set_title(title)
        ax.set_xlabel(r"$\theta_1$")
        ax.set_xlim(-0.1, 1.1)
        ax.set_ylim(-0.1, 1.1)
    axes[0].set_ylabel(r"$\theta_2$")
    fig.tight_layout()
    return fig


def render_designs(spec: FigureSpec):
    table = load_table(spec.inputs["designs"], "designs")
    fig, ax = plt.subplots(figsize=(7.2, 4.6))
    ax.scatter(
        table["active_count"],
        table["J"],
        s=9,
        alpha=0.3,
        color="steelblue",
        edgecolors="none",
        label="all designs",
    )
    if spec.inputs.get("samples") is not None:
        samples = load_table(spec.inputs["samples"], "samples")
        if not samples.empty:
            ax.scatter(
                [bits.count("1") for bits in samples["bits"]],
                samples["J"],
                s=46,
                marker="x",
                color="darkorange",
                label="sampled designs",
            )
    if spec.inputs.get("optimum") is not None:
        optimum = load_optimum(spec.inputs["optimum"])
        best_count, best_value = optimum["active_count"], optimum["J"]
    else:
        row = table.loc[table["J"].idxmin()]
        best_count, best_value = row["active_count"], row["J"]
    ax.scatter(
        [best_count],
        [best_value],
        s=140,
        marker="*",
        color="crimson",
        zorder=5,
        label="optimum",
    )
    ax.set_xlabel("active sensors")
    ax.set_ylabel("J")
    if spec.options.get("title"):
        ax.set_title(spec.options["title"])
    ax.legend(loc="best")
    fig.tight_layout()
    return fig


def _trace_inputs(spec: FigureSpec):
    paths = spec.inputs["traces"]
    labels = spec.options.get("labels") or [Path(p).stem for p in paths]
    if len(labels) != len(paths):
        fail(f"got {len(paths)} traces but {len(labels)} labels")
    return [(Path(p), label) for p, label in zip(paths, labels)]


def render_convergence(spec: FigureSpec):
    fig, (top, bottom) = plt.subplots(
        2, 1, figsize=(7.2, 6.4), sharex=True, height_ratios=(3, 2)
    )
    for path, label in _trace_inputs(spec):
        trace = load_table(path, "trace")
        (line,) = top.plot(trace["n"], trace["obj_estimate"], marker=".", label=label)
        exact = trace.dropna(subset=["exact_obj"])
        if not exact.empty:
            top.plot(
                exact["n"],
                exact["exact_obj"],
                linestyle="--",
                color=line.get_color(),
                alpha=0.7,
            )
        bottom.step(trace["n"], trace["new_evals"], where="mid", label=label)
    top.set_ylabel("objective estimate")
    top.legend(loc="best")
    bottom.set_ylabel("new evaluations")
    bottom.set_xlabel("iteration")
    if spec.options.get("title"):
        top.set_title(spec.options["title"])
    fig.tight_layout()
    return fig


def render_learning_rate(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=(7.2, 4.6))
    for path, label in _trace_inputs(spec):
        trace = load_table(path, "trace")
        ax.plot(trace["n"], trace["obj_estimate"], marker=".", label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective estimate")
    ax.set_title(spec.options.get("title", "step-size comparison"))
    ax.legend(loc="best")
    fig.tight_layout()
    return fig


RENDERERS = {
    "surface": render_surface,
    "gradients": render_gradients,
    "designs": render_designs,
    "convergence": render_convergence,
    "learning_rate": render_learning_rate,
}


def render(spec: FigureSpec) -> Path:
    """Render one figure and return the written image path."""
    try:
        renderer = RENDERERS[spec.kind]
    except KeyError:
        fail(f"unknown figure kind '{spec.kind}'")
    save(renderer(spec), spec.output)
    return spec.output
