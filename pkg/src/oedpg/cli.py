"""Command-line experiment harness.

Problems, objectives, and optimizer settings come from a YAML config
with sections ``problem``, ``objective``, ``optimizer``, and ``outputs``;
command-line flags override individual fields.  Every subcommand writes
its artifacts atomically and exits 0 on success, 2 on a configuration
error, 3 on an enumeration-guard refusal, and 4 on a numerical failure.
"""

from __future__ import annotations

import dataclasses
import json
import os
from pathlib import Path

import click
import numpy as np
import yaml

from oedpg._fileio import atomic_write_text, format_float
from oedpg.bayes import load_problem, save_problem
from oedpg.bernoulli import DesignVector, PolicyParameter, sample_bits
from oedpg.enumeration import (
    DEFAULT_GUARD,
    EnumerationGuardError,
    all_design_bits,
    brute_force,
    exact_gradient,
    expectation_from_table,
)
from oedpg.models import ADConfig, assemble_ad_problem, toy_problem
from oedpg.objective import (
    EvaluationCache,
    ObjectiveSpec,
    evaluate,
    relaxed_criterion_value,
)
from oedpg.optimizer import (
    OptimizerConfig,
    empirical_baseline,
    optimal_baseline,
    optimize,
    stochastic_gradient,
    write_samples,
    write_summary,
    write_trace,
)

_PROBLEM_KINDS = ("toy", "advection_diffusion", "imported")
_ESTIMATOR_MODES = ("exact", "plain", "empirical", "optimal")


def _fail(code: int, err: BaseException) -> None:
    record = {"error": type(err).__name__, "message": str(err)}
    click.echo(json.dumps(record, sort_keys=True), err=True)
    raise SystemExit(code)


def _execute(task) -> None:
    """Run a subcommand body and translate failures into exit codes."""
    try:
        task()
    except EnumerationGuardError as err:
        _fail(3, err)
    except np.linalg.LinAlgError as err:
        _fail(4, err)
    except BrokenPipeError:
        # downstream consumer closed the pipe; not our error
        raise SystemExit(0)
    except (ValueError, TypeError, KeyError, OSError, yaml.YAMLError) as err:
        _fail(2, err)


def _load_config(path) -> dict:
    if path is None:
        return {}
    text = Path(path).read_text()
    data = yaml.safe_load(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError("config root must be a mapping")
    return data


def _section(config: dict, name: str) -> dict:
    part = config.get(name) or {}
    if not isinstance(part, dict):
        raise ValueError(f"config section '{name}' must be a mapping")
    return dict(part)


def _merge_flags(section: dict, flags: dict) -> dict:
    merged = dict(section)
    merged.update({key: val for key, val in flags.items() if val is not None})
    return merged


def _check_fields(section: dict, cls, label: str) -> None:
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ValueError(f"unknown {label} fields: {', '.join(unknown)}")


def _jsonable(value):
    if isinstance(value, dict):
        return {key: _jsonable(val) for key, val in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _build_problem(config: dict, kind_flag, path_flag, default_kind="toy"):
    """Instantiate the inverse problem named by config/flags.

    Returns the problem together with an echo dict for the summary.
    """
    section = _section(config, "problem")
    kind = kind_flag or section.pop("kind", default_kind)
    if kind not in _PROBLEM_KINDS:
        raise ValueError(f"unknown problem kind '{kind}'")
    if kind == "toy":
        if section:
            raise ValueError(f"toy problem takes no fields: {sorted(section)}")
        return toy_problem(), {"kind": "toy"}
    if kind == "imported":
        path = path_flag or section.pop("path", None)
        if section:
            raise ValueError(f"unknown imported-problem fields: {sorted(section)}")
        if path is None:
            raise ValueError("imported problem requires a path")
        return load_problem(path), {"kind": "imported", "path": str(path)}
    _check_fields(section, ADConfig, "advection_diffusion")
    if section.get("sensors") is not None:
        section["sensors"] = tuple(tuple(pt) for pt in section["sensors"])
    if section.get("buildings"):
        section["buildings"] = tuple(tuple(box) for box in section["buildings"])
    ad = ADConfig(**section)
    echo = {"kind": "advection_diffusion"}
    echo.update(_jsonable(dataclasses.asdict(ad)))
    return assemble_ad_problem(ad), echo


def _build_objective(config: dict, flags: dict) -> ObjectiveSpec:
    section = _merge_flags(_section(config, "objective"), flags)
    _check_fields(section, ObjectiveSpec, "objective")
    return ObjectiveSpec(**section)


def _build_optimizer(config: dict, flags: dict) -> OptimizerConfig:
    section = _merge_flags(_section(config, "optimizer"), flags)
    _check_fields(section, OptimizerConfig, "optimizer")
    return OptimizerConfig(**section)


def _output_dir(config: dict, flag) -> Path:
    target = flag or config.get("outputs") or "results"
    if not isinstance(target, (str, Path)):
        raise ValueError("config field 'outputs' must be a directory path")
    return Path(target)


def _objective_echo(spec: ObjectiveSpec) -> dict:
    return {
        "criterion": spec.criterion.value,
        "penalty": spec.penalty.value,
        "alpha": spec.alpha,
        "budget": spec.budget,
    }


def _config_options(fn):
    fn = click.option(
        "--config",
        "config_path",
        type=click.Path(),
        default=None,
        help="YAML config file; flags override its fields.",
    )(fn)
    fn = click.option(
        "--output-dir",
        default=None,
        help="Artifact directory (default: config 'outputs', else 'results').",
    )(fn)
    return fn


def _problem_options(fn):
    fn = click.option(
        "--problem",
        "problem_kind",
        type=click.Choice(_PROBLEM_KINDS),
        default=None,
        help="Problem family to instantiate.",
    )(fn)
    fn = click.option(
        "--problem-path",
        default=None,
        help="Saved problem container for --problem imported.",
    )(fn)
    return fn


def _objective_options(fn):
    fn = click.option(
        "--criterion",
        type=click.Choice(["a_optimal", "d_optimal", "toy_closed_form"]),
        default=None,
    )(fn)
    fn = click.option(
        "--penalty", type=click.Choice(["none", "l0", "budget"]), default=None
    )(fn)
    fn = click.option("--alpha", type=float, default=None)(fn)
    fn = click.option("--budget", type=int, default=None)(fn)
    return fn


def _optimizer_options(fn):
    fn = click.option("--seed", type=int, default=None)(fn)
    fn = click.option("--theta0", type=float, default=None)(fn)
    fn = click.option("--step-size", type=float, default=None)(fn)
    fn = click.option(
        "--step-schedule",
        type=click.Choice(["constant", "decreasing"]),
        default=None,
    )(fn)
    fn = click.option("--ens-size", type=int, default=None)(fn)
    fn = click.option(
        "--baseline",
        type=click.Choice(["none", "empirical", "optimal"]),
        default=None,
    )(fn)
    fn = click.option("--baseline-batches", type=int, default=None)(fn)
    fn = click.option("--final-samples", type=int, default=None)(fn)
    fn = click.option("--pgtol", type=float, default=None)(fn)
    fn = click.option("--max-iters", type=int, default=None)(fn)
    fn = click.option("--track-exact/--no-track-exact", default=None)(fn)
    fn = click.option("--exact-stopping/--no-exact-stopping", default=None)(fn)
    return fn


@click.group()
@click.version_option(package_name="artifact", prog_name="oedpg")
def main() -> None:
    """Binary sensor selection by Bernoulli-policy gradient descent."""


@main.command("run")
@_config_options
@_problem_options
@_objective_options
@_optimizer_options
@click.option("--workers", type=int, default=1, show_default=True)
def cmd_run(
    config_path,
    output_dir,
    problem_kind,
    problem_path,
    criterion,
    penalty,
    alpha,
    budget,
    seed,
    theta0,
    step_size,
    step_schedule,
    ens_size,
    baseline,
    baseline_batches,
    final_samples,
    pgtol,
    max_iters,
    track_exact,
    exact_stopping,
    workers,
):
    """Optimize the policy; write trace.csv, samples.csv, summary.json."""

    def task():
        config = _load_config(config_path)
        problem, problem_echo = _build_problem(config, problem_kind, problem_path)
        spec = _build_objective(
            config,
            {"criterion": criterion, "penalty": penalty, "alpha": alpha, "budget": budget},
        )
        opt = _build_optimizer(
            config,
            {
                "seed": seed,
                "theta0": theta0,
                "step_size": step_size,
                "step_schedule": step_schedule,
                "ens_size": ens_size,
                "baseline": baseline,
                "baseline_batches": baseline_batches,
                "final_samples": final_samples,
                "pgtol": pgtol,
                "max_iters": max_iters,
                "track_exact_objective": track_exact,
                "exact_stopping": exact_stopping,
            },
        )
        outdir = _output_dir(config, output_dir)
        record = optimize(problem, spec, opt, workers=workers)
        write_trace(record, outdir / "trace.csv")
        write_samples(record, outdir / "samples.csv")
        write_summary(
            record,
            outdir / "summary.json",
            extra={"problem": problem_echo, "objective": _objective_echo(spec)},
        )
        click.echo(
            f"selected {record.selected.as_string()} "
            f"J={format_float(record.selected_value)} ({record.stop_reason})"
        )
        click.echo(f"artifacts in {outdir}")

    _execute(task)


@main.command("brute-force")
@_config_options
@_problem_options
@_objective_options
@click.option("--guard", type=int, default=DEFAULT_GUARD, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
def cmd_brute_force(
    config_path,
    output_dir,
    problem_kind,
    problem_path,
    criterion,
    penalty,
    alpha,
    budget,
    guard,
    workers,
):
    """Enumerate every design; write designs.csv and optimum.json."""

    def task():
        config = _load_config(config_path)
        problem, _ = _build_problem(config, problem_kind, problem_path)
        spec = _build_objective(
            config,
            {"criterion": criterion, "penalty": penalty, "alpha": alpha, "budget": budget},
        )
        outdir = _output_dir(config, output_dir)
        result = brute_force(problem, spec, guard=guard, workers=workers)
        lines = ["k,bits,active_count,J"]
        for pos in range(result.bits.shape[0]):
            design = DesignVector(result.bits[pos])
            lines.append(
                f"{design.index},{design.as_string()},"
                f"{design.active_count},{format_float(result.values[pos])}"
            )
        atomic_write_text(outdir / "designs.csv", "\n".join(lines) + "\n")
        # ties resolve to the smallest design index by first-hit argmin
        best = int(np.argmin(result.values))
        winner = DesignVector(result.bits[best])
        payload = {
            "k": winner.index,
            "bits": winner.as_string(),
            "active_count": winner.active_count,
            "J": float(result.values[best]),
            "objective": _objective_echo(spec),
        }
        atomic_write_text(
            outdir / "optimum.json", json.dumps(payload, sort_keys=True) + "\n"
        )
        click.echo(
            f"enumerated {result.bits.shape[0]} designs; "
            f"optimum {winner.as_string()} J={format_float(result.values[best])}"
        )

    _execute(task)


@main.command("surface")
@_config_options
@_problem_options
@_objective_options
@click.option("--grid-n", type=int, default=15, show_default=True)
def cmd_surface(
    config_path,
    output_dir,
    problem_kind,
    problem_path,
    criterion,
    penalty,
    alpha,
    budget,
    grid_n,
):
    """Tabulate the relaxed objective and its expectation on a theta grid."""

    def task():
        config = _load_config(config_path)
        problem, _ = _build_problem(config, problem_kind, problem_path)
        spec = _build_objective(
            config,
            {"criterion": criterion, "penalty": penalty, "alpha": alpha, "budget": budget},
        )
        if problem.nsens != 2:
            raise ValueError("surface grids require exactly 2 sensors")
        if grid_n < 2:
            raise ValueError("grid_n must be at least 2")
        outdir = _output_dir(config, output_dir)
        cache = EvaluationCache()
        table = np.array(
            [
                evaluate(problem, spec, DesignVector(bits), cache)
                for bits in all_design_bits(2)
            ]
        )
        grid = np.linspace(0.0, 1.0, grid_n)
        lines = ["theta_1,theta_2,J_relaxed,J_hat"]
        for t1 in grid:
            for t2 in grid:
                relaxed = relaxed_criterion_value(problem, spec, (t1, t2))
                expected = expectation_from_table(table, PolicyParameter([t1, t2]))
                lines.append(
                    f"{format_float(t1)},{format_float(t2)},"
                    f"{format_float(relaxed)},{format_float(expected)}"
                )
        atomic_write_text(outdir / "surface.csv", "\n".join(lines) + "\n")
        click.echo(f"wrote {grid_n * grid_n} surface rows to {outdir / 'surface.csv'}")

    _execute(task)


@main.command("gradient-check")
@_config_options
@_problem_options
@_objective_options
@click.option("--grid-n", type=int, default=15, show_default=True)
@click.option(
    "--mode",
    type=click.Choice(_ESTIMATOR_MODES),
    default="exact",
    show_default=True,
)
@click.option("--replicates", type=int, default=100, show_default=True)
@click.option("--ens-size", type=int, default=32, show_default=True)
@click.option("--baseline-batches", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--guard", type=int, default=DEFAULT_GUARD, show_default=True)
def cmd_gradient_check(
    config_path,
    output_dir,
    problem_kind,
    problem_path,
    criterion,
    penalty,
    alpha,
    budget,
    grid_n,
    mode,
    replicates,
    ens_size,
    baseline_batches,
    seed,
    guard,
):
    """Compare a gradient estimator against enumeration on a theta grid."""

    def task():
        config = _load_config(config_path)
        problem, _ = _build_problem(config, problem_kind, problem_path)
        spec = _build_objective(
            config,
            {"criterion": criterion, "penalty": penalty, "alpha": alpha, "budget": budget},
        )
        if grid_n < 2:
            raise ValueError("grid_n must be at least 2")
        if replicates < 1:
            raise ValueError("replicates must be at least 1")
        if replicates == 1 and mode != "exact":
            click.echo(
                "warning: replicates=1 leaves the variance column undefined",
                err=True,
            )
        outdir = _output_dir(config, output_dir)
        cache = EvaluationCache()
        rng = np.random.default_rng(seed)

        def evaluator(design):
            return evaluate(problem, spec, design, cache)

        emp = empirical_baseline(problem, spec, cache) if mode == "empirical" else 0.0
        nsens = problem.nsens
        header = (
            [f"theta_{i + 1}" for i in range(nsens)]
            + [f"exact_{i + 1}" for i in range(nsens)]
            + [f"mean_{i + 1}" for i in range(nsens)]
            + ["total_variance"]
        )
        lines = [",".join(header)]
        grid = np.linspace(0.0, 1.0, grid_n)
        # 2 sensors get the full lattice; anything larger walks the diagonal
        points = (
            [(t1, t2) for t1 in grid for t2 in grid]
            if nsens == 2
            else [tuple(np.full(nsens, t)) for t in grid]
        )
        for point in points:
            theta = PolicyParameter(np.asarray(point, dtype=float))
            exact = exact_gradient(problem, spec, theta, cache, guard=guard)
            if mode == "exact":
                mean = exact
                total_var = 0.0
            else:
                draws = np.empty((replicates, nsens))
                for rep in range(replicates):
                    if mode == "optimal":
                        shift = optimal_baseline(
                            theta, ens_size, baseline_batches, rng, evaluator
                        )
                    elif mode == "empirical":
                        shift = emp
                    else:
                        shift = 0.0
                    bits = sample_bits(theta, ens_size, rng)
                    values = np.array([evaluator(DesignVector(b)) for b in bits])
                    draws[rep] = stochastic_gradient(theta, bits, values, shift)
                mean = draws.mean(axis=0)
                total_var = (
                    float(np.sum(np.var(draws, axis=0, ddof=1)))
                    if replicates > 1
                    else float("nan")
                )
            lines.append(
                ",".join(
                    [format_float(t) for t in theta.probs]
                    + [format_float(g) for g in exact]
                    + [format_float(g) for g in mean]
                    + [format_float(total_var)]
                )
            )
        atomic_write_text(outdir / "gradients.csv", "\n".join(lines) + "\n")
        click.echo(
            f"wrote {len(points)} gradient rows ({mode}) to {outdir / 'gradients.csv'}"
        )

    _execute(task)


@main.command("assemble")
@_config_options
@_problem_options
@click.option("--output", default=None, help="Container path (default: <outdir>/problem.npz).")
def cmd_assemble(config_path, output_dir, problem_kind, problem_path, output):
    """Build the configured problem and export it as an .npz container."""

    def task():
        config = _load_config(config_path)
        problem, echo = _build_problem(
            config, problem_kind, problem_path, default_kind="advection_diffusion"
        )
        outdir = _output_dir(config, output_dir)
        target = Path(output) if output else outdir / "problem.npz"
        target.parent.mkdir(parents=True, exist_ok=True)
        # temp name keeps the .npz suffix so np.savez does not append one
        tmp = target.with_name(f".{target.stem}.tmp.npz")
        save_problem(problem, tmp)
        os.replace(tmp, target)
        click.echo(
            f"wrote {target} ({echo['kind']}: nstate={problem.nstate}, "
            f"nobs={problem.nobs}, nsens={problem.nsens})"
        )

    _execute(task)


@main.command("baseline-study")
@_config_options
@_problem_options
@_objective_options
@click.option("--theta0", type=float, default=0.5, show_default=True)
@click.option("--replicates", type=int, default=200, show_default=True)
@click.option("--ens-size", type=int, default=32, show_default=True)
@click.option("--baseline-batches", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--guard", type=int, default=DEFAULT_GUARD, show_default=True)
def cmd_baseline_study(
    config_path,
    output_dir,
    problem_kind,
    problem_path,
    criterion,
    penalty,
    alpha,
    budget,
    theta0,
    replicates,
    ens_size,
    baseline_batches,
    seed,
    guard,
):
    """Tabulate gradient-estimator variance per baseline; write baselines.csv."""

    def task():
        config = _load_config(config_path)
        problem, _ = _build_problem(config, problem_kind, problem_path)
        spec = _build_objective(
            config,
            {"criterion": criterion, "penalty": penalty, "alpha": alpha, "budget": budget},
        )
        if replicates < 2:
            raise ValueError("replicates must be at least 2")
        outdir = _output_dir(config, output_dir)
        cache = EvaluationCache()
        rng = np.random.default_rng(seed)
        theta = PolicyParameter(np.full(problem.nsens, theta0))
        exact = exact_gradient(problem, spec, theta, cache, guard=guard)

        def evaluator(design):
            return evaluate(problem, spec, design, cache)

        emp = empirical_baseline(problem, spec, cache)
        lines = ["mode,replicates,ens_size,baseline_mean,mean_error,total_variance"]
        report = []
        for mode in ("plain", "empirical", "optimal"):
            draws = np.empty((replicates, problem.nsens))
            shifts = np.empty(replicates)
            for rep in range(replicates):
                if mode == "optimal":
                    shift = optimal_baseline(
                        theta, ens_size, baseline_batches, rng, evaluator
                    )
                elif mode == "empirical":
                    shift = emp
                else:
                    shift = 0.0
                bits = sample_bits(theta, ens_size, rng)
                values = np.array([evaluator(DesignVector(b)) for b in bits])
                draws[rep] = stochastic_gradient(theta, bits, values, shift)
                shifts[rep] = shift
            total_var = float(np.sum(np.var(draws, axis=0, ddof=1)))
            mean_error = float(np.linalg.norm(draws.mean(axis=0) - exact))
            lines.append(
                f"{mode},{replicates},{ens_size},{format_float(shifts.mean())},"
                f"{format_float(mean_error)},{format_float(total_var)}"
            )
            report.append((mode, total_var))
        atomic_write_text(outdir / "baselines.csv", "\n".join(lines) + "\n")
        for mode, total_var in report:
            click.echo(f"{mode}: total variance {format_float(total_var)}")

    _execute(task)


if __name__ == "__main__":
    main()
