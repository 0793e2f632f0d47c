"""Command-line front end: problem loading, solves, annealed sweeps,
critical-point scans, reduced exponential-family solves, and
prediction-error experiments.

Problem files are JSON objects holding exactly one of three schemas
(plus optional ``name`` / ``description`` strings, which are ignored):

``p_y_given_x``
    rows of the label rule ``p(y|x)``; optional ``p_x`` (defaults to
    uniform) and ``smoothing_epsilon`` (defaults to 1e-9).
``exp_family``
    object with ``features`` (n_x, d), ``params`` (n_y, d) and an
    optional ``p_x``.
``class_conditionals``
    rows ``p(x | class)`` for prediction experiments; optional ``prior``
    and ``smoothing_epsilon`` (defaults to 0 — measurement data is not
    silently perturbed).

Flag values win over ``--config`` file entries, which win over built-in
defaults; the effective configuration of every run is echoed to
``run_config.json`` in the output directory.  Stored CSV/JSON artifacts
are always in nats (with a units column where applicable); ``--units
bits`` only rescales the numbers printed on standard output.

Exit codes: 0 on success, 2 on validation problems (the offending flag
or field is named on stderr), 1 on internal errors.  The environment
variable ``BOTTLENECK_LAB_THREADS`` caps the BLAS thread pools; it is
applied at package import, before numpy can start them.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .annealing import SplitConfig, log_grid, sweep_with_states, trace_to_csv
from .expfamily import ExpFamilyModel, exp_solve, exp_sweep
from .prediction import (
    DEFAULT_BETAS,
    DEFAULT_N_VALUES,
    ClassificationProblem,
    error_curves_to_csv,
    run_prediction_experiment,
)
from .probability import (
    DEFAULT_SMOOTHING,
    DistributionError,
    JointDistribution,
    smooth_rows,
)
from .solvers import DEFAULT_MAX_ITER, DEFAULT_TOL, solve
from .stability import find_critical_points

_LN2 = math.log(2.0)

#: documentation-only keys allowed in any problem file
_DOC_KEYS = {"name", "description"}


class ValidationError(ValueError):
    """User-facing input problem; maps to exit code 2."""


@dataclass
class RunConfig:
    """Effective settings of one CLI invocation (echoed as JSON)."""

    command: str
    problem_path: str | None = None
    framework: str | None = None
    beta: float | None = None
    beta_grid: str | None = None
    beta_list: list[float] | None = None
    n_values: list[int] | None = None
    trials: int | None = None
    n_clusters: int | None = None
    g_tol: float | None = None
    split_eps: float | None = None
    merge_tol: float | None = None
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    seed: int = 0
    output_dir: str = "."
    units: str = "nats"


# ---------------------------------------------------------------------------
# problem files
# ---------------------------------------------------------------------------


def _finite_matrix(raw, name: str) -> np.ndarray:
    try:
        arr = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(
            f"{name} must be a rectangular numeric array: {exc}") from exc
    if arr.ndim != 2 or min(arr.shape) < 1:
        raise ValidationError(f"{name} must be a non-empty 2-D array")
    bad = np.argwhere(~np.isfinite(arr))
    if bad.size:
        i, j = bad[0]
        raise ValidationError(f"{name}[{i}][{j}] is not finite")
    return arr


def _probability_matrix(raw, name: str) -> np.ndarray:
    arr = _finite_matrix(raw, name)
    bad = np.argwhere(arr < 0.0)
    if bad.size:
        i, j = bad[0]
        raise ValidationError(
            f"{name}[{i}][{j}] = {arr[i, j]:g} is negative")
    sums = arr.sum(axis=1)
    worst = int(np.argmax(np.abs(sums - 1.0)))
    if abs(sums[worst] - 1.0) > 1e-6:
        raise ValidationError(
            f"{name}[{worst}] sums to {sums[worst]:.8f}; rows must be "
            "normalized within 1e-6")
    return arr / sums[:, None]


def _probability_vector(raw, name: str, length: int) -> np.ndarray:
    try:
        vec = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name} must be a numeric array: {exc}") from exc
    if vec.shape != (length,):
        raise ValidationError(f"{name} must have length {length}")
    bad = np.flatnonzero(~np.isfinite(vec) | (vec < 0.0))
    if bad.size:
        i = bad[0]
        raise ValidationError(f"{name}[{i}] = {vec[i]!r} is not a valid "
                              "probability")
    if abs(vec.sum() - 1.0) > 1e-6:
        raise ValidationError(
            f"{name} sums to {vec.sum():.8f}; must be normalized within 1e-6")
    return vec / vec.sum()


def _smoothing(raw, default: float) -> float:
    if raw is None:
        return default
    try:
        eps = float(raw)
    except (TypeError, ValueError) as exc:
        raise ValidationError("smoothing_epsilon must be a number") from exc
    if not 0.0 <= eps < 1.0:
        raise ValidationError("smoothing_epsilon must lie in [0, 1)")
    return eps


def _check_keys(present, allowed, context: str) -> None:
    unknown = sorted(set(present) - set(allowed) - _DOC_KEYS)
    if unknown:
        raise ValidationError(f"unknown field '{unknown[0]}' in {context}")


def load_problem(path):
    """Load a problem file, dispatching on its schema.

    Returns a :class:`JointDistribution`, :class:`ExpFamilyModel` or
    :class:`ClassificationProblem`.  All schema violations raise
    :class:`ValidationError` naming the offending field.
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"problem file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"problem file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValidationError("problem file must hold a JSON object")

    schemas = [key for key in ("p_y_given_x", "exp_family",
                               "class_conditionals") if key in raw]
    if len(schemas) > 1:
        raise ValidationError(
            "ambiguous problem file: " + " and ".join(schemas)
            + " are mutually exclusive")
    if not schemas:
        raise ValidationError(
            "problem file needs exactly one of: p_y_given_x, exp_family, "
            "class_conditionals")

    try:
        if schemas[0] == "p_y_given_x":
            return _load_joint(raw)
        if schemas[0] == "exp_family":
            return _load_exp_family(raw)
        return _load_classes(raw)
    except DistributionError as exc:
        raise ValidationError(str(exc)) from exc


def _load_joint(raw: dict) -> JointDistribution:
    _check_keys(raw, ("p_y_given_x", "p_x", "smoothing_epsilon"),
                "p_y_given_x problem file")
    rule = _probability_matrix(raw["p_y_given_x"], "p_y_given_x")
    p_x = None
    if raw.get("p_x") is not None:
        p_x = _probability_vector(raw["p_x"], "p_x", rule.shape[0])
    eps = _smoothing(raw.get("smoothing_epsilon"), DEFAULT_SMOOTHING)
    return JointDistribution.from_conditional(rule, p_x,
                                              smoothing_epsilon=eps)


def _load_exp_family(raw: dict) -> ExpFamilyModel:
    _check_keys(raw, ("exp_family",), "exp_family problem file")
    block = raw["exp_family"]
    if not isinstance(block, dict):
        raise ValidationError("exp_family must be a JSON object")
    _check_keys(block, ("features", "params", "p_x"), "exp_family block")
    for key in ("features", "params"):
        if key not in block:
            raise ValidationError(f"exp_family.{key} is required")
    features = _finite_matrix(block["features"], "exp_family.features")
    params = _finite_matrix(block["params"], "exp_family.params")
    if block.get("p_x") is not None:
        p_x = _probability_vector(block["p_x"], "exp_family.p_x",
                                  features.shape[0])
    else:
        p_x = np.full(features.shape[0], 1.0 / features.shape[0])
    try:
        return ExpFamilyModel(features=features, params=params, p_x=p_x)
    except ValueError as exc:
        raise ValidationError(f"exp_family: {exc}") from exc


def _load_classes(raw: dict) -> ClassificationProblem:
    _check_keys(raw, ("class_conditionals", "prior", "smoothing_epsilon"),
                "class_conditionals problem file")
    cond = _probability_matrix(raw["class_conditionals"],
                               "class_conditionals")
    eps = _smoothing(raw.get("smoothing_epsilon"), 0.0)
    if eps:
        cond = smooth_rows(cond, eps)
    prior = None
    if raw.get("prior") is not None:
        prior = _probability_vector(raw["prior"], "prior", cond.shape[0])
    try:
        return ClassificationProblem(cond, prior)
    except ValueError as exc:
        raise ValidationError(f"class_conditionals: {exc}") from exc


def parse_beta_grid(spec) -> np.ndarray:
    """Parse ``log:<lo>:<hi>:<n>`` / ``linear:<lo>:<hi>:<n>`` grid specs."""
    parts = str(spec).split(":")
    if len(parts) != 4 or parts[0] not in ("log", "linear"):
        raise ValidationError(
            "--beta-grid must look like log:<lo>:<hi>:<n> or "
            f"linear:<lo>:<hi>:<n>, got {spec!r}")
    try:
        lo, hi, n = float(parts[1]), float(parts[2]), int(parts[3])
    except ValueError:
        raise ValidationError(
            f"--beta-grid has non-numeric pieces: {spec!r}") from None
    if not 0.0 < lo < hi:
        raise ValidationError("--beta-grid needs 0 < lo < hi")
    if n < 2:
        raise ValidationError("--beta-grid needs at least two points")
    if parts[0] == "log":
        return log_grid(lo, hi, n)
    return np.linspace(lo, hi, n)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_COMMON_DEFAULTS = {
    "problem_path": None,
    "tol": DEFAULT_TOL,
    "max_iter": DEFAULT_MAX_ITER,
    "seed": 0,
    "output_dir": ".",
    "units": "nats",
}

_SPLIT_DEFAULTS = {"split_eps": 1e-3, "merge_tol": 1e-4}

_COMMAND_DEFAULTS = {
    "solve": {"framework": "both", "beta": None, "n_clusters": None},
    "sweep": {"framework": "both", "beta_grid": None, "g_tol": 1e-9,
              **_SPLIT_DEFAULTS},
    "critical": {"framework": "both", "beta_grid": None, "g_tol": 1e-9,
                 **_SPLIT_DEFAULTS},
    "expfam": {"beta": None, "beta_grid": None, **_SPLIT_DEFAULTS},
    "error-exp": {"framework": "both", "beta_list": None, "n_values": None,
                  "trials": 10_000, **_SPLIT_DEFAULTS},
}

_REQUIRED = {
    "solve": ("problem_path", "beta"),
    "sweep": ("problem_path", "beta_grid"),
    "critical": ("problem_path", "beta_grid"),
    "expfam": ("problem_path",),
    "error-exp": ("problem_path",),
}

_FLOAT_FIELDS = ("beta", "tol", "split_eps", "merge_tol", "g_tol")
_INT_FIELDS = ("max_iter", "seed", "trials", "n_clusters")


def _flag(field: str, command: str) -> str:
    if field == "problem_path":
        return "--classes" if command == "error-exp" else "--problem"
    return "--" + field.replace("_", "-")


def _config_file_values(path, allowed, command: str) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValidationError("config file must hold a JSON object")
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ValidationError(
            f"config file key '{unknown[0]}' is not valid for '{command}'")
    return raw


def _coerce_scalar(merged: dict, field: str, kind, command: str) -> None:
    value = merged.get(field)
    if value is None:
        return
    try:
        coerced = kind(value)
        if kind is int and coerced != float(value):
            raise ValueError
    except (TypeError, ValueError):
        raise ValidationError(
            f"{_flag(field, command)} expects {kind.__name__}, "
            f"got {value!r}") from None
    merged[field] = coerced


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Apply precedence (flags > config file > defaults) and validate."""
    command = args.command
    defaults = {**_COMMON_DEFAULTS, **_COMMAND_DEFAULTS[command]}
    merged = dict(defaults)
    if getattr(args, "config", None) is not None:
        merged.update(_config_file_values(args.config, defaults, command))
    merged.update({key: value for key, value in vars(args).items()
                   if key in defaults and value is not None})

    for field in _REQUIRED[command]:
        if merged[field] is None:
            raise ValidationError(
                f"{command} requires {_flag(field, command)}")
    if command == "expfam" and ((merged["beta"] is None)
                                == (merged["beta_grid"] is None)):
        raise ValidationError(
            "expfam requires exactly one of --beta or --beta-grid")

    for field in _FLOAT_FIELDS:
        if field in merged:
            _coerce_scalar(merged, field, float, command)
    for field in _INT_FIELDS:
        if field in merged:
            _coerce_scalar(merged, field, int, command)

    checks = (
        ("beta", merged.get("beta") is not None and merged["beta"] < 0.0,
         "must be >= 0"),
        ("tol", merged["tol"] <= 0.0, "must be positive"),
        ("max_iter", merged["max_iter"] < 1, "must be >= 1"),
        ("trials", merged.get("trials") is not None and merged["trials"] < 1,
         "must be >= 1"),
        ("n_clusters", merged.get("n_clusters") is not None
         and merged["n_clusters"] < 1, "must be >= 1"),
        ("split_eps", merged.get("split_eps") is not None
         and merged["split_eps"] < 0.0, "must be >= 0"),
        ("merge_tol", merged.get("merge_tol") is not None
         and merged["merge_tol"] < 0.0, "must be >= 0"),
        ("g_tol", merged.get("g_tol") is not None
         and merged["g_tol"] <= 0.0, "must be positive"),
    )
    for field, failed, reason in checks:
        if failed:
            raise ValidationError(f"{_flag(field, command)} {reason}")

    if merged.get("units") not in ("nats", "bits"):
        raise ValidationError("--units must be 'nats' or 'bits'")
    if merged.get("framework") not in (None, "ib", "dual", "both"):
        raise ValidationError("--framework must be 'ib', 'dual' or 'both'")
    if merged.get("beta_grid") is not None:
        parse_beta_grid(merged["beta_grid"])  # fail fast, before any work

    if command == "error-exp":
        betas = merged["beta_list"]
        betas = list(DEFAULT_BETAS) if betas is None else betas
        try:
            merged["beta_list"] = [float(b) for b in betas]
        except (TypeError, ValueError):
            raise ValidationError("--betas must be numbers") from None
        if any(b <= 0.0 for b in merged["beta_list"]):
            raise ValidationError("--betas entries must be positive")
        values = merged["n_values"]
        values = list(DEFAULT_N_VALUES) if values is None else values
        try:
            merged["n_values"] = [int(n) for n in values]
        except (TypeError, ValueError):
            raise ValidationError("--n-values must be integers") from None
        if (any(n < 1 for n in merged["n_values"])
                or any(np.diff(merged["n_values"]) <= 0)):
            raise ValidationError(
                "--n-values must be increasing positive integers")

    return RunConfig(command=command, **merged)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _frameworks(framework: str) -> tuple[str, ...]:
    return ("ib", "dual") if framework == "both" else (framework,)


def _display(nats: float, units: str) -> float:
    value = nats / _LN2 if units == "bits" else nats
    return round(value, 9) + 0.0  # drop the sign of rounding-noise zeros


def _dump_json(payload: dict, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _require_joint(problem, command: str) -> JointDistribution:
    if isinstance(problem, JointDistribution):
        return problem
    schema = ("exp_family (use the expfam command)"
              if isinstance(problem, ExpFamilyModel)
              else "class_conditionals (use the error-exp command)")
    raise ValidationError(f"{command} needs a p_y_given_x problem file, "
                          f"got {schema}")


def _split_config(config: RunConfig) -> SplitConfig:
    return SplitConfig(eps=config.split_eps, merge_tol=config.merge_tol,
                       seed=config.seed)


def _print_solve_line(tag: str, beta: float, report, clusters: int,
                      units: str) -> None:
    print(f"{tag} beta={beta:g}: I_x = {_display(report.i_x, units):.3f} "
          f"{units}, I_y = {_display(report.i_y, units):.3f} {units}, "
          f"functional = {_display(report.functional, units):.6g}, "
          f"iterations = {report.n_iterations}, "
          f"converged = {str(bool(report.converged)).lower()}, "
          f"clusters = {clusters}")


def _cmd_solve(config: RunConfig) -> None:
    problem = _require_joint(load_problem(config.problem_path), "solve")
    out = Path(config.output_dir)
    stem = Path(config.problem_path).stem
    for framework in _frameworks(config.framework):
        state, report = solve(problem, config.beta, framework,
                              n_clusters=config.n_clusters, tol=config.tol,
                              max_iter=config.max_iter)
        clusters = int(state.effective_clusters())
        payload = {
            "framework": framework,
            "beta": config.beta,
            "units": "nats",
            "converged": bool(report.converged),
            "n_iterations": int(report.n_iterations),
            "i_x": float(report.i_x),
            "i_y": float(report.i_y),
            "functional": float(report.functional),
            "expected_distortion": float(report.expected_distortion),
            "effective_clusters": clusters,
            "marginal": state.marginal.tolist(),
            "decoder": state.decoder.tolist(),
        }
        _dump_json(payload, out / f"{stem}_{framework}_solve.json")
        _print_solve_line(framework, config.beta, report, clusters,
                          config.units)


def _critical_payload(stem: str, betas: np.ndarray, reports: dict) -> dict:
    return {
        "problem": stem,
        "grid": {"min": float(betas[0]), "max": float(betas[-1]),
                 "points": int(betas.size)},
        "frameworks": {
            framework: [{
                "beta": float(point.beta),
                "lambda2": float(point.lambda2),
                "cluster_index": int(point.cluster_index),
                "bracket": [float(point.bracket[0]),
                            float(point.bracket[1])],
                "residual": float(point.residual),
            } for point in report.points]
            for framework, report in reports.items()
        },
    }


def _scan_frameworks(config: RunConfig, write_traces: bool) -> None:
    problem = _require_joint(load_problem(config.problem_path),
                             config.command)
    betas = parse_beta_grid(config.beta_grid)
    split = _split_config(config)
    out = Path(config.output_dir)
    stem = Path(config.problem_path).stem
    reports = {}
    for framework in _frameworks(config.framework):
        result = sweep_with_states(problem, framework, betas, split=split,
                                   tol=config.tol, max_iter=config.max_iter)
        trace, _ = result
        report = find_critical_points(problem, framework, betas,
                                      tol=config.tol,
                                      max_iter=config.max_iter,
                                      g_tol=config.g_tol,
                                      sweep_result=result)
        reports[framework] = report
        counts = trace.column("effective_clusters")
        line = (f"{framework}: {betas.size} betas, clusters "
                f"{int(counts[0])} -> {int(counts[-1])}, "
                f"{len(report.points)} critical points")
        if write_traces:
            trace_path = out / f"{stem}_{framework}_trace.csv"
            trace_to_csv(trace, trace_path)
            line += f", trace {trace_path.name}"
        print(line)
        for point in report.points:
            print(f"  beta_c = {point.beta:.9f} (cluster "
                  f"{point.cluster_index}, residual {point.residual:.2e})")
    _dump_json(_critical_payload(stem, betas, reports),
               out / f"{stem}_critical_points.json")


def _cmd_sweep(config: RunConfig) -> None:
    _scan_frameworks(config, write_traces=True)


def _cmd_critical(config: RunConfig) -> None:
    _scan_frameworks(config, write_traces=False)


def _cmd_expfam(config: RunConfig) -> None:
    loaded = load_problem(config.problem_path)
    if isinstance(loaded, ExpFamilyModel):
        model = loaded
    elif isinstance(loaded, JointDistribution):
        try:
            model = ExpFamilyModel.from_conditional(loaded)
        except (DistributionError, ValueError) as exc:
            raise ValidationError(
                f"cannot fit an exponential-family model to "
                f"{config.problem_path}: {exc}") from exc
    else:
        raise ValidationError("expfam needs a p_y_given_x or exp_family "
                              "problem file, got class_conditionals")
    out = Path(config.output_dir)
    stem = Path(config.problem_path).stem

    if config.beta is not None:
        state, report = exp_solve(model, config.beta, tol=config.tol,
                                  max_iter=config.max_iter)
        clusters = int(state.effective_clusters())
        payload = {
            "framework": "dual",
            "solver": "expfam",
            "beta": config.beta,
            "units": "nats",
            "converged": bool(report.converged),
            "n_iterations": int(report.n_iterations),
            "i_x": float(report.i_x),
            "i_y": float(report.i_y),
            "functional": float(report.functional),
            "expected_distortion": float(report.expected_distortion),
            "effective_clusters": clusters,
            "cluster_params": state.cluster_params.tolist(),
            "decoder": state.decoder.tolist(),
        }
        _dump_json(payload, out / f"{stem}_expfam_solve.json")
        _print_solve_line("expfam", config.beta, report, clusters,
                          config.units)
        return

    betas = parse_beta_grid(config.beta_grid)
    trace = exp_sweep(model, betas, split=_split_config(config),
                      tol=config.tol, max_iter=config.max_iter)
    trace_path = out / f"{stem}_expfam_trace.csv"
    trace_to_csv(trace, trace_path)
    counts = trace.column("effective_clusters")
    print(f"expfam: {betas.size} betas, clusters {int(counts[0])} -> "
          f"{int(counts[-1])}, trace {trace_path.name}")


def _cmd_error_exp(config: RunConfig) -> None:
    problem = load_problem(config.problem_path)
    if not isinstance(problem, ClassificationProblem):
        raise ValidationError("error-exp needs a class_conditionals "
                              "problem file")
    out = Path(config.output_dir)
    stem = Path(config.problem_path).stem
    split = _split_config(config)
    curves = []
    for framework in _frameworks(config.framework):
        fw_curves = run_prediction_experiment(
            problem, framework, beta_list=config.beta_list,
            n_values=config.n_values, trials=config.trials,
            seed=config.seed, split=split, tol=config.tol,
            max_iter=config.max_iter)
        curves.extend(fw_curves)
        last = fw_curves[-1]
        print(f"{framework}: {len(fw_curves)} betas x "
              f"{last.n_values.size} sample sizes, {config.trials} trials, "
              f"p_err(beta={last.beta:g}, n={int(last.n_values[-1])}) = "
              f"{last.p_err[-1]:.4f}")
    csv_path = out / f"{stem}_error_curves.csv"
    error_curves_to_csv(curves, csv_path)
    print(f"curves -> {csv_path.name}")


_COMMANDS = {
    "solve": _cmd_solve,
    "sweep": _cmd_sweep,
    "critical": _cmd_critical,
    "expfam": _cmd_expfam,
    "error-exp": _cmd_error_exp,
}


# ---------------------------------------------------------------------------
# argument parsing and entry point
# ---------------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="JSON",
                        help="JSON file of defaults for this command "
                        "(explicit flags win)")
    parser.add_argument("--output-dir", dest="output_dir", metavar="DIR",
                        help="directory for artifacts (default: current)")
    parser.add_argument("--units", choices=("nats", "bits"),
                        help="units for printed information values; "
                        "stored files are always in nats")
    parser.add_argument("--tol", type=float,
                        help="encoder sup-norm convergence threshold")
    parser.add_argument("--max-iter", dest="max_iter", type=int,
                        help="iteration cap per solve")
    parser.add_argument("--seed", type=int,
                        help="root seed for split noise / sampling")


def _add_split(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--split-eps", dest="split_eps", type=float,
                        help="relative perturbation of split clusters")
    parser.add_argument("--merge-tol", dest="merge_tol", type=float,
                        help="decoder distance below which clusters merge")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bottleneck-lab",
        description="Bottleneck solvers: compression/prediction trade-off "
        "curves, phase transitions, and error-rate experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="one converged solve per "
                             "framework at a fixed beta")
    p_solve.add_argument("--problem", dest="problem_path", metavar="JSON")
    p_solve.add_argument("--framework", choices=("ib", "dual", "both"))
    p_solve.add_argument("--beta", type=float)
    p_solve.add_argument("--n-clusters", dest="n_clusters", type=int,
                         help="cluster budget (default: n_x)")
    _add_common(p_solve)

    for name, help_text in (("sweep", "annealed sweep over a beta grid; "
                             "writes traces and refined critical points"),
                            ("critical", "locate and refine phase "
                             "transitions on a beta grid")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--problem", dest="problem_path", metavar="JSON")
        p.add_argument("--framework", choices=("ib", "dual", "both"))
        p.add_argument("--beta-grid", dest="beta_grid",
                       metavar="KIND:LO:HI:N",
                       help="log:<lo>:<hi>:<n> or linear:<lo>:<hi>:<n>")
        p.add_argument("--g-tol", dest="g_tol", type=float,
                       help="|beta * lambda2 - 1| refinement target")
        _add_split(p)
        _add_common(p)

    p_exp = sub.add_parser("expfam", help="reduced sufficient-statistics "
                           "solver (prediction framework)")
    p_exp.add_argument("--problem", dest="problem_path", metavar="JSON")
    p_exp.add_argument("--beta", type=float)
    p_exp.add_argument("--beta-grid", dest="beta_grid",
                       metavar="KIND:LO:HI:N")
    _add_split(p_exp)
    _add_common(p_exp)

    p_err = sub.add_parser("error-exp", help="misclassification rate vs "
                           "sample size for trained encoders")
    p_err.add_argument("--classes", dest="problem_path", metavar="JSON")
    p_err.add_argument("--framework", choices=("ib", "dual", "both"))
    p_err.add_argument("--betas", dest="beta_list", type=float, nargs="+",
                       help="betas to train encoders at (default: powers "
                       "of two, 2..64)")
    p_err.add_argument("--n-values", dest="n_values", type=int, nargs="+",
                       help="test-set sizes (default: powers of two, "
                       "1..256)")
    p_err.add_argument("--trials", type=int,
                       help="Monte-Carlo trials per point (default: 10000)")
    _add_split(p_err)
    _add_common(p_err)

    return parser


def _write_run_config(config: RunConfig) -> None:
    payload = {key: value for key, value in asdict(config).items()
               if value is not None}
    _dump_json(payload, Path(config.output_dir) / "run_config.json")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    try:
        config = resolve_config(args)
        try:
            Path(config.output_dir).mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ValidationError(
                f"--output-dir {config.output_dir!r} cannot be created: "
                f"{exc}") from exc
        _write_run_config(config)
        _COMMANDS[config.command](config)
    except (ValidationError, DistributionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # contract: internal failures exit 1
        print(f"internal error: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 1
    print(f"wall {time.perf_counter() - started:.2f} s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
