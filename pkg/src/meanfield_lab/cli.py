# src/meanfield_lab/cli.py
import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import numpy as np
from pydantic import ValidationError

from .core import ConfigLoader, MergeError, deep_merge, read_config_file
from .emissions import (
    Regime,
    classify_regime,
    optimal_feedback,
    simulate_emissions,
    value_function,
)
from .errors import BlowUpError, ModelValidationError, NonConvergenceError
from .lqmodel import FeedbackPolicy, LQModel, make_grid
from .mfg_lq import mfg_cost, solve_mfg
from .mfg_pde_oracle import (
    additive_running,
    centered_space_grid,
    from_emissions,
    from_lq,
    picard_solve,
)
from .mkv_lq import compare, mkv_cost, solve_mkv
from .nplayer_sim import (
    SimulationConfig,
    nash_gap,
    random_affine_deviations,
    simulate_game,
    social_cost_comparison,
)
from .riccati import policy_mean_flow
from .scalar_examples import comparison_table
from .settings import (
    AdditiveRunningSpec,
    EmissionsSpec,
    ExperimentConfig,
    LabSettings,
    LQModelSpec,
    ScalarExampleSpec,
    model_spec,
)
from .utils import format_summary, model_schema, model_to_mapping, write_csv, write_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_MODEL = 3
EXIT_BLOW_UP = 4
EXIT_NO_CONVERGENCE = 5

DEFAULT_KIND = {"examples": "scalar", "emissions": "emissions"}
EMISSIONS_FLAGS = {
    "lam": "lambda",
    "cap": "cap",
    "sigma": "sigma",
    "T": "T",
    "x0": "x0",
}
PROFILE_POINTS = 201


@dataclass
class CommandResult:
    summary: Dict[str, Any]
    columns: Dict[str, Any]
    details: Optional[Dict[str, Any]] = None


# ---------- model helpers ----------
def _spec(cfg: ExperimentConfig, expected: tuple):
    spec = model_spec(cfg.model)
    if not isinstance(spec, expected):
        kinds = ", ".join(t.model_fields["kind"].default for t in expected)
        raise ModelValidationError(
            f"command {cfg.command} needs a model of kind {kinds}, got {spec.kind}"
        )
    return spec


def _lq_model(cfg: ExperimentConfig) -> LQModel:
    return _spec(cfg, (LQModelSpec,)).build(cfg.numerics.n_steps)


def _policy(model: LQModel, cfg: ExperimentConfig, which: str) -> FeedbackPolicy:
    if which == "mfg":
        return solve_mfg(model, short_horizon=cfg.numerics.short_horizon).feedback
    if which == "mkv":
        return solve_mkv(model).feedback
    return FeedbackPolicy.zero(model.grid)


def _simulation_config(
    model: LQModel,
    cfg: ExperimentConfig,
    settings: LabSettings,
    N: Optional[int] = None,
) -> SimulationConfig:
    return SimulationConfig(
        N=N or cfg.numerics.N,
        n_steps=model.grid.n_steps,
        seed=cfg.numerics.seed,
        n_repeats=cfg.numerics.n_repeats,
        threads=settings.threads,
    )


# ---------- commands ----------
def solve_mfg_command(cfg: ExperimentConfig, settings: LabSettings) -> CommandResult:
    model = _lq_model(cfg)
    sol = solve_mfg(
        model, short_horizon=cfg.numerics.short_horizon, tol_fp=cfg.numerics.tol
    )
    summary = {
        "mu_bar_T": sol.mean_flow.terminal,
        "eta_0": sol.eta[0],
        "chi_0": sol.chi[0],
        "cost": mfg_cost(model, sol),
        "fixed_point_residual": sol.fixed_point_residual,
    }
    return CommandResult(summary, sol.columns())


def solve_mkv_command(cfg: ExperimentConfig, settings: LabSettings) -> CommandResult:
    model = _lq_model(cfg)
    sol = solve_mkv(model, tol_fp=cfg.numerics.tol)
    summary = {
        "x_bar_T": sol.xbar.terminal,
        "eta_0": sol.eta[0],
        "chi_0": sol.chi[0],
        "cost": mkv_cost(model, sol.feedback),
        "consistency_residual": sol.consistency_residual,
    }
    return CommandResult(summary, sol.columns())


def compare_command(cfg: ExperimentConfig, settings: LabSettings) -> CommandResult:
    model = _lq_model(cfg)
    report = compare(model, short_horizon=cfg.numerics.short_horizon)
    mfg = solve_mfg(model, short_horizon=cfg.numerics.short_horizon)
    mkv = solve_mkv(model)
    columns = {
        "t": model.grid.times,
        "mfg_mean": mfg.mean_flow.values,
        "mkv_mean": mkv.xbar.values,
    }
    return CommandResult(model_to_mapping(report), columns)


def examples_command(cfg: ExperimentConfig, settings: LabSettings) -> CommandResult:
    spec = _spec(cfg, (ScalarExampleSpec,))
    rows = comparison_table(spec.r, spec.T, spec.x0)
    columns = {key: [row[key] for row in rows] for key in rows[0]}

    def first(example: str, mode: str) -> float:
        return next(
            row["value"]
            for row in rows
            if row["example"] == example and row["mode"] == mode
        )

    def count(example: str, mode: str) -> int:
        return sum(
            1
            for row in rows
            if row["example"] == example
            and row["mode"] == mode
            and not np.isnan(row["value"])
        )

    summary = {
        "linear_mfg": first("linear_terminal", "MFG"),
        "linear_mkv": first("linear_terminal", "MKV"),
        "quadratic_mfg_roots": count("quadratic_terminal", "MFG"),
        "quadratic_mkv_roots": count("quadratic_terminal", "MKV"),
        "additive_mfg_T": first("additive_running_mean_T", "MFG"),
        "additive_mkv_T": first("additive_running_mean_T", "MKV"),
    }
    return CommandResult(summary, columns)


def emissions_command(cfg: ExperimentConfig, settings: LabSettings) -> CommandResult:
    model = _spec(cfg, (EmissionsSpec,)).build()
    report = classify_regime(model)
    feedback = "zero" if report.regime is Regime.BAU else "optimal"
    estimate = simulate_emissions(
        model,
        cfg.numerics.paths,
        cfg.numerics.seed,
        feedback=feedback,
        threads=settings.threads or None,
    )
    summary = {
        "regime": report.regime.value,
        "prob_exceed": report.prob_exceed,
        "mean_T": report.mean_T,
        "fixed_point_ok": report.fixed_point_ok,
        "mc_prob_exceed": estimate.prob_exceed,
        "mc_prob_exceed_se": estimate.prob_exceed_se,
        "mc_mean_T": estimate.mean_T,
    }
    spread = 4.0 * model.sigma * np.sqrt(model.T)
    low = model.x0 - spread - model.lam * model.T
    xs = np.linspace(low, model.x0 + spread, PROFILE_POINTS)
    columns = {
        "x": xs,
        "value_0": value_function(model, 0.0, xs),
        "feedback_0": optimal_feedback(model, 0.0, xs),
    }
    details = {
        "regime": model_to_mapping(report),
        "monte_carlo": model_to_mapping(estimate),
        "profile": columns,
    }
    return CommandResult(summary, columns, details)


def simulate_command(cfg: ExperimentConfig, settings: LabSettings) -> CommandResult:
    model = _lq_model(cfg)
    sim = cfg.simulation

    if sim.mode == "social":
        report = social_cost_comparison(
            model,
            _policy(model, cfg, "mfg"),
            _policy(model, cfg, "mkv"),
            _simulation_config(model, cfg, settings),
        )
        summary = model_to_mapping(report)
        return CommandResult(summary, {k: [v] for k, v in summary.items()})

    policy = _policy(model, cfg, sim.policy)
    if sim.mode == "nash":
        deviations = random_affine_deviations(
            policy, sim.n_deviations, cfg.numerics.seed, sim.deviation_scale
        )
        report = nash_gap(
            model, policy, deviations, _simulation_config(model, cfg, settings)
        )
        summary = {
            "gap": report.gap,
            "se": report.se,
            "chaos_error": report.chaos_error,
            "epsilon_bound": report.epsilon_bound,
        }
        columns = {
            "deviation": list(range(len(report.gains))),
            "gain": report.gains,
            "gain_se": report.gain_ses,
        }
        return CommandResult(summary, columns, model_to_mapping(report))

    if sim.mode == "chaos":
        stats = [
            simulate_game(model, policy, _simulation_config(model, cfg, settings, N))
            for N in sim.N_values
        ]
        errors = np.array([s.chaos_error for s in stats])
        slope = float(np.polyfit(np.log(sim.N_values), np.log(errors), 1)[0])
        summary = {"slope": slope}
        summary.update(
            {f"chaos_N{N}": s.chaos_error for N, s in zip(sim.N_values, stats)}
        )
        columns = {
            "N": sim.N_values,
            "chaos_error": errors,
            "chaos_error_se": [s.chaos_error_se for s in stats],
        }
        return CommandResult(summary, columns)

    stats = simulate_game(model, policy, _simulation_config(model, cfg, settings))
    reference = policy_mean_flow(model, policy)
    summary = {"reference_mean_T": reference.terminal, **stats.summary()}
    columns = {
        "t": model.grid.times,
        "empirical_mean": stats.empirical_mean_flow.values,
        "reference_mean": reference.values,
    }
    return CommandResult(summary, columns)


def oracle_command(cfg: ExperimentConfig, settings: LabSettings) -> CommandResult:
    spec = _spec(cfg, (LQModelSpec, AdditiveRunningSpec, EmissionsSpec))
    if isinstance(spec, LQModelSpec):
        desc = from_lq(spec.build(cfg.numerics.n_steps))
    elif isinstance(spec, EmissionsSpec):
        desc = from_emissions(spec.build())
    else:
        desc = additive_running(spec.T, spec.x0, spec.sigma)
    num = cfg.numerics
    tgrid = make_grid(desc.T, num.n_steps)
    sgrid = centered_space_grid(desc, num.n_x)
    result = picard_solve(
        desc, tgrid, sgrid, damping=num.damping, tol=num.tol, max_iter=num.max_iter
    )
    result.raise_for_convergence()
    summary = {
        "mu_bar_T": result.mean_flow.terminal,
        "iterations": result.iterations,
        "residual": result.residuals[-1],
        "mass_error": float(np.max(np.abs(result.density.mass() - 1.0))),
    }
    details = {
        "t": tgrid.times,
        "mu_bar": result.mean_flow.values,
        "residuals": result.residuals,
    }
    return CommandResult(summary, result.columns(), details)


HANDLERS: Dict[str, Callable[[ExperimentConfig, LabSettings], CommandResult]] = {
    "solve-mfg": solve_mfg_command,
    "solve-mkv": solve_mkv_command,
    "compare": compare_command,
    "examples": examples_command,
    "emissions": emissions_command,
    "simulate": simulate_command,
    "oracle": oracle_command,
}


def _write_artifacts(cfg: ExperimentConfig, result: CommandResult) -> None:
    out = cfg.output
    if not out.path:
        return
    if out.format == "csv":
        write_csv(out.path, result.columns)
        return
    write_json(
        out.path,
        {
            "command": cfg.command,
            "config": model_to_mapping(cfg),
            "summary": result.summary,
            "results": result.details if result.details is not None else result.columns,
        },
    )


def run(cfg: ExperimentConfig, settings: Optional[LabSettings] = None) -> int:
    """Dispatch one experiment; returns the process exit status."""
    settings = settings or LabSettings()
    if cfg.command is None:
        print("experiment has no command", file=sys.stderr)
        return EXIT_PARSE
    try:
        result = HANDLERS[cfg.command](cfg, settings)
    except BlowUpError as e:
        print(f"NO SOLUTION: {e}", file=sys.stderr)
        return EXIT_BLOW_UP
    except NonConvergenceError as e:
        print(f"NOT CONVERGED: {e}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (ValidationError, ValueError) as e:
        print(f"INVALID MODEL: {e}", file=sys.stderr)
        return EXIT_MODEL
    _write_artifacts(cfg, result)
    print(format_summary(result.summary))
    return EXIT_OK


# ---------- argument handling ----------
def _load_settings(args) -> LabSettings:
    loader = ConfigLoader(
        LabSettings,
        config_dir=args.config_dir,
        lenient_yaml=getattr(args, "lenient_yaml", False),
    )
    try:
        return loader.load()
    except (MergeError, ValidationError) as e:
        print("Settings validation failed:\n", e)
        raise SystemExit(EXIT_PARSE)


def build_experiment(args, settings: LabSettings) -> ExperimentConfig:
    raw: Dict[str, Any] = {}
    if args.config:
        try:
            raw = read_config_file(args.config)
        except FileNotFoundError:
            print(f"Config file not found: {args.config}")
            raise SystemExit(EXIT_PARSE)
        except RuntimeError as e:
            print(e)
            raise SystemExit(EXIT_PARSE)

    raw["command"] = args.command
    numerics = raw.get("numerics", {})
    if isinstance(numerics, dict):
        raw["numerics"] = deep_merge(model_to_mapping(settings.numerics), numerics)
        if args.seed is not None:
            raw["numerics"]["seed"] = args.seed
        if getattr(args, "paths", None) is not None:
            raw["numerics"]["paths"] = args.paths

    model = raw.get("model", {})
    if isinstance(model, dict):
        model = dict(model)
        model.setdefault("kind", DEFAULT_KIND.get(args.command, "lq"))
        for flag, key in EMISSIONS_FLAGS.items():
            value = getattr(args, flag, None)
            if value is not None:
                model[key] = value
        raw["model"] = model

    output = raw.get("output", {})
    if isinstance(output, dict):
        output = dict(output)
        if args.out:
            output["path"] = args.out
            if not args.format and Path(args.out).suffix in (".csv", ".json"):
                output["format"] = Path(args.out).suffix[1:]
        if args.format:
            output["format"] = args.format
        raw["output"] = output

    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        print("CONFIG VALIDATION FAILED:\n", e)
        raise SystemExit(EXIT_PARSE)


def experiment_command(args):
    settings = _load_settings(args)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else settings.log_level,
        format="%(levelname)s %(name)s: %(message)s",
    )
    cfg = build_experiment(args, settings)
    code = run(cfg, settings)
    if code != EXIT_OK:
        raise SystemExit(code)


def schema_command(args):
    schema = model_schema(ExperimentConfig)
    if args.format == "yaml":
        import yaml  # type: ignore

        print(yaml.safe_dump(schema, sort_keys=False))
    else:
        print(json.dumps(schema, indent=2, ensure_ascii=False))


def validate_file_command(args):
    import jsonschema

    schema = model_schema(ExperimentConfig)
    try:
        cfg = read_config_file(args.config_file)
    except FileNotFoundError:
        print(f"Config file not found: {args.config_file}")
        raise SystemExit(EXIT_PARSE)
    except RuntimeError as e:
        print(e)
        raise SystemExit(EXIT_PARSE)

    try:
        jsonschema.validate(instance=cfg, schema=schema)
    except jsonschema.ValidationError as e:
        print("CONFIG VALIDATION FAILED:")
        print(e.message)
        if e.path:
            print("Path:", ".".join(map(str, list(e.path))))
        raise SystemExit(EXIT_PARSE)

    print("Config file valid against experiment schema.")


def main(argv=None):
    parser = argparse.ArgumentParser(prog="meanfield-lab")
    parser.add_argument("--config-dir", default="config", help="path to settings dir")
    parser.add_argument(
        "--lenient-yaml",
        action="store_true",
        default=False,
        help="attempt lenient YAML parsing (sanitization) when YAML parsing fails",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="cmd")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment file (JSON or YAML)")
    common.add_argument("--out", help="artifact path")
    common.add_argument("--format", choices=("csv", "json"), help="artifact format")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed")

    helps = {
        "solve-mfg": "solve the LQ mean field game",
        "solve-mkv": "solve the LQ McKean-Vlasov control problem",
        "compare": "compare the MFG and MKV limits of an LQ model",
        "examples": "closed-form scalar examples for both limits",
        "emissions": "emissions regulation: regime, closed forms and Monte Carlo",
        "simulate": "N-player simulation (ensemble, chaos, nash or social)",
        "oracle": "finite-difference Picard solve of the MFG fixed point",
    }
    for name, text in helps.items():
        cmd = sub.add_parser(name, parents=[common], help=text)
        cmd.set_defaults(func=experiment_command, command=name)
        if name == "emissions":
            cmd.add_argument("--lambda", dest="lam", type=float, help="penalty per ton")
            cmd.add_argument("--cap", type=float, help="emissions cap")
            cmd.add_argument("--sigma", type=float, help="volatility")
            cmd.add_argument("--T", dest="T", type=float, help="horizon")
            cmd.add_argument("--x0", type=float, help="initial emissions")
            cmd.add_argument("--paths", type=int, help="Monte Carlo paths")

    schema = sub.add_parser("schema", help="export the JSON Schema of experiment files")
    schema.add_argument(
        "--format", choices=("json", "yaml"), default="json", help="output format"
    )
    schema.set_defaults(func=schema_command)

    validate_file = sub.add_parser(
        "validate-file", help="validate an experiment file against the schema"
    )
    validate_file.add_argument(
        "config_file", help="path to JSON or YAML experiment file"
    )
    validate_file.set_defaults(func=validate_file_command)

    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help()
        raise SystemExit(1)
    return args.func(args)


if __name__ == "__main__":
    main()
