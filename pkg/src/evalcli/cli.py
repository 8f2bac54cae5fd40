"""
diffusion-nmpc command line.

Subcommands: generate, train-diffusion, train-bc, rollout, compare, ablate,
multimodality, check-theorems. Each reads one config file plus overrides, writes its
artifacts and prints a single JSON summary line on stdout.

Exit codes: 0 success, 1 configuration/validation/missing-artifact error, 2 runtime failure.
"""
import argparse
import json
import logging
import sys
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from ..control import (
    BehaviorClonePolicy,
    load_policy,
    save_policy,
    train_behavior_clone,
)
from ..datagen import (
    Dataset,
    DatasetFormatError,
    budget_matched_config,
    export_text,
    generate_dataset,
    read_dataset,
    write_dataset,
)
from ..diffusion import Denoiser, load_denoiser, save_denoiser, train
from ..ledger import RunLedger, open_session
from ..neural import CheckpointMismatch
from ..solver import SolverConfig
from ..utils.integrity import FormatVersionError, IntegrityError, TruncatedFileError
from .config import AblationKind, ConfigError, ExperimentConfig, RuntimeSettings, load_config
from .experiments import (
    Artifacts,
    ArtifactNotFound,
    DiffusionSampler,
    controller_factories,
    initial_states,
    multimodality_curves,
    run_ablation,
    run_comparison,
    run_episodes,
    timing_slopes,
)
from .metrics import write_csv, write_plot_data
from .theorems import (
    ToyProblem,
    TruthSampler,
    coverage_datasets,
    theorem1_coverage_check,
    theorem2_check,
)

logger = logging.getLogger(__name__)

# Errors a user fixes by changing inputs.
INPUT_ERRORS = (
    ConfigError,
    ValidationError,
    ArtifactNotFound,
    DatasetFormatError,
    CheckpointMismatch,
    IntegrityError,
    FormatVersionError,
    TruncatedFileError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(message)


# =============================================================================
# Run context
# =============================================================================

@dataclass
class RunContext:
    """Everything a subcommand needs: config, settings, output directory, ledger hooks."""
    command: str
    cfg: ExperimentConfig
    settings: RuntimeSettings
    args: argparse.Namespace
    run_dir: Path
    ledger: Optional[RunLedger] = None
    run_id: Optional[int] = None
    outputs: Dict[str, str] = field(default_factory=dict)

    @property
    def root(self) -> Path:
        return self.settings.output_root

    def output(self, name: str, kind: str) -> Path:
        path = self.run_dir / name
        self.outputs[kind] = str(path)
        return path

    def register(self, kind: str, path: Path) -> None:
        self.outputs[kind] = str(path)
        if self.ledger is not None and self.run_id is not None:
            self.ledger.record_artifact(self.run_id, kind, path)

    def solver_cfg(self) -> SolverConfig:
        return self.cfg.solver.model_copy(update={"workers": self.settings.workers})

    # ---- artifact locations -------------------------------------------------

    def dataset_path(self) -> Path:
        if self.args.dataset:
            return Path(self.args.dataset)
        name = f"{self.cfg.system.kind.value}-{self.cfg.dataset_digest()[:16]}.dnds"
        return self.root / "datasets" / name

    def denoiser_path(self, cfg: Optional[ExperimentConfig] = None) -> Path:
        if self.args.checkpoint and cfg is None:
            return Path(self.args.checkpoint)
        cfg = cfg or self.cfg
        name = f"{cfg.system.kind.value}-diffusion-{cfg.denoiser_digest()[:16]}.dnnn"
        return self.root / "models" / name

    def policy_path(self, global_targets: bool) -> Path:
        explicit = self.args.global_policy if global_targets else self.args.policy
        if explicit:
            return Path(explicit)
        tag = "bc-global" if global_targets else "bc"
        name = f"{self.cfg.system.kind.value}-{tag}-{self.cfg.policy_digest(global_targets)[:16]}.dnnn"
        return self.root / "models" / name


def _require(path: Path, what: str) -> Path:
    if not path.is_file():
        raise ArtifactNotFound(f"{what} not found: {path}")
    return path


def _load_dataset(ctx: RunContext) -> Dataset:
    return read_dataset(_require(ctx.dataset_path(), "Dataset"))


def _load_denoiser(ctx: RunContext, cfg: Optional[ExperimentConfig] = None) -> Denoiser:
    return load_denoiser(_require(ctx.denoiser_path(cfg), "Denoiser checkpoint"))


def _load_policy(ctx: RunContext, global_targets: bool) -> BehaviorClonePolicy:
    what = "Global behavior-clone checkpoint" if global_targets else "Behavior-clone checkpoint"
    return load_policy(_require(ctx.policy_path(global_targets), what))


def _artifacts_for(ctx: RunContext, names: Sequence[str]) -> Artifacts:
    artifacts = Artifacts()
    if "diffusion" in names:
        artifacts.denoiser = _load_denoiser(ctx)
    if "behavior_clone" in names:
        artifacts.policy = _load_policy(ctx, False)
    if "behavior_clone_global" in names:
        artifacts.global_policy = _load_policy(ctx, True)
    return artifacts


# =============================================================================
# Subcommands
# =============================================================================

def cmd_generate(ctx: RunContext) -> Dict[str, Any]:
    cfg = ctx.cfg
    ds = generate_dataset(cfg.system, cfg.spec, cfg.datagen, ctx.solver_cfg(),
                          {"dataset_digest": cfg.dataset_digest()})
    path = ctx.dataset_path()
    write_dataset(ds, path)
    ctx.register("dataset", path)
    if ctx.args.export:
        text = ctx.output("dataset.csv", "dataset_text")
        export_text(ds, text)
        ctx.register("dataset_text", text)
    return {"statistics": ds.statistics()}


def cmd_train_diffusion(ctx: RunContext) -> Dict[str, Any]:
    ds = _load_dataset(ctx)
    result = train(ds, ctx.cfg.spec, ctx.cfg.diffusion)
    path = ctx.denoiser_path()
    save_denoiser(path, result.denoiser, {"config_digest": ctx.cfg.denoiser_digest(),
                                          "best_epoch": result.best_epoch})
    ctx.register("denoiser", path)
    log_path = ctx.output("training_log.csv", "training_log")
    write_csv(pd.DataFrame(result.log, columns=["epoch", "train_loss", "validation_loss"]), log_path)
    ctx.register("training_log", log_path)
    return {"best_epoch": result.best_epoch, "best_validation_loss": result.best_validation_loss}


def cmd_train_bc(ctx: RunContext) -> Dict[str, Any]:
    cfg = ctx.cfg
    global_targets = bool(ctx.args.global_targets)
    if global_targets:
        gen = budget_matched_config(cfg.datagen, cfg.control.restarts)
        ds = generate_dataset(cfg.system, cfg.spec, gen, ctx.solver_cfg(),
                              {"dataset_digest": cfg.policy_digest(True)})
        ds_path = ctx.output("global_dataset.dnds", "global_dataset")
        write_dataset(ds, ds_path)
        ctx.register("global_dataset", ds_path)
    else:
        ds = _load_dataset(ctx)
    policy = train_behavior_clone(ds, cfg.spec, cfg.behavior_clone)
    path = ctx.policy_path(global_targets)
    save_policy(path, policy, {"global": global_targets, "records": len(ds)})
    ctx.register("policy", path)
    log_path = ctx.output("training_log.csv", "training_log")
    write_csv(pd.DataFrame(policy.log, columns=["epoch", "train_loss", "validation_loss"]), log_path)
    ctx.register("training_log", log_path)
    best = min(row[2] for row in policy.log)
    return {"records": len(ds), "global": global_targets, "best_validation_loss": best}


def _controller_names(ctx: RunContext) -> List[str]:
    return list(ctx.args.controller or ctx.cfg.control.controllers)


def cmd_rollout(ctx: RunContext) -> Dict[str, Any]:
    cfg = ctx.cfg
    names = _controller_names(ctx)
    factories = controller_factories(cfg, _artifacts_for(ctx, names), names, ctx.solver_cfg())
    states = initial_states(cfg, ctx.args.episode + 1, cfg.seed)[ctx.args.episode:]
    summary: Dict[str, Any] = {}
    for name, factory in factories.items():
        log = run_episodes(factory, cfg.system, states, cfg.control.steps, cfg.seed)[0]
        path = ctx.output(f"rollout_{name}.csv", f"rollout_{name}")
        log.write(path, include_timing=False)
        ctx.register(f"rollout_{name}", path)
        timing = ctx.output(f"rollout_{name}_timing.csv", f"timing_{name}")
        write_csv(pd.DataFrame({"step": np.arange(log.steps), "wall_time": log.wall_times}), timing)
        summary[name] = {"total_cost": log.total_cost, "steps": log.steps, "aborted": log.aborted,
                         "success": log.succeeded(cfg.system)}
    return summary


def cmd_compare(ctx: RunContext) -> Dict[str, Any]:
    cfg = ctx.cfg
    names = _controller_names(ctx)
    factories = controller_factories(cfg, _artifacts_for(ctx, names), names, ctx.solver_cfg())
    report = run_comparison(cfg, factories, workers=ctx.settings.workers)
    report_path = ctx.output("comparison.csv", "report")
    report.write(report_path, ctx.output("comparison_timing.csv", "timing"))
    ctx.register("report", report_path)
    write_plot_data(ctx.output("costs.dat", "plot_costs"), {
        name: (np.arange(len(costs)), np.sort(costs)) for name, costs in report.episode_costs.items()
    })
    return {row.controller: {"median": row.cost_median, "normalized": row.cost_normalized,
                             "success": row.success_rate} for row in report.rows}


def cmd_ablate(ctx: RunContext) -> Dict[str, Any]:
    cfg = ctx.cfg
    kind = AblationKind(ctx.args.kind) if ctx.args.kind else cfg.ablation.kind
    grid = [int(v) for v in ctx.args.grid.split(",")] if ctx.args.grid else list(cfg.ablation.grid)

    def resolve(point: ExperimentConfig) -> Artifacts:
        # H points need their own denoiser; M and K points share the base one
        return Artifacts(denoiser=_load_denoiser(ctx, point if kind is AblationKind.H else None))

    report = run_ablation(cfg, kind, grid, resolve, workers=ctx.settings.workers,
                          solver_cfg=ctx.solver_cfg())
    report_path = ctx.output(f"ablation_{kind.value}.csv", "report")
    report.write(report_path, ctx.output(f"ablation_{kind.value}_timing.csv", "timing"))
    ctx.register("report", report_path)
    curves = {}
    for name in sorted({row.controller for row in report.rows}):
        rows = [row for row in report.rows if row.controller == name]
        curves[f"{name} cost"] = ([r.value for r in rows], [r.cost_median for r in rows])
        curves[f"{name} time"] = ([r.value for r in rows], [r.time_mean for r in rows])
    write_plot_data(ctx.output(f"ablation_{kind.value}.dat", "plot"), curves)
    summary: Dict[str, Any] = {"kind": kind.value, "points": len(grid), "rows": len(report.rows)}
    if kind is AblationKind.M:
        summary["timing_slopes"] = timing_slopes(report)
    return summary


def cmd_multimodality(ctx: RunContext) -> Dict[str, Any]:
    cfg = ctx.cfg
    curves = multimodality_curves(cfg, _load_denoiser(ctx), workers=ctx.settings.workers,
                                  solver_cfg=ctx.solver_cfg())
    frame = pd.DataFrame({"step": np.arange(cfg.multimodality.probe_steps), **curves})
    path = ctx.output("multimodality.csv", "report")
    write_csv(frame, path)
    ctx.register("report", path)
    write_plot_data(ctx.output("multimodality.dat", "plot"),
                    {name: (frame["step"], values) for name, values in curves.items()})
    return {name: float(np.mean(values)) for name, values in curves.items()}


def cmd_check_theorems(ctx: RunContext) -> Dict[str, Any]:
    cfg, th = ctx.cfg, ctx.cfg.theorem
    problem = ToyProblem(global_mass=th.global_mass, offset=th.mode_offset, std=th.mode_std)
    toy_cfg = cfg.diffusion.model_copy(update={"epochs": th.toy_epochs,
                                               "batch_size": min(cfg.diffusion.batch_size, th.toy_records)})
    toy_ds = problem.dataset(th.toy_records, np.random.default_rng([cfg.seed, 21]))
    toy_model = train(toy_ds, problem.ocp(), toy_cfg).denoiser

    rows = []
    for label, sampler in (("model", DiffusionSampler(toy_model, box=problem.ocp().box)),
                           ("truth", TruthSampler(problem))):
        checks = theorem2_check(problem, sampler, th.samples, th.trials, th.epsilon,
                                np.random.default_rng([cfg.seed, 22]), th.calibration_draws)
        rows.extend({"sampler": label, **check.to_dict()} for check in checks)
    bound_path = ctx.output("theorem_bound.csv", "bound_report")
    write_csv(pd.DataFrame(rows), bound_path)
    ctx.register("bound_report", bound_path)

    datasets = coverage_datasets(cfg.system, cfg.spec, cfg.datagen, ctx.solver_cfg(), th.coverage_doublings)
    probes = initial_states(cfg, th.coverage_probes, cfg.seed + 1)
    curve = theorem1_coverage_check(datasets, probes, th.coverage_epsilon)
    coverage_path = ctx.output("coverage.csv", "coverage_report")
    write_csv(curve.to_frame(), coverage_path)
    ctx.register("coverage_report", coverage_path)
    return {
        "bound": {f"{r['sampler']}:M={r['samples']}": r["status"] for r in rows},
        "coverage_decreasing": curve.strictly_decreasing,
        "coverage_within_epsilon": curve.within_epsilon,
    }


COMMANDS: Dict[str, Callable[[RunContext], Dict[str, Any]]] = {
    "generate": cmd_generate,
    "train-diffusion": cmd_train_diffusion,
    "train-bc": cmd_train_bc,
    "rollout": cmd_rollout,
    "compare": cmd_compare,
    "ablate": cmd_ablate,
    "multimodality": cmd_multimodality,
    "check-theorems": cmd_check_theorems,
}


# =============================================================================
# Entry point
# =============================================================================

def build_arg_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="diffusion-nmpc", description="Diffusion-model NMPC experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="Sectioned key-value experiment file")
        cmd.add_argument("--seed", type=int, default=None, help="Master seed (overrides the file)")
        cmd.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                         help="Override one config key; repeatable")
        cmd.add_argument("--output", default=None, help="Run directory (default: derived from digest)")
        cmd.add_argument("--dataset", default=None, help="Dataset file to read or write")
        cmd.add_argument("--checkpoint", default=None, help="Denoiser checkpoint")
        cmd.add_argument("--policy", default=None, help="Behavior-clone checkpoint")
        cmd.add_argument("--global-policy", default=None, help="Budget-matched behavior-clone checkpoint")
        cmd.add_argument("--guidance", type=float, default=None, help="Guidance weight w")
        if name == "generate":
            cmd.add_argument("--export", action="store_true", help="Also write the dataset as CSV")
        if name == "train-bc":
            cmd.add_argument("--global", dest="global_targets", action="store_true",
                             help="Train on budget-matched multistart targets")
        if name in ("rollout", "compare"):
            cmd.add_argument("--controller", action="append", default=None,
                             help="Controller to run; repeatable (default: [control] controllers)")
        if name == "rollout":
            cmd.add_argument("--episode", type=int, default=0, help="Index of the initial state")
        if name == "ablate":
            cmd.add_argument("--kind", choices=[k.value for k in AblationKind], default=None)
            cmd.add_argument("--grid", default=None, help="Comma-separated grid values")
    return parser


@contextmanager
def _ledger(settings: RuntimeSettings) -> Iterator[Optional[RunLedger]]:
    if not settings.ledger_enabled:
        yield None
        return
    settings.output_root.mkdir(parents=True, exist_ok=True)
    session = open_session(settings.resolved_ledger_url())
    try:
        yield RunLedger(session)
    finally:
        session.close()


def _configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _emit(payload: Dict[str, Any]) -> None:
    sys.stdout.write(json.dumps(payload, sort_keys=True, default=str) + "\n")
    sys.stdout.flush()


def run_command(args: argparse.Namespace, settings: RuntimeSettings) -> int:
    overrides = list(args.set)
    if args.guidance is not None:
        overrides.append(f"control.guidance_w={args.guidance}")
    cfg = load_config(args.config, overrides, args.seed)
    digest = cfg.digest()
    run_dir = Path(args.output) if args.output else settings.output_root / "runs" / f"{args.command}-{digest[:16]}"

    with _ledger(settings) as ledger:
        ctx = RunContext(args.command, cfg, settings, args, run_dir, ledger)
        if ledger is not None:
            ctx.run_id = ledger.start_run(args.command, digest, cfg.seed, run_dir)
        try:
            result = COMMANDS[args.command](ctx)
        except Exception as exc:
            if ledger is not None and ctx.run_id is not None:
                ledger.fail_run(ctx.run_id, f"{type(exc).__name__}: {exc}")
            raise
        summary = {"command": args.command, "status": "ok", "digest": digest, "seed": cfg.seed,
                   "run_dir": str(run_dir), "outputs": ctx.outputs, "result": result}
        if ledger is not None and ctx.run_id is not None:
            ledger.finish_run(ctx.run_id, json.loads(json.dumps(summary, default=str)))
    _emit(summary)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    command = None
    try:
        args = build_arg_parser().parse_args(argv)
        command = args.command
        settings = RuntimeSettings()
        _configure_logging(settings.log_level)
        return run_command(args, settings)
    except INPUT_ERRORS as exc:
        logger.error("%s", exc)
        _emit({"command": command, "status": "error", "error": f"{type(exc).__name__}: {exc}"})
        return 1
    except Exception as exc:
        logger.exception("Run failed")
        _emit({"command": command, "status": "failed", "error": f"{type(exc).__name__}: {exc}"})
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
