"""Command-line entry point: config loading, experiment execution,
checkpoint/resume, and export of curve data and figures.

Modes: ``search`` (single-stage search), ``transfer`` (two-stage elastic
transfer), ``scratch-baseline`` (random-init search with stage-2 budgets),
``rerank`` (re-rank a checkpointed population) and ``export-curves`` (CSV plus
figure rendering from a report file). Flags override config-file values,
which override defaults. Exit codes: 0 success, 1 config error, 2 runtime
failure. ``EATNAS_LOG`` sets the log level.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from typing import Optional

from .evaluators import (
    DEFAULT_RERANK_TIMEOUT,
    DEFAULT_SEARCH_TIMEOUT,
    ExternalEvaluator,
    LandscapeConfig,
    ProtocolError,
    SyntheticEvaluator,
)
from .evolution import (
    EngineAbort,
    EvolutionConfig,
    EvolutionEngine,
    load_checkpoint,
)
from .report import RunReport, load_report, write_curves_csv
from .rng import child_rng
from .scoring import QualityParams, ScoreParams
from .space import (
    SearchSpaceConfig,
    arch_to_obj,
    large_task_space,
    small_task_space,
    space_from_obj,
    space_to_obj,
)
from .transfer import TransferConfig, run_eat, run_from_scratch, _run_stage, _stage_report

logger = logging.getLogger(__name__)

MODES = ("search", "transfer", "scratch-baseline", "rerank", "export-curves")


class ConfigError(ValueError):
    pass


# --- config (de)serialization -------------------------------------------------

def evo_to_obj(cfg: EvolutionConfig) -> dict:
    return {
        "population_size": cfg.population_size,
        "sample_size": cfg.sample_size,
        "rerank_k": cfg.rerank_k,
        "max_steps": cfg.max_steps,
        "window": cfg.window,
        "epsilon": cfg.epsilon,
        "score": {"target_size": cfg.score.target_size, "omega": cfg.score.omega},
        "quality": {
            "target_std": cfg.quality.target_std,
            "alpha": cfg.quality.alpha,
            "beta": cfg.quality.beta,
        },
        "size_metric": cfg.size_metric,
        "cache": cfg.cache,
        "eval_retries": cfg.eval_retries,
        "max_resamples": cfg.max_resamples,
        "checkpoint_every": cfg.checkpoint_every,
        "search_epochs": cfg.search_epochs,
        "rerank_multiple": cfg.rerank_multiple,
    }


def evo_from_obj(obj: dict) -> EvolutionConfig:
    base = evo_to_obj(_default_evo())
    merged = {**base, **obj}
    score = {**base["score"], **merged["score"]}
    quality = {**base["quality"], **merged["quality"]}
    return EvolutionConfig(
        score=ScoreParams(target_size=score["target_size"], omega=score["omega"]),
        quality=QualityParams(
            target_std=quality["target_std"], alpha=quality["alpha"], beta=quality["beta"]
        ),
        population_size=merged["population_size"],
        sample_size=merged["sample_size"],
        rerank_k=merged["rerank_k"],
        max_steps=merged["max_steps"],
        window=merged["window"],
        epsilon=merged["epsilon"],
        size_metric=merged["size_metric"],
        cache=merged["cache"],
        eval_retries=merged["eval_retries"],
        max_resamples=merged["max_resamples"],
        checkpoint_every=merged["checkpoint_every"],
        search_epochs=merged["search_epochs"],
        rerank_multiple=merged["rerank_multiple"],
    )


def _default_evo() -> EvolutionConfig:
    # Small-task profile: parameter count objective with a 3.0M-parameter target.
    return EvolutionConfig(score=ScoreParams(target_size=3.0e6, omega=-0.07))


def _default_evo_large() -> EvolutionConfig:
    # Large-task profile: multiply-add objective with a 500M target.
    return EvolutionConfig(
        score=ScoreParams(target_size=500.0e6, omega=-0.07), size_metric="multadds"
    )


def default_config(mode: str) -> dict:
    cfg: dict = {
        "mode": mode,
        "master_seed": 0,
        "deterministic": True,
        "task": "small",
        "evaluator": {
            "kind": "synthetic",
            "landscape": {"seed": 0, "shift": 0.8, "noise_std": 0.0, "size_coupling": False},
        },
        "include_seed_verbatim": False,
        "random_stage2_init": False,
    }
    if mode == "transfer":
        cfg["space_small"] = space_to_obj(small_task_space())
        cfg["space_large"] = space_to_obj(large_task_space())
        cfg["evo_small"] = evo_to_obj(_default_evo())
        cfg["evo_large"] = evo_to_obj(_default_evo_large())
    elif mode == "scratch-baseline":
        cfg["task"] = "large"
        cfg["space"] = space_to_obj(large_task_space())
        cfg["evo"] = evo_to_obj(_default_evo_large())
    else:
        cfg["space"] = space_to_obj(small_task_space())
        cfg["evo"] = evo_to_obj(_default_evo())
    return cfg


def resolve_config(args) -> dict:
    """Merge defaults, the config file and flag overrides (flags win)."""
    mode = args.mode
    file_cfg: dict = {}
    if args.config:
        if not os.path.exists(args.config):
            raise ConfigError(f"config file not found: {args.config}")
        with open(args.config, encoding="utf-8") as fh:
            try:
                file_cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {args.config} is not valid JSON: {exc}") from None
        mode = mode or file_cfg.get("mode")
    if mode is None:
        raise ConfigError("no mode given (flag or config file)")
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")
    cfg = default_config(mode)
    for key, value in file_cfg.items():
        if key == "evaluator" and isinstance(value, dict):
            cfg[key] = {**cfg[key], **value}
        else:
            # Structured sections (spaces, evo configs) replace the mode
            # defaults wholesale; their own schema defaults still apply.
            cfg[key] = value
    cfg["mode"] = mode
    if args.seed is not None:
        cfg["master_seed"] = args.seed
    if args.evaluator is not None:
        cfg["evaluator"]["kind"] = args.evaluator
    if args.endpoint is not None:
        cfg["evaluator"]["endpoint"] = args.endpoint
    if args.timing:
        cfg["deterministic"] = False
    if args.max_steps is not None:
        for key in ("evo", "evo_small", "evo_large"):
            if key in cfg:
                cfg[key] = {**cfg[key], "max_steps": args.max_steps}
    if cfg["evaluator"]["kind"] == "external" and not cfg["evaluator"].get("endpoint"):
        raise ConfigError("external evaluator needs --endpoint HOST:PORT or stdio:CMD")
    return cfg


def config_hash(cfg: dict) -> str:
    """Identity hash binding checkpoints to a run; runtime caps are excluded
    so an interrupted run may resume with a raised step limit."""
    identity = json.loads(json.dumps(cfg, sort_keys=True))
    identity.pop("deterministic", None)
    for key in ("evo", "evo_small", "evo_large"):
        if key in identity:
            identity[key].pop("max_steps", None)
            identity[key].pop("checkpoint_every", None)
    return hashlib.sha256(json.dumps(identity, sort_keys=True).encode("utf-8")).hexdigest()


def _build_evaluator(cfg: dict, space: SearchSpaceConfig, task: str):
    spec = cfg["evaluator"]
    if spec["kind"] == "synthetic":
        land = spec.get("landscape", {})
        return SyntheticEvaluator(
            space,
            LandscapeConfig(
                seed=land.get("seed", 0),
                shift=land.get("shift", 1.0),
                noise_std=land.get("noise_std", 0.0),
                size_coupling=land.get("size_coupling", False),
            ),
            task=task,
        )
    if spec["kind"] == "external":
        return ExternalEvaluator(
            spec["endpoint"],
            space,
            search_timeout=spec.get("search_timeout", DEFAULT_SEARCH_TIMEOUT),
            rerank_timeout=spec.get("rerank_timeout", DEFAULT_RERANK_TIMEOUT),
        )
    raise ConfigError(f"unknown evaluator kind {spec['kind']!r}")


# --- outputs -------------------------------------------------------------------

def _write_outputs(report: RunReport, out_dir: str, best_arch=None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, "report.json")
    report.save(report_path)
    rows = write_curves_csv(report, os.path.join(out_dir, "curves.csv"))
    from .figures import render_curves  # deferred: pulls in matplotlib

    figure_paths = render_curves(report, os.path.join(out_dir, "figures"))
    if best_arch is not None:
        with open(os.path.join(out_dir, "best_arch.json"), "w", encoding="utf-8") as fh:
            json.dump(arch_to_obj(best_arch), fh, indent=2)
            fh.write("\n")
    logger.info("wrote %s (%d curve rows, %d figures)", report_path, rows, len(figure_paths))


def _already_complete(ckpt_path: Optional[str], evo_cfg: EvolutionConfig, expected_hash: str) -> bool:
    if not ckpt_path or not os.path.exists(ckpt_path):
        return False
    obj = load_checkpoint(ckpt_path)
    if obj.get("config_hash") and obj["config_hash"] != expected_hash:
        raise ConfigError(
            f"checkpoint {ckpt_path} was written by a different configuration "
            f"(hash {obj['config_hash'][:12]}… != {expected_hash[:12]}…); refusing to resume"
        )
    if not obj.get("completed"):
        return False
    return obj.get("converged") or obj.get("step", 0) >= evo_cfg.max_steps


# --- mode runners --------------------------------------------------------------

def _run_single_stage(cfg: dict, args, stage_name: str, ckpt_name: str) -> int:
    space = space_from_obj(cfg["space"])
    evo = evo_from_obj(cfg["evo"])
    evaluator = _build_evaluator(cfg, space, cfg.get("task", "small"))
    ckpt_path = (
        os.path.join(args.checkpoint_dir, ckpt_name) if args.checkpoint_dir else None
    )
    if args.resume and _already_complete(ckpt_path, evo, config_hash(cfg)):
        print(f"run already complete ({ckpt_path}); nothing to do")
        return 0
    if args.checkpoint_dir:
        os.makedirs(args.checkpoint_dir, exist_ok=True)
    engine, pop, chosen, rerank = _run_stage(
        evo, space, evaluator,
        child_rng(cfg["master_seed"], "stage1" if stage_name == "search" else "stage2"),
        init=lambda e: e.init_random(),
        checkpoint_path=ckpt_path, config_hash=config_hash(cfg),
        resume=args.resume, record_wall_time=not cfg["deterministic"],
    )
    stage = _stage_report(stage_name, pop, engine, chosen, rerank, None)
    report = RunReport(
        mode=cfg["mode"], master_seed=cfg["master_seed"], config=cfg,
        stages=[stage], deterministic=cfg["deterministic"],
    )
    if args.out:
        _write_outputs(report, args.out, best_arch=chosen)
    print(f"{stage_name}: {pop.step} steps, best arch {json.dumps(arch_to_obj(chosen))}")
    return 0


def _run_transfer(cfg: dict, args) -> int:
    space_small = space_from_obj(cfg["space_small"])
    space_large = space_from_obj(cfg["space_large"])
    tcfg = TransferConfig(
        space_small=space_small,
        space_large=space_large,
        evo_small=evo_from_obj(cfg["evo_small"]),
        evo_large=evo_from_obj(cfg["evo_large"]),
        include_seed_verbatim=cfg.get("include_seed_verbatim", False),
        random_stage2_init=cfg.get("random_stage2_init", False),
    )
    if args.resume and args.checkpoint_dir:
        stage2 = os.path.join(args.checkpoint_dir, "stage2.ckpt.json")
        if _already_complete(stage2, tcfg.evo_large, config_hash(cfg)):
            print(f"transfer already complete ({stage2}); nothing to do")
            return 0
    result = run_eat(
        tcfg,
        _build_evaluator(cfg, space_small, "small"),
        _build_evaluator(cfg, space_large, "large"),
        master_seed=cfg["master_seed"],
        config_obj=cfg,
        config_hash=config_hash(cfg),
        checkpoint_dir=args.checkpoint_dir,
        deterministic=cfg["deterministic"],
        resume=args.resume,
    )
    if args.out:
        _write_outputs(result.report, args.out, best_arch=result.target)
    print(
        f"transfer: basic {json.dumps(arch_to_obj(result.basic))}\n"
        f"target {json.dumps(arch_to_obj(result.target))}"
    )
    return 0


def _run_scratch(cfg: dict, args) -> int:
    space = space_from_obj(cfg["space"])
    evo = evo_from_obj(cfg["evo"])
    ckpt_path = (
        os.path.join(args.checkpoint_dir, "scratch.ckpt.json") if args.checkpoint_dir else None
    )
    if args.resume and _already_complete(ckpt_path, evo, config_hash(cfg)):
        print(f"run already complete ({ckpt_path}); nothing to do")
        return 0
    chosen, report = run_from_scratch(
        space, evo,
        _build_evaluator(cfg, space, cfg.get("task", "large")),
        master_seed=cfg["master_seed"],
        config_obj=cfg,
        config_hash=config_hash(cfg),
        checkpoint_dir=args.checkpoint_dir,
        deterministic=cfg["deterministic"],
        resume=args.resume,
    )
    if args.out:
        _write_outputs(report, args.out, best_arch=chosen)
    print(f"scratch-baseline: best arch {json.dumps(arch_to_obj(chosen))}")
    return 0


def _run_rerank(cfg: dict, args) -> int:
    if not args.checkpoint_dir:
        raise ConfigError("rerank mode needs --checkpoint-dir with a search checkpoint")
    candidates = [
        os.path.join(args.checkpoint_dir, name)
        for name in ("search.ckpt.json", "scratch.ckpt.json", "stage2.ckpt.json")
    ]
    ckpt_path = next((p for p in candidates if os.path.exists(p)), None)
    if ckpt_path is None:
        raise ConfigError(f"no checkpoint found under {args.checkpoint_dir}")
    space = space_from_obj(cfg["space"]) if "space" in cfg else space_from_obj(cfg["space_large"])
    evo = evo_from_obj(cfg["evo"]) if "evo" in cfg else evo_from_obj(cfg["evo_large"])
    evaluator = _build_evaluator(cfg, space, cfg.get("task", "small"))
    engine, pop, _phase = EvolutionEngine.restore(
        load_checkpoint(ckpt_path), evo, space, evaluator
    )
    chosen, details = engine.rerank_topk(pop)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "best_arch.json"), "w", encoding="utf-8") as fh:
            json.dump(arch_to_obj(chosen), fh, indent=2)
            fh.write("\n")
    print(f"rerank: best arch {json.dumps(arch_to_obj(chosen))}")
    for d in details:
        acc = d["rerank_accuracy"]
        print(f"  candidate acc={acc if acc is not None else 'failed'} arch={json.dumps(d['arch'])}")
    return 0


def _run_export(args) -> int:
    if not args.report:
        raise ConfigError("export-curves needs --report PATH")
    if not os.path.exists(args.report):
        raise ConfigError(f"report file not found: {args.report}")
    out_dir = args.out or os.path.dirname(os.path.abspath(args.report))
    os.makedirs(out_dir, exist_ok=True)
    report = load_report(args.report)
    csv_path = os.path.join(out_dir, "curves.csv")
    rows = write_curves_csv(report, csv_path)
    from .figures import render_curves

    figure_paths = render_curves(report, os.path.join(out_dir, "figures"))
    print(f"wrote {csv_path} ({rows} rows) and {len(figure_paths)} figures")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eatnas",
        description="evolutionary architecture search with elastic transfer",
    )
    parser.add_argument("positional_mode", nargs="?", choices=MODES, metavar="MODE",
                        help="one of %(choices)s")
    parser.add_argument("--mode", dest="mode_flag", choices=MODES)
    parser.add_argument("--config", metavar="PATH")
    parser.add_argument("--seed", type=int, metavar="INT")
    parser.add_argument("--checkpoint-dir", metavar="PATH")
    parser.add_argument("--out", metavar="PATH")
    parser.add_argument("--evaluator", choices=("synthetic", "external"))
    parser.add_argument("--endpoint", metavar="HOST:PORT|stdio:CMD")
    parser.add_argument("--max-steps", type=int, metavar="INT")
    parser.add_argument("--report", metavar="PATH", help="input report for export-curves")
    parser.add_argument("--resume", action="store_true",
                        help="continue from checkpoints under --checkpoint-dir")
    parser.add_argument("--timing", action="store_true",
                        help="record wall-clock accounting (reports stop being byte-reproducible)")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=getattr(logging, os.environ.get("EATNAS_LOG", "WARNING").upper(), logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    args = build_parser().parse_args(argv)
    if args.positional_mode and args.mode_flag and args.positional_mode != args.mode_flag:
        print(f"error: positional mode {args.positional_mode!r} conflicts with --mode "
              f"{args.mode_flag!r}", file=sys.stderr)
        return 1
    args.mode = args.positional_mode or args.mode_flag
    try:
        if (args.mode or "") == "export-curves":
            return _run_export(args)
        cfg = resolve_config(args)
        if cfg["mode"] == "transfer":
            return _run_transfer(cfg, args)
        if cfg["mode"] == "scratch-baseline":
            return _run_scratch(cfg, args)
        if cfg["mode"] == "rerank":
            return _run_rerank(cfg, args)
        return _run_single_stage(cfg, args, "search", "search.ckpt.json")
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (EngineAbort, ProtocolError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
