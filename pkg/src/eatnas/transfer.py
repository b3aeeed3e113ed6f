"""Two-stage elastic architecture transfer and the from-scratch baseline.

Stage 1 searches the small task from a random population and reranks its
top-k to pick the basic architecture (the accuracy-argmax of the reranked
candidates, not the score-argmax). Stage 2 seeds a fresh population on the
large task with perturbations of the basic architecture and searches again;
its rerank winner is the target architecture. Weights are not carried across
stages; the transferred object is the architecture code.

All subordinate rng streams derive from one master seed, keyed by stage and
purpose, so a from-scratch baseline run consumes the same streams as stage 2
of a transfer run and paired comparisons are seed-for-seed fair.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass
from typing import Callable, Optional

from .evolution import EvolutionConfig, EvolutionEngine, Population, load_checkpoint
from .perturb import seed_population
from .report import RunReport, StageReport
from .rng import child_rng
from .space import ArchCode, SearchSpaceConfig, arch_from_obj, arch_to_obj

logger = logging.getLogger(__name__)

TRANSFER_STATE_SCHEMA = "eatnas-transfer-state"


@dataclass(frozen=True)
class TransferConfig:
    """Both stages' spaces and engine settings.

    The two spaces share the primitive value sets by construction; their
    scale constraints, resolutions and class counts may differ. Block counts
    must match because stage-2 seeding perturbs the stage-1 winner block by
    block. ``random_stage2_init`` replaces seeding with a random
    initialization (ablation hook: it makes a transfer run's second stage
    identical to the from-scratch baseline).
    """

    space_small: SearchSpaceConfig
    space_large: SearchSpaceConfig
    evo_small: EvolutionConfig
    evo_large: EvolutionConfig
    include_seed_verbatim: bool = False
    random_stage2_init: bool = False

    def __post_init__(self) -> None:
        if self.space_small.n_blocks != self.space_large.n_blocks:
            raise ValueError(
                f"stage block counts differ: {self.space_small.n_blocks} vs "
                f"{self.space_large.n_blocks}; per-block seeding needs equal counts"
            )


@dataclass
class EatResult:
    basic: ArchCode
    target: ArchCode
    report: RunReport


def _stage_report(name: str, pop: Population, engine: EvolutionEngine,
                  chosen: Optional[ArchCode], rerank: list[dict],
                  wall_seconds: Optional[float]) -> StageReport:
    return StageReport(
        name=name,
        steps=pop.step,
        stats_history=pop.stats_history,
        quality_history=pop.quality_history,
        chosen_arch=arch_to_obj(chosen) if chosen is not None else None,
        rerank=rerank,
        cache_hits=engine.cache_hits,
        cache_misses=engine.cache_misses,
        evals=engine.evals,
        wall_seconds=wall_seconds,
    )


def _run_stage(
    evo_cfg: EvolutionConfig,
    space: SearchSpaceConfig,
    evaluator,
    rng,
    init: Callable[[EvolutionEngine], Population],
    checkpoint_path: Optional[str],
    config_hash: str,
    resume: bool,
    record_wall_time: bool,
    strong_evaluator=None,
) -> tuple[EvolutionEngine, Population, ArchCode, list[dict]]:
    """Run one stage end to end: restore-or-initialize, evolve, rerank."""
    engine = None
    pop = None
    if resume and checkpoint_path and os.path.exists(checkpoint_path):
        obj = load_checkpoint(checkpoint_path)
        if obj["config_hash"] and config_hash and obj["config_hash"] != config_hash:
            raise ValueError(
                f"checkpoint config hash {obj['config_hash']} does not match "
                f"current config {config_hash}"
            )
        engine, pop, phase = EvolutionEngine.restore(
            obj, evo_cfg, space, evaluator,
            checkpoint_path=checkpoint_path, config_hash=config_hash,
            record_wall_time=record_wall_time,
        )
        logger.info("resumed from %s at step %d (phase %s)", checkpoint_path, pop.step, phase)
        if phase == "init":
            engine._finish_init(pop)
    if engine is None:
        engine = EvolutionEngine(
            evo_cfg, space, evaluator, rng,
            checkpoint_path=checkpoint_path, config_hash=config_hash,
            record_wall_time=record_wall_time,
        )
        pop = init(engine)
    engine.run_until_converged(pop)
    chosen, rerank = engine.rerank_topk(pop, strong_evaluator=strong_evaluator)
    return engine, pop, chosen, rerank


def run_eat(
    cfg: TransferConfig,
    evaluator_small,
    evaluator_large,
    master_seed: int,
    config_obj: Optional[dict] = None,
    config_hash: str = "",
    checkpoint_dir: Optional[str] = None,
    deterministic: bool = True,
    resume: bool = False,
    rerank_evaluator_small=None,
    rerank_evaluator_large=None,
) -> EatResult:
    """Full elastic transfer: search small, pick the basic arch, seed and search large."""
    started = time.perf_counter()
    state_path = os.path.join(checkpoint_dir, "transfer-state.json") if checkpoint_dir else None
    stage1_ckpt = os.path.join(checkpoint_dir, "stage1.ckpt.json") if checkpoint_dir else None
    stage2_ckpt = os.path.join(checkpoint_dir, "stage2.ckpt.json") if checkpoint_dir else None
    if checkpoint_dir:
        os.makedirs(checkpoint_dir, exist_ok=True)

    state = None
    if resume and state_path and os.path.exists(state_path):
        with open(state_path, encoding="utf-8") as fh:
            state = json.load(fh)
        if state.get("schema") != TRANSFER_STATE_SCHEMA:
            raise ValueError(f"not a transfer state file: {state_path}")
        if state.get("config_hash") and config_hash and state["config_hash"] != config_hash:
            raise ValueError(
                f"transfer state {state_path} was written by a different "
                f"configuration; refusing to resume"
            )

    record_wall = not deterministic
    if state is not None and state.get("stage1_done"):
        basic = arch_from_obj(state["basic"])
        stage1 = StageReport.from_obj(state["stage1"])
        logger.info("stage 1 already complete; basic architecture restored from state")
    else:
        t1 = time.perf_counter()
        engine1, pop1, basic, rerank1 = _run_stage(
            cfg.evo_small, cfg.space_small, evaluator_small,
            child_rng(master_seed, "stage1"),
            init=lambda e: e.init_random(),
            checkpoint_path=stage1_ckpt, config_hash=config_hash,
            resume=resume, record_wall_time=record_wall,
            strong_evaluator=rerank_evaluator_small,
        )
        stage1 = _stage_report(
            "stage1-small", pop1, engine1, basic, rerank1,
            None if deterministic else time.perf_counter() - t1,
        )
        if state_path:
            tmp = state_path + ".tmp"
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump(
                    {
                        "schema": TRANSFER_STATE_SCHEMA,
                        "config_hash": config_hash,
                        "stage1_done": True,
                        "basic": arch_to_obj(basic),
                        "stage1": stage1.to_obj(include_timing=not deterministic),
                    },
                    fh, indent=2,
                )
                fh.write("\n")
            os.replace(tmp, state_path)

    t2 = time.perf_counter()
    if cfg.random_stage2_init:
        init = lambda e: e.init_random()  # noqa: E731
    else:
        seed_rng = child_rng(master_seed, "stage2", "seed")
        init = lambda e: e.init_with_archs(  # noqa: E731
            seed_population(
                basic, cfg.evo_large.population_size, cfg.space_large, seed_rng,
                include_seed_verbatim=cfg.include_seed_verbatim,
            )
        )
    engine2, pop2, target, rerank2 = _run_stage(
        cfg.evo_large, cfg.space_large, evaluator_large,
        child_rng(master_seed, "stage2"),
        init=init,
        checkpoint_path=stage2_ckpt, config_hash=config_hash,
        resume=resume, record_wall_time=record_wall,
        strong_evaluator=rerank_evaluator_large,
    )
    stage2 = _stage_report(
        "stage2-large", pop2, engine2, target, rerank2,
        None if deterministic else time.perf_counter() - t2,
    )

    report = RunReport(
        mode="transfer",
        master_seed=master_seed,
        config=config_obj or {},
        stages=[stage1, stage2],
        deterministic=deterministic,
        total_seconds=None if deterministic else time.perf_counter() - started,
    )
    return EatResult(basic=basic, target=target, report=report)


def run_from_scratch(
    space: SearchSpaceConfig,
    evo_cfg: EvolutionConfig,
    evaluator,
    master_seed: int,
    config_obj: Optional[dict] = None,
    config_hash: str = "",
    checkpoint_dir: Optional[str] = None,
    deterministic: bool = True,
    resume: bool = False,
    rerank_evaluator=None,
    stage_label: str = "stage2",
    stage_name: str = "scratch-large",
) -> tuple[ArchCode, RunReport]:
    """Single-stage random-init search with the same streams and budgets as stage 2."""
    started = time.perf_counter()
    ckpt = os.path.join(checkpoint_dir, "scratch.ckpt.json") if checkpoint_dir else None
    if checkpoint_dir:
        os.makedirs(checkpoint_dir, exist_ok=True)
    engine, pop, chosen, rerank = _run_stage(
        evo_cfg, space, evaluator,
        child_rng(master_seed, stage_label),
        init=lambda e: e.init_random(),
        checkpoint_path=ckpt, config_hash=config_hash,
        resume=resume, record_wall_time=not deterministic,
        strong_evaluator=rerank_evaluator,
    )
    stage = _stage_report(
        stage_name, pop, engine, chosen, rerank,
        None if deterministic else time.perf_counter() - started,
    )
    report = RunReport(
        mode="scratch-baseline",
        master_seed=master_seed,
        config=config_obj or {},
        stages=[stage],
        deterministic=deterministic,
        total_seconds=None if deterministic else time.perf_counter() - started,
    )
    return chosen, report
