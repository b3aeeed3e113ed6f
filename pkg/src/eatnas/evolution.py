"""Tournament-selection evolutionary engine.

One engine owns one sequential search: initialize a fixed-capacity population
(random draws or perturbations of a seed architecture), then repeat the
tournament (sample S members uniformly without replacement, mutate the
sample's best, evaluate and score the mutant, swap it in for the sample's
worst) until the population quality stops improving or the step cap is
reached. Ties on score prefer the newer member as sample-best and sacrifice
the older as sample-worst, which injects mild aging pressure.

Convergence is a sliding-window test on the quality history: stop when the
maximum over the last ``window`` quality values improves on the maximum over
the ``window`` values before them by less than ``epsilon``.

Evaluations are cached by canonical arch encoding (plus evaluator name and
epoch budget) and retried on failure; a failing mutant is eventually
discarded and the step re-sampled. Periodic checkpoints capture the full
engine state (population, rng state, histories, cache), so an interrupted
run resumes with an identical future trajectory under a deterministic
evaluator.
"""

from __future__ import annotations

import json
import logging
import os
import random
import time
from dataclasses import dataclass, field
from typing import Optional

from .evaluators import EvalBudget, EvalResult
from .perturb import mutate, seed_population
from .scoring import QualityParams, ScoreParams, model_score, population_quality, population_stats
from .space import ArchCode, SearchSpaceConfig, arch_from_obj, arch_to_obj, encode, random_arch

logger = logging.getLogger(__name__)

CHECKPOINT_SCHEMA = "eatnas-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class EvolutionConfig:
    """Engine settings; sample_size must satisfy 2 <= S <= P."""

    score: ScoreParams
    quality: QualityParams = QualityParams()
    population_size: int = 64
    sample_size: int = 16
    rerank_k: int = 8
    max_steps: int = 500
    window: int = 20
    epsilon: float = 1e-4
    size_metric: str = "params"  # or "multadds"
    cache: bool = True
    eval_retries: int = 3
    max_resamples: int = 50
    checkpoint_every: int = 10
    search_epochs: int = 1
    rerank_multiple: int = 5

    def __post_init__(self) -> None:
        if not 2 <= self.sample_size <= self.population_size:
            raise ValueError(
                f"need 2 <= sample_size <= population_size, got "
                f"S={self.sample_size} P={self.population_size}"
            )
        if not 1 <= self.rerank_k <= self.population_size:
            raise ValueError(f"need 1 <= rerank_k <= population_size, got {self.rerank_k}")
        if self.size_metric not in ("params", "multadds"):
            raise ValueError(f"size_metric must be 'params' or 'multadds', got {self.size_metric!r}")
        if self.window < 1 or self.max_steps < 0 or self.epsilon < 0:
            raise ValueError("window must be >= 1, max_steps >= 0, epsilon >= 0")


@dataclass
class ModelRecord:
    """An evaluated genome living in the population."""

    arch: ArchCode
    accuracy: float
    size: float
    score: float
    birth_step: int
    eval_meta: dict = field(default_factory=dict)


@dataclass
class Population:
    """Fixed-capacity member list plus the step counter and history streams."""

    members: list[ModelRecord]
    step: int = 0
    quality_history: list[tuple[int, float]] = field(default_factory=list)
    stats_history: list[dict] = field(default_factory=list)

    def scores(self) -> list[float]:
        return [m.score for m in self.members]

    def best(self) -> ModelRecord:
        return max(self.members, key=lambda m: (m.score, m.birth_step))


class EngineAbort(RuntimeError):
    """Unrecoverable engine failure; carries the resumable checkpoint path, if any."""

    def __init__(self, message: str, checkpoint_path: Optional[str] = None) -> None:
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


class _EvalFailed(RuntimeError):
    pass


class EvolutionEngine:
    """Sequential engine bound to one config, space, evaluator and rng stream."""

    def __init__(
        self,
        cfg: EvolutionConfig,
        space: SearchSpaceConfig,
        evaluator,
        rng: random.Random,
        checkpoint_path: Optional[str] = None,
        config_hash: str = "",
        record_wall_time: bool = False,
    ) -> None:
        self.cfg = cfg
        self.space = space
        self.evaluator = evaluator
        self.rng = rng
        self.checkpoint_path = checkpoint_path
        self.config_hash = config_hash
        self.record_wall_time = record_wall_time
        self.cache: dict[tuple[str, str, int], EvalResult] = {}
        self.cache_hits = 0
        self.cache_misses = 0
        self.evals = 0
        self._birth = 0
        self._pending: list[ArchCode] = []

    # --- evaluation --------------------------------------------------------

    def _evaluate(self, arch: ArchCode, budget: EvalBudget, evaluator=None) -> EvalResult:
        evaluator = evaluator or self.evaluator
        key = (evaluator.name, encode(arch), budget.epochs)
        if self.cfg.cache and key in self.cache:
            self.cache_hits += 1
            return self.cache[key]
        last_detail = "no attempt made"
        for attempt in range(1 + self.cfg.eval_retries):
            self.evals += 1
            result = evaluator.evaluate(arch, budget)
            if result.ok:
                if self.cfg.cache:
                    self.cache_misses += 1
                    self.cache[key] = result
                return result
            last_detail = result.detail
            logger.warning(
                "evaluation failed (attempt %d/%d): %s",
                attempt + 1, 1 + self.cfg.eval_retries, result.detail,
            )
        raise _EvalFailed(last_detail)

    def _make_record(self, arch: ArchCode, result: EvalResult, budget: EvalBudget) -> ModelRecord:
        size = float(result.size_params if self.cfg.size_metric == "params" else result.size_multadds)
        score = model_score(result.accuracy, size, self.cfg.score)
        meta = {"evaluator": self.evaluator.name, "epochs": budget.epochs}
        if result.detail:
            meta["detail"] = result.detail  # e.g. the worker's dataset split note
        record = ModelRecord(
            arch=arch,
            accuracy=result.accuracy,
            size=size,
            score=score,
            birth_step=self._birth,
            eval_meta=meta,
        )
        self._birth += 1
        return record

    # --- initialization ----------------------------------------------------

    def init_random(self) -> Population:
        """Population of P uniformly drawn valid architectures, each evaluated once."""
        archs = [random_arch(self.space, self.rng) for _ in range(self.cfg.population_size)]
        return self._init_with(archs)

    def init_seeded(self, basic: ArchCode, include_seed_verbatim: bool = False) -> Population:
        """Population of P perturbations of the basic architecture."""
        archs = seed_population(
            basic,
            self.cfg.population_size,
            self.space,
            self.rng,
            include_seed_verbatim=include_seed_verbatim,
        )
        return self._init_with(archs)

    def init_with_archs(self, archs: list[ArchCode]) -> Population:
        """Population from explicitly supplied architectures (seeding hooks, tests)."""
        if len(archs) != self.cfg.population_size:
            raise ValueError(f"need {self.cfg.population_size} archs, got {len(archs)}")
        return self._init_with(list(archs))

    def _init_with(self, archs: list[ArchCode]) -> Population:
        pop = Population(members=[])
        self._pending = list(archs)
        self._finish_init(pop)
        return pop

    def _finish_init(self, pop: Population) -> None:
        budget = EvalBudget(epochs=self.cfg.search_epochs, purpose="search")
        while self._pending:
            arch = self._pending[0]
            started = time.perf_counter()
            try:
                result = self._evaluate(arch, budget)
            except _EvalFailed as exc:
                path = self._write_checkpoint(pop, phase="init")
                raise EngineAbort(
                    f"initialization aborted after {len(pop.members)} members: {exc}", path
                ) from None
            record = self._make_record(arch, result, budget)
            if self.record_wall_time:
                record.eval_meta["wall_seconds"] = time.perf_counter() - started
            pop.members.append(record)
            self._pending.pop(0)
            if self.checkpoint_path and len(pop.members) % self.cfg.checkpoint_every == 0 and self._pending:
                self._write_checkpoint(pop, phase="init")
        self._record_stats(pop)
        logger.info(
            "population initialized: P=%d mean_acc=%.4f best_score=%.6f",
            len(pop.members), pop.stats_history[-1]["mean_accuracy"], pop.stats_history[-1]["best_score"],
        )
        self._write_checkpoint(pop, phase="evolve")

    def _record_stats(self, pop: Population) -> None:
        scores = pop.scores()
        mean, std = population_stats(scores)
        quality = population_quality(scores, self.cfg.quality)
        pop.quality_history.append((pop.step, quality))
        pop.stats_history.append(
            {
                "step": pop.step,
                "mean_score": mean,
                "std_score": std,
                "quality": quality,
                "best_score": max(scores),
                "mean_accuracy": sum(m.accuracy for m in pop.members) / len(pop.members),
            }
        )

    # --- evolution ---------------------------------------------------------

    def evolution_step(self, pop: Population) -> Population:
        """One tournament: mutate the sample-best, replace the sample-worst."""
        if not pop.members:
            raise ValueError("population not initialized")
        budget = EvalBudget(epochs=self.cfg.search_epochs, purpose="search")
        for _ in range(self.cfg.max_resamples):
            idxs = self.rng.sample(range(len(pop.members)), self.cfg.sample_size)
            best_i = max(idxs, key=lambda i: (pop.members[i].score, pop.members[i].birth_step))
            worst_i = min(idxs, key=lambda i: (pop.members[i].score, pop.members[i].birth_step))
            child = mutate(pop.members[best_i].arch, self.space, self.rng)
            try:
                result = self._evaluate(child, budget)
            except _EvalFailed as exc:
                logger.warning("mutant discarded, re-sampling step: %s", exc)
                continue
            record = self._make_record(child, result, budget)
            # best_i != worst_i always: birth steps are unique, so the sample's
            # (score, birth) keys are strictly ordered and S >= 2
            sample_best_score = pop.members[best_i].score
            removed = pop.members[worst_i]
            pop.members[worst_i] = record
            pop.step += 1
            self._record_stats(pop)
            row = pop.stats_history[-1]
            logger.debug(
                "step=%d mutant=%.6f sample_best=%.6f removed=%.6f mean=%.6f std=%.6f Q=%.6f",
                pop.step, record.score, sample_best_score,
                removed.score, row["mean_score"], row["std_score"], row["quality"],
            )
            if self.checkpoint_path and pop.step % self.cfg.checkpoint_every == 0:
                self._write_checkpoint(pop, phase="evolve")
            return pop
        path = self._write_checkpoint(pop, phase="evolve")
        raise EngineAbort(
            f"gave up after {self.cfg.max_resamples} re-sampled steps at step {pop.step}", path
        )

    def converged(self, pop: Population) -> bool:
        qs = [q for _, q in pop.quality_history]
        w = self.cfg.window
        if len(qs) < 2 * w + 1:
            return False
        return max(qs[-w:]) - max(qs[-2 * w:-w]) < self.cfg.epsilon

    def run_until_converged(self, pop: Population) -> Population:
        """Step until the quality window stalls or the step cap is reached."""
        while pop.step < self.cfg.max_steps and not self.converged(pop):
            self.evolution_step(pop)
        logger.info(
            "run finished at step %d (converged=%s) best_score=%.6f",
            pop.step, self.converged(pop), pop.best().score,
        )
        self._write_checkpoint(pop, phase="evolve", completed=True)
        return pop

    # --- reranking ---------------------------------------------------------

    def rerank_topk(self, pop: Population, strong_evaluator=None) -> tuple[ArchCode, list[dict]]:
        """Re-evaluate the k score-best members at the rerank budget.

        Returns the architecture with the highest re-evaluated accuracy
        (accuracy, not score) plus per-candidate details. Candidates whose
        re-evaluation fails are excluded with a warning.
        """
        if len(pop.members) < self.cfg.rerank_k:
            raise ValueError(f"population {len(pop.members)} smaller than k={self.cfg.rerank_k}")
        strong = strong_evaluator or self.evaluator
        budget = EvalBudget(
            epochs=self.cfg.search_epochs * self.cfg.rerank_multiple, purpose="rerank"
        )
        candidates = sorted(pop.members, key=lambda m: (m.score, m.birth_step), reverse=True)
        candidates = candidates[: self.cfg.rerank_k]
        details: list[dict] = []
        scored: list[tuple[float, int, ArchCode]] = []
        for rank, member in enumerate(candidates):
            try:
                result = self._evaluate(member.arch, budget, evaluator=strong)
            except _EvalFailed as exc:
                logger.warning("rerank candidate %d excluded: %s", rank, exc)
                details.append(
                    {"arch": arch_to_obj(member.arch), "search_score": member.score,
                     "rerank_accuracy": None, "excluded": True}
                )
                continue
            details.append(
                {"arch": arch_to_obj(member.arch), "search_score": member.score,
                 "rerank_accuracy": result.accuracy, "excluded": False}
            )
            scored.append((result.accuracy, -rank, member.arch))
        if not scored:
            raise RuntimeError(f"all {self.cfg.rerank_k} rerank candidates failed")
        best = max(scored, key=lambda t: (t[0], t[1]))
        return best[2], details

    # --- checkpointing -----------------------------------------------------

    def _write_checkpoint(self, pop: Population, phase: str, completed: bool = False) -> Optional[str]:
        if not self.checkpoint_path:
            return None
        obj = self.checkpoint_obj(pop, phase=phase, completed=completed)
        tmp = f"{self.checkpoint_path}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2)
            fh.write("\n")
        os.replace(tmp, self.checkpoint_path)
        return self.checkpoint_path

    def checkpoint_obj(self, pop: Population, phase: str = "evolve", completed: bool = False) -> dict:
        state = self.rng.getstate()
        return {
            "schema": CHECKPOINT_SCHEMA,
            "version": CHECKPOINT_VERSION,
            "config_hash": self.config_hash,
            "phase": phase,
            "completed": completed,
            "converged": bool(pop.members) and self.converged(pop),
            "step": pop.step,
            "birth_counter": self._birth,
            "rng_state": [state[0], list(state[1]), state[2]],
            "members": [
                {
                    "arch": arch_to_obj(m.arch),
                    "accuracy": m.accuracy,
                    "size": m.size,
                    "score": m.score,
                    "birth_step": m.birth_step,
                    "eval_meta": m.eval_meta,
                }
                for m in pop.members
            ],
            "pending": [arch_to_obj(a) for a in self._pending],
            "quality_history": [[s, q] for s, q in pop.quality_history],
            "stats_history": pop.stats_history,
            "cache": [
                {
                    "evaluator": key[0],
                    "arch": json.loads(key[1]),
                    "epochs": key[2],
                    "result": {
                        "status": res.status,
                        "accuracy": res.accuracy,
                        "params": res.size_params,
                        "multadds": res.size_multadds,
                        "detail": res.detail,
                    },
                }
                for key, res in self.cache.items()
            ],
            "counters": {
                "cache_hits": self.cache_hits,
                "cache_misses": self.cache_misses,
                "evals": self.evals,
            },
        }

    @classmethod
    def restore(
        cls,
        obj: dict,
        cfg: EvolutionConfig,
        space: SearchSpaceConfig,
        evaluator,
        checkpoint_path: Optional[str] = None,
        config_hash: str = "",
        record_wall_time: bool = False,
    ) -> tuple["EvolutionEngine", Population, str]:
        """Rebuild (engine, population, phase) from a checkpoint object."""
        if obj.get("schema") != CHECKPOINT_SCHEMA:
            raise ValueError(f"not a checkpoint: schema {obj.get('schema')!r}")
        if obj.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {obj.get('version')!r}")
        engine = cls(
            cfg, space, evaluator,
            rng=random.Random(),
            checkpoint_path=checkpoint_path,
            config_hash=config_hash,
            record_wall_time=record_wall_time,
        )
        state = obj["rng_state"]
        engine.rng.setstate((state[0], tuple(state[1]), state[2]))
        engine._birth = obj["birth_counter"]
        engine._pending = [arch_from_obj(a) for a in obj["pending"]]
        engine.cache_hits = obj["counters"]["cache_hits"]
        engine.cache_misses = obj["counters"]["cache_misses"]
        engine.evals = obj["counters"]["evals"]
        for entry in obj["cache"]:
            key = (entry["evaluator"], json.dumps(entry["arch"]), entry["epochs"])
            res = entry["result"]
            engine.cache[key] = EvalResult(
                status=res["status"],
                accuracy=res["accuracy"],
                size_params=res["params"],
                size_multadds=res["multadds"],
                detail=res["detail"],
            )
        pop = Population(
            members=[
                ModelRecord(
                    arch=arch_from_obj(m["arch"]),
                    accuracy=m["accuracy"],
                    size=m["size"],
                    score=m["score"],
                    birth_step=m["birth_step"],
                    eval_meta=dict(m["eval_meta"]),
                )
                for m in obj["members"]
            ],
            step=obj["step"],
            quality_history=[(s, q) for s, q in obj["quality_history"]],
            stats_history=list(obj["stats_history"]),
        )
        return engine, pop, obj["phase"]

    def resume(self, pop: Population, phase: str) -> Population:
        """Continue a restored run: finish init if needed, then evolve to the stop rule."""
        if phase == "init":
            self._finish_init(pop)
        return self.run_until_converged(pop)


def load_checkpoint(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
