import json
import sys

import pytest

from conftest import loose_space
from eatnas.evaluators import EvalBudget, EvalResult, ExternalEvaluator, LandscapeConfig, SyntheticEvaluator
from eatnas.evolution import (
    EngineAbort,
    EvolutionConfig,
    EvolutionEngine,
    load_checkpoint,
)
from eatnas.rng import child_rng
from eatnas.scoring import QualityParams, ScoreParams
from eatnas.space import ArchCode, BlockCode, ConvOp, encode


def _evo(**overrides) -> EvolutionConfig:
    defaults = dict(
        score=ScoreParams(target_size=1e5, omega=-0.07),
        quality=QualityParams(target_std=0.1),
        population_size=12,
        sample_size=4,
        rerank_k=3,
        max_steps=60,
        window=8,
        checkpoint_every=5,
    )
    defaults.update(overrides)
    return EvolutionConfig(**defaults)


def _engine(space=None, cfg=None, seed=0, task="small", lseed=1, shift=0.8, **evkw):
    space = space or loose_space(3)
    cfg = cfg or _evo()
    evaluator = SyntheticEvaluator(space, LandscapeConfig(seed=lseed, shift=shift, **evkw), task)
    return EvolutionEngine(cfg, space, evaluator, child_rng(seed, "test"))


def _basic(n=3):
    return ArchCode(
        tuple(
            BlockCode(conv=ConvOp.MBCONV3, kernel=5, skip=True, width=1.0, depth=2)
            for _ in range(n)
        )
    )


class ConstantEvaluator:
    """Deterministic stub: fixed accuracy, fixed sizes."""

    name = "constant"

    def __init__(self, accuracy=0.5):
        self.accuracy = accuracy

    def evaluate(self, arch, budget):
        return EvalResult(status="ok", accuracy=self.accuracy, size_params=1000, size_multadds=2000)


class FlakyEvaluator:
    """Fails every Nth call; otherwise delegates."""

    name = "flaky"

    def __init__(self, inner, fail_every):
        self.inner = inner
        self.fail_every = fail_every
        self.calls = 0

    def evaluate(self, arch, budget):
        self.calls += 1
        if self.calls % self.fail_every == 0:
            return EvalResult(status="failed", accuracy=None, size_params=0, size_multadds=0,
                              detail="flaky failure")
        return self.inner.evaluate(arch, budget)


class AlwaysFailEvaluator:
    name = "alwaysfail"

    def evaluate(self, arch, budget):
        return EvalResult(status="failed", accuracy=None, size_params=0, size_multadds=0,
                          detail="boom")


class TestInit:
    def test_random_init_counts_and_birth_order(self):
        engine = _engine()
        pop = engine.init_random()
        assert len(pop.members) == 12
        assert [m.birth_step for m in pop.members] == list(range(12))
        assert pop.step == 0
        assert len(pop.quality_history) == 1
        assert len(pop.stats_history) == 1

    def test_scores_recomputable_from_record_fields(self):
        engine = _engine()
        pop = engine.init_random()
        from eatnas.scoring import model_score

        for m in pop.members:
            assert m.score == model_score(m.accuracy, m.size, engine.cfg.score)

    def test_seeded_init_stays_within_one_edit_per_block(self):
        engine = _engine()
        basic = _basic()
        pop = engine.init_seeded(basic)
        for member in pop.members:
            for before, after in zip(basic.blocks, member.arch.blocks):
                diffs = sum(
                    getattr(before, p) != getattr(after, p)
                    for p in ("conv", "kernel", "skip", "width", "depth")
                )
                assert diffs <= 1

    def test_duplicate_seeds_hit_the_cache(self):
        # a single-block space forces seed collisions
        space = loose_space(1, downsample_blocks=frozenset())
        engine = _engine(space=space, cfg=_evo(population_size=32, sample_size=4, rerank_k=2))
        pop = engine.init_seeded(_basic(1))
        unique = len({encode(m.arch) for m in pop.members})
        assert engine.cache_hits == 32 - unique
        assert engine.cache_misses == unique

    def test_abort_during_init_leaves_resumable_checkpoint(self, tmp_path):
        space = loose_space(3)
        good = SyntheticEvaluator(space, LandscapeConfig(seed=1, shift=0.8), "small")

        class FailAfter:
            name = "failafter"

            def __init__(self, n):
                self.n = n
                self.calls = 0

            def evaluate(self, arch, budget):
                self.calls += 1
                if self.calls > self.n:
                    return EvalResult(status="failed", accuracy=None, size_params=0,
                                      size_multadds=0, detail="died")
                return good.evaluate(arch, budget)

        ckpt = tmp_path / "ck.json"
        cfg = _evo(eval_retries=1)
        engine = EvolutionEngine(cfg, space, FailAfter(5), child_rng(3, "t"),
                                 checkpoint_path=str(ckpt))
        with pytest.raises(EngineAbort) as excinfo:
            engine.init_random()
        assert excinfo.value.checkpoint_path == str(ckpt)
        obj = load_checkpoint(ckpt)
        assert obj["phase"] == "init"
        assert len(obj["members"]) == 5
        assert len(obj["pending"]) == 12 - 5

        # swap in a working evaluator and finish from the checkpoint
        restored, pop, phase = EvolutionEngine.restore(obj, cfg, space, good,
                                                       checkpoint_path=str(ckpt))
        assert phase == "init"
        restored.resume(pop, phase)
        assert len(pop.members) == 12
        assert pop.step > 0


class TestStep:
    def test_population_size_invariant(self):
        engine = _engine()
        pop = engine.init_random()
        for _ in range(20):
            engine.evolution_step(pop)
            assert len(pop.members) == 12
        assert pop.step == 20
        assert len(pop.quality_history) == 21

    def test_full_sample_never_removes_global_best(self):
        cfg = _evo(population_size=8, sample_size=8, rerank_k=2)
        engine = _engine(cfg=cfg)
        pop = engine.init_random()
        for _ in range(30):
            best_before = max(m.score for m in pop.members)
            engine.evolution_step(pop)
            assert max(m.score for m in pop.members) >= best_before

    def test_best_score_non_decreasing_over_500_steps(self):
        engine = _engine(space=loose_space(4), cfg=_evo(population_size=16, sample_size=6,
                                                        max_steps=500, rerank_k=4))
        pop = engine.init_random()
        best = max(m.score for m in pop.members)
        for _ in range(500):
            engine.evolution_step(pop)
            new_best = max(m.score for m in pop.members)
            assert new_best >= best
            best = new_best

    def test_mutant_discarded_and_step_resampled_on_failure(self, caplog):
        space = loose_space(3)
        inner = SyntheticEvaluator(space, LandscapeConfig(seed=1, shift=0.8), "small")
        flaky = FlakyEvaluator(inner, fail_every=7)
        cfg = _evo(eval_retries=1, cache=False)
        engine = EvolutionEngine(cfg, space, flaky, child_rng(5, "t"))
        pop = engine.init_random()
        for _ in range(30):
            engine.evolution_step(pop)
        assert pop.step == 30
        assert len(pop.members) == 12

    def test_always_failing_evaluator_aborts_with_checkpoint(self, tmp_path):
        space = loose_space(3)
        ckpt = tmp_path / "ck.json"
        cfg = _evo(eval_retries=1, max_resamples=3)
        good = SyntheticEvaluator(space, LandscapeConfig(seed=1, shift=0.8), "small")
        engine = EvolutionEngine(cfg, space, good, child_rng(6, "t"), checkpoint_path=str(ckpt))
        pop = engine.init_random()
        engine.evaluator = AlwaysFailEvaluator()
        with pytest.raises(EngineAbort):
            engine.evolution_step(pop)
        assert ckpt.exists()


class TestConvergence:
    def test_constant_quality_stops_after_two_windows(self, caplog):
        space = loose_space(3)
        cfg = _evo(window=5, max_steps=500, cache=False)
        engine = EvolutionEngine(cfg, space, ConstantEvaluator(), child_rng(7, "t"))
        pop = engine.init_random()
        engine.run_until_converged(pop)
        assert pop.step == 2 * cfg.window

    def test_max_steps_cap_dominates(self):
        engine = _engine(cfg=_evo(max_steps=5, window=20))
        pop = engine.init_random()
        engine.run_until_converged(pop)
        assert pop.step == 5

    def test_quality_history_tracks_steps(self):
        engine = _engine()
        pop = engine.init_random()
        engine.run_until_converged(pop)
        assert len(pop.quality_history) == pop.step + 1
        assert len(pop.stats_history) == pop.step + 1


class TestDeterminism:
    def test_identical_runs_produce_identical_state(self):
        def run():
            engine = _engine(seed=11)
            pop = engine.init_random()
            engine.run_until_converged(pop)
            return engine.checkpoint_obj(pop)

        a, b = run(), run()
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)

    def test_checkpoint_restore_continues_identically(self, tmp_path):
        space = loose_space(3)
        cfg = _evo(max_steps=40, window=50)  # window too wide to trigger

        def fresh_engine(path=None):
            ev = SyntheticEvaluator(space, LandscapeConfig(seed=2, shift=0.8), "small")
            return EvolutionEngine(cfg, space, ev, child_rng(13, "t"),
                                   checkpoint_path=path)

        # uninterrupted
        engine_a = fresh_engine()
        pop_a = engine_a.init_random()
        engine_a.run_until_converged(pop_a)

        # interrupted at step 15, then restored
        engine_b = fresh_engine()
        pop_b = engine_b.init_random()
        for _ in range(15):
            engine_b.evolution_step(pop_b)
        snapshot = engine_b.checkpoint_obj(pop_b)
        ev = SyntheticEvaluator(space, LandscapeConfig(seed=2, shift=0.8), "small")
        engine_c, pop_c, phase = EvolutionEngine.restore(snapshot, cfg, space, ev)
        assert phase == "evolve"
        engine_c.run_until_converged(pop_c)

        assert json.dumps(engine_a.checkpoint_obj(pop_a), sort_keys=True) == json.dumps(
            engine_c.checkpoint_obj(pop_c), sort_keys=True
        )

    def test_restore_rejects_unknown_schema(self):
        with pytest.raises(ValueError, match="schema"):
            EvolutionEngine.restore({"schema": "other"}, _evo(), loose_space(3),
                                    ConstantEvaluator())

    def test_restore_rejects_unknown_version(self):
        with pytest.raises(ValueError, match="version"):
            EvolutionEngine.restore({"schema": "eatnas-checkpoint", "version": 99},
                                    _evo(), loose_space(3), ConstantEvaluator())


class TestRerank:
    def test_k1_returns_score_best_arch(self):
        engine = _engine(cfg=_evo(rerank_k=1))
        pop = engine.init_random()
        best = max(pop.members, key=lambda m: (m.score, m.birth_step))
        chosen, details = engine.rerank_topk(pop)
        assert chosen == best.arch
        assert len(details) == 1

    def test_winner_is_accuracy_argmax_of_topk(self):
        # size coupling makes score order differ from accuracy order
        space = loose_space(3)
        cfg = _evo(rerank_k=4)
        ev = SyntheticEvaluator(space, LandscapeConfig(seed=9, shift=0.8, size_coupling=True),
                                "small")
        engine = EvolutionEngine(cfg, space, ev, child_rng(21, "t"))
        pop = engine.init_random()
        chosen, details = engine.rerank_topk(pop)
        best_detail = max(
            (d for d in details if not d["excluded"]), key=lambda d: d["rerank_accuracy"]
        )
        assert best_detail["arch"] == {"blocks": [
            {"conv": b.conv.value, "kernel": b.kernel, "skip": b.skip,
             "width": b.width, "depth": b.depth} for b in chosen.blocks
        ]}

    def test_rerank_uses_higher_budget(self):
        calls = []

        class Recording(ConstantEvaluator):
            def evaluate(self, arch, budget):
                calls.append((budget.epochs, budget.purpose))
                return super().evaluate(arch, budget)

        space = loose_space(3)
        cfg = _evo(cache=False, rerank_multiple=5)
        engine = EvolutionEngine(cfg, space, Recording(), child_rng(2, "t"))
        pop = engine.init_random()
        engine.rerank_topk(pop)
        rerank_calls = [c for c in calls if c[1] == "rerank"]
        assert rerank_calls == [(5, "rerank")] * cfg.rerank_k

    def test_failed_candidates_excluded_all_failed_raises(self):
        engine = _engine(cfg=_evo(eval_retries=0, cache=False))
        pop = engine.init_random()
        engine.evaluator = AlwaysFailEvaluator()
        with pytest.raises(RuntimeError, match="rerank"):
            engine.rerank_topk(pop)

    def test_strong_equals_weak_matches_direct_argmax(self):
        engine = _engine(cfg=_evo(rerank_k=8, population_size=16, sample_size=4))
        pop = engine.init_random()
        chosen, _ = engine.rerank_topk(pop, strong_evaluator=engine.evaluator)
        topk = sorted(pop.members, key=lambda m: (m.score, m.birth_step), reverse=True)[:8]
        budget = EvalBudget(epochs=engine.cfg.search_epochs * engine.cfg.rerank_multiple,
                            purpose="rerank")
        direct = max(topk, key=lambda m: engine.evaluator.evaluate(m.arch, budget).accuracy)
        assert chosen == direct.arch


class TestCacheSemantics:
    def test_cache_disabled_reevaluates(self):
        space = loose_space(3)
        counter = {"n": 0}

        class Counting(ConstantEvaluator):
            def evaluate(self, arch, budget):
                counter["n"] += 1
                return super().evaluate(arch, budget)

        cfg = _evo(cache=False)
        engine = EvolutionEngine(cfg, space, Counting(), child_rng(17, "t"))
        arch = _basic()
        engine._evaluate(arch, EvalBudget())
        engine._evaluate(arch, EvalBudget())
        assert counter["n"] == 2
        assert engine.cache_hits == 0

    def test_cache_keyed_by_epochs(self):
        engine = _engine()
        arch = _basic()
        a = engine._evaluate(arch, EvalBudget(epochs=1))
        b = engine._evaluate(arch, EvalBudget(epochs=5, purpose="rerank"))
        assert engine.cache_misses == 2 and engine.cache_hits == 0
        assert b.accuracy > a.accuracy  # epoch bonus


class TestEngineWithExternalWorker:
    def test_flaky_worker_retries_through_protocol(self):
        space = loose_space(3)
        endpoint = f"stdio:{sys.executable} -m eatnas.echo_worker --accuracy 0.5 --fail-every 5"
        ev = ExternalEvaluator(endpoint, space)
        try:
            cfg = _evo(population_size=6, sample_size=2, rerank_k=2, eval_retries=3)
            engine = EvolutionEngine(cfg, space, ev, child_rng(31, "t"))
            pop = engine.init_random()
            assert len(pop.members) == 6
            assert all(m.accuracy == 0.5 for m in pop.members)
        finally:
            ev.close()


class TestConfigValidation:
    def test_sample_size_bounds(self):
        with pytest.raises(ValueError, match="sample_size"):
            _evo(sample_size=1)
        with pytest.raises(ValueError, match="sample_size"):
            _evo(sample_size=13)

    def test_rerank_k_bounds(self):
        with pytest.raises(ValueError, match="rerank_k"):
            _evo(rerank_k=0)

    def test_size_metric_values(self):
        with pytest.raises(ValueError, match="size_metric"):
            _evo(size_metric="latency")
