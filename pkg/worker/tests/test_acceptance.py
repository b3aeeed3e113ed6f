"""Worker acceptance: the engine drives this worker over the wire protocol
through a full population, and every size figure agrees with the engine's
analytic counts exactly."""

import sys

import eatnas.metrics
import eatnas.space
from eatnas.evaluators import ExternalEvaluator
from eatnas.evolution import EvolutionConfig, EvolutionEngine
from eatnas.rng import child_rng
from eatnas.scoring import ScoreParams
from eatnas_worker.codes import parse_arch, parse_space
from eatnas_worker.network import build_network, count_parameters


def _report(name, ok, detail=""):
    tag = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[acceptance] {tag}: {name}{suffix}")
    assert ok, f"{name}{suffix}"


def test_protocol_round_trip_eight_model_population():
    space = eatnas.space.SearchSpaceConfig(
        n_blocks=3,
        stem_channels=16,
        downsample_blocks=frozenset({2}),
        expansion_ratio_range=(1e-4, 1e4),
        input_resolution=32,
        num_classes=10,
    )
    endpoint = (
        f"stdio:{sys.executable} -m eatnas_worker "
        "--dataset synthetic --train-size 5000 --seed 0"
    )
    evaluator = ExternalEvaluator(endpoint, space, search_timeout=600.0)
    cfg = EvolutionConfig(
        score=ScoreParams(target_size=1.0e5, omega=-0.07),
        population_size=8,
        sample_size=2,
        rerank_k=1,
        max_steps=0,
    )
    try:
        engine = EvolutionEngine(cfg, space, evaluator, child_rng(0, "worker-accept"))
        population = engine.init_random()
    finally:
        evaluator.close()

    all_ok = len(population.members) == 8
    above_chance = all(m.accuracy > 0.15 for m in population.members)
    params_exact = True
    for member in population.members:
        engine_count = eatnas.metrics.arch_params(member.arch, space, include_bn_bias=True)
        params_exact &= int(member.size) == engine_count
        blocks = parse_arch(eatnas.space.arch_to_obj(member.arch))
        spec = parse_space(eatnas.space.space_to_obj(space))
        params_exact &= count_parameters(build_network(blocks, spec)) == engine_count

    _report(
        "protocol round trip (8 models, 5,000-image subset, 1 epoch each: all ok, "
        "above chance, parameter counts exact)",
        all_ok and above_chance and params_exact,
        f"accuracies {[round(m.accuracy, 3) for m in population.members]}",
    )
