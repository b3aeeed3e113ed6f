"""Independent oracles used by the unit and acceptance suites.

Everything here re-derives expected values from first principles (explicit
tensor-shape walks, exhaustive enumeration, high-precision arithmetic)
without calling the code paths under test, so agreement is meaningful.
"""

from __future__ import annotations

import itertools
import math

import mpmath as mp
import numpy as np

from eatnas.evaluators import (
    BASE_LOGIT,
    INTERACTION_WEIGHT,
    LandscapeConfig,
    accuracy_from_logit,
    landscape_normalizer,
    synthetic_accuracy,
    _utility_tables,
    _value_key,
)
from eatnas.space import (
    ArchCode,
    BlockCode,
    CONV_OPS,
    DEPTHS,
    KERNEL_SIZES,
    PRIMITIVE_VALUES,
    SKIP_CHOICES,
    WIDTH_FACTORS,
    SearchSpaceConfig,
)

# --- size-metric oracle: literal tensor walk ----------------------------------

_EXPANSION = {"sepconv": 1, "mbconv3": 3, "mbconv6": 6}


def _round_half_up(x: float) -> int:
    return max(1, int(math.floor(x + 0.5)))


def _layer_tensors(conv: str, kernel: int, c_in: int, c_out: int) -> list[np.ndarray]:
    """Allocate every weight tensor of one layer and return them."""
    t = _EXPANSION[conv]
    tensors = []
    if t > 1:
        tensors.append(np.zeros((1, 1, c_in, t * c_in)))
    tensors.append(np.zeros((kernel, kernel, t * c_in, 1)))
    tensors.append(np.zeros((1, 1, t * c_in, c_out)))
    return tensors


def oracle_params(arch: ArchCode, space: SearchSpaceConfig, include_bn_bias: bool) -> int:
    total = np.zeros((3, 3, 3, space.stem_channels)).size
    bn_channels = [space.stem_channels]
    c = space.stem_channels
    for block in arch.blocks:
        conv = block.conv.value
        c_out = _round_half_up(c * block.width)
        for j in range(block.depth):
            ci = c if j == 0 else c_out
            for tensor in _layer_tensors(conv, block.kernel, ci, c_out):
                total += tensor.size
            t = _EXPANSION[conv]
            if t == 1:
                bn_channels += [ci, c_out]
            else:
                bn_channels += [t * ci, t * ci, c_out]
        c = c_out
    total += c * space.num_classes
    if include_bn_bias:
        total += 2 * sum(bn_channels) + space.num_classes
    return int(total)


def oracle_multadds(arch: ArchCode, space: SearchSpaceConfig) -> int:
    res = space.input_resolution
    if space.stem_downsample:
        res = (res + 1) // 2
    total = np.zeros((3, 3, 3, space.stem_channels)).size * res * res
    c = space.stem_channels
    for b, block in enumerate(arch.blocks, start=1):
        conv = block.conv.value
        t = _EXPANSION[conv]
        c_out = _round_half_up(c * block.width)
        for j in range(block.depth):
            ci = c if j == 0 else c_out
            in_res = res
            out_res = (res + 1) // 2 if (j == 0 and b in space.downsample_blocks) else res
            if t > 1:
                total += np.zeros((1, 1, ci, t * ci)).size * in_res * in_res
            total += np.zeros((block.kernel, block.kernel, t * ci, 1)).size * out_res * out_res
            total += np.zeros((1, 1, t * ci, c_out)).size * out_res * out_res
            res = out_res
        c = c_out
    total += c * space.num_classes
    return int(total)


# --- high-precision scoring oracle --------------------------------------------

def hp_model_score(acc: str, size: str, target: str, omega: str, dps: int = 50) -> float:
    with mp.workdps(dps):
        return float(mp.mpf(acc) * (mp.mpf(size) / mp.mpf(target)) ** mp.mpf(omega))


def hp_population_quality(
    scores: list[str], target_std: str, alpha: str, beta: str,
    std_floor: str = "1e-8", dps: int = 50,
) -> float:
    with mp.workdps(dps):
        values = [mp.mpf(s) for s in scores]
        mean = sum(values) / len(values)
        std = mp.sqrt(sum((v - mean) ** 2 for v in values) / len(values))
        omega = mp.mpf(alpha) if std < mp.mpf(target_std) else mp.mpf(beta)
        if std < mp.mpf(std_floor):
            std = mp.mpf(std_floor)
        return float(mean * (std / mp.mpf(target_std)) ** omega)


# --- landscape optimum oracles --------------------------------------------------

def enumerate_optimum_literal(cfg: LandscapeConfig, n_blocks: int, task: str) -> float:
    """Ground-truth optimum by evaluating every genome in the space.

    Only tractable for very small block counts (288^n genomes).
    """
    best = -1.0
    for blocks in itertools.product(
        itertools.product(CONV_OPS, KERNEL_SIZES, SKIP_CHOICES, WIDTH_FACTORS, DEPTHS),
        repeat=n_blocks,
    ):
        arch = ArchCode(tuple(BlockCode(*b) for b in blocks))
        best = max(best, synthetic_accuracy(arch, cfg, task))
    return best


def enumerate_optimum(cfg: LandscapeConfig, n_blocks: int, task: str) -> float:
    """Exact landscape optimum via enumeration over the coupled components.

    Only adjacent blocks' convolution choices interact, so the maximum is the
    best over all conv sequences of the interaction-aware conv utility plus
    each block's independent per-primitive maxima. Cross-checked against
    :func:`enumerate_optimum_literal` in the unit suite.
    """
    unary, pair = _utility_tables(cfg.seed, cfg.shift, n_blocks)
    idx = 0 if task == "small" else 1
    sep_max = [
        sum(
            max(unary[(b, prim, _value_key(prim, v))][idx] for v in PRIMITIVE_VALUES[prim])
            for prim in ("kernel", "skip", "width", "depth")
        )
        for b in range(1, n_blocks + 1)
    ]
    best_sum = -math.inf
    for seq in itertools.product(CONV_OPS, repeat=n_blocks):
        total = sum(sep_max)
        total += sum(unary[(b, "conv", seq[b - 1].value)][idx] for b in range(1, n_blocks + 1))
        total += sum(
            INTERACTION_WEIGHT * pair[(b, seq[b - 1].value, seq[b].value)][idx]
            for b in range(1, n_blocks)
        )
        best_sum = max(best_sum, total)
    return accuracy_from_logit(BASE_LOGIT + best_sum / landscape_normalizer(n_blocks))
