"""Architecture perturbation: the mutation operator and the transfer seeding operator.

A perturbation touches every block independently: one of the five primitives
is selected uniformly at random and redrawn uniformly from its legal set. The
redraw may land on the current value, so per block the output differs from
the input in at most one primitive. When the perturbed genome violates the
space's scale constraints the whole perturbation is redrawn, preserving the
per-block independence of the draw procedure; the returned architecture
therefore always validates even when the input architecture does not (which
is exactly how a seed searched under one task's constraints adapts to
another's).
"""

from __future__ import annotations

import logging
import random

from .space import (
    ArchCode,
    InfeasibleSpaceError,
    PRIMITIVES,
    PRIMITIVE_VALUES,
    SearchSpaceConfig,
    is_valid,
)

logger = logging.getLogger(__name__)

DEFAULT_PERTURB_RETRIES = 1_000


def perturb(
    basic: ArchCode,
    space: SearchSpaceConfig,
    rng: random.Random,
    max_retries: int = DEFAULT_PERTURB_RETRIES,
) -> ArchCode:
    """One homogeneous, slight deformation of ``basic`` that validates in ``space``."""
    for _ in range(max_retries):
        blocks = []
        for block in basic.blocks:
            name = PRIMITIVES[rng.randrange(len(PRIMITIVES))]
            value = rng.choice(PRIMITIVE_VALUES[name])
            blocks.append(block.with_primitive(name, value))
        candidate = ArchCode(tuple(blocks))
        if is_valid(candidate, space):
            return candidate
    raise InfeasibleSpaceError(
        f"no valid perturbation found in {max_retries} attempts; "
        f"expansion_ratio_range={space.expansion_ratio_range} "
        f"layer_count_range={space.layer_count_range}"
    )


def mutate(
    parent: ArchCode,
    space: SearchSpaceConfig,
    rng: random.Random,
    max_retries: int = DEFAULT_PERTURB_RETRIES,
) -> ArchCode:
    """Evolution mutation operator; same draw procedure as :func:`perturb`."""
    child = perturb(parent, space, rng, max_retries=max_retries)
    logger.debug("mutate: %d/%d blocks changed", _blocks_changed(parent, child), len(parent))
    return child


def seed_population(
    basic: ArchCode,
    count: int,
    space: SearchSpaceConfig,
    rng: random.Random,
    include_seed_verbatim: bool = False,
    max_retries: int = DEFAULT_PERTURB_RETRIES,
) -> list[ArchCode]:
    """``count`` independent perturbations of the basic architecture.

    The unmodified basic architecture is not force-inserted unless
    ``include_seed_verbatim`` is set (in which case it replaces the first
    perturbation and must itself validate). Duplicates are allowed.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    seeds = [perturb(basic, space, rng, max_retries=max_retries) for _ in range(count)]
    if include_seed_verbatim:
        if not is_valid(basic, space):
            raise ValueError("cannot insert the basic architecture verbatim: it does not validate")
        seeds[0] = basic
    return seeds


def _blocks_changed(a: ArchCode, b: ArchCode) -> int:
    return sum(1 for x, y in zip(a.blocks, b.blocks) if x != y)
