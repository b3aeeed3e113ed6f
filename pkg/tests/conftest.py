import random

import pytest

from eatnas.space import SearchSpaceConfig


def loose_space(n_blocks: int = 3, **overrides) -> SearchSpaceConfig:
    """A space whose scale constraints never reject anything."""
    defaults = dict(
        n_blocks=n_blocks,
        stem_channels=16,
        stem_downsample=True,
        downsample_blocks=frozenset({2}) if n_blocks >= 2 else frozenset(),
        expansion_ratio_range=(1e-4, 1e4),
        layer_count_range=None,
        input_resolution=32,
        num_classes=10,
    )
    defaults.update(overrides)
    return SearchSpaceConfig(**defaults)


@pytest.fixture
def rng() -> random.Random:
    return random.Random(1234)
