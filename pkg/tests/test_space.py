import json
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import loose_space
from eatnas.space import (
    ArchCode,
    BlockCode,
    CONV_OPS,
    ConvOp,
    DEPTHS,
    DecodeError,
    InfeasibleSpaceError,
    KERNEL_SIZES,
    PRIMITIVE_VALUES,
    SKIP_CHOICES,
    SearchSpaceConfig,
    WIDTH_FACTORS,
    decode,
    encode,
    is_valid,
    random_arch,
    small_task_space,
    total_expansion_ratio,
    total_layers,
    validate,
)

block_codes = st.builds(
    BlockCode,
    conv=st.sampled_from(CONV_OPS),
    kernel=st.sampled_from(KERNEL_SIZES),
    skip=st.sampled_from(SKIP_CHOICES),
    width=st.sampled_from(WIDTH_FACTORS),
    depth=st.sampled_from(DEPTHS),
)
arch_codes = st.builds(ArchCode, st.lists(block_codes, min_size=1, max_size=8).map(tuple))


def _arch(widths, depths=None, conv=ConvOp.SEPCONV, kernel=3, skip=False):
    depths = depths or [1] * len(widths)
    return ArchCode(
        tuple(
            BlockCode(conv=conv, kernel=kernel, skip=skip, width=w, depth=d)
            for w, d in zip(widths, depths)
        )
    )


class TestConvOp:
    def test_exactly_three_variants(self):
        assert {op.value for op in ConvOp} == {"sepconv", "mbconv3", "mbconv6"}

    def test_fixed_expansion_ratios(self):
        assert ConvOp.SEPCONV.expansion == 1
        assert ConvOp.MBCONV3.expansion == 3
        assert ConvOp.MBCONV6.expansion == 6


class TestBlockCode:
    @pytest.mark.parametrize(
        "kwargs,fragment",
        [
            (dict(kernel=4), "kernel 4 not in"),
            (dict(width=0.75), "width 0.75 not in"),
            (dict(depth=0), "depth 0 not in"),
            (dict(depth=5), "depth 5 not in"),
            (dict(conv="sepconv"), "conv"),
        ],
    )
    def test_rejects_out_of_range(self, kwargs, fragment):
        base = dict(conv=ConvOp.SEPCONV, kernel=3, skip=True, width=1.0, depth=2)
        base.update(kwargs)
        with pytest.raises(ValueError, match=fragment.replace("(", "\\(")):
            BlockCode(**base)


class TestSpaceConfig:
    def test_downsample_blocks_must_be_in_range(self):
        with pytest.raises(ValueError, match="downsample_blocks"):
            SearchSpaceConfig(n_blocks=3, downsample_blocks=frozenset({4}))

    def test_range_order(self):
        with pytest.raises(ValueError, match="expansion_ratio_range"):
            SearchSpaceConfig(expansion_ratio_range=(10.0, 4.0))
        with pytest.raises(ValueError, match="layer_count_range"):
            SearchSpaceConfig(layer_count_range=(18, 16))


class TestValidate:
    def test_all_unit_widths_below_range(self):
        arch = _arch([1.0] * 7)
        violations = validate(arch, small_task_space())
        assert violations == ["expansion ratio 1.0 < 4"]

    def test_boundary_product_inclusive(self):
        arch = _arch([2.0, 1.0, 2.0, 1.0, 1.0, 1.0, 1.0])
        assert total_expansion_ratio(arch) == 4.0
        assert validate(arch, small_task_space()) == []

    def test_layer_count_above_range(self):
        space = loose_space(7, layer_count_range=(16, 18))
        arch = _arch([1.0] * 7, depths=[4, 4, 4, 4, 1, 1, 1])
        assert total_layers(arch) == 19
        assert validate(arch, space) == ["layer count 19 > 18"]

    def test_block_count_mismatch(self):
        arch = _arch([1.0] * 5)
        assert validate(arch, small_task_space()) == ["block count 5 != 7"]


class TestTotals:
    def test_identity_product(self):
        assert total_expansion_ratio(_arch([1.0] * 7)) == 1.0

    def test_product(self):
        assert total_expansion_ratio(_arch([2.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0])) == 8.0

    def test_layer_sum(self):
        arch = _arch([1.0] * 7, depths=[2, 3, 2, 3, 2, 3, 2])
        assert total_layers(arch) == 17


class TestRandomArch:
    def test_deterministic_under_fixed_seed(self):
        space = small_task_space()
        a = random_arch(space, random.Random(42))
        b = random_arch(space, random.Random(42))
        assert a == b

    def test_draws_respect_constraint_range(self):
        space = small_task_space()
        rng = random.Random(7)
        for _ in range(100):
            arch = random_arch(space, rng)
            assert validate(arch, space) == []
            assert 4.0 <= total_expansion_ratio(arch) <= 10.0

    def test_unreachable_range_raises(self):
        space = loose_space(7, expansion_ratio_range=(1000.0, 2000.0))
        with pytest.raises(InfeasibleSpaceError):
            random_arch(space, random.Random(0))

    def test_ten_thousand_draws_all_validate(self):
        space = loose_space(4)
        rng = random.Random(99)
        for _ in range(10_000):
            assert is_valid(random_arch(space, rng), space)

    def test_unconstrained_draws_uniform_within_5_sigma(self):
        # chi-square-style sanity check on the rng plumbing, pooled over blocks
        space = loose_space(4)
        rng = random.Random(5)
        n_draws = 10_000
        counts = {
            prim: {value: 0 for value in values} for prim, values in PRIMITIVE_VALUES.items()
        }
        for _ in range(n_draws):
            for block in random_arch(space, rng).blocks:
                for prim in PRIMITIVE_VALUES:
                    counts[prim][getattr(block, prim)] += 1
        n = n_draws * space.n_blocks
        for prim, values in PRIMITIVE_VALUES.items():
            p = 1.0 / len(values)
            sigma = math.sqrt(n * p * (1 - p))
            for value in values:
                assert abs(counts[prim][value] - n * p) <= 5 * sigma, (prim, value)


class TestCodec:
    def test_canonical_text_format(self):
        arch = ArchCode(
            (BlockCode(conv=ConvOp.MBCONV6, kernel=5, skip=True, width=1.5, depth=3),)
        )
        assert encode(arch) == (
            '{"blocks": [{"conv": "mbconv6", "kernel": 5, "skip": true, '
            '"width": 1.5, "depth": 3}]}'
        )

    def test_width_one_decimal_digit(self):
        arch = _arch([1.0, 2.0])
        text = encode(arch)
        assert '"width": 1.0' in text and '"width": 2.0' in text

    @given(arch_codes)
    @settings(max_examples=300)
    def test_roundtrip(self, arch):
        assert decode(encode(arch)) == arch

    def test_equal_archs_encode_byte_identically(self):
        a = _arch([1.5, 0.5], depths=[2, 4], conv=ConvOp.MBCONV3, kernel=7, skip=True)
        b = _arch([1.5, 0.5], depths=[2, 4], conv=ConvOp.MBCONV3, kernel=7, skip=True)
        assert a is not b
        assert encode(a) == encode(b)

    def test_decode_rejects_out_of_range_kernel(self):
        text = json.dumps(
            {"blocks": [{"conv": "sepconv", "kernel": 4, "skip": False, "width": 1.0, "depth": 1}]}
        )
        with pytest.raises(DecodeError, match=r"kernel 4 not in \{3, 5, 7\}"):
            decode(text)

    def test_decode_rejects_bad_conv(self):
        text = json.dumps(
            {"blocks": [{"conv": "conv3x3", "kernel": 3, "skip": False, "width": 1.0, "depth": 1}]}
        )
        with pytest.raises(DecodeError, match="conv"):
            decode(text)

    def test_decode_reports_syntax_position(self):
        with pytest.raises(DecodeError, match="position"):
            decode('{"blocks": [')

    def test_decode_missing_and_unknown_fields(self):
        with pytest.raises(DecodeError, match="missing field"):
            decode('{"blocks": [{"conv": "sepconv"}]}')
        with pytest.raises(DecodeError, match="unknown field"):
            decode(
                '{"blocks": [{"conv": "sepconv", "kernel": 3, "skip": false, '
                '"width": 1.0, "depth": 1, "extra": 1}]}'
            )

    def test_decode_accepts_integer_width_value(self):
        # JSON may carry 1 instead of 1.0; numerically equal values decode.
        arch = decode(
            '{"blocks": [{"conv": "sepconv", "kernel": 3, "skip": false, "width": 1, "depth": 1}]}'
        )
        assert arch.blocks[0].width == 1.0

    def test_decode_rejects_non_boolean_skip(self):
        with pytest.raises(DecodeError, match="skip"):
            decode(
                '{"blocks": [{"conv": "sepconv", "kernel": 3, "skip": 1, '
                '"width": 1.0, "depth": 1}]}'
            )

    def test_decode_rejects_fractional_depth(self):
        with pytest.raises(DecodeError, match="depth"):
            decode(
                '{"blocks": [{"conv": "sepconv", "kernel": 3, "skip": false, '
                '"width": 1.0, "depth": 2.0}]}'
            )


@given(st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=200, deadline=None)
def test_random_arch_always_validates(seed):
    space = loose_space(4)
    arch = random_arch(space, random.Random(seed))
    assert validate(arch, space) == []
