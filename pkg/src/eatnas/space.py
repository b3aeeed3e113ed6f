"""Block-coded mobile-CNN genome: value sets, scale validation, canonical codec.

An architecture is an ordered list of block codes. Each block is a 5-tuple of
primitives: convolution operation, kernel size, per-layer skip flag, width
factor (output/input channel ratio) and depth (layers in the block). The
canonical serialization is a JSON object with fixed key order so that equal
architectures encode byte-identically; the encoded text doubles as a cache
key and is the form carried by checkpoints and the evaluator wire protocol.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional


class ConvOp(Enum):
    """Per-layer convolution operation; each variant has a fixed expansion ratio."""

    SEPCONV = "sepconv"
    MBCONV3 = "mbconv3"
    MBCONV6 = "mbconv6"

    @property
    def expansion(self) -> int:
        return _EXPANSION[self]


_EXPANSION = {ConvOp.SEPCONV: 1, ConvOp.MBCONV3: 3, ConvOp.MBCONV6: 6}

CONV_OPS = (ConvOp.SEPCONV, ConvOp.MBCONV3, ConvOp.MBCONV6)
KERNEL_SIZES = (3, 5, 7)
SKIP_CHOICES = (False, True)
WIDTH_FACTORS = (0.5, 1.0, 1.5, 2.0)
DEPTHS = (1, 2, 3, 4)

# Names of the five per-block primitives, in canonical (serialization) order.
PRIMITIVES = ("conv", "kernel", "skip", "width", "depth")

PRIMITIVE_VALUES = {
    "conv": CONV_OPS,
    "kernel": KERNEL_SIZES,
    "skip": SKIP_CHOICES,
    "width": WIDTH_FACTORS,
    "depth": DEPTHS,
}


class DecodeError(ValueError):
    """Raised when serialized architecture text is malformed or out of range."""


class InfeasibleSpaceError(RuntimeError):
    """Raised when bounded rejection sampling cannot satisfy the scale constraints."""


@dataclass(frozen=True)
class BlockCode:
    """One block of the genome; every field must lie in its enumerated set."""

    conv: ConvOp
    kernel: int
    skip: bool
    width: float
    depth: int

    def __post_init__(self) -> None:
        if self.conv not in CONV_OPS:
            raise ValueError(f"conv {self.conv!r} not in {[op.value for op in CONV_OPS]}")
        if self.kernel not in KERNEL_SIZES:
            raise ValueError(f"kernel {self.kernel} not in {{3, 5, 7}}")
        if not isinstance(self.skip, bool):
            raise ValueError(f"skip {self.skip!r} is not a boolean")
        if self.width not in WIDTH_FACTORS:
            raise ValueError(f"width {self.width} not in {{0.5, 1.0, 1.5, 2.0}}")
        if self.depth not in DEPTHS:
            raise ValueError(f"depth {self.depth} not in {{1, 2, 3, 4}}")

    def with_primitive(self, name: str, value) -> "BlockCode":
        """Copy of this block with one primitive replaced."""
        return replace(self, **{name: value})


@dataclass(frozen=True)
class ArchCode:
    """An architecture genome: an ordered, immutable tuple of block codes."""

    blocks: tuple[BlockCode, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "blocks", tuple(self.blocks))

    def __len__(self) -> int:
        return len(self.blocks)


@dataclass(frozen=True)
class SearchSpaceConfig:
    """Task-level search-space settings: macro skeleton and scale constraints.

    ``downsample_blocks`` holds 1-based block indices whose first layer halves
    the feature resolution; the stem additionally downsamples when
    ``stem_downsample`` is set. ``expansion_ratio_range`` bounds the product of
    all width factors and ``layer_count_range`` (optional) the sum of depths;
    both ranges are inclusive on both ends.
    """

    n_blocks: int = 7
    stem_channels: int = 32
    stem_downsample: bool = True
    downsample_blocks: frozenset[int] = frozenset({3, 5})
    expansion_ratio_range: tuple[float, float] = (4.0, 10.0)
    layer_count_range: Optional[tuple[int, int]] = None
    input_resolution: int = 32
    num_classes: int = 10

    def __post_init__(self) -> None:
        object.__setattr__(self, "downsample_blocks", frozenset(self.downsample_blocks))
        object.__setattr__(self, "expansion_ratio_range", tuple(self.expansion_ratio_range))
        if self.layer_count_range is not None:
            object.__setattr__(self, "layer_count_range", tuple(self.layer_count_range))
        if self.n_blocks < 1:
            raise ValueError(f"n_blocks must be >= 1, got {self.n_blocks}")
        if self.stem_channels < 1:
            raise ValueError(f"stem_channels must be >= 1, got {self.stem_channels}")
        if not self.downsample_blocks <= set(range(1, self.n_blocks + 1)):
            raise ValueError(
                f"downsample_blocks {sorted(self.downsample_blocks)} not within 1..{self.n_blocks}"
            )
        lo, hi = self.expansion_ratio_range
        if lo > hi:
            raise ValueError(f"expansion_ratio_range lo {lo} > hi {hi}")
        if self.layer_count_range is not None:
            llo, lhi = self.layer_count_range
            if llo > lhi:
                raise ValueError(f"layer_count_range lo {llo} > hi {lhi}")
        if self.input_resolution < 1:
            raise ValueError(f"input_resolution must be >= 1, got {self.input_resolution}")
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")


def small_task_space() -> SearchSpaceConfig:
    """Default small-task profile: 7 blocks, downsampling in blocks 3 and 5."""
    return SearchSpaceConfig(
        n_blocks=7,
        stem_channels=32,
        stem_downsample=True,
        downsample_blocks=frozenset({3, 5}),
        expansion_ratio_range=(4.0, 10.0),
        layer_count_range=None,
        input_resolution=32,
        num_classes=10,
    )


def large_task_space() -> SearchSpaceConfig:
    """Default large-task profile: stem plus blocks 2, 3, 4 and 6 downsample."""
    return SearchSpaceConfig(
        n_blocks=7,
        stem_channels=32,
        stem_downsample=True,
        downsample_blocks=frozenset({2, 3, 4, 6}),
        expansion_ratio_range=(8.0, 16.0),
        layer_count_range=(16, 18),
        input_resolution=224,
        num_classes=1000,
    )


def total_expansion_ratio(arch: ArchCode) -> float:
    """Product of all blocks' width factors."""
    return math.prod(block.width for block in arch.blocks)


def total_layers(arch: ArchCode) -> int:
    """Sum of all blocks' depths."""
    return sum(block.depth for block in arch.blocks)


def validate(arch: ArchCode, space: SearchSpaceConfig) -> list[str]:
    """Check an architecture against the space; returns a list of violations.

    An empty list means the architecture is valid. Primitive value sets are
    enforced at construction time, so the checks here are block count and the
    scale constraints (both range ends inclusive).
    """
    violations: list[str] = []
    if len(arch.blocks) != space.n_blocks:
        violations.append(f"block count {len(arch.blocks)} != {space.n_blocks}")
        return violations
    ratio = total_expansion_ratio(arch)
    lo, hi = space.expansion_ratio_range
    if ratio < lo:
        violations.append(f"expansion ratio {ratio} < {lo:g}")
    elif ratio > hi:
        violations.append(f"expansion ratio {ratio} > {hi:g}")
    if space.layer_count_range is not None:
        layers = total_layers(arch)
        llo, lhi = space.layer_count_range
        if layers < llo:
            violations.append(f"layer count {layers} < {llo}")
        elif layers > lhi:
            violations.append(f"layer count {layers} > {lhi}")
    return violations


def is_valid(arch: ArchCode, space: SearchSpaceConfig) -> bool:
    return not validate(arch, space)


DEFAULT_RANDOM_RETRIES = 10_000


def random_arch(
    space: SearchSpaceConfig,
    rng: random.Random,
    max_retries: int = DEFAULT_RANDOM_RETRIES,
) -> ArchCode:
    """Draw a uniformly random valid architecture by rejection sampling.

    Each primitive is drawn uniformly from its value set (per block, in
    canonical primitive order); the whole genome is redrawn when the scale
    constraints reject it, keeping every primitive's marginal distribution
    uniform over the accepted region.
    """
    for _ in range(max_retries):
        blocks = tuple(
            BlockCode(
                conv=rng.choice(CONV_OPS),
                kernel=rng.choice(KERNEL_SIZES),
                skip=rng.choice(SKIP_CHOICES),
                width=rng.choice(WIDTH_FACTORS),
                depth=rng.choice(DEPTHS),
            )
            for _ in range(space.n_blocks)
        )
        arch = ArchCode(blocks)
        if is_valid(arch, space):
            return arch
    raise InfeasibleSpaceError(
        f"no valid architecture found in {max_retries} draws; "
        f"expansion_ratio_range={space.expansion_ratio_range} "
        f"layer_count_range={space.layer_count_range}"
    )


# --- canonical serialization -------------------------------------------------

def block_to_obj(block: BlockCode) -> dict:
    # Key order is part of the canonical form; width carries one decimal digit.
    return {
        "conv": block.conv.value,
        "kernel": block.kernel,
        "skip": block.skip,
        "width": round(block.width, 1),
        "depth": block.depth,
    }


def arch_to_obj(arch: ArchCode) -> dict:
    return {"blocks": [block_to_obj(b) for b in arch.blocks]}


def _block_from_obj(obj, where: str) -> BlockCode:
    if not isinstance(obj, dict):
        raise DecodeError(f"{where} is not an object")
    missing = [k for k in PRIMITIVES if k not in obj]
    if missing:
        raise DecodeError(f"{where} missing field(s) {missing}")
    extra = [k for k in obj if k not in PRIMITIVES]
    if extra:
        raise DecodeError(f"{where} has unknown field(s) {extra}")
    conv_text = obj["conv"]
    try:
        conv = ConvOp(conv_text)
    except ValueError:
        raise DecodeError(
            f"{where}: conv {conv_text!r} not in ['sepconv', 'mbconv3', 'mbconv6']"
        ) from None
    kernel = obj["kernel"]
    if not isinstance(kernel, int) or isinstance(kernel, bool) or kernel not in KERNEL_SIZES:
        raise DecodeError(f"{where}: kernel {kernel} not in {{3, 5, 7}}")
    skip = obj["skip"]
    if not isinstance(skip, bool):
        raise DecodeError(f"{where}: skip {skip!r} is not a boolean")
    width = obj["width"]
    if isinstance(width, bool) or not isinstance(width, (int, float)) or float(width) not in WIDTH_FACTORS:
        raise DecodeError(f"{where}: width {width} not in {{0.5, 1.0, 1.5, 2.0}}")
    depth = obj["depth"]
    if not isinstance(depth, int) or isinstance(depth, bool) or depth not in DEPTHS:
        raise DecodeError(f"{where}: depth {depth} not in {{1, 2, 3, 4}}")
    return BlockCode(conv=conv, kernel=kernel, skip=skip, width=float(width), depth=depth)


def arch_from_obj(obj) -> ArchCode:
    """Build an ArchCode from its canonical object form."""
    if not isinstance(obj, dict) or "blocks" not in obj:
        raise DecodeError("top-level value must be an object with a 'blocks' field")
    blocks_obj = obj["blocks"]
    if not isinstance(blocks_obj, list) or not blocks_obj:
        raise DecodeError("'blocks' must be a non-empty array")
    return ArchCode(
        tuple(_block_from_obj(b, f"blocks[{i}]") for i, b in enumerate(blocks_obj))
    )


def encode(arch: ArchCode) -> str:
    """Canonical text form: deterministic key order, suitable as a cache key."""
    return json.dumps(arch_to_obj(arch))


def decode(text: str) -> ArchCode:
    """Parse canonical text back into an ArchCode.

    Raises DecodeError carrying the character position for malformed syntax
    and a field path for out-of-range primitive values.
    """
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"invalid syntax at position {exc.pos}: {exc.msg}") from None
    return arch_from_obj(obj)


# --- search-space config serialization (configs, checkpoints, wire) ----------

def space_to_obj(space: SearchSpaceConfig) -> dict:
    return {
        "n_blocks": space.n_blocks,
        "stem_channels": space.stem_channels,
        "stem_downsample": space.stem_downsample,
        "downsample_blocks": sorted(space.downsample_blocks),
        "expansion_ratio_range": list(space.expansion_ratio_range),
        "layer_count_range": (
            list(space.layer_count_range) if space.layer_count_range is not None else None
        ),
        "input_resolution": space.input_resolution,
        "num_classes": space.num_classes,
    }


def space_from_obj(obj: dict) -> SearchSpaceConfig:
    if not isinstance(obj, dict):
        raise DecodeError("search-space config must be an object")
    try:
        return SearchSpaceConfig(
            n_blocks=obj["n_blocks"],
            stem_channels=obj.get("stem_channels", 32),
            stem_downsample=obj.get("stem_downsample", True),
            downsample_blocks=frozenset(obj.get("downsample_blocks", ())),
            expansion_ratio_range=tuple(obj["expansion_ratio_range"]),
            layer_count_range=(
                tuple(obj["layer_count_range"])
                if obj.get("layer_count_range") is not None
                else None
            ),
            input_resolution=obj.get("input_resolution", 32),
            num_classes=obj.get("num_classes", 10),
        )
    except KeyError as exc:
        raise DecodeError(f"search-space config missing field {exc.args[0]!r}") from None
    except ValueError as exc:
        raise DecodeError(f"search-space config invalid: {exc}") from None
