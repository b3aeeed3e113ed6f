"""Standalone parsing of the wire-protocol architecture and space objects.

The worker consumes the engine only through the protocol, so the canonical
forms are re-implemented here rather than imported: an architecture is
{"blocks": [{"conv", "kernel", "skip", "width", "depth"}, ...]} and the space
object carries the macro-skeleton settings. Channel resolution mirrors the
engine's documented rules (round-half-up widths with a floor of one channel;
downsampling in the first layer of configured blocks and optionally the
stem).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

CONV_EXPANSION = {"sepconv": 1, "mbconv3": 3, "mbconv6": 6}
KERNELS = (3, 5, 7)
WIDTHS = (0.5, 1.0, 1.5, 2.0)
DEPTHS = (1, 2, 3, 4)


class RequestError(ValueError):
    """Malformed request payload; reported over the protocol as failed."""


@dataclass(frozen=True)
class Block:
    conv: str
    kernel: int
    skip: bool
    width: float
    depth: int


@dataclass(frozen=True)
class SpaceSpec:
    n_blocks: int
    stem_channels: int
    stem_downsample: bool
    downsample_blocks: frozenset[int]
    input_resolution: int
    num_classes: int


@dataclass(frozen=True)
class LayerSpec:
    block_index: int
    layer_index: int
    conv: str
    kernel: int
    c_in: int
    c_out: int
    stride: int
    residual: bool


def parse_space(obj) -> SpaceSpec:
    if not isinstance(obj, dict):
        raise RequestError("space must be an object")
    try:
        return SpaceSpec(
            n_blocks=int(obj["n_blocks"]),
            stem_channels=int(obj.get("stem_channels", 32)),
            stem_downsample=bool(obj.get("stem_downsample", True)),
            downsample_blocks=frozenset(int(b) for b in obj.get("downsample_blocks", ())),
            input_resolution=int(obj.get("input_resolution", 32)),
            num_classes=int(obj.get("num_classes", 10)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise RequestError(f"bad space object: {exc}") from None


def parse_arch(obj) -> list[Block]:
    if not isinstance(obj, dict) or not isinstance(obj.get("blocks"), list) or not obj["blocks"]:
        raise RequestError("arch must be an object with a non-empty 'blocks' array")
    blocks = []
    for i, b in enumerate(obj["blocks"]):
        where = f"blocks[{i}]"
        if not isinstance(b, dict):
            raise RequestError(f"{where} is not an object")
        conv = b.get("conv")
        if conv not in CONV_EXPANSION:
            raise RequestError(f"{where}: conv {conv!r} not one of {sorted(CONV_EXPANSION)}")
        kernel = b.get("kernel")
        if kernel not in KERNELS:
            raise RequestError(f"{where}: kernel {kernel!r} not in {KERNELS}")
        skip = b.get("skip")
        if not isinstance(skip, bool):
            raise RequestError(f"{where}: skip must be a boolean")
        width = b.get("width")
        if isinstance(width, bool) or not isinstance(width, (int, float)) or float(width) not in WIDTHS:
            raise RequestError(f"{where}: width {width!r} not in {WIDTHS}")
        depth = b.get("depth")
        if depth not in DEPTHS:
            raise RequestError(f"{where}: depth {depth!r} not in {DEPTHS}")
        blocks.append(Block(conv=conv, kernel=int(kernel), skip=skip,
                            width=float(width), depth=int(depth)))
    return blocks


def validate_against_space(blocks: list[Block], space: SpaceSpec) -> None:
    if len(blocks) != space.n_blocks:
        raise RequestError(f"block count {len(blocks)} != {space.n_blocks}")


def round_channels(x: float) -> int:
    return max(1, int(math.floor(x + 0.5)))


def resolve_layers(blocks: list[Block], space: SpaceSpec) -> list[LayerSpec]:
    """Per-layer geometry: channel chaining, strides, residual eligibility."""
    layers: list[LayerSpec] = []
    channels = space.stem_channels
    for b, block in enumerate(blocks, start=1):
        c_out = round_channels(channels * block.width)
        for j in range(1, block.depth + 1):
            first = j == 1
            layers.append(
                LayerSpec(
                    block_index=b,
                    layer_index=j,
                    conv=block.conv,
                    kernel=block.kernel,
                    c_in=channels if first else c_out,
                    c_out=c_out,
                    stride=2 if (first and b in space.downsample_blocks) else 1,
                    residual=block.skip and not first,
                )
            )
        channels = c_out
    return layers


def analytic_multadds(blocks: list[Block], space: SpaceSpec) -> int:
    """Multiply-add count: one per weight per output position."""
    res = space.input_resolution
    stem_stride = 2 if space.stem_downsample else 1
    if stem_stride == 2:
        res = (res + 1) // 2
    total = 3 * 3 * 3 * space.stem_channels * res * res
    for layer in resolve_layers(blocks, space):
        t = CONV_EXPANSION[layer.conv]
        mid = t * layer.c_in
        out_res = (res + 1) // 2 if layer.stride == 2 else res
        if t > 1:
            total += layer.c_in * mid * res * res
        total += layer.kernel * layer.kernel * mid * out_res * out_res
        total += mid * layer.c_out * out_res * out_res
        res = out_res
    final_channels = resolve_layers(blocks, space)[-1].c_out if blocks else space.stem_channels
    total += final_channels * space.num_classes
    return total
