"""Analytic size objectives: parameter and multiply-add counts.

The macro skeleton is fixed: a 3x3 stem convolution from RGB to the stem
width, the coded blocks in order (the first layer of each block applies the
block's stride and width change), global average pooling and a linear
classifier. Counts are derived purely from the code and the space config by
resolving the channel plan and summing per-layer costs, so they are exact and
reproducible without instantiating a network.

Cost model per layer (weight elements; one multiply-add per weight per output
position):

* SepConv:   depthwise k*k over c_in, then 1x1 projection c_in -> c_out.
* MBConv-t:  1x1 expansion c_in -> t*c_in, depthwise k*k, 1x1 projection
             t*c_in -> c_out. The depthwise stage carries the stride; the
             expansion is counted at the layer's input resolution and the
             projection at its output resolution.

Batch-norm and bias parameters are excluded by default; with
``include_bn_bias`` every normalized channel adds two parameters and the
classifier gains its bias vector (matching a framework count of trainable
parameters for conv-without-bias + affine BN + biased linear).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .space import ArchCode, ConvOp, SearchSpaceConfig, validate


def round_channels(x: float) -> int:
    """Round half-up to the nearest integer channel count, minimum 1."""
    return max(1, int(math.floor(x + 0.5)))


def _halve(resolution: int) -> int:
    # Matches a stride-2 convolution with 'same' padding: ceil(r / 2).
    return (resolution + 1) // 2


@dataclass(frozen=True)
class LayerPlan:
    """Resolved geometry of one block layer."""

    block_index: int  # 1-based
    layer_index: int  # 1-based within the block
    op: ConvOp
    kernel: int
    c_in: int
    c_out: int
    stride: int
    in_resolution: int
    out_resolution: int
    skip: bool  # residual add actually applied on this layer


@dataclass(frozen=True)
class ChannelPlan:
    """Full resolved plan: stem, block layers, classifier head."""

    stem_c_in: int
    stem_c_out: int
    stem_kernel: int
    stem_stride: int
    stem_in_resolution: int
    stem_out_resolution: int
    layers: tuple[LayerPlan, ...]
    final_channels: int
    final_resolution: int
    num_classes: int


def resolve_channel_plan(arch: ArchCode, space: SearchSpaceConfig) -> ChannelPlan:
    """Walk the skeleton and assign channels, strides and resolutions.

    Downsampling happens in the first layer of each block listed in
    ``space.downsample_blocks`` (and in the stem when configured) and nowhere
    else. A block's first layer maps in_channels -> out_channels; the
    remaining layers keep out_channels. Residual adds are only recorded on
    shape-preserving layers, which by construction are exactly the non-first
    layers of blocks whose skip flag is set.
    """
    violations = validate(arch, space)
    if violations:
        raise ValueError(f"invalid architecture for this space: {violations}")

    stem_stride = 2 if space.stem_downsample else 1
    stem_out_res = _halve(space.input_resolution) if stem_stride == 2 else space.input_resolution

    layers: list[LayerPlan] = []
    channels = space.stem_channels
    resolution = stem_out_res
    for b, block in enumerate(arch.blocks, start=1):
        c_out = round_channels(channels * block.width)
        for j in range(1, block.depth + 1):
            first = j == 1
            stride = 2 if (first and b in space.downsample_blocks) else 1
            c_in = channels if first else c_out
            out_res = _halve(resolution) if stride == 2 else resolution
            layers.append(
                LayerPlan(
                    block_index=b,
                    layer_index=j,
                    op=block.conv,
                    kernel=block.kernel,
                    c_in=c_in,
                    c_out=c_out,
                    stride=stride,
                    in_resolution=resolution,
                    out_resolution=out_res,
                    skip=block.skip and not first,
                )
            )
            resolution = out_res
        channels = c_out

    return ChannelPlan(
        stem_c_in=3,
        stem_c_out=space.stem_channels,
        stem_kernel=3,
        stem_stride=stem_stride,
        stem_in_resolution=space.input_resolution,
        stem_out_resolution=stem_out_res,
        layers=tuple(layers),
        final_channels=channels,
        final_resolution=resolution,
        num_classes=space.num_classes,
    )


def layer_part_shapes(
    op: ConvOp, kernel: int, c_in: int, c_out: int
) -> tuple[tuple[str, tuple[int, int, int, int]], ...]:
    """Weight-tensor shapes (w, h, ch_in, ch_out) of one layer's stages.

    Depthwise tensors are shaped (k, k, channels, 1). The expansion stage
    exists only for expansion ratios above 1.
    """
    if kernel not in (3, 5, 7):
        raise ValueError(f"kernel {kernel} not in {{3, 5, 7}}")
    if c_in < 1 or c_out < 1:
        raise ValueError(f"channel counts must be >= 1, got c_in={c_in} c_out={c_out}")
    t = op.expansion
    if t == 1:
        return (
            ("depthwise", (kernel, kernel, c_in, 1)),
            ("project", (1, 1, c_in, c_out)),
        )
    mid = t * c_in
    return (
        ("expand", (1, 1, c_in, mid)),
        ("depthwise", (kernel, kernel, mid, 1)),
        ("project", (1, 1, mid, c_out)),
    )


def layer_params(op: ConvOp, kernel: int, c_in: int, c_out: int, include_bn_bias: bool = False) -> int:
    """Weight count of one layer; optionally adds two BN parameters per channel."""
    total = sum(math.prod(shape) for _, shape in layer_part_shapes(op, kernel, c_in, c_out))
    if include_bn_bias:
        t = op.expansion
        if t == 1:
            total += 2 * c_in + 2 * c_out  # BN after depthwise and after projection
        else:
            mid = t * c_in
            total += 2 * mid + 2 * mid + 2 * c_out
    return total


def _layer_multadds(plan: LayerPlan) -> int:
    total = 0
    for part, shape in layer_part_shapes(plan.op, plan.kernel, plan.c_in, plan.c_out):
        res = plan.in_resolution if part == "expand" else plan.out_resolution
        total += math.prod(shape) * res * res
    return total


def arch_params(arch: ArchCode, space: SearchSpaceConfig, include_bn_bias: bool = False) -> int:
    """Total parameter count of the realized network."""
    plan = resolve_channel_plan(arch, space)
    total = plan.stem_kernel * plan.stem_kernel * plan.stem_c_in * plan.stem_c_out
    if include_bn_bias:
        total += 2 * plan.stem_c_out
    for layer in plan.layers:
        total += layer_params(layer.op, layer.kernel, layer.c_in, layer.c_out, include_bn_bias)
    total += plan.final_channels * plan.num_classes
    if include_bn_bias:
        total += plan.num_classes  # classifier bias
    return total


def arch_multadds(arch: ArchCode, space: SearchSpaceConfig) -> int:
    """Total multiply-add count; each weight costs one multiply-add per output position."""
    plan = resolve_channel_plan(arch, space)
    total = (
        plan.stem_kernel * plan.stem_kernel * plan.stem_c_in * plan.stem_c_out
        * plan.stem_out_resolution * plan.stem_out_resolution
    )
    for layer in plan.layers:
        total += _layer_multadds(layer)
    total += plan.final_channels * plan.num_classes  # classifier on pooled features
    return total
