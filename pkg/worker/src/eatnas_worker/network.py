"""Torch realization of a block-coded architecture.

Skeleton: a 3x3 stem convolution (stride 2 when the space downsamples at the
stem), the coded blocks in order, global average pooling, a biased linear
classifier. Each layer is a depthwise-separable convolution (expansion ratio
1) or an inverted bottleneck (pointwise expansion, depthwise, linear
pointwise projection); convolutions are bias-free and every stage is batch
normalized, so the trainable-parameter count matches the engine's analytic
count with the BN-inclusive flag.
"""

from __future__ import annotations

import torch
from torch import nn

from .codes import Block, CONV_EXPANSION, SpaceSpec, resolve_layers


class CodedLayer(nn.Module):
    """One layer of a block; carries the stride and optional residual add."""

    def __init__(self, conv: str, kernel: int, c_in: int, c_out: int,
                 stride: int, residual: bool):
        super().__init__()
        t = CONV_EXPANSION[conv]
        mid = t * c_in
        stages: list[nn.Module] = []
        if t > 1:
            stages += [
                nn.Conv2d(c_in, mid, 1, bias=False),
                nn.BatchNorm2d(mid),
                nn.ReLU6(inplace=True),
            ]
        stages += [
            nn.Conv2d(mid, mid, kernel, stride=stride, padding=kernel // 2,
                      groups=mid, bias=False),
            nn.BatchNorm2d(mid),
            nn.ReLU6(inplace=True),
            nn.Conv2d(mid, c_out, 1, bias=False),
            nn.BatchNorm2d(c_out),
        ]
        self.stages = nn.Sequential(*stages)
        # residual adds only on shape-preserving layers
        self.residual = residual and stride == 1 and c_in == c_out

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.stages(x)
        if self.residual:
            out = out + x
        return out


class CodedNetwork(nn.Module):
    """The full network realized from (blocks, space)."""

    def __init__(self, blocks: list[Block], space: SpaceSpec):
        super().__init__()
        stem_stride = 2 if space.stem_downsample else 1
        self.stem = nn.Sequential(
            nn.Conv2d(3, space.stem_channels, 3, stride=stem_stride, padding=1, bias=False),
            nn.BatchNorm2d(space.stem_channels),
            nn.ReLU6(inplace=True),
        )
        layers = resolve_layers(blocks, space)
        self.body = nn.Sequential(
            *(
                CodedLayer(l.conv, l.kernel, l.c_in, l.c_out, l.stride, l.residual)
                for l in layers
            )
        )
        final_channels = layers[-1].c_out if layers else space.stem_channels
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.classifier = nn.Linear(final_channels, space.num_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.stem(x)
        x = self.body(x)
        x = self.pool(x).flatten(1)
        return self.classifier(x)


def build_network(blocks: list[Block], space: SpaceSpec) -> CodedNetwork:
    return CodedNetwork(blocks, space)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)
