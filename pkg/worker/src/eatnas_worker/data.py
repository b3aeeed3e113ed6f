"""Training data for the worker: a deterministic synthetic image set for
desk-scale runs, or a real small-image dataset from disk.

The synthetic set gives each class a fixed low-frequency pattern plus a
per-class color shift, then adds Gaussian pixel noise. The smooth,
channel-mean-heavy signal survives striding and global average pooling, so a
small CNN trained for a single epoch lands well above chance, which is
exactly what search-time proxy evaluation needs.
"""

from __future__ import annotations

import numpy as np
import torch
from torch.utils.data import TensorDataset

SYNTHETIC_NOISE = 1.0
COLOR_SHIFT = 0.75


def synthetic_dataset(
    n: int, num_classes: int = 10, resolution: int = 32, seed: int = 0
) -> TensorDataset:
    gen = np.random.Generator(np.random.PCG64(seed))
    grid = 4 if resolution % 4 == 0 else 1
    cell = resolution // grid
    templates = np.kron(
        gen.normal(0.0, 1.0, size=(num_classes, 3, grid, grid)),
        np.ones((1, 1, cell, cell)),
    )
    templates += gen.normal(0.0, COLOR_SHIFT, size=(num_classes, 3, 1, 1))
    labels = gen.integers(0, num_classes, size=n)
    images = templates[labels] + gen.normal(
        0.0, SYNTHETIC_NOISE, size=(n, 3, resolution, resolution)
    )
    return TensorDataset(
        torch.from_numpy(images.astype(np.float32)),
        torch.from_numpy(labels.astype(np.int64)),
    )


def cifar10_dataset(path: str, train_size: int | None = None, seed: int = 0) -> TensorDataset:
    """CIFAR-10 from a local torchvision root (no download); whitened per channel."""
    from torchvision.datasets import CIFAR10  # torchvision needed only for this path

    raw = CIFAR10(root=path, train=True, download=False)
    images = np.asarray(raw.data, dtype=np.float32) / 255.0  # (N, 32, 32, 3)
    labels = np.asarray(raw.targets, dtype=np.int64)
    mean = images.mean(axis=(0, 1, 2))
    std = images.std(axis=(0, 1, 2))
    images = (images - mean) / std
    images = images.transpose(0, 3, 1, 2)
    if train_size is not None and train_size < len(images):
        gen = np.random.Generator(np.random.PCG64(seed))
        pick = gen.permutation(len(images))[:train_size]
        images, labels = images[pick], labels[pick]
    return TensorDataset(torch.from_numpy(images), torch.from_numpy(labels))


def load_dataset(name: str, path: str | None, train_size: int,
                 num_classes: int, resolution: int, seed: int) -> TensorDataset:
    if name == "synthetic":
        return synthetic_dataset(train_size, num_classes=num_classes,
                                 resolution=resolution, seed=seed)
    if name == "cifar10":
        if not path:
            raise ValueError("cifar10 needs --data-path")
        return cifar10_dataset(path, train_size=train_size, seed=seed)
    raise ValueError(f"unknown dataset {name!r}")


def split_train_val(dataset: TensorDataset, split: float, seed: int):
    """Deterministic train/validation split by shuffled index."""
    n = len(dataset)
    gen = np.random.Generator(np.random.PCG64(seed ^ 0x5EED))
    order = gen.permutation(n)
    cut = int(n * split)
    images, labels = dataset.tensors
    train_idx = torch.from_numpy(order[:cut].copy())
    val_idx = torch.from_numpy(order[cut:].copy())
    return (
        TensorDataset(images[train_idx], labels[train_idx]),
        TensorDataset(images[val_idx], labels[val_idx]),
    )
