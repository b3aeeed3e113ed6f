"""Parameter-sharing substrate over abstract 4-D weight tensors.

Width sharing copies the overlapping sub-tensor
``[0:w, 0:h, 0:min(ch_in), 0:min(ch_out)]`` from the stored tensor into the
new one and fills the rest from the normal random initializer. Depth sharing
copies the leading ``min(l_new, l_old)`` layers of a block (each through
width sharing) and initializes any extra trailing layers freshly. Sharing is
keyed by layer signature: a layer inherits only from an entry with the same
block position, layer position, operation type and kernel size; the stages of
a layer (expansion / depthwise / projection) are stored and shared as
independent tensors under sub-signatures.

All randomness is keyed: the generator seed for a tensor is derived from the
init spec's seed and the tensor's signature, so a derivation depends only on
(child, store contents, init seed), never on traversal order.
"""

from __future__ import annotations

import json
import struct
import threading
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .metrics import layer_part_shapes, resolve_channel_plan
from .rng import fnv1a64
from .space import ArchCode, ConvOp, SearchSpaceConfig

Shape = tuple[int, int, int, int]


@dataclass(frozen=True)
class WeightInitSpec:
    """Normal-distribution initializer for non-inherited parameters."""

    mean: float = 0.0
    std: float = 0.01
    seed: int = 0

    def __post_init__(self) -> None:
        if self.std <= 0:
            raise ValueError(f"std must be > 0, got {self.std}")


@dataclass(frozen=True)
class LayerSignature:
    """Identity of a stored tensor; equality on all fields gates sharing."""

    block_index: int
    layer_index: int
    op: ConvOp
    kernel: int
    part: str = "main"

    def key(self) -> str:
        return f"{self.block_index}/{self.layer_index}/{self.op.value}/{self.kernel}/{self.part}"


@dataclass(frozen=True)
class ParamMatrix:
    """A 4-D parameter tensor (w, h, ch_in, ch_out) of float32 values."""

    shape: Shape
    values: np.ndarray

    def __post_init__(self) -> None:
        if any(d < 1 for d in self.shape):
            raise ValueError(f"all dims must be >= 1, got {self.shape}")
        if tuple(self.values.shape) != tuple(self.shape):
            raise ValueError(f"values shape {self.values.shape} != declared {self.shape}")


@dataclass(frozen=True)
class BlockWeights:
    """Ordered per-layer parameter tensors of one block."""

    layers: tuple[ParamMatrix, ...]

    def __post_init__(self) -> None:
        if len(self.layers) < 1:
            raise ValueError("a block holds at least one layer")


def gamma_init(shape: Shape, init: WeightInitSpec, key: str = "") -> ParamMatrix:
    """Freshly initialized tensor; the stream is keyed by (init.seed, key)."""
    gen = np.random.Generator(np.random.PCG64(fnv1a64(f"{init.seed}/{key}")))
    values = gen.normal(init.mean, init.std, size=shape).astype(np.float32)
    return ParamMatrix(shape=tuple(shape), values=values)


def share_width(
    new_shape: Shape,
    old: ParamMatrix,
    init: WeightInitSpec,
    key: str = "",
) -> ParamMatrix:
    """Inherit the channel-overlap region of ``old`` into a tensor of ``new_shape``.

    The spatial dims must match (kernel-size equality is a sharing
    precondition; callers fall back to fresh init on mismatch). Elements
    outside the overlap come from the initializer and are independent of the
    source.
    """
    w, h, ci_new, co_new = new_shape
    w_old, h_old, ci_old, co_old = old.shape
    if (w, h) != (w_old, h_old):
        raise ValueError(f"spatial dims differ: new {(w, h)} vs old {(w_old, h_old)}")
    fresh = gamma_init(new_shape, init, key=key)
    ci = min(ci_new, ci_old)
    co = min(co_new, co_old)
    values = fresh.values.copy()
    values[:, :, :ci, :co] = old.values[:, :, :ci, :co]
    return ParamMatrix(shape=tuple(new_shape), values=values)


def share_depth(
    new_shapes: list[Shape],
    old: BlockWeights,
    init: WeightInitSpec,
    key: str = "",
) -> BlockWeights:
    """Inherit a block's leading layers; extra trailing layers are fresh.

    Layers 1..min(l_new, l_old) are copied through :func:`share_width` (so
    width differences at matching positions still share their overlap); when
    the new block is deeper, the layers beyond l_old are initialized freshly.
    """
    if not new_shapes:
        raise ValueError("a block holds at least one layer")
    l_old = len(old.layers)
    layers = []
    for i, shape in enumerate(new_shapes):
        layer_key = f"{key}/{i + 1}"
        if i < l_old:
            layers.append(share_width(shape, old.layers[i], init, key=layer_key))
        else:
            layers.append(gamma_init(shape, init, key=layer_key))
    return BlockWeights(layers=tuple(layers))


class WeightStore:
    """Signature-keyed store of the most recent committed tensors (latest wins).

    Concurrent readers are safe against a writer; committed matrices are
    immutable. ``snapshot`` gives a consistent view for a whole derivation.
    """

    def __init__(self) -> None:
        self._entries: dict[LayerSignature, ParamMatrix] = {}
        self._lock = threading.Lock()

    def commit(self, sig: LayerSignature, matrix: ParamMatrix) -> None:
        with self._lock:
            self._entries[sig] = matrix

    def lookup(self, sig: LayerSignature) -> Optional[ParamMatrix]:
        with self._lock:
            return self._entries.get(sig)

    def snapshot(self) -> dict[LayerSignature, ParamMatrix]:
        with self._lock:
            return dict(self._entries)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def __iter__(self) -> Iterator[LayerSignature]:
        return iter(self.snapshot())


def derive_weights(
    child: ArchCode,
    space: SearchSpaceConfig,
    store: WeightStore,
    init: WeightInitSpec,
) -> dict[LayerSignature, ParamMatrix]:
    """Materialize every block-layer tensor of ``child``, inheriting where signatures match.

    For each stage of each resolved layer: a stored tensor under the same
    (block, layer, op, kernel, part) signature is inherited through width
    sharing; anything else is freshly initialized. Because signatures carry
    the layer index, depth extensions inherit exactly the leading layers of
    the stored block and initialize the rest, matching the depth-sharing rule.
    """
    snapshot = store.snapshot()
    plan = resolve_channel_plan(child, space)
    derived: dict[LayerSignature, ParamMatrix] = {}
    for layer in plan.layers:
        for part, shape in layer_part_shapes(layer.op, layer.kernel, layer.c_in, layer.c_out):
            sig = LayerSignature(
                block_index=layer.block_index,
                layer_index=layer.layer_index,
                op=layer.op,
                kernel=layer.kernel,
                part=part,
            )
            stored = snapshot.get(sig)
            if stored is not None and stored.shape[:2] == tuple(shape[:2]):
                derived[sig] = share_width(tuple(shape), stored, init, key=sig.key())
            else:
                derived[sig] = gamma_init(tuple(shape), init, key=sig.key())
    return derived


def commit_all(store: WeightStore, derived: dict[LayerSignature, ParamMatrix]) -> None:
    """Commit a full derivation, overwriting per signature."""
    for sig, matrix in derived.items():
        store.commit(sig, matrix)


# --- binary dump for external trainers ---------------------------------------
#
# Layout (little-endian): magic b"EATW", u32 version (1), u32 entry count.
# Per entry: u32 signature-JSON byte length, the signature JSON (utf-8, fields
# block/layer/op/kernel/part), four u32 dims (w, h, ch_in, ch_out), then
# w*h*ch_in*ch_out float32 values in C order.

_MAGIC = b"EATW"
_VERSION = 1


def dump_store(store: WeightStore, path) -> None:
    entries = sorted(store.snapshot().items(), key=lambda kv: kv[0].key())
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", _MAGIC, _VERSION, len(entries)))
        for sig, matrix in entries:
            sig_json = json.dumps(
                {
                    "block": sig.block_index,
                    "layer": sig.layer_index,
                    "op": sig.op.value,
                    "kernel": sig.kernel,
                    "part": sig.part,
                }
            ).encode("utf-8")
            fh.write(struct.pack("<I", len(sig_json)))
            fh.write(sig_json)
            fh.write(struct.pack("<IIII", *matrix.shape))
            fh.write(np.ascontiguousarray(matrix.values, dtype="<f4").tobytes())


def load_store(path) -> WeightStore:
    store = WeightStore()
    with open(path, "rb") as fh:
        magic, version, count = struct.unpack("<4sII", fh.read(12))
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        if version != _VERSION:
            raise ValueError(f"unsupported store version {version}")
        for _ in range(count):
            (sig_len,) = struct.unpack("<I", fh.read(4))
            sig_obj = json.loads(fh.read(sig_len).decode("utf-8"))
            shape = struct.unpack("<IIII", fh.read(16))
            n = shape[0] * shape[1] * shape[2] * shape[3]
            values = np.frombuffer(fh.read(4 * n), dtype="<f4").reshape(shape).copy()
            sig = LayerSignature(
                block_index=sig_obj["block"],
                layer_index=sig_obj["layer"],
                op=ConvOp(sig_obj["op"]),
                kernel=sig_obj["kernel"],
                part=sig_obj["part"],
            )
            store.commit(sig, ParamMatrix(shape=shape, values=values))
    return store
