"""Evaluation contract, the synthetic two-task fitness landscape, and the
wire-protocol client for external trainer workers.

The synthetic landscape is the desk-scale stand-in for a small dataset and a
large dataset whose architecture preferences overlap but differ. Every
(block position, primitive, value) choice carries a pair of utilities: the
small-task utility is a hash-derived standard normal h1 and the large-task
utility is ``rho * h1 + sqrt(1 - rho^2) * h2`` with h2 an independent
hash-derived normal, so ``rho = 1`` makes the tasks identical and ``rho = 0``
makes them independent. Adjacent blocks' convolution choices add weighted
interaction utilities of the same blended construction, which keeps the
landscape from being fully separable. The pseudo-accuracy is a logistic
squash of the normalized utility sum mapped into [0.05, 0.95]; extra training
epochs add a small saturating bonus so re-evaluation at a higher budget can
reorder close candidates.

All hash-to-normal derivations use 64-bit FNV-1a over canonical field tuples
and a fixed inverse-CDF approximation (see :mod:`eatnas.rng`), so accuracies
for a given (seed, arch, task) reproduce across processes.
"""

from __future__ import annotations

import functools
import itertools
import json
import logging
import math
import queue
import random
import shlex
import socket
import subprocess
import threading
from dataclasses import dataclass
from typing import Optional

from . import metrics
from .rng import normal_from_key
from .space import (
    ArchCode,
    CONV_OPS,
    PRIMITIVE_VALUES,
    SearchSpaceConfig,
    arch_to_obj,
    space_to_obj,
    validate,
)

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
WORKER_HELLO = "eatnas-worker"

# Landscape construction constants.
BASE_LOGIT = 0.0
INTERACTION_WEIGHT = 0.3
ACC_LO = 0.05
ACC_HI = 0.95
EPOCH_BONUS = 0.02
SIZE_COUPLING_WEIGHT = 0.4
SIZE_COUPLING_REF = 1_000_000.0  # parameter count at which the size term vanishes

TASKS = ("small", "large")


@dataclass(frozen=True)
class EvalBudget:
    """Training budget of one evaluation: epoch count and purpose tag."""

    epochs: int = 1
    purpose: str = "search"  # or "rerank"

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.purpose not in ("search", "rerank"):
            raise ValueError(f"purpose must be 'search' or 'rerank', got {self.purpose!r}")


@dataclass(frozen=True)
class EvalResult:
    """Outcome of one evaluation; accuracy is present iff status is ok."""

    status: str  # "ok" | "failed"
    accuracy: Optional[float]
    size_params: int
    size_multadds: int
    detail: str = ""

    def __post_init__(self) -> None:
        if self.status not in ("ok", "failed"):
            raise ValueError(f"status must be 'ok' or 'failed', got {self.status!r}")
        if (self.accuracy is None) == (self.status == "ok"):
            raise ValueError("accuracy must be present exactly when status is ok")

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def failed(detail: str) -> EvalResult:
    return EvalResult(status="failed", accuracy=None, size_params=0, size_multadds=0, detail=detail)


@dataclass(frozen=True)
class LandscapeConfig:
    """Synthetic landscape settings.

    ``shift`` is the small/large task correlation rho in [0, 1]. With
    ``noise_std`` zero the landscape is a pure function of (seed, arch,
    task); ``size_coupling`` additionally ties pseudo-accuracy to the model's
    parameter count (bigger models score higher), creating a real trade-off
    against the size objective.
    """

    seed: int = 0
    shift: float = 1.0
    noise_std: float = 0.0
    size_coupling: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.shift <= 1.0:
            raise ValueError(f"shift must be in [0, 1], got {self.shift}")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")


def _value_key(prim: str, value) -> str:
    if prim == "conv":
        return value.value
    if prim == "skip":
        return "true" if value else "false"
    if prim == "width":
        return f"{value:.1f}"
    return str(value)


def _pair(seed: int, *fields) -> tuple[float, float]:
    base = "|".join(str(f) for f in (seed,) + fields)
    return normal_from_key(base + "|h1"), normal_from_key(base + "|h2")


@functools.lru_cache(maxsize=64)
def _utility_tables(seed: int, rho: float, n_blocks: int):
    """Per-(block, primitive, value) and adjacent-conv-pair utility tables.

    Each entry maps to (u_small, u_large). The small-task utility never
    depends on rho, so raising rho moves only the large task.
    """
    mix = math.sqrt(max(0.0, 1.0 - rho * rho))
    unary: dict[tuple[int, str, str], tuple[float, float]] = {}
    for b in range(1, n_blocks + 1):
        for prim, values in PRIMITIVE_VALUES.items():
            for value in values:
                vk = _value_key(prim, value)
                h1, h2 = _pair(seed, "u", b, prim, vk)
                unary[(b, prim, vk)] = (h1, rho * h1 + mix * h2)
    pair: dict[tuple[int, str, str], tuple[float, float]] = {}
    for b in range(1, n_blocks):
        for c1, c2 in itertools.product(CONV_OPS, CONV_OPS):
            h1, h2 = _pair(seed, "i", b, c1.value, c2.value)
            pair[(b, c1.value, c2.value)] = (h1, rho * h1 + mix * h2)
    return unary, pair


def _logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def utility_sum(arch: ArchCode, cfg: LandscapeConfig, task: str) -> float:
    """Raw (un-squashed) utility total of an architecture on one task."""
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}, got {task!r}")
    idx = 0 if task == "small" else 1
    unary, pair = _utility_tables(cfg.seed, cfg.shift, len(arch.blocks))
    total = 0.0
    for b, block in enumerate(arch.blocks, start=1):
        for prim in PRIMITIVE_VALUES:
            total += unary[(b, prim, _value_key(prim, getattr(block, prim)))][idx]
    for b in range(1, len(arch.blocks)):
        c1 = arch.blocks[b - 1].conv.value
        c2 = arch.blocks[b].conv.value
        total += INTERACTION_WEIGHT * pair[(b, c1, c2)][idx]
    return total


def landscape_normalizer(n_blocks: int) -> float:
    """Scale applied to the utility sum: sqrt of the number of utility terms."""
    return math.sqrt(5 * n_blocks + (n_blocks - 1))


def accuracy_from_logit(logit: float) -> float:
    return ACC_LO + (ACC_HI - ACC_LO) * _logistic(logit)


def synthetic_accuracy(
    arch: ArchCode,
    cfg: LandscapeConfig,
    task: str,
    epochs: int = 1,
    size_params: Optional[int] = None,
) -> float:
    """Deterministic pseudo-accuracy in [0.05, 0.97] for one (arch, task).

    ``size_params`` feeds the optional size coupling (+SIZE_COUPLING_WEIGHT
    per decade of parameters above the reference count); it is ignored unless
    ``cfg.size_coupling`` is set.
    """
    logit = BASE_LOGIT + utility_sum(arch, cfg, task) / landscape_normalizer(len(arch.blocks))
    if cfg.size_coupling:
        if size_params is None:
            raise ValueError("size_coupling requires size_params")
        logit += SIZE_COUPLING_WEIGHT * math.log10(size_params / SIZE_COUPLING_REF)
    acc = accuracy_from_logit(logit)
    if epochs > 1:
        acc += EPOCH_BONUS * (1.0 - 1.0 / epochs)
    return acc


class SyntheticEvaluator:
    """Deterministic evaluator over the synthetic landscape.

    With ``noise_std`` zero, ``evaluate`` is a pure function of (arch,
    budget); size fields always equal the analytic metrics for the same arch
    and space.
    """

    def __init__(
        self,
        space: SearchSpaceConfig,
        cfg: LandscapeConfig,
        task: str = "small",
        name: Optional[str] = None,
    ) -> None:
        if task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {task!r}")
        self.space = space
        self.cfg = cfg
        self.task = task
        self.name = name or f"synthetic-{task}"
        self._noise_rng = random.Random(cfg.seed ^ 0x5EED_0F_1053)

    def evaluate(self, arch: ArchCode, budget: EvalBudget) -> EvalResult:
        violations = validate(arch, self.space)
        if violations:
            return failed("; ".join(violations))
        params = metrics.arch_params(arch, self.space)
        multadds = metrics.arch_multadds(arch, self.space)
        acc = synthetic_accuracy(
            arch, self.cfg, self.task, epochs=budget.epochs, size_params=params
        )
        if self.cfg.noise_std > 0:
            acc += self._noise_rng.gauss(0.0, self.cfg.noise_std)
        acc = min(1.0, max(0.0, acc))
        return EvalResult(
            status="ok", accuracy=acc, size_params=params, size_multadds=multadds
        )


# --- wire protocol client -----------------------------------------------------
#
# Messages are single lines of UTF-8 JSON, LF-terminated, one request in
# flight per connection. The worker emits {"hello": "eatnas-worker",
# "proto": 1} on start. Request:
#   {"id": <u64>, "cmd": "eval", "arch": <canonical arch object>,
#    "epochs": <int>, "space": <space config object>, "share": <list|null>}
# Response:
#   {"id": <u64>, "status": "ok"|"failed", "accuracy": <real>,
#    "params": <int>, "multadds": <int>, "detail": <string>}

DEFAULT_SEARCH_TIMEOUT = 900.0
DEFAULT_RERANK_TIMEOUT = 3600.0
HANDSHAKE_TIMEOUT = 30.0


class ProtocolError(RuntimeError):
    """Worker endpoint failed the handshake or stopped speaking the protocol."""


class _StdioTransport:
    """Line transport over a spawned worker's stdin/stdout."""

    def __init__(self, command: str):
        self.proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._lines: queue.Queue[Optional[str]] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        try:
            for line in self.proc.stdout:
                self._lines.put(line)
        finally:
            self._lines.put(None)

    def send(self, line: str) -> None:
        if self.proc.poll() is not None:
            raise ProtocolError("worker process exited")
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()

    def recv(self, timeout: float) -> str:
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError(f"no response within {timeout:g} s") from None
        if line is None:
            raise ProtocolError("worker closed its output")
        return line.rstrip("\n")

    def close(self) -> None:
        try:
            if self.proc.poll() is None:
                self.proc.terminate()
                try:
                    self.proc.wait(timeout=5)
                except subprocess.TimeoutExpired:
                    self.proc.kill()
                    self.proc.wait(timeout=5)
        finally:
            for stream in (self.proc.stdin, self.proc.stdout):
                if stream is not None:
                    try:
                        stream.close()
                    except OSError:
                        pass


class _TcpTransport:
    """Line transport over a TCP connection."""

    def __init__(self, host: str, port: int):
        self.sock = socket.create_connection((host, port), timeout=HANDSHAKE_TIMEOUT)
        self.file = self.sock.makefile("rw", encoding="utf-8", newline="\n")

    def send(self, line: str) -> None:
        self.file.write(line + "\n")
        self.file.flush()

    def recv(self, timeout: float) -> str:
        self.sock.settimeout(timeout)
        try:
            line = self.file.readline()
        except socket.timeout:
            raise TimeoutError(f"no response within {timeout:g} s") from None
        if not line:
            raise ProtocolError("worker closed the connection")
        return line.rstrip("\n")

    def close(self) -> None:
        try:
            self.file.close()
        finally:
            self.sock.close()


def _parse_endpoint(endpoint: str):
    if endpoint.startswith("stdio:"):
        return ("stdio", endpoint[len("stdio:"):])
    host, sep, port = endpoint.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"endpoint must be 'stdio:CMD' or 'HOST:PORT', got {endpoint!r}")
    return ("tcp", (host, int(port)))


def _open_transport(endpoint: str):
    kind, target = _parse_endpoint(endpoint)
    if kind == "stdio":
        return _StdioTransport(target)
    return _TcpTransport(*target)


class ExternalEvaluator:
    """Client side of the evaluator protocol: one worker endpoint, one
    request in flight.

    Transport failures and timeouts surface as failed results (the engine owns
    retries); the connection is dropped and respawned on the next call.
    """

    def __init__(
        self,
        endpoint: str,
        space: SearchSpaceConfig,
        name: Optional[str] = None,
        search_timeout: float = DEFAULT_SEARCH_TIMEOUT,
        rerank_timeout: float = DEFAULT_RERANK_TIMEOUT,
        share_signatures: Optional[list[str]] = None,
    ) -> None:
        _parse_endpoint(endpoint)  # reject malformed endpoints eagerly
        self.endpoint = endpoint
        self.space = space
        self.name = name or f"external({endpoint})"
        self.search_timeout = search_timeout
        self.rerank_timeout = rerank_timeout
        self.share_signatures = share_signatures
        self._transport = None
        self._ids = itertools.count(1)

    def _ensure_transport(self):
        if self._transport is None:
            transport = _open_transport(self.endpoint)
            try:
                hello = json.loads(transport.recv(HANDSHAKE_TIMEOUT))
            except (TimeoutError, ProtocolError, json.JSONDecodeError) as exc:
                transport.close()
                raise ProtocolError(f"handshake failed: {exc}") from None
            if hello.get("hello") != WORKER_HELLO or hello.get("proto") != PROTOCOL_VERSION:
                transport.close()
                raise ProtocolError(f"unexpected handshake {hello!r}")
            self._transport = transport
        return self._transport

    def _drop_transport(self) -> None:
        if self._transport is not None:
            self._transport.close()
            self._transport = None

    def close(self) -> None:
        self._drop_transport()

    def evaluate(self, arch: ArchCode, budget: EvalBudget) -> EvalResult:
        timeout = self.rerank_timeout if budget.purpose == "rerank" else self.search_timeout
        try:
            transport = self._ensure_transport()
        except (ProtocolError, OSError, ValueError) as exc:
            return failed(f"transport error: {exc}")
        request_id = next(self._ids)
        request = {
            "id": request_id,
            "cmd": "eval",
            "arch": arch_to_obj(arch),
            "epochs": budget.epochs,
            "space": space_to_obj(self.space),
            "share": self.share_signatures,
        }
        try:
            transport.send(json.dumps(request))
            line = transport.recv(timeout)
        except TimeoutError:
            self._drop_transport()
            return failed("timeout")
        except (ProtocolError, OSError) as exc:
            self._drop_transport()
            return failed(f"transport error: {exc}")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            self._drop_transport()
            return failed(f"malformed response: {exc.msg}")
        if response.get("id") != request_id:
            self._drop_transport()
            return failed(
                f"protocol violation: response id {response.get('id')} != request id {request_id}"
            )
        if response.get("status") == "ok":
            return EvalResult(
                status="ok",
                accuracy=float(response["accuracy"]),
                size_params=int(response["params"]),
                size_multadds=int(response["multadds"]),
                detail=str(response.get("detail", "")),
            )
        return failed(str(response.get("detail", "worker reported failure")))
