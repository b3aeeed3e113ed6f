"""Protocol server: handshake, then one evaluation per request line.

Each request decodes an architecture against the supplied space, builds the
torch network, trains it for the requested epochs with SGD (momentum 0.9,
weight decay 3e-4, fixed learning rate) on the configured dataset's training
split, evaluates accuracy on the held-out split, and responds with accuracy
plus parameter and multiply-add counts. Per-request failures are reported
with status failed; the serving loop survives them. The optional ``share``
request field is acknowledged but not implemented in this version.
"""

from __future__ import annotations

import json
import socket
import sys
from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn
from torch.utils.data import DataLoader

from .codes import RequestError, analytic_multadds, parse_arch, parse_space, validate_against_space
from .data import load_dataset, split_train_val
from .network import build_network, count_parameters

PROTOCOL_VERSION = 1
WORKER_HELLO = "eatnas-worker"


@dataclass
class WorkerConfig:
    dataset: str = "synthetic"
    data_path: Optional[str] = None
    train_size: int = 5000
    split: float = 0.8
    device: str = "cpu"
    batch_size: int = 128
    lr: float = 0.0256
    momentum: float = 0.9
    weight_decay: float = 3e-4
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.split < 1.0:
            raise ValueError(f"split must be in (0, 1), got {self.split}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


class Worker:
    """One dataset, one device; datasets are cached per (classes, resolution)."""

    def __init__(self, config: WorkerConfig):
        self.config = config
        self._splits: dict[tuple[int, int], tuple] = {}

    def _data(self, num_classes: int, resolution: int):
        key = (num_classes, resolution)
        if key not in self._splits:
            dataset = load_dataset(
                self.config.dataset, self.config.data_path, self.config.train_size,
                num_classes, resolution, self.config.seed,
            )
            self._splits[key] = split_train_val(dataset, self.config.split, self.config.seed)
        return self._splits[key]

    def train_eval(self, blocks, space, epochs: int) -> float:
        """Train for the requested epochs and return held-out accuracy."""
        torch.manual_seed(self.config.seed)
        device = torch.device(self.config.device)
        train_set, val_set = self._data(space.num_classes, space.input_resolution)
        model = build_network(blocks, space).to(device)
        optimizer = torch.optim.SGD(
            model.parameters(),
            lr=self.config.lr,
            momentum=self.config.momentum,
            weight_decay=self.config.weight_decay,
        )
        loss_fn = nn.CrossEntropyLoss()
        loader = DataLoader(train_set, batch_size=self.config.batch_size, shuffle=True,
                            generator=torch.Generator().manual_seed(self.config.seed))
        model.train()
        for _ in range(epochs):
            for images, labels in loader:
                images, labels = images.to(device), labels.to(device)
                optimizer.zero_grad()
                loss = loss_fn(model(images), labels)
                loss.backward()
                optimizer.step()
        model.eval()
        correct = 0
        with torch.no_grad():
            val_loader = DataLoader(val_set, batch_size=self.config.batch_size)
            for images, labels in val_loader:
                images, labels = images.to(device), labels.to(device)
                correct += (model(images).argmax(dim=1) == labels).sum().item()
        return correct / len(val_set)

    def handle(self, obj: dict) -> dict:
        request_id = obj.get("id", 0)

        def fail(detail: str) -> dict:
            return {"id": request_id, "status": "failed", "accuracy": 0.0,
                    "params": 0, "multadds": 0, "detail": detail}

        if obj.get("cmd") != "eval":
            return fail(f"unknown command {obj.get('cmd')!r}")
        epochs = obj.get("epochs", 1)
        if not isinstance(epochs, int) or epochs < 1:
            return fail(f"epochs >= 1 required, got {epochs!r}")
        try:
            space = parse_space(obj.get("space"))
            blocks = parse_arch(obj.get("arch"))
            validate_against_space(blocks, space)
        except RequestError as exc:
            return fail(str(exc))
        if obj.get("share"):
            print("share field present but parameter shipping is not implemented; "
                  "training from fresh initialization", file=sys.stderr, flush=True)
        try:
            model = build_network(blocks, space)
            params = count_parameters(model)
            accuracy = self.train_eval(blocks, space, epochs)
        except Exception as exc:  # keep the serving loop alive
            return fail(f"training failed: {exc}")
        train_set, val_set = self._data(space.num_classes, space.input_resolution)
        return {
            "id": request_id,
            "status": "ok",
            "accuracy": accuracy,
            "params": params,
            "multadds": analytic_multadds(blocks, space),
            "detail": f"split={self.config.split:g} train={len(train_set)} val={len(val_set)}",
        }


def _loop(worker: Worker, read_line, write_line) -> None:
    write_line(json.dumps({"hello": WORKER_HELLO, "proto": PROTOCOL_VERSION}))
    while True:
        line = read_line()
        if not line:
            break
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            write_line(json.dumps({"id": 0, "status": "failed", "accuracy": 0.0,
                                   "params": 0, "multadds": 0,
                                   "detail": "malformed request"}))
            continue
        write_line(json.dumps(worker.handle(obj)))


def serve_stdio(worker: Worker) -> None:
    _loop(
        worker,
        sys.stdin.readline,
        lambda line: (sys.stdout.write(line + "\n"), sys.stdout.flush()),
    )


def serve_tcp(worker: Worker, port: int) -> None:
    server = socket.create_server(("127.0.0.1", port))
    print(f"listening on {server.getsockname()[1]}", file=sys.stderr, flush=True)
    try:
        while True:
            conn, _ = server.accept()
            with conn, conn.makefile("rw", encoding="utf-8", newline="\n") as fh:
                _loop(worker, fh.readline, lambda line: (fh.write(line + "\n"), fh.flush()))
    finally:
        server.close()
