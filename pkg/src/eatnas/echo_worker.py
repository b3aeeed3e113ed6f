"""Loopback worker speaking the evaluator wire protocol.

Returns a fixed accuracy and analytically computed sizes, which makes it a
protocol reference and a fault-injection double for engine tests: flags can
skip or corrupt the handshake, fail every Nth request, mangle response ids or
stop responding entirely. Run as ``python -m eatnas.echo_worker``; serves on
stdin/stdout by default or on TCP with ``--listen``.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys

from . import metrics
from .evaluators import PROTOCOL_VERSION, WORKER_HELLO
from .space import DecodeError, arch_from_obj, space_from_obj, validate


def handle_request(obj: dict, accuracy: float, epoch_bonus: float = 0.0) -> dict:
    """Compute the response object for one request (shared by all transports)."""
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
        space = space_from_obj(obj["space"])
        arch = arch_from_obj(obj["arch"])
    except (DecodeError, KeyError) as exc:
        return fail(f"bad request: {exc}")
    violations = validate(arch, space)
    if violations:
        return fail("; ".join(violations))
    acc = accuracy + epoch_bonus * (1.0 - 1.0 / epochs)
    return {
        "id": request_id,
        "status": "ok",
        "accuracy": acc,
        "params": metrics.arch_params(arch, space),
        "multadds": metrics.arch_multadds(arch, space),
        "detail": "",
    }


def _serve_lines(read_line, write_line, args) -> None:
    if not args.skip_handshake:
        proto = 999 if args.bad_proto else PROTOCOL_VERSION
        write_line(json.dumps({"hello": WORKER_HELLO, "proto": proto}))
    count = 0
    while True:
        line = read_line()
        if not line:
            break
        line = line.strip()
        if not line:
            continue
        count += 1
        if args.hang_after and count > args.hang_after:
            continue  # swallow the request: client should time out
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            write_line(json.dumps({"id": 0, "status": "failed", "accuracy": 0.0,
                                   "params": 0, "multadds": 0, "detail": "malformed request"}))
            continue
        if args.fail_every and count % args.fail_every == 0:
            response = {"id": obj.get("id", 0), "status": "failed", "accuracy": 0.0,
                        "params": 0, "multadds": 0, "detail": "injected failure"}
        else:
            response = handle_request(obj, args.accuracy, args.epoch_bonus)
        if args.mismatch_id:
            response["id"] = response["id"] + 1000
        write_line(json.dumps(response))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="loopback evaluator worker")
    parser.add_argument("--accuracy", type=float, default=0.5)
    parser.add_argument("--epoch-bonus", type=float, default=0.0,
                        help="adds bonus*(1 - 1/epochs) to the fixed accuracy")
    parser.add_argument("--fail-every", type=int, default=0,
                        help="every Nth request returns status failed")
    parser.add_argument("--hang-after", type=int, default=0,
                        help="stop responding after N requests")
    parser.add_argument("--mismatch-id", action="store_true")
    parser.add_argument("--skip-handshake", action="store_true")
    parser.add_argument("--bad-proto", action="store_true")
    parser.add_argument("--listen", type=int, default=None, metavar="PORT",
                        help="serve one TCP connection instead of stdio")
    args = parser.parse_args(argv)

    if args.listen is not None:
        server = socket.create_server(("127.0.0.1", args.listen))
        print(f"listening on {server.getsockname()[1]}", file=sys.stderr, flush=True)
        conn, _ = server.accept()
        with conn, conn.makefile("rw", encoding="utf-8", newline="\n") as fh:
            _serve_lines(
                fh.readline,
                lambda line: (fh.write(line + "\n"), fh.flush()),
                args,
            )
        server.close()
        return 0

    _serve_lines(
        sys.stdin.readline,
        lambda line: (sys.stdout.write(line + "\n"), sys.stdout.flush()),
        args,
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
