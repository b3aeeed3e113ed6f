"""Reference trainer worker: decodes block-coded architectures from the wire
protocol, trains the realized CNN for the requested epochs, and reports
held-out accuracy with analytically consistent size metrics."""

from .codes import Block, SpaceSpec, parse_arch, parse_space, resolve_layers
from .network import CodedNetwork, build_network, count_parameters
from .serve import Worker, WorkerConfig, serve_stdio, serve_tcp

__version__ = "0.1.0"

__all__ = [
    "Block",
    "CodedNetwork",
    "SpaceSpec",
    "Worker",
    "WorkerConfig",
    "build_network",
    "count_parameters",
    "parse_arch",
    "parse_space",
    "resolve_layers",
    "serve_stdio",
    "serve_tcp",
]
