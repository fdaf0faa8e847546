"""Gossip-based coordination for multi-agent systems, with a deterministic simulator."""

from . import coordination  # registers the task CRDT type
from .core import Digest, Priority, Rumor, Version, digest_diff
from .dissemination import GossipNode, NodeParams
from .simnet import RunMetrics, ScenarioConfig, compute_metrics, run

__all__ = [
    "Digest",
    "GossipNode",
    "NodeParams",
    "Priority",
    "Rumor",
    "RunMetrics",
    "ScenarioConfig",
    "Version",
    "compute_metrics",
    "coordination",
    "digest_diff",
    "run",
]

__version__ = "0.1.0"
