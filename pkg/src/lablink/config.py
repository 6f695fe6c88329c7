"""Node configuration with flags > environment > config file > defaults."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .session import LllThresholds

ENV_PREFIX = "LABLINK_"
DEFAULT_PORT_RANGE = (16571, 16574)  # known localhost rendezvous ports


@dataclass(frozen=True)
class NodeConfig:
    lab_id: str = "lab"
    host: str = "127.0.0.1"
    port: int | None = None  # None = first free port in DEFAULT_PORT_RANGE
    announce_interval: float = 1.0
    peers: tuple[str, ...] = ()  # host:port; empty = the default local range
    immersion_capable: bool = False
    thresholds: LllThresholds = LllThresholds()

    def __post_init__(self) -> None:
        if self.announce_interval <= 0:
            raise ValueError("announce interval must be > 0")

    def default_peer_endpoints(self) -> list[str]:
        if self.peers:
            return list(self.peers)
        lo, hi = DEFAULT_PORT_RANGE
        return [f"{self.host}:{p}" for p in range(lo, hi + 1) if p != self.port]


_SCALAR_FIELDS = {
    "lab_id": str,
    "host": str,
    "port": int,
    "announce_interval": float,
    "immersion_capable": lambda v: str(v).lower() in ("1", "true", "yes"),
}


def load_config(overrides: dict | None = None,
                config_file: str | Path | None = None,
                env: dict | None = None) -> NodeConfig:
    """Merge config sources; `overrides` (CLI flags) win, then env, then file."""
    env = os.environ if env is None else env
    merged: dict = {}

    if config_file:
        merged.update(json.loads(Path(config_file).read_text()))

    for name, cast in _SCALAR_FIELDS.items():
        raw = env.get(ENV_PREFIX + name.upper())
        if raw is not None:
            merged[name] = cast(raw)
    raw_peers = env.get(ENV_PREFIX + "PEERS")
    if raw_peers is not None:
        merged["peers"] = [p for p in raw_peers.split(",") if p]

    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value

    if "peers" in merged:
        merged["peers"] = tuple(merged["peers"])
    if "thresholds" in merged and isinstance(merged["thresholds"], dict):
        merged["thresholds"] = LllThresholds(**merged["thresholds"])
    known = {f.name for f in fields(NodeConfig)}
    return NodeConfig(**{k: v for k, v in merged.items() if k in known})


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, _, port = endpoint.rpartition(":")
    return host, int(port)
