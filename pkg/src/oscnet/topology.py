"""Clustered network graphs: intra-cluster all-to-all or sparse coupling,
inter-cluster links between one bridge oscillator per cluster.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import OscillatorParams
from .errors import ConfigError, DomainError

HEADER = "# oscnet-topology v1"

INTRA_MODES = ("all_to_all", "sparse")
INTER_MODES = ("none", "ring", "chain")


@dataclass(frozen=True)
class Topology:
    """Weighted directed graph with cluster bookkeeping.

    ``edges`` maps ``(src, dst)`` to a dimensionless weight multiplying K.
    """

    n_clusters: int
    per_cluster: int
    edges: Mapping[tuple[int, int], float]
    cluster_of: tuple[int, ...]
    bridge_of: tuple[int, ...]
    _in_lists: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        n = self.size
        if len(self.cluster_of) != n:
            raise DomainError("cluster_of must cover every oscillator")
        for (src, dst), w in self.edges.items():
            if src == dst:
                raise DomainError(f"self-edge on {src}")
            if not (0 <= src < n and 0 <= dst < n):
                raise DomainError(f"edge {src}->{dst} has an invalid endpoint")
            if not np.isfinite(w):
                raise DomainError("edge weights must be finite")
        frozen = MappingProxyType(dict(sorted(self.edges.items())))
        object.__setattr__(self, "edges", frozen)
        ins: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        for (src, dst), w in frozen.items():
            ins[dst].append((src, w))
        object.__setattr__(self, "_in_lists", tuple(tuple(x) for x in ins))

    @property
    def size(self) -> int:
        return self.n_clusters * self.per_cluster

    def members(self, cluster: int) -> list[int]:
        return [i for i, c in enumerate(self.cluster_of) if c == cluster]

    def check_id(self, i: int) -> None:
        if not (isinstance(i, (int, np.integer)) and 0 <= i < self.size):
            raise DomainError(f"invalid oscillator id {i!r}")

    def weight_matrix(self, params: Sequence[OscillatorParams] | None = None) -> np.ndarray:
        """Dense ``W[dst, src]`` with rows and columns of disabled oscillators zeroed."""
        n = self.size
        w = np.zeros((n, n))
        for (src, dst), weight in self.edges.items():
            w[dst, src] = weight
        if params is not None:
            mask = enabled_mask(params, n)
            w[~mask, :] = 0.0
            w[:, ~mask] = 0.0
        return w

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        return (
            self.n_clusters == other.n_clusters
            and self.per_cluster == other.per_cluster
            and dict(self.edges) == dict(other.edges)
            and self.cluster_of == other.cluster_of
            and self.bridge_of == other.bridge_of
        )

    def __hash__(self):
        return hash((self.n_clusters, self.per_cluster, tuple(self.edges.items())))


def enabled_mask(params: Sequence[OscillatorParams] | None, n: int) -> np.ndarray:
    if params is None:
        return np.ones(n, dtype=bool)
    if len(params) != n:
        raise DomainError(f"expected {n} oscillator params, got {len(params)}")
    return np.array([p.enabled for p in params], dtype=bool)


def build_clustered(
    n_clusters: int,
    per_cluster: int,
    intra: str = "all_to_all",
    inter: str = "ring",
    *,
    p: float = 1.0,
    seed: int = 0,
    bridge: int | Sequence[int] = 0,
    inter_weight: float = 1.0,
) -> Topology:
    """Build the clustered network.

    ``intra`` is ``"all_to_all"`` or ``"sparse"`` (each ordered intra-cluster
    pair kept independently with probability ``p``, drawn from ``seed``).
    ``inter`` is ``"none"``, ``"ring"`` (cluster k linked to k+1 mod n) or
    ``"chain"`` (no wrap-around link). ``bridge`` is the member index (or a
    per-cluster list of indices) of the oscillator that carries inter-cluster
    links.
    """
    if n_clusters < 1 or per_cluster < 1:
        raise ConfigError("n_clusters and per_cluster must be >= 1")
    if intra not in INTRA_MODES:
        raise ConfigError(f"unknown intra mode {intra!r}")
    if inter not in INTER_MODES:
        raise ConfigError(f"unknown inter mode {inter!r}")
    if not 0.0 <= p <= 1.0:
        raise ConfigError("sparse probability must be in [0, 1]")
    if inter != "none" and n_clusters < 2:
        raise ConfigError(f"inter={inter!r} needs at least 2 clusters")

    bridges = [bridge] * n_clusters if np.isscalar(bridge) else list(bridge)
    if len(bridges) != n_clusters or not all(0 <= b < per_cluster for b in bridges):
        raise ConfigError("bridge index must be a valid member index for every cluster")

    rng = np.random.default_rng(seed)
    edges: dict[tuple[int, int], float] = {}
    cluster_of = []
    for c in range(n_clusters):
        base = c * per_cluster
        cluster_of.extend([c] * per_cluster)
        for a in range(per_cluster):
            for b in range(per_cluster):
                if a == b:
                    continue
                # draw for every pair so the stream does not depend on p
                keep = True if intra == "all_to_all" else rng.random() < p
                if keep:
                    edges[(base + a, base + b)] = 1.0

    bridge_ids = tuple(c * per_cluster + bridges[c] for c in range(n_clusters))
    if inter != "none":
        last = n_clusters if inter == "ring" else n_clusters - 1
        for c in range(last):
            d = (c + 1) % n_clusters
            if c == d:
                continue
            edges[(bridge_ids[c], bridge_ids[d])] = inter_weight
            edges[(bridge_ids[d], bridge_ids[c])] = inter_weight

    return Topology(n_clusters, per_cluster, edges, tuple(cluster_of), bridge_ids)


def set_enabled(
    topology: Topology, params: Sequence[OscillatorParams], i: int, flag: bool
) -> list[OscillatorParams]:
    """Return a copy of ``params`` with oscillator ``i`` enabled or disabled."""
    topology.check_id(i)
    if len(params) != topology.size:
        raise DomainError("params length does not match topology size")
    out = list(params)
    out[i] = out[i].with_enabled(flag)
    return out


def in_neighbors(
    topology: Topology, params: Sequence[OscillatorParams] | None, i: int
) -> list[tuple[int, float]]:
    """Enabled sources with an edge into ``i``, as ``(source, weight)`` pairs.

    A disabled target has no in-neighbors.
    """
    topology.check_id(i)
    mask = enabled_mask(params, topology.size)
    if not mask[i]:
        return []
    return [(src, w) for src, w in topology._in_lists[i] if mask[src]]


def dumps(topology: Topology) -> str:
    buf = io.StringIO()
    buf.write(HEADER + "\n")
    buf.write(f"shape {topology.n_clusters} {topology.per_cluster}\n")
    for c in range(topology.n_clusters):
        members = " ".join(str(m) for m in topology.members(c))
        buf.write(f"cluster {c} {members}\n")
    for c, b in enumerate(topology.bridge_of):
        buf.write(f"bridge {c} {b}\n")
    for (src, dst), w in topology.edges.items():
        buf.write(f"edge {src} {dst} {w!r}\n")
    return buf.getvalue()


def loads(text: str) -> Topology:
    lines = [ln.strip() for ln in text.splitlines()]
    if not lines or lines[0] != HEADER:
        raise ConfigError(f"missing header {HEADER!r}", line=1)
    clusters: dict[int, list[int]] = {}
    bridges: dict[int, int] = {}
    edges: dict[tuple[int, int], float] = {}
    shape = None
    for lineno, ln in enumerate(lines[1:], start=2):
        if not ln or ln.startswith("#"):
            continue
        parts = ln.split()
        try:
            if parts[0] == "shape":
                shape = (int(parts[1]), int(parts[2]))
            elif parts[0] == "cluster":
                clusters[int(parts[1])] = [int(x) for x in parts[2:]]
            elif parts[0] == "bridge":
                bridges[int(parts[1])] = int(parts[2])
            elif parts[0] == "edge":
                edges[(int(parts[1]), int(parts[2]))] = float(parts[3])
            else:
                raise ConfigError(f"unknown record {parts[0]!r}", line=lineno)
        except (IndexError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed record: {ln!r}", line=lineno) from None
    if not clusters:
        raise ConfigError("no clusters defined")
    n_clusters = len(clusters)
    per_cluster = len(clusters[0])
    if shape is not None and shape != (n_clusters, per_cluster):
        raise ConfigError("shape record disagrees with cluster records")
    n = n_clusters * per_cluster
    cluster_of = [-1] * n
    for c, members in clusters.items():
        if len(members) != per_cluster:
            raise ConfigError("clusters must have equal size")
        for m in members:
            if not 0 <= m < n or cluster_of[m] != -1:
                raise ConfigError(f"oscillator {m} is invalid or listed twice")
            cluster_of[m] = c
    bridge_of = tuple(bridges.get(c, min(clusters[c])) for c in range(n_clusters))
    return Topology(n_clusters, per_cluster, edges, tuple(cluster_of), bridge_of)


def effective_edges(topology: Topology, params: Sequence[OscillatorParams]) -> set[tuple[int, int]]:
    """Edges whose endpoints are both enabled."""
    mask = enabled_mask(params, topology.size)
    return {e for e in topology.edges if mask[e[0]] and mask[e[1]]}


def from_edges(n: int, edges: Iterable[tuple[int, int]] | Mapping, n_clusters: int = 1) -> Topology:
    """Convenience constructor for ad-hoc graphs (single cluster by default)."""
    if not isinstance(edges, Mapping):
        edges = {e: 1.0 for e in edges}
    if n % n_clusters:
        raise DomainError("n must be divisible by n_clusters")
    per = n // n_clusters
    cluster_of = tuple(i // per for i in range(n))
    bridge_of = tuple(c * per for c in range(n_clusters))
    return Topology(n_clusters, per, dict(edges), cluster_of, bridge_of)
