"""From the continuous adjacency to a variable-level DAG.

An edge ``i -> j`` is extracted when the largest entry of block ``(i, j)``
of ``A`` exceeds ``tau``. Cycles in the extracted graph are then broken one
at a time: on the witnessed cycle, the edge with the smallest *mean* block
strength is cut. Ties go to the lexicographically smallest ``(i, j)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import StateLayout
from .graphs import Dag, DirectedGraph, is_acyclic
from .optimizer import PriorSpec

_log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EdgeStrengths:
    block_max: np.ndarray  # s[i, j], used for extraction
    block_mean: np.ndarray  # str(i -> j), used to pick the weakest edge


@dataclass(frozen=True)
class RemovedEdge:
    source: int
    target: int
    strength: float
    cycle: tuple[int, ...]


@dataclass
class ProjectionLog:
    raw_edge_count: int
    removed: list[RemovedEdge] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.removed)

    @property
    def dag_before_check(self) -> bool:
        return not self.removed

    def to_dict(self, nodes) -> dict:
        pct = 100.0 * len(self.removed) / self.raw_edge_count if self.raw_edge_count else 0.0
        return {
            "dag_before_check": self.dag_before_check,
            "raw_edges": self.raw_edge_count,
            "edges_removed": len(self.removed),
            "removed_percent": round(pct, 6),
            "removed": [
                {
                    "from": nodes[r.source],
                    "to": nodes[r.target],
                    "str_mean": r.strength,
                    "cycle": [nodes[v] for v in r.cycle],
                }
                for r in self.removed
            ],
        }


def block_strengths(A: np.ndarray, layout: StateLayout, m: np.ndarray) -> EdgeStrengths:
    offsets = np.asarray(layout.offsets)
    block_max = np.maximum.reduceat(np.maximum.reduceat(A, offsets, axis=0), offsets, axis=1)
    block_mean = layout.block_sum(A) / layout.block_sizes()
    allowed = np.asarray(m) > 0
    return EdgeStrengths(
        np.where(allowed, block_max, 0.0),
        np.clip(np.where(allowed, block_mean, 0.0), 0.0, 1.0),
    )


def threshold_edges(strengths: EdgeStrengths, tau: float) -> set[tuple[int, int]]:
    s = strengths.block_max
    hits = (s > tau) & ~np.eye(s.shape[0], dtype=bool)
    return {(int(i), int(j)) for i, j in zip(*np.nonzero(hits))}


def cycle_projection(
    raw_edges, str_mean: np.ndarray, nodes
) -> tuple[Dag, ProjectionLog]:
    """Greedily remove the weakest edge of each witnessed cycle."""
    edges = set(raw_edges)
    log = ProjectionLog(raw_edge_count=len(edges))
    while True:
        ok, cycle = is_acyclic(edges, len(nodes))
        if ok:
            break
        on_cycle = [(cycle[k], cycle[(k + 1) % len(cycle)]) for k in range(len(cycle))]
        weakest = min(on_cycle, key=lambda e: (float(str_mean[e]), e))
        edges.remove(weakest)
        log.removed.append(RemovedEdge(*weakest, float(str_mean[weakest]), tuple(cycle)))
        _log.info(
            "Cycle %s broken by removing %s -> %s (str=%.6f)",
            " -> ".join(nodes[v] for v in cycle),
            nodes[weakest[0]],
            nodes[weakest[1]],
            str_mean[weakest],
        )
    return Dag(tuple(nodes), frozenset(edges)), log


def extract_graph(
    A: np.ndarray,
    layout: StateLayout,
    m: np.ndarray,
    tau: float,
    nodes,
    project: bool = True,
) -> tuple[DirectedGraph, set[tuple[int, int]], EdgeStrengths, ProjectionLog]:
    """Threshold ``A`` and, when ``project`` is set, repair it into a DAG.

    Without projection a cyclic extraction is returned as a plain
    :class:`DirectedGraph` and the log records it as not a DAG.
    """
    strengths = block_strengths(A, layout, m)
    raw = threshold_edges(strengths, tau)
    if not raw:
        _log.warning("No block strength exceeds tau=%g; extracted graph is empty", tau)
    if project:
        graph, log = cycle_projection(raw, strengths.block_mean, nodes)
        return graph, raw, strengths, log

    log = ProjectionLog(raw_edge_count=len(raw))
    ok, _ = is_acyclic(raw, len(nodes))
    graph = (Dag if ok else DirectedGraph)(tuple(nodes), frozenset(raw))
    if not ok:
        _log.warning("Extracted graph is cyclic and cycle projection is disabled")
    return graph, raw, strengths, log


def prior_only_dag(m: np.ndarray, prior: PriorSpec, nodes) -> tuple[Dag, ProjectionLog]:
    """Orient every open pair by the prior alone, without optimization.

    Resolved directions are kept at strength 1; open pairs follow the
    prior's favored direction at strength ``p`` (pairs the prior does not
    mention go from lower to higher index at 0.5).
    """
    M = m.shape[0]
    strength = np.zeros((M, M))
    favored = prior.favored()
    for i in range(M):
        for j in range(M):
            if i == j or not m[i, j]:
                continue
            if not m[j, i]:
                strength[i, j] = 1.0
            elif i < j:
                entry = favored.get((i, j))
                if entry is None:
                    strength[i, j] = 0.5
                else:
                    strength[entry.source, entry.target] = entry.p
    edges = {(int(i), int(j)) for i, j in zip(*np.nonzero(strength))}
    return cycle_projection(edges, strength, nodes)
