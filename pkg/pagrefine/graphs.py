"""Variable-level graphs and the PAG-to-mask compiler.

A :class:`Pag` carries an endpoint mark at both ends of each edge. Its
semantics are compiled into a directional admissibility matrix ``m`` (which
directions the optimizer may use) and then lifted block-wise to the
state-level mask ``S``.

Marks are restricted to circle, arrow and tail. An arrow-arrow edge that is
not part of an unshielded collider is accepted as ambiguous in both
directions, with a warning.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from pathlib import Path

import networkx as nx
import numpy as np

from .data import StateLayout
from .errors import InputError

_log = logging.getLogger(__name__)


class GraphError(InputError):
    pass


class Mark(str, Enum):
    CIRCLE = "circle"
    ARROW = "arrow"
    TAIL = "tail"


def _check_nodes(nodes) -> tuple[str, ...]:
    nodes = tuple(str(n) for n in nodes)
    if len(set(nodes)) != len(nodes):
        raise GraphError("node names must be unique")
    return nodes


# --------------------------------------------------------------------------
# Acyclicity
# --------------------------------------------------------------------------


def is_acyclic(edges, node_count: int = 0) -> tuple[bool, list[int]]:
    """Return ``(True, [])`` or ``(False, cycle)`` for a directed edge set.

    The witness is deterministic: depth-first search starts at the lowest
    index vertex and visits lower-index neighbours first.
    """
    graph = nx.DiGraph()
    nodes = sorted({v for edge in edges for v in edge} | set(range(node_count)))
    graph.add_nodes_from(nodes)
    graph.add_edges_from(sorted(edges))
    try:
        cycle = nx.find_cycle(graph, source=nodes)
    except nx.NetworkXNoCycle:
        return True, []
    return False, [u for u, _v in cycle]


# --------------------------------------------------------------------------
# DAG
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DirectedGraph:
    """Directed edges over named nodes; cycles allowed."""

    nodes: tuple[str, ...]
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        object.__setattr__(self, "nodes", _check_nodes(self.nodes))
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        M = len(self.nodes)
        for i, j in edges:
            if not (0 <= i < M and 0 <= j < M):
                raise GraphError(f"edge ({i}, {j}) references an unknown node")
            if i == j:
                raise GraphError(f"self-loop on {self.nodes[i]!r}")
        object.__setattr__(self, "edges", edges)

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.node_count, self.node_count), dtype=np.int8)
        for i, j in self.edges:
            adj[i, j] = 1
        return adj

    def parents(self, j: int) -> list[int]:
        return sorted(i for i, k in self.edges if k == j)

    def adjacent(self, i: int, j: int) -> bool:
        return (i, j) in self.edges or (j, i) in self.edges

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "edges": [
                {"from": self.nodes[i], "to": self.nodes[j]}
                for i, j in sorted(self.edges)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict):
        try:
            nodes = _check_nodes(data["nodes"])
            index = {n: k for k, n in enumerate(nodes)}
            edges = []
            for e in data["edges"]:
                if e["from"] not in index or e["to"] not in index:
                    raise GraphError(
                        f"edge {e['from']!r} -> {e['to']!r} names an unknown node"
                    )
                edges.append((index[e["from"]], index[e["to"]]))
        except (KeyError, TypeError) as exc:
            raise GraphError(f"malformed graph JSON: missing {exc}") from exc
        return cls(nodes, frozenset(edges))


@dataclass(frozen=True)
class Dag(DirectedGraph):
    """A :class:`DirectedGraph` whose edges admit a topological order."""

    def __post_init__(self):
        super().__post_init__()
        ok, cycle = is_acyclic(self.edges, self.node_count)
        if not ok:
            names = " -> ".join(self.nodes[v] for v in cycle + cycle[:1])
            raise GraphError(f"graph is cyclic: {names}")

    def topological_order(self) -> list[int]:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.node_count))
        graph.add_edges_from(sorted(self.edges))
        return list(nx.lexicographical_topological_sort(graph))


# --------------------------------------------------------------------------
# PAG
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PagEdge:
    a: int
    b: int
    mark_a: Mark
    mark_b: Mark

    def mark_at(self, node: int) -> Mark:
        return self.mark_a if node == self.a else self.mark_b


@dataclass(frozen=True)
class Pag:
    nodes: tuple[str, ...]
    edges: tuple[PagEdge, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", _check_nodes(self.nodes))
        M = len(self.nodes)
        normalized: dict[tuple[int, int], PagEdge] = {}
        for e in self.edges:
            if not (0 <= e.a < M and 0 <= e.b < M):
                raise GraphError(f"edge ({e.a}, {e.b}) references an unknown node")
            if e.a == e.b:
                raise GraphError(f"self-loop on {self.nodes[e.a]!r}")
            mark_a, mark_b = Mark(e.mark_a), Mark(e.mark_b)
            if e.a > e.b:
                e = PagEdge(e.b, e.a, mark_b, mark_a)
            else:
                e = PagEdge(e.a, e.b, mark_a, mark_b)
            if (e.a, e.b) in normalized:
                raise GraphError(
                    f"more than one edge between {self.nodes[e.a]!r} and {self.nodes[e.b]!r}"
                )
            normalized[(e.a, e.b)] = e
        object.__setattr__(self, "edges", tuple(normalized[k] for k in sorted(normalized)))

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def edge(self, i: int, j: int) -> PagEdge | None:
        lo, hi = min(i, j), max(i, j)
        for e in self.edges:
            if (e.a, e.b) == (lo, hi):
                return e
        return None

    def neighbours(self) -> list[set[int]]:
        out: list[set[int]] = [set() for _ in self.nodes]
        for e in self.edges:
            out[e.a].add(e.b)
            out[e.b].add(e.a)
        return out

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "edges": [
                {
                    "a": self.nodes[e.a],
                    "b": self.nodes[e.b],
                    "mark_a": e.mark_a.value,
                    "mark_b": e.mark_b.value,
                }
                for e in self.edges
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Pag":
        try:
            nodes = _check_nodes(data["nodes"])
            index = {n: k for k, n in enumerate(nodes)}
            edges = []
            for e in data["edges"]:
                if e["a"] not in index or e["b"] not in index:
                    raise GraphError(f"edge {e['a']!r} - {e['b']!r} names an unknown node")
                try:
                    marks = Mark(e["mark_a"]), Mark(e["mark_b"])
                except ValueError as exc:
                    raise GraphError(
                        f"edge {e['a']!r} - {e['b']!r}: marks must be circle, arrow or tail"
                    ) from exc
                edges.append(PagEdge(index[e["a"]], index[e["b"]], *marks))
        except (KeyError, TypeError) as exc:
            raise GraphError(f"malformed PAG JSON: missing {exc}") from exc
        return cls(nodes, tuple(edges))


def _read_json(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise GraphError(f"graph file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GraphError(f"{path}: invalid JSON ({exc})") from exc


def load_dag(path: str | Path) -> Dag:
    return Dag.from_dict(_read_json(path))


def load_graph(path: str | Path) -> DirectedGraph:
    return DirectedGraph.from_dict(_read_json(path))


def load_pag(path: str | Path) -> Pag:
    return Pag.from_dict(_read_json(path))


def write_json(obj: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# PAG semantics
# --------------------------------------------------------------------------


def pag_admissibility(pag: Pag) -> np.ndarray:
    """Compile PAG marks into ``m[i, j] = 1`` iff ``i -> j`` is admissible."""
    M = pag.node_count
    m = np.zeros((M, M), dtype=np.int8)
    bidirected: list[PagEdge] = []
    for e in pag.edges:
        if e.mark_a is Mark.TAIL and e.mark_b is Mark.ARROW:
            m[e.a, e.b] = 1
        elif e.mark_a is Mark.ARROW and e.mark_b is Mark.TAIL:
            m[e.b, e.a] = 1
        else:
            m[e.a, e.b] = m[e.b, e.a] = 1
            if e.mark_a is Mark.ARROW and e.mark_b is Mark.ARROW:
                bidirected.append(e)

    # Unshielded colliders i *-> k <-* j: forbid k -> i and k -> j.
    neighbours = pag.neighbours()
    in_collider: set[tuple[int, int]] = set()
    for k in range(M):
        heads = sorted(i for i in neighbours[k] if pag.edge(i, k).mark_at(k) is Mark.ARROW)
        for i, j in combinations(heads, 2):
            if j in neighbours[i]:
                continue
            m[k, i] = m[k, j] = 0
            in_collider.update({(min(i, k), max(i, k)), (min(j, k), max(j, k))})

    for e in bidirected:
        if (e.a, e.b) not in in_collider:
            _log.warning(
                "Bidirected edge %s <-> %s treated as admissible in both directions",
                pag.nodes[e.a],
                pag.nodes[e.b],
            )
    return m


def lift_to_state_mask(m: np.ndarray, layout: StateLayout) -> np.ndarray:
    """Block-constant ``n_s x n_s`` mask with ``S[a, b] = m[i, j]``."""
    return layout.expand(np.asarray(m, dtype=float))


def admissible_pairs(m: np.ndarray) -> list[tuple[int, int]]:
    return [(int(i), int(j)) for i, j in zip(*np.nonzero(m))]


def unresolved_pairs(m: np.ndarray) -> list[tuple[int, int]]:
    both = np.triu((m > 0) & (m.T > 0), k=1)
    return [(int(i), int(j)) for i, j in zip(*np.nonzero(both))]


def pag_unresolved_ratio(pag: Pag) -> float:
    """Share of PAG skeleton edges whose orientation the marks leave open."""
    if not pag.edges:
        return 0.0
    return len(unresolved_pairs(pag_admissibility(pag))) / len(pag.edges)


def oracle_pag_from_dag(truth: Dag) -> Pag:
    """Skeleton with circle marks, plus the unshielded colliders of ``truth``."""
    marks = {(i, j) if i < j else (j, i): [Mark.CIRCLE, Mark.CIRCLE] for i, j in truth.edges}

    def set_mark(u: int, v: int, at: int, mark: Mark):
        key = (min(u, v), max(u, v))
        marks[key][0 if at == key[0] else 1] = mark

    for k in range(truth.node_count):
        for i, j in combinations(truth.parents(k), 2):
            if truth.adjacent(i, j):
                continue
            for p in (i, j):
                set_mark(p, k, k, Mark.ARROW)
                set_mark(p, k, p, Mark.TAIL)

    edges = tuple(PagEdge(a, b, ma, mb) for (a, b), (ma, mb) in sorted(marks.items()))
    return Pag(truth.nodes, edges)
