"""Discrete Bayesian networks: definition, validation and forward sampling.

Network JSON::

    {"nodes": [{"name": "A", "card": 2, "parents": [], "cpt": [[0.3, 0.7]]},
               {"name": "B", "card": 2, "parents": ["A"],
                "cpt": [[0.9, 0.1], [0.2, 0.8]]}]}

CPT rows follow the mixed-radix order of the parent configuration, first
parent most significant.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from .data import DiscreteDataset
from .errors import InputError
from .graphs import Dag, is_acyclic

_log = logging.getLogger(__name__)

FIXTURE_DIR = Path(__file__).resolve().parent / "fixtures"
# name -> (num_nodes, seed) for generated benchmark networks
GENERATED_FIXTURES = {"bench8": (8, 8), "bench15": (15, 15)}
ROW_TOLERANCE = 1e-9


class NetworkError(InputError):
    def __init__(self, message: str, errors: list[str] | None = None):
        super().__init__(message)
        self.errors = errors or []


@dataclass(frozen=True, eq=False)
class BayesNet:
    names: tuple[str, ...]
    cardinalities: tuple[int, ...]
    parents: tuple[tuple[int, ...], ...]
    cpts: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def node_count(self) -> int:
        return len(self.names)

    @property
    def dag(self) -> Dag:
        edges = {(p, k) for k, ps in enumerate(self.parents) for p in ps}
        return Dag(self.names, frozenset(edges))

    def parent_configurations(self, k: int) -> int:
        return int(np.prod([self.cardinalities[p] for p in self.parents[k]], dtype=int))

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {
                    "name": self.names[k],
                    "card": self.cardinalities[k],
                    "parents": [self.names[p] for p in self.parents[k]],
                    "cpt": np.asarray(self.cpts[k]).tolist(),
                }
                for k in range(self.node_count)
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BayesNet":
        try:
            nodes = data["nodes"]
            names = tuple(str(n["name"]) for n in nodes)
            index = {n: k for k, n in enumerate(names)}
            if len(index) != len(names):
                raise NetworkError("node names must be unique")
            parents = []
            for n in nodes:
                missing = [p for p in n["parents"] if p not in index]
                if missing:
                    raise NetworkError(f"node {n['name']!r} has unknown parents {missing}")
                parents.append(tuple(index[p] for p in n["parents"]))
            cards = tuple(int(n["card"]) for n in nodes)
            cpts = tuple(np.asarray(n["cpt"], dtype=float) for n in nodes)
        except (KeyError, TypeError, ValueError) as exc:
            raise NetworkError(f"malformed network JSON: {exc}") from exc
        return cls(names, cards, tuple(parents), cpts)


def load_bayes_net(path: str | Path) -> BayesNet:
    path = Path(path)
    if not path.exists():
        raise NetworkError(f"network file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise NetworkError(f"{path}: invalid JSON ({exc})") from exc
    return BayesNet.from_dict(data)


def save_bayes_net(bn: BayesNet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(bn.to_dict(), indent=2) + "\n", encoding="utf-8")


def validate(bn: BayesNet) -> list[str]:
    """Return every structural and numerical problem; empty means valid."""
    errors: list[str] = []
    M = bn.node_count
    if not (len(bn.cardinalities) == len(bn.parents) == len(bn.cpts) == M):
        return ["names, cardinalities, parents and cpts differ in length"]
    for k, name in enumerate(bn.names):
        if bn.cardinalities[k] < 2:
            errors.append(f"node {name!r}: cardinality {bn.cardinalities[k]} < 2")
        if k in bn.parents[k]:
            errors.append(f"node {name!r}: is its own parent")
        if len(set(bn.parents[k])) != len(bn.parents[k]):
            errors.append(f"node {name!r}: repeated parent")

    edges = {(p, k) for k, ps in enumerate(bn.parents) for p in ps if p != k}
    ok, cycle = is_acyclic(edges, M)
    if not ok:
        ring = " -> ".join(bn.names[v] for v in cycle + cycle[:1])
        errors.append(f"structure is cyclic: {ring}")

    for k, name in enumerate(bn.names):
        cpt = np.asarray(bn.cpts[k])
        rows = bn.parent_configurations(k)
        if cpt.ndim != 2 or cpt.shape != (rows, bn.cardinalities[k]):
            errors.append(
                f"node {name!r}: CPT shape {cpt.shape}, expected ({rows}, {bn.cardinalities[k]})"
            )
            continue
        for r, row in enumerate(cpt):
            if not np.isfinite(row).all() or (row < 0).any():
                errors.append(f"node {name!r} row {r}: probabilities must be finite and >= 0")
            elif abs(row.sum() - 1.0) > ROW_TOLERANCE:
                errors.append(f"node {name!r} row {r}: sums to {row.sum():.12g}, not 1")
    return errors


def _config_index(bn: BayesNet, k: int, states: np.ndarray) -> np.ndarray:
    """Mixed-radix CPT row of every sample, first parent most significant."""
    idx = np.zeros(states.shape[0], dtype=np.int64)
    for p in bn.parents[k]:
        idx = idx * bn.cardinalities[p] + states[:, p]
    return idx


def forward_sample(bn: BayesNet, n: int, seed: int) -> DiscreteDataset:
    """Ancestral sampling in topological order; deterministic given ``seed``."""
    errors = validate(bn)
    if errors:
        raise NetworkError(f"invalid network ({len(errors)} problem(s))", errors)
    rng = np.random.default_rng(seed)
    rows = np.zeros((n, bn.node_count), dtype=np.int64)
    for k in bn.dag.topological_order():
        probs = np.asarray(bn.cpts[k])[_config_index(bn, k, rows)]
        cumulative = np.cumsum(probs, axis=1)
        u = rng.random(n)
        codes = (u[:, None] >= cumulative).sum(axis=1)
        rows[:, k] = np.minimum(codes, bn.cardinalities[k] - 1)
    _log.info("Sampled %d rows from a %d-node network (seed %d)", n, bn.node_count, seed)
    return DiscreteDataset(bn.names, bn.cardinalities, rows)


def joint_distribution(bn: BayesNet) -> np.ndarray:
    """Exact joint probability table, one axis per node (small networks only)."""
    joint = np.zeros(bn.cardinalities)
    for config in product(*(range(c) for c in bn.cardinalities)):
        states = np.asarray(config)[None, :]
        prob = 1.0
        for k in range(bn.node_count):
            prob *= bn.cpts[k][_config_index(bn, k, states)[0], config[k]]
        joint[config] = prob
    return joint


def random_bayes_net(
    num_nodes: int,
    seed: int,
    expected_degree: float = 2.0,
    max_parents: int = 3,
    min_card: int = 2,
    max_card: int = 3,
) -> BayesNet:
    """Random DAG over a shuffled order with Dirichlet(1) CPTs."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(num_nodes)
    p_edge = min(1.0, expected_degree / max(num_nodes - 1, 1))
    parents: list[tuple[int, ...]] = [()] * num_nodes
    for pos, child in enumerate(order):
        candidates = [int(order[q]) for q in range(pos) if rng.random() < p_edge]
        if len(candidates) > max_parents:
            candidates = sorted(rng.choice(candidates, size=max_parents, replace=False).tolist())
        parents[int(child)] = tuple(sorted(candidates))

    cards = tuple(int(c) for c in rng.integers(min_card, max_card + 1, size=num_nodes))
    cpts = []
    for k in range(num_nodes):
        rows = int(np.prod([cards[p] for p in parents[k]], dtype=int))
        cpts.append(rng.dirichlet(np.ones(cards[k]), size=rows))
    names = tuple(f"X{k + 1}" for k in range(num_nodes))
    return BayesNet(names, cards, tuple(parents), tuple(cpts))


def fixture_names() -> list[str]:
    bundled = sorted(p.stem for p in FIXTURE_DIR.glob("*.json"))
    return bundled + sorted(GENERATED_FIXTURES)


def load_fixture(name: str) -> BayesNet:
    if name in GENERATED_FIXTURES:
        num_nodes, seed = GENERATED_FIXTURES[name]
        return random_bayes_net(num_nodes, seed)
    path = FIXTURE_DIR / f"{name}.json"
    if not path.exists():
        raise NetworkError(f"unknown fixture {name!r}; available: {fixture_names()}")
    return load_bayes_net(path)
