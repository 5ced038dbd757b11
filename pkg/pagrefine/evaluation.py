"""Structural metrics against a ground-truth DAG.

SHD counts one per node pair whose edge state differs, so a reversed edge
costs 1. Directed F1 only credits exactly matching directed edges.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from .errors import InputError
from .graphs import (
    Dag,
    DirectedGraph,
    oracle_pag_from_dag,
    pag_admissibility,
    unresolved_pairs,
)

_log = logging.getLogger(__name__)


class EvaluationError(InputError):
    pass


@dataclass
class MetricsReport:
    shd: int
    precision: float
    recall: float
    f1: float
    unresolved_ratio: float
    est_edges: int
    truth_edges: int
    raw_edges: int | None = None
    skeleton_precision: float | None = None
    skeleton_recall: float | None = None
    skeleton_f1: float | None = None
    pag_unresolved_ratio: float | None = None
    baseline_shd: int | None = None
    baseline_f1: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _aligned_edges(est: DirectedGraph, truth: DirectedGraph) -> set[tuple[int, int]]:
    """``est`` edges re-indexed onto ``truth``'s node order."""
    if set(est.nodes) != set(truth.nodes) or len(est.nodes) != len(truth.nodes):
        raise EvaluationError(
            f"node-set mismatch: {sorted(est.nodes)} vs {sorted(truth.nodes)}"
        )
    index = {n: k for k, n in enumerate(truth.nodes)}
    return {(index[est.nodes[i]], index[est.nodes[j]]) for i, j in est.edges}


def _f1(precision: float, recall: float) -> float:
    if precision + recall > 0:
        return 2 * precision * recall / (precision + recall)
    return 0.0


def shd(est: DirectedGraph, truth: DirectedGraph) -> int:
    E = _aligned_edges(est, truth)
    T = set(truth.edges)
    pairs = {(min(i, j), max(i, j)) for i, j in E | T}
    return sum(
        ((i, j) in E, (j, i) in E) != ((i, j) in T, (j, i) in T) for i, j in pairs
    )


def f1_directed(est: DirectedGraph, truth: DirectedGraph) -> tuple[float, float, float]:
    E = _aligned_edges(est, truth)
    T = set(truth.edges)
    tp = len(E & T)
    precision = tp / len(E) if E else 0.0
    recall = tp / len(T) if T else 0.0
    return precision, recall, _f1(precision, recall)


def skeleton_f1(est: DirectedGraph, truth: DirectedGraph) -> tuple[float, float, float]:
    """Precision/recall/F1 of undirected adjacencies."""
    E = {frozenset(e) for e in _aligned_edges(est, truth)}
    T = {frozenset(e) for e in truth.edges}
    tp = len(E & T)
    precision = tp / len(E) if E else 0.0
    recall = tp / len(T) if T else 0.0
    return precision, recall, _f1(precision, recall)


def unresolved_ratio(block_max: np.ndarray, Q, tau: float) -> float:
    """Share of open pairs whose two directional strengths both exceed ``tau``."""
    pairs = list(Q)
    if not pairs:
        _log.warning("No unresolved pairs; unresolved ratio reported as 0")
        return 0.0
    both = sum(block_max[i, j] > tau and block_max[j, i] > tau for i, j in pairs)
    return both / len(pairs)


def evaluate(
    est: DirectedGraph,
    truth: DirectedGraph,
    block_max: np.ndarray,
    Q,
    tau: float,
    raw_edges: int | None = None,
    pag_ratio: float | None = None,
    baseline: DirectedGraph | None = None,
) -> MetricsReport:
    precision, recall, f1 = f1_directed(est, truth)
    sk_p, sk_r, sk_f1 = skeleton_f1(est, truth)
    report = MetricsReport(
        shd=shd(est, truth),
        precision=precision,
        recall=recall,
        f1=f1,
        unresolved_ratio=unresolved_ratio(block_max, Q, tau),
        est_edges=len(est.edges),
        truth_edges=len(truth.edges),
        raw_edges=raw_edges,
        skeleton_precision=sk_p,
        skeleton_recall=sk_r,
        skeleton_f1=sk_f1,
        pag_unresolved_ratio=pag_ratio,
    )
    if baseline is not None:
        report.baseline_shd = shd(baseline, truth)
        report.baseline_f1 = f1_directed(baseline, truth)[2]
    return report


def summarize_runs(rows: list[dict]) -> dict[str, dict[str, float]]:
    """Mean and sample standard deviation of every numeric metric."""
    frame = pd.DataFrame(rows).select_dtypes(include="number")
    stats = frame.agg(["mean", "std"]).fillna(0.0)
    return {
        column: {"mean": float(stats.at["mean", column]), "std": float(stats.at["std", column])}
        for column in frame.columns
    }


def evaluate_graphs(est: DirectedGraph, truth: DirectedGraph, tau: float) -> MetricsReport:
    """Compare two graph files with no learned adjacency at hand.

    Edge presence stands in for block strength, and the open pairs are those
    the truth's oracle PAG leaves unoriented, so a 2-cycle on such a pair
    counts as unresolved.
    """
    E = _aligned_edges(est, truth)
    M = truth.node_count
    presence = np.zeros((M, M))
    for i, j in E:
        presence[i, j] = 1.0
    Q = unresolved_pairs(pag_admissibility(oracle_pag_from_dag(Dag(truth.nodes, truth.edges))))
    return evaluate(est, truth, presence, Q, tau, raw_edges=len(E))
