"""End-to-end refinement: data + PAG in, DAG and diagnostics out."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data import (
    DiscreteDataset,
    StateLayout,
    build_layout,
    one_hot_expand,
    state_frequencies,
)
from .errors import InputError
from .evaluation import MetricsReport, evaluate, unresolved_ratio
from .extraction import EdgeStrengths, ProjectionLog, extract_graph, prior_only_dag
from .graphs import (
    Dag,
    DirectedGraph,
    Pag,
    PagEdge,
    admissible_pairs,
    lift_to_state_mask,
    pag_admissibility,
    pag_unresolved_ratio,
    unresolved_pairs,
    write_json,
)
from .objective import Hyperparameters, penalty_weights
from .optimizer import (
    DEFAULT_PRIOR_PROBABILITY,
    OptimizerConfig,
    PriorSpec,
    TrainingTrace,
    load_prior_file,
    random_prior,
    refine,
)

_log = logging.getLogger(__name__)

PRIOR_MODES = ("random", "file", "none")


@dataclass
class RefinementResult:
    graph: DirectedGraph
    raw_edges: set[tuple[int, int]]
    layout: StateLayout
    logits: np.ndarray
    adjacency: np.ndarray
    admissibility: np.ndarray
    unresolved: list[tuple[int, int]]
    prior: PriorSpec
    strengths: EdgeStrengths
    trace: TrainingTrace
    projection: ProjectionLog
    unresolved_ratio: float
    seconds: float
    metrics: MetricsReport | None = None

    def summary(self) -> str:
        if self.metrics is None:
            return (
                f"edges={len(self.graph.edges)} unresolved_ratio={self.unresolved_ratio:.4f} "
                f"seconds={self.seconds:.2f}"
            )
        m = self.metrics
        return (
            f"SHD={m.shd} F1={m.f1:.4f} unresolved_ratio={m.unresolved_ratio:.4f} "
            f"seconds={self.seconds:.2f}"
        )


def align_pag(pag: Pag, names) -> Pag:
    """Re-index ``pag`` onto the dataset's variable order."""
    names = tuple(names)
    if set(pag.nodes) != set(names) or len(pag.nodes) != len(names):
        raise InputError(
            f"PAG nodes {sorted(pag.nodes)} do not match data columns {sorted(names)}"
        )
    if pag.nodes == names:
        return pag
    index = {n: k for k, n in enumerate(names)}
    edges = tuple(
        PagEdge(index[pag.nodes[e.a]], index[pag.nodes[e.b]], e.mark_a, e.mark_b)
        for e in pag.edges
    )
    return Pag(names, edges)


def build_prior(
    mode: str,
    Q,
    seed: int,
    probability: float,
    nodes,
    m: np.ndarray,
    path: str | Path | None = None,
) -> PriorSpec:
    if mode == "random":
        return random_prior(Q, seed, probability)
    if mode == "file":
        if path is None:
            raise InputError("prior_mode = file needs a prior path")
        return load_prior_file(path, nodes, m)
    if mode == "none":
        return PriorSpec()
    raise InputError(f"prior_mode must be one of {PRIOR_MODES}, got {mode!r}")


def run_refinement(
    dataset: DiscreteDataset,
    pag: Pag,
    hp: Hyperparameters | None = None,
    cfg: OptimizerConfig | None = None,
    prior_mode: str = "random",
    prior_probability: float = DEFAULT_PRIOR_PROBABILITY,
    prior_path: str | Path | None = None,
    truth: Dag | None = None,
    penalty_mode: str = "frequency",
    project: bool = True,
) -> RefinementResult:
    hp = hp or Hyperparameters()
    cfg = cfg or OptimizerConfig()
    started = time.perf_counter()

    nodes = dataset.variable_names
    pag = align_pag(pag, nodes)
    layout = build_layout(dataset)
    X = one_hot_expand(dataset, layout)
    freq = state_frequencies(X, layout)

    m = pag_admissibility(pag)
    S = lift_to_state_mask(m, layout)
    P = penalty_weights(freq, layout, penalty_mode)
    B = admissible_pairs(m)
    Q = unresolved_pairs(m)
    prior = build_prior(prior_mode, Q, cfg.seed, prior_probability, nodes, m, prior_path)
    _log.info(
        "PAG: %d edges, %d unresolved; prior=%s with %d entries",
        len(pag.edges),
        len(Q),
        prior_mode,
        len(prior.entries),
    )

    W, trace = refine(X, S, P, B, Q, prior, hp, cfg, layout)
    A = expit(W) * S
    graph, raw, strengths, projection = extract_graph(A, layout, m, hp.tau, nodes, project)
    ratio = unresolved_ratio(strengths.block_max, Q, hp.tau)
    seconds = time.perf_counter() - started

    result = RefinementResult(
        graph=graph,
        raw_edges=raw,
        layout=layout,
        logits=W,
        adjacency=A,
        admissibility=m,
        unresolved=Q,
        prior=prior,
        strengths=strengths,
        trace=trace,
        projection=projection,
        unresolved_ratio=ratio,
        seconds=seconds,
    )
    if truth is not None:
        baseline = prior_only_dag(m, prior, nodes)[0] if prior.entries else None
        result.metrics = evaluate(
            graph,
            truth,
            strengths.block_max,
            Q,
            hp.tau,
            raw_edges=len(raw),
            pag_ratio=pag_unresolved_ratio(pag),
            baseline=baseline,
        )
    _log.info("Refinement finished: %s", result.summary())
    return result


def write_artifacts(result: RefinementResult, out_dir: str | Path, run_info: dict) -> None:
    """Fixed output layout consumed by scripted sweeps."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    nodes = result.graph.nodes

    write_json(result.graph.to_dict(), out / "dag.json")
    np.ascontiguousarray(result.adjacency, dtype="<f8").tofile(out / "adjacency.bin")
    write_json(
        {
            "dtype": "float64",
            "byte_order": "little",
            "order": "row-major",
            "shape": list(result.adjacency.shape),
            "nodes": list(nodes),
            **result.layout.to_dict(),
        },
        out / "adjacency.meta.json",
    )
    result.trace.write_csv(out / "trace.csv")
    result.trace.write_timing_csv(out / "timing.csv")
    write_json(result.projection.to_dict(nodes), out / "projection.json")
    if result.metrics is not None:
        write_json(result.metrics.to_dict(), out / "metrics.json")
    write_json(
        {
            **run_info,
            "n_s": result.layout.n_s,
            "unresolved_pairs": len(result.unresolved),
            "unresolved_ratio": result.unresolved_ratio,
            "seconds": result.seconds,
        },
        out / "run.json",
    )
    _log.info("Artifacts written to %s", out)
