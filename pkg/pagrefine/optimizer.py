"""Prior-biased initialization and the Adam refinement loop.

The prior only shapes the starting point: for an unresolved pair the favored
direction's block starts at ``logit(p)`` and the reverse block at
``logit(1 - p)``. It never changes the mask, so a prior can only name pairs
the PAG leaves open.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.special import logit

from .data import StateLayout
from .errors import InputError
from .objective import Hyperparameters, LossBreakdown, Objective

_log = logging.getLogger(__name__)

DEFAULT_PRIOR_PROBABILITY = 0.9
# Full batch up to this many samples, mini-batches of DEFAULT_BATCH above it.
MINIBATCH_THRESHOLD = 20000
DEFAULT_BATCH = 2048


class PriorError(InputError):
    pass


@dataclass(frozen=True)
class PriorEntry:
    source: int
    target: int
    p: float

    @property
    def pair(self) -> tuple[int, int]:
        return (min(self.source, self.target), max(self.source, self.target))


@dataclass(frozen=True)
class PriorSpec:
    entries: tuple[PriorEntry, ...] = ()
    source: str = "random"  # random | file

    def __post_init__(self):
        seen: set[tuple[int, int]] = set()
        for e in self.entries:
            if not 0.5 < e.p < 1.0:
                raise PriorError(f"prior probability must lie in (0.5, 1), got {e.p}")
            if e.source == e.target:
                raise PriorError(f"prior on self-pair ({e.source}, {e.target})")
            if e.pair in seen:
                raise PriorError(f"pair {e.pair} appears more than once in the prior")
            seen.add(e.pair)
        if self.source not in ("random", "file"):
            raise PriorError(f"unknown prior source {self.source!r}")

    def favored(self) -> dict[tuple[int, int], PriorEntry]:
        return {e.pair: e for e in self.entries}


@dataclass(frozen=True)
class OptimizerConfig:
    eta: float = 0.01
    steps: int = 140
    batch_size: int | str = "auto"  # auto | full | positive integer
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8

    def __post_init__(self):
        if not self.eta > 0:
            raise InputError(f"eta must be positive, got {self.eta}")
        if self.steps < 1:
            raise InputError(f"steps must be at least 1, got {self.steps}")
        if isinstance(self.batch_size, str):
            if self.batch_size not in ("auto", "full"):
                raise InputError(
                    f"batch_size must be auto, full or an integer, got {self.batch_size!r}"
                )
        elif self.batch_size < 1:
            raise InputError(f"batch_size must be at least 1, got {self.batch_size}")

    def resolve_batch_size(self, n_samples: int) -> int | None:
        """Rows per step, or ``None`` for full batch."""
        if self.batch_size == "full":
            return None
        if self.batch_size == "auto":
            return None if n_samples <= MINIBATCH_THRESHOLD else DEFAULT_BATCH
        return None if self.batch_size >= n_samples else int(self.batch_size)


@dataclass
class StepRecord:
    step: int
    loss: LossBreakdown
    seconds: float


@dataclass
class TrainingTrace:
    config: OptimizerConfig
    records: list[StepRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"step": r.step, **r.loss.as_dict()} for r in self.records],
            columns=["step", "recon", "sparse", "cycle", "skeleton", "total"],
        )

    def header(self) -> str:
        c = self.config
        return (
            f"# adam beta1={c.beta1!r} beta2={c.beta2!r} epsilon={c.adam_epsilon!r} "
            f"eta={c.eta!r} steps={c.steps} seed={c.seed}\n"
        )

    def write_csv(self, path: str | Path) -> None:
        """Loss trace; deterministic for a given seed and configuration."""
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(self.header())
            self.to_frame().to_csv(f, index=False, lineterminator="\n")

    def write_timing_csv(self, path: str | Path) -> None:
        frame = pd.DataFrame(
            [{"step": r.step, "seconds": r.seconds} for r in self.records],
            columns=["step", "seconds"],
        )
        frame.to_csv(path, index=False, lineterminator="\n")


class Adam:
    """Adam on a single dense parameter matrix, updated in place."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None
        self.t = 0

    def step(self, param: np.ndarray, grad: np.ndarray) -> None:
        if self.m is None:
            self.m = np.zeros_like(param)
            self.v = np.zeros_like(param)
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t

        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * (grad * grad)

        # Zero gradient history gives a zero update, so masked entries never move.
        param -= (self.lr / bc1) * self.m / (np.sqrt(self.v / bc2) + self.epsilon)


# --------------------------------------------------------------------------
# Priors
# --------------------------------------------------------------------------


def random_prior(Q, seed: int, p: float = DEFAULT_PRIOR_PROBABILITY) -> PriorSpec:
    """Favor a uniformly random direction for every unresolved pair."""
    rng = np.random.default_rng(seed)
    entries = []
    for i, j in sorted((min(a, b), max(a, b)) for a, b in Q):
        if rng.random() < 0.5:
            entries.append(PriorEntry(i, j, p))
        else:
            entries.append(PriorEntry(j, i, p))
    return PriorSpec(tuple(entries), source="random")


def load_prior_file(path: str | Path, nodes, m: np.ndarray) -> PriorSpec:
    """Read ``[{"from": name, "to": name, "p": prob}, ...]``.

    Every entry must name a pair that the admissibility matrix leaves open in
    both directions. ``p`` defaults to 0.9 when omitted.
    """
    path = Path(path)
    if not path.exists():
        raise PriorError(f"prior file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PriorError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, list):
        raise PriorError(f"{path}: expected a list of prior entries")

    index = {n: k for k, n in enumerate(nodes)}
    entries = []
    for k, item in enumerate(raw):
        try:
            src, dst = item["from"], item["to"]
        except (KeyError, TypeError) as exc:
            raise PriorError(f"{path}: entry {k} needs 'from' and 'to'") from exc
        for name in (src, dst):
            if name not in index:
                raise PriorError(f"{path}: entry {k} names unknown variable {name!r}")
        i, j = index[src], index[dst]
        if not (m[i, j] and m[j, i]):
            state = "non-adjacent" if not (m[i, j] or m[j, i]) else "already resolved"
            raise PriorError(f"{path}: entry {k} ({src} -> {dst}) is on a {state} pair")
        entries.append(PriorEntry(i, j, float(item.get("p", DEFAULT_PRIOR_PROBABILITY))))
    return PriorSpec(tuple(entries), source="file")


def init_logits(S: np.ndarray, prior: PriorSpec, layout: StateLayout) -> np.ndarray:
    """Initial logit matrix: 0 (probability 0.5) unless the prior biases a pair."""
    W = np.zeros((layout.n_s, layout.n_s))
    for e in prior.entries:
        W[layout.block(e.source), layout.block(e.target)] = logit(e.p)
        W[layout.block(e.target), layout.block(e.source)] = logit(1.0 - e.p)
    # Forbidden entries stay at 0; the mask makes them inert.
    return W * (S > 0)


# --------------------------------------------------------------------------
# Optimization loop
# --------------------------------------------------------------------------


def _batches(n_samples: int, batch_size: int, rng: np.random.Generator):
    while True:
        order = rng.permutation(n_samples)
        for start in range(0, n_samples, batch_size):
            yield order[start : start + batch_size]


def refine(
    X: np.ndarray,
    S: np.ndarray,
    P: np.ndarray,
    B,
    Q,
    prior: PriorSpec,
    hp: Hyperparameters,
    cfg: OptimizerConfig,
    layout: StateLayout,
    W0: np.ndarray | None = None,
) -> tuple[np.ndarray, TrainingTrace]:
    """Run ``cfg.steps`` Adam steps on the total objective.

    ``W0`` overrides the prior-derived initialization (for example a
    symmetric starting point).
    """
    objective = Objective(layout, S, P, B, Q, hp)
    W = init_logits(S, prior, layout) if W0 is None else np.array(W0, dtype=float)
    if objective.n_allowed == 0:
        _log.warning("State mask is empty; nothing to optimize")

    adam = Adam(cfg.eta, cfg.beta1, cfg.beta2, cfg.adam_epsilon)
    trace = TrainingTrace(cfg)
    batch_size = cfg.resolve_batch_size(X.shape[0])
    batches = None
    if batch_size is not None:
        batches = _batches(X.shape[0], batch_size, np.random.default_rng(cfg.seed))
    _log.info(
        "Refining: n_s=%d, |B|=%d, |Q|=%d, steps=%d, batch=%s",
        layout.n_s,
        objective.n_b,
        objective.n_q,
        cfg.steps,
        batch_size or "full",
    )

    for step in range(1, cfg.steps + 1):
        started = time.perf_counter()
        X_batch = X if batches is None else X[next(batches)]
        loss, grad = objective.evaluate(X_batch, W, step=step)
        adam.step(W, grad)
        trace.records.append(StepRecord(step, loss, time.perf_counter() - started))
        _log.debug(
            "step %d total=%.6f recon=%.6f sparse=%.6f cycle=%.6f skeleton=%.6f",
            step,
            loss.total,
            loss.recon,
            loss.sparse,
            loss.cycle,
            loss.skeleton,
        )

    first, last = trace.records[0].loss.total, trace.records[-1].loss.total
    _log.info("Refinement done: total loss %.6f -> %.6f", first, last)
    return W, trace
