"""The refinement objective and its exact gradient.

Reconstruction runs through the masked raw logits ``L = X (W * S)`` followed
by a softmax restricted to each variable's state block. The three structural
regularizers act on the effective adjacency ``A = sigmoid(W) * S``:

* sparse   -- weighted group lasso over admissible blocks,
* cycle    -- product of the two directional block norms of every pair that
              is admissible both ways,
* skeleton -- pulls ``A[a, b] + A[b, a]`` towards 1 on allowed entries.

Block norms are smoothed, ``sqrt(eps + ||.||^2) - sqrt(eps)``, so the norm of
an all-zero block is exactly 0 and its gradient is defined.

Entries where ``S == 0`` are inert: they never reach a loss term and their
gradient is exactly zero.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit

from .data import StateLayout
from .errors import InputError, NumericalError

_log = logging.getLogger(__name__)

LOG_FLOOR = 1e-12
RECON_SCOPES = ("all", "unresolved")
PENALTY_MODES = ("frequency", "uniform")


@dataclass(frozen=True)
class Hyperparameters:
    lambda1: float = 0.01
    lambda2: float = 5.0
    lambda3: float = 0.1
    tau: float = 0.1
    epsilon_norm: float = 1e-8
    recon_scope: str = "all"

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "epsilon_norm"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise InputError(f"{name} must be finite and non-negative, got {value}")
        # tau = 1 is accepted; it extracts nothing since A < 1 everywhere.
        if not 0.0 < self.tau <= 1.0:
            raise InputError(f"tau must lie in (0, 1], got {self.tau}")
        if self.recon_scope not in RECON_SCOPES:
            raise InputError(f"recon_scope must be one of {RECON_SCOPES}")


@dataclass(frozen=True)
class LossBreakdown:
    recon: float
    sparse: float
    cycle: float
    skeleton: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def _pair_mask(pairs, M: int) -> np.ndarray:
    mask = np.zeros((M, M), dtype=bool)
    for i, j in pairs:
        mask[i, j] = True
    return mask


def _smoothed_block_norms(
    A: np.ndarray, layout: StateLayout, eps: float
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(norm, root)`` per block with ``norm = root - sqrt(eps)``."""
    root = np.sqrt(eps + layout.block_sum(A * A))
    return root - np.sqrt(eps), root


def _safe_inverse(root: np.ndarray) -> np.ndarray:
    return np.divide(1.0, root, out=np.zeros_like(root), where=root > 0)


# --------------------------------------------------------------------------
# Penalty weights
# --------------------------------------------------------------------------


def penalty_weights(
    freq: np.ndarray, layout: StateLayout, mode: str = "frequency"
) -> np.ndarray:
    """Per-block penalty matrix ``P`` stored at full ``n_s x n_s`` size.

    ``frequency`` weights each entry by ``1 / sqrt(freq[a] * freq[b])``, so
    rare states are penalised more, then rescales every block to mean 1 (the
    geometric-mean prefactor cancels in that rescaling). ``uniform`` is all
    ones.
    """
    if mode not in PENALTY_MODES:
        raise InputError(f"penalty_weights must be one of {PENALTY_MODES}, got {mode!r}")
    if mode == "uniform":
        return np.ones((layout.n_s, layout.n_s))
    inv = 1.0 / np.sqrt(np.asarray(freq, dtype=float))
    raw = np.outer(inv, inv)
    means = layout.block_sum(raw) / layout.block_sizes()
    return raw / layout.expand(means)


# --------------------------------------------------------------------------
# Individual terms
# --------------------------------------------------------------------------


def masked_logits(X: np.ndarray, W: np.ndarray, S: np.ndarray) -> np.ndarray:
    if W.shape != S.shape or X.shape[1] != W.shape[0]:
        raise InputError(
            f"dimension mismatch: X {X.shape}, W {W.shape}, S {S.shape}"
        )
    return X @ (W * S)


def per_variable_softmax(logits: np.ndarray, layout: StateLayout) -> np.ndarray:
    offsets = np.asarray(layout.offsets)
    cards = layout.cardinalities
    peak = np.maximum.reduceat(logits, offsets, axis=1)
    e = np.exp(logits - np.repeat(peak, cards, axis=1))
    return e / np.repeat(np.add.reduceat(e, offsets, axis=1), cards, axis=1)


def recon_loss(
    X: np.ndarray,
    X_hat: np.ndarray,
    num_variables: int,
    state_weights: np.ndarray | None = None,
) -> float:
    """Mean per-variable cross-entropy in nats.

    ``state_weights`` (0/1 per state column) restricts the sum to a subset
    of variables; ``num_variables`` must then be the size of that subset.
    """
    terms = X * np.log(np.maximum(X_hat, LOG_FLOOR))
    if state_weights is not None:
        terms = terms * state_weights
    return float(-terms.sum() / (X.shape[0] * num_variables))


def sparse_loss(
    A: np.ndarray,
    P: np.ndarray,
    B,
    layout: StateLayout,
    epsilon_norm: float = 1e-8,
) -> float:
    mask = _pair_mask(B, layout.num_variables)
    if not mask.any():
        return 0.0
    norms, _ = _smoothed_block_norms(A * P, layout, epsilon_norm)
    return float(norms[mask].sum() / mask.sum())


def cycle_loss(A: np.ndarray, Q, layout: StateLayout, epsilon_norm: float = 1e-8) -> float:
    mask = _pair_mask(Q, layout.num_variables)
    if not mask.any():
        return 0.0
    norms, _ = _smoothed_block_norms(A, layout, epsilon_norm)
    return float((norms * norms.T)[mask].sum() / mask.sum())


def skeleton_loss(A: np.ndarray, S: np.ndarray) -> float:
    allowed = S.sum()
    if allowed == 0:
        _log.warning("Skeleton mask is empty; skeleton loss is 0")
        return 0.0
    residual = 1.0 - (A + A.T)
    return float((S * residual * residual).sum() / allowed)


# --------------------------------------------------------------------------
# Full objective
# --------------------------------------------------------------------------


class Objective:
    """Total loss and exact gradient for a fixed mask, penalty and pair sets."""

    def __init__(
        self,
        layout: StateLayout,
        S: np.ndarray,
        P: np.ndarray,
        B,
        Q,
        hp: Hyperparameters,
    ):
        self.layout = layout
        self.S = np.asarray(S, dtype=float)
        self.P = np.asarray(P, dtype=float)
        self.hp = hp
        M = layout.num_variables
        self.b_mask = _pair_mask(B, M)
        q_upper = np.triu(_pair_mask(Q, M) | _pair_mask(Q, M).T, k=1)
        self.q_mask = q_upper
        self.q_sym = q_upper | q_upper.T
        self.n_b = int(self.b_mask.sum())
        self.n_q = int(q_upper.sum())
        self.n_allowed = float(self.S.sum())
        self.P_squared = self.P * self.P

        self.state_weights = None
        self.recon_variables = M
        if hp.recon_scope == "unresolved":
            involved = np.zeros(M, dtype=bool)
            for i, j in zip(*np.nonzero(q_upper)):
                involved[i] = involved[j] = True
            self.recon_variables = max(int(involved.sum()), 1)
            self.state_weights = involved[layout.owner].astype(float)

    def adjacency(self, W: np.ndarray) -> np.ndarray:
        return expit(W) * self.S

    def evaluate(
        self, X: np.ndarray, W: np.ndarray, step: int | None = None
    ) -> tuple[LossBreakdown, np.ndarray]:
        hp, layout, S = self.hp, self.layout, self.S
        eps = hp.epsilon_norm
        n_batch = X.shape[0]

        # Reconstruction through raw masked logits.
        X_hat = per_variable_softmax(masked_logits(X, W, S), layout)
        recon = recon_loss(X, X_hat, self.recon_variables, self.state_weights)
        g_logits = (X_hat - X) / (n_batch * self.recon_variables)
        if self.state_weights is not None:
            g_logits = g_logits * self.state_weights
        grad = (X.T @ g_logits) * S

        sig = expit(W)
        A = sig * S
        g_A = np.zeros_like(A)

        sparse = 0.0
        if self.n_b:
            norms, root = _smoothed_block_norms(A * self.P, layout, eps)
            sparse = float(norms[self.b_mask].sum() / self.n_b)
            coef = self.b_mask * _safe_inverse(root) / self.n_b
            g_A += hp.lambda1 * layout.expand(coef) * A * self.P_squared

        cycle = 0.0
        if self.n_q:
            norms, root = _smoothed_block_norms(A, layout, eps)
            cycle = float((norms * norms.T)[self.q_mask].sum() / self.n_q)
            # d(c_ij c_ji)/dA_ij = c_ji * A_ij / root_ij
            coef = self.q_sym * norms.T * _safe_inverse(root) / self.n_q
            g_A += hp.lambda2 * layout.expand(coef) * A

        skeleton = 0.0
        if self.n_allowed > 0:
            residual = 1.0 - (A + A.T)
            skeleton = float((S * residual * residual).sum() / self.n_allowed)
            g_A += hp.lambda3 * (-2.0 * (S + S.T) * residual / self.n_allowed)

        grad += g_A * sig * (1.0 - sig) * S

        total = recon + hp.lambda1 * sparse + hp.lambda2 * cycle + hp.lambda3 * skeleton
        for term, value in (
            ("recon", recon),
            ("sparse", sparse),
            ("cycle", cycle),
            ("skeleton", skeleton),
        ):
            if not np.isfinite(value):
                where = f" at step {step}" if step is not None else ""
                raise NumericalError(f"non-finite {term} loss{where}", term=term, step=step)
        if not np.isfinite(grad).all():
            where = f" at step {step}" if step is not None else ""
            raise NumericalError(f"non-finite gradient{where}", term="gradient", step=step)

        return LossBreakdown(recon, sparse, cycle, skeleton, total), grad


def total_loss_and_gradient(
    X: np.ndarray,
    W: np.ndarray,
    S: np.ndarray,
    P: np.ndarray,
    B,
    Q,
    hp: Hyperparameters,
    layout: StateLayout,
) -> tuple[LossBreakdown, np.ndarray]:
    return Objective(layout, S, P, B, Q, hp).evaluate(X, W)
