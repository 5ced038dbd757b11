"""Discrete tabular data and its state-level expansion.

A dataset of ``M`` discrete variables is read from CSV (header of variable
names, body of integer state codes). Each variable ``i`` with ``L_i`` states
owns a contiguous block of the expanded state dimension ``n_s = sum(L_i)``;
:class:`StateLayout` records where every block starts. Expansion turns each
row into the concatenation of one-hot vectors, one per variable.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import InputError

_log = logging.getLogger(__name__)


class DataLoadError(InputError):
    pass


@dataclass(frozen=True, eq=False)
class DiscreteDataset:
    variable_names: tuple[str, ...]
    cardinalities: tuple[int, ...]
    rows: np.ndarray = field(repr=False)  # N x M integer state codes

    def __post_init__(self):
        rows = np.asarray(self.rows)
        if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
            raise DataLoadError("dataset needs at least one row and one column")
        if rows.shape[1] != len(self.variable_names):
            raise DataLoadError(
                f"{rows.shape[1]} columns but {len(self.variable_names)} variable names"
            )
        if len(self.cardinalities) != len(self.variable_names):
            raise DataLoadError("one cardinality per variable is required")
        if len(set(self.variable_names)) != len(self.variable_names):
            raise DataLoadError("variable names must be unique")
        for name, card in zip(self.variable_names, self.cardinalities):
            if card < 2:
                raise DataLoadError(f"constant variable {name!r}: needs at least 2 states")
        cards = np.asarray(self.cardinalities)
        bad = (rows < 0) | (rows >= cards[None, :])
        if bad.any():
            n, i = np.argwhere(bad)[0]
            raise DataLoadError(
                f"state code {rows[n, i]} out of range [0, {cards[i]}) "
                f"at row {n}, column {self.variable_names[i]!r}"
            )
        object.__setattr__(self, "rows", rows.astype(np.int64, copy=False))

    @property
    def num_samples(self) -> int:
        return int(self.rows.shape[0])

    @property
    def num_variables(self) -> int:
        return len(self.variable_names)


@dataclass(frozen=True)
class StateLayout:
    """Position of every variable's state block in the expanded dimension."""

    cardinalities: tuple[int, ...]
    offsets: tuple[int, ...]
    n_s: int

    @property
    def num_variables(self) -> int:
        return len(self.cardinalities)

    @property
    def index_sets(self) -> list[range]:
        return [range(o, o + c) for o, c in zip(self.offsets, self.cardinalities)]

    def block(self, i: int) -> slice:
        return slice(self.offsets[i], self.offsets[i] + self.cardinalities[i])

    @cached_property
    def owner(self) -> np.ndarray:
        """Variable index owning each state column."""
        return np.repeat(np.arange(self.num_variables), self.cardinalities)

    @cached_property
    def membership(self) -> np.ndarray:
        """``n_s x M`` indicator: ``E[a, i] = 1`` iff state ``a`` belongs to ``i``."""
        E = np.zeros((self.n_s, self.num_variables))
        E[np.arange(self.n_s), self.owner] = 1.0
        return E

    def block_sum(self, matrix: np.ndarray) -> np.ndarray:
        """Sum an ``n_s x n_s`` matrix over every ``(i, j)`` block -> ``M x M``."""
        E = self.membership
        return E.T @ matrix @ E

    def expand(self, per_block: np.ndarray) -> np.ndarray:
        """Broadcast an ``M x M`` matrix back to ``n_s x n_s`` (block-constant)."""
        return per_block[np.ix_(self.owner, self.owner)]

    def block_sizes(self) -> np.ndarray:
        cards = np.asarray(self.cardinalities, dtype=float)
        return np.outer(cards, cards)

    def to_dict(self) -> dict:
        return {
            "n_s": self.n_s,
            "cardinalities": list(self.cardinalities),
            "offsets": list(self.offsets),
        }


def load_cardinalities(path: str | Path) -> dict[str, int]:
    """Read the optional ``{"variable": cardinality}`` JSON sidecar."""
    path = Path(path)
    if not path.exists():
        raise DataLoadError(f"cardinality file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataLoadError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise DataLoadError(f"{path}: expected an object mapping variable to cardinality")
    out: dict[str, int] = {}
    for name, card in raw.items():
        if isinstance(card, bool) or not isinstance(card, int) or card < 1:
            raise DataLoadError(f"{path}: cardinality of {name!r} must be a positive integer")
        out[str(name)] = card
    return out


def load_csv(
    path: str | Path, cardinalities: dict[str, int] | None = None
) -> DiscreteDataset:
    """Load a CSV of integer state codes.

    Cardinalities are ``1 + max code`` per column unless the sidecar map
    declares a larger one.
    """
    path = Path(path)
    if not path.exists():
        raise DataLoadError(f"data file not found: {path}")
    try:
        # header=None keeps repeated names as written instead of mangling them.
        raw = pd.read_csv(
            path, header=None, dtype=str, keep_default_na=False, encoding="utf-8"
        ).fillna("")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataLoadError(f"{path}: cannot parse CSV ({exc})") from exc

    names = [str(c).strip() for c in raw.iloc[0]]
    if not names or not all(names):
        raise DataLoadError(f"{path}: header row needs a name for every column")
    repeated = sorted({n for n in names if names.count(n) > 1})
    if repeated:
        raise DataLoadError(f"{path}: duplicate column names {repeated}")
    frame = raw.iloc[1:].reset_index(drop=True)
    if frame.empty:
        raise DataLoadError(f"{path}: no data rows")

    cells = frame.apply(lambda col: col.str.strip())
    # Line numbers count the header as line 1.
    missing = cells.eq("").to_numpy()
    if missing.any():
        n, i = np.argwhere(missing)[0]
        raise DataLoadError(f"{path}: missing value at line {n + 2}, column {names[i]!r}")
    integral = cells.apply(lambda col: col.str.fullmatch(r"\d+")).to_numpy(dtype=bool)
    if not integral.all():
        n, i = np.argwhere(~integral)[0]
        raise DataLoadError(
            f"{path}: cannot parse {cells.iat[n, i]!r} as a state code "
            f"at line {n + 2}, column {names[i]!r}"
        )
    # 18 significant digits always fit in int64.
    oversized = cells.apply(lambda col: col.str.lstrip("0").str.len() > 18).to_numpy(dtype=bool)
    if oversized.any():
        n, i = np.argwhere(oversized)[0]
        raise DataLoadError(
            f"{path}: state code {cells.iat[n, i]!r} is too large "
            f"at line {n + 2}, column {names[i]!r}"
        )
    rows = cells.astype(np.int64).to_numpy()

    declared = dict(cardinalities or {})
    unknown = sorted(set(declared) - set(names))
    if unknown:
        raise DataLoadError(f"{path}: cardinalities given for unknown variables {unknown}")

    cards: list[int] = []
    for i, name in enumerate(names):
        inferred = int(rows[:, i].max()) + 1
        card = declared.get(name, inferred)
        if card < inferred:
            raise DataLoadError(
                f"{path}: column {name!r} has code {inferred - 1} but cardinality {card}"
            )
        if len(np.unique(rows[:, i])) == 1:
            if name not in declared or card < 2:
                raise DataLoadError(f"{path}: constant variable {name!r}")
            _log.warning(
                "Column %r is single-valued; kept with declared cardinality %d", name, card
            )
        cards.append(card)

    ds = DiscreteDataset(tuple(names), tuple(cards), rows)
    _log.info(
        "Loaded %s: N=%d, M=%d, cardinalities=%s",
        path,
        ds.num_samples,
        ds.num_variables,
        cards,
    )
    return ds


def take_rows(ds: DiscreteDataset, n: int) -> DiscreteDataset:
    """First ``n`` rows; cardinalities (and so the layout) stay those of ``ds``."""
    if n < 1 or n > ds.num_samples:
        raise DataLoadError(f"cannot take {n} rows from a dataset of {ds.num_samples}")
    return DiscreteDataset(ds.variable_names, ds.cardinalities, ds.rows[:n])


def write_cardinalities(ds: DiscreteDataset, path: str | Path) -> None:
    """Sidecar read back by :func:`load_cardinalities`."""
    mapping = dict(zip(ds.variable_names, (int(c) for c in ds.cardinalities)))
    Path(path).write_text(json.dumps(mapping, indent=2) + "\n", encoding="utf-8")


def write_csv(ds: DiscreteDataset, path: str | Path) -> None:
    frame = pd.DataFrame(ds.rows, columns=list(ds.variable_names))
    frame.to_csv(path, index=False, lineterminator="\n")


def build_layout(ds: DiscreteDataset) -> StateLayout:
    return layout_from_cardinalities(ds.cardinalities)


def layout_from_cardinalities(cardinalities) -> StateLayout:
    cards = tuple(int(c) for c in cardinalities)
    offsets = tuple(int(o) for o in np.concatenate([[0], np.cumsum(cards)[:-1]]))
    return StateLayout(cards, offsets, int(sum(cards)))


def one_hot_expand(ds: DiscreteDataset, layout: StateLayout) -> np.ndarray:
    """``N x n_s`` binary matrix with one active state per variable block."""
    X = np.zeros((ds.num_samples, layout.n_s))
    columns = np.asarray(layout.offsets)[None, :] + ds.rows
    X[np.arange(ds.num_samples)[:, None], columns] = 1.0
    return X


def collapse(X: np.ndarray, layout: StateLayout) -> np.ndarray:
    """Inverse of :func:`one_hot_expand`: per-block argmax back to state codes."""
    blocks = [X[:, layout.block(i)].argmax(axis=1) for i in range(layout.num_variables)]
    return np.stack(blocks, axis=1)


def state_frequencies(X: np.ndarray, layout: StateLayout) -> np.ndarray:
    """Empirical marginal frequency of every state.

    A state never observed is floored at ``1/(2N)``; the observed states of
    the same variable give up that mass in proportion to their frequency, so
    blocks still sum to 1. When the floors alone would use up the block
    (declared cardinality of ``2N`` or more) the floored block is
    renormalised instead. Every entry stays in ``(0, 1]``.
    """
    N = X.shape[0]
    freq = X.mean(axis=0)
    floor = 1.0 / (2 * N)
    for i in range(layout.num_variables):
        block = freq[layout.block(i)]  # view
        zero = block == 0.0
        if not zero.any():
            continue
        _log.warning(
            "Variable %d has %d unobserved state(s); frequency clamped to 1/(2N)=%g",
            i,
            int(zero.sum()),
            floor,
        )
        borrowed = floor * int(zero.sum())
        if borrowed < 1.0:
            block[~zero] *= 1.0 - borrowed
            block[zero] = floor
        else:
            block[zero] = floor
            block /= block.sum()
    return freq
