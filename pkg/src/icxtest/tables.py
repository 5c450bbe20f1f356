"""2xC contingency tables with fixed margins and their exact conditional law.

With both row sums and column sums held fixed, a 2xC table is determined by
its first row.  Under the null hypothesis that the two rows are drawn from the
same multinomial, the conditional distribution of the first row is
multivariate hypergeometric; under an exponential tilt with log odds ratios
``nu`` each table is reweighted by ``exp(x1 . nu)`` (terminal column omitted).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import FeasibilityError, IcxError, MarginError

__all__ = [
    "Margins",
    "Table2xC",
    "NullEnsemble",
    "enumerate_tables",
    "null_log_prob",
    "null_prob_exact",
    "alt_log_weight",
]


def _as_int_tuple(values, what: str) -> tuple[int, ...]:
    out = []
    for v in values:
        i = int(v)
        if i != v:
            raise ValueError(f"{what} must be integers, got {v!r}")
        out.append(i)
    return tuple(out)


@dataclass(frozen=True)
class Margins:
    """Fixed row sums ``(n1, n2)`` and column sums ``(t1, ..., tC)``."""

    row_sums: tuple[int, int]
    col_sums: tuple[int, ...]

    def __post_init__(self):
        rows = _as_int_tuple(self.row_sums, "row sums")
        cols = _as_int_tuple(self.col_sums, "column sums")
        object.__setattr__(self, "row_sums", rows)
        object.__setattr__(self, "col_sums", cols)
        if len(rows) != 2:
            raise MarginError(f"expected two row sums, got {len(rows)}")
        if not cols:
            raise MarginError("at least one column is required")
        if min(rows) < 0 or min(cols) < 0:
            raise MarginError("margins must be nonnegative")
        if sum(cols) != sum(rows):
            raise MarginError(
                f"column sums total {sum(cols)} but row sums total {sum(rows)}"
            )

    @property
    def N(self) -> int:
        return self.row_sums[0] + self.row_sums[1]

    @property
    def C(self) -> int:
        return len(self.col_sums)


@dataclass(frozen=True)
class Table2xC:
    """An observed 2xC table of nonnegative integer counts."""

    counts: tuple[tuple[int, ...], tuple[int, ...]]

    def __post_init__(self):
        if len(self.counts) != 2:
            raise ValueError("a table has exactly two rows")
        row1 = _as_int_tuple(self.counts[0], "counts")
        row2 = _as_int_tuple(self.counts[1], "counts")
        object.__setattr__(self, "counts", (row1, row2))
        if len(row1) != len(row2):
            raise ValueError("rows must have the same number of columns")
        if len(row1) < 2:
            raise ValueError("a table needs at least two columns")
        if min(row1) < 0 or min(row2) < 0:
            raise ValueError("counts must be nonnegative")

    @property
    def C(self) -> int:
        return len(self.counts[0])

    @property
    def N(self) -> int:
        return sum(self.counts[0]) + sum(self.counts[1])

    @property
    def row_sums(self) -> tuple[int, int]:
        return (sum(self.counts[0]), sum(self.counts[1]))

    @property
    def col_sums(self) -> tuple[int, ...]:
        return tuple(a + b for a, b in zip(self.counts[0], self.counts[1]))

    @property
    def first_row(self) -> tuple[int, ...]:
        return self.counts[0]

    @property
    def margins(self) -> Margins:
        return Margins(self.row_sums, self.col_sums)

    def to_array(self) -> np.ndarray:
        return np.array(self.counts, dtype=np.int64)

    @classmethod
    def from_rows(cls, row1: Sequence[int], row2: Sequence[int]) -> "Table2xC":
        return cls((tuple(row1), tuple(row2)))

    @classmethod
    def from_first_row(cls, margins: Margins, first_row: Sequence[int]) -> "Table2xC":
        x1 = _as_int_tuple(first_row, "first row")
        _check_first_row(x1, margins)
        x2 = tuple(t - a for t, a in zip(margins.col_sums, x1))
        return cls((x1, x2))

    # -- serialization ------------------------------------------------------

    @classmethod
    def from_json(cls, text: str) -> "Table2xC":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"invalid JSON table: {exc}") from exc
        if not isinstance(payload, dict) or "counts" not in payload:
            raise ValueError('JSON table must be an object with a "counts" key')
        counts = payload["counts"]
        if not isinstance(counts, list) or len(counts) != 2:
            raise ValueError('"counts" must hold exactly two rows')
        return cls((tuple(counts[0]), tuple(counts[1])))

    @classmethod
    def from_csv(cls, text: str) -> "Table2xC":
        rows = [line for line in text.splitlines() if line.strip()]
        if len(rows) != 2:
            raise ValueError(f"expected two CSV rows of counts, got {len(rows)}")
        parsed = []
        for line in rows:
            try:
                parsed.append(tuple(int(cell) for cell in line.split(",")))
            except ValueError as exc:
                raise ValueError(f"invalid CSV count row {line!r}") from exc
        return cls((parsed[0], parsed[1]))

    def to_json(self) -> str:
        return json.dumps({"counts": [list(self.counts[0]), list(self.counts[1])]})

    def to_csv(self) -> str:
        return "\n".join(",".join(str(v) for v in row) for row in self.counts)


def _check_first_row(x1: Sequence[int], margins: Margins) -> None:
    if len(x1) != margins.C:
        raise FeasibilityError(
            f"first row has {len(x1)} columns, margins have {margins.C}"
        )
    if sum(x1) != margins.row_sums[0]:
        raise FeasibilityError(
            f"first row sums to {sum(x1)}, expected {margins.row_sums[0]}"
        )
    for j, (v, t) in enumerate(zip(x1, margins.col_sums)):
        if v < 0 or v > t:
            raise FeasibilityError(
                f"first-row entry {v} at column {j} is outside [0, {t}]"
            )


def _log_binom(n, k):
    """log of C(n, k), vectorized; caller guarantees 0 <= k <= n."""
    n = np.asarray(n, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def null_log_prob(first_row: Sequence[int], margins: Margins) -> float:
    """Log of the multivariate hypergeometric probability of ``first_row``."""
    x1 = _as_int_tuple(first_row, "first row")
    _check_first_row(x1, margins)
    cols = np.asarray(margins.col_sums)
    x = np.asarray(x1)
    return float(
        _log_binom(cols, x).sum()
        - _log_binom(margins.N, margins.row_sums[0])
    )


def null_prob_exact(first_row: Sequence[int], margins: Margins) -> Fraction:
    """Exact rational probability of ``first_row``, big-integer arithmetic.

    Slower than :func:`null_log_prob` but free of rounding; intended for
    verification on tables up to a few hundred observations.
    """
    x1 = _as_int_tuple(first_row, "first row")
    _check_first_row(x1, margins)
    num = 1
    for t, v in zip(margins.col_sums, x1):
        num *= math.comb(t, v)
    return Fraction(num, math.comb(margins.N, margins.row_sums[0]))


def alt_log_weight(first_row: Sequence[int], nu: Sequence[float]) -> float:
    """Exponential-tilt log weight ``sum_j x1j * nu_j`` over non-terminal columns."""
    x1 = np.asarray(first_row, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    if nu.ndim != 1 or nu.shape[0] != x1.shape[0] - 1:
        raise ValueError(
            f"nu must have length C-1 = {x1.shape[0] - 1}, got {nu.shape}"
        )
    if not np.all(np.isfinite(nu)):
        raise ValueError("nu must be finite")
    return float(x1[:-1] @ nu)


@dataclass(frozen=True, eq=False)
class NullEnsemble:
    """Every first row compatible with fixed margins, in lexicographic order.

    ``log_probs[i]`` is the null log probability of ``first_rows[i]``; the
    exponentiated probabilities sum to one up to rounding, which is checked at
    construction time.
    """

    margins: Margins
    first_rows: np.ndarray
    log_probs: np.ndarray

    def __post_init__(self):
        self.first_rows.setflags(write=False)
        self.log_probs.setflags(write=False)
        total = float(np.exp(self.log_probs).sum())
        if abs(total - 1.0) > 1e-10:
            raise IcxError(
                f"null probabilities sum to {total!r}, expected 1 within 1e-10"
            )

    def __len__(self) -> int:
        return self.first_rows.shape[0]

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        for row in self.first_rows:
            yield tuple(int(v) for v in row)

    @property
    def probs(self) -> np.ndarray:
        """Null probabilities normalized to sum to one exactly."""
        p = np.exp(self.log_probs)
        return p / p.sum()

    def table(self, i: int) -> Table2xC:
        return Table2xC.from_first_row(self.margins, self.first_rows[i])

    def index_of(self, first_row: Sequence[int]) -> int:
        x1 = np.asarray(_as_int_tuple(first_row, "first row"))
        hits = np.flatnonzero((self.first_rows == x1).all(axis=1))
        if hits.size == 0:
            raise FeasibilityError(f"first row {tuple(x1)} is not in the ensemble")
        return int(hits[0])

    def alt_log_weights(self, nu: Sequence[float]) -> np.ndarray:
        nu = np.asarray(nu, dtype=np.float64)
        if nu.shape != (self.margins.C - 1,):
            raise ValueError(f"nu must have length {self.margins.C - 1}")
        return self.first_rows[:, :-1] @ nu

    def alt_probs(self, nu: Sequence[float]) -> np.ndarray:
        """Tilted table probabilities, normalized over the ensemble."""
        logw = self.log_probs + self.alt_log_weights(nu)
        w = np.exp(logw - logw.max())
        return w / w.sum()


def _first_rows(n1: int, cols: tuple[int, ...]) -> list[tuple[int, ...]]:
    """All nonnegative integer vectors below ``cols`` summing to ``n1``, ascending."""
    C = len(cols)
    suffix = [0] * (C + 1)
    for j in range(C - 1, -1, -1):
        suffix[j] = suffix[j + 1] + cols[j]
    out: list[tuple[int, ...]] = []
    row = [0] * C

    def emit(j: int, remaining: int) -> None:
        if j == C - 1:
            row[j] = remaining
            out.append(tuple(row))
            return
        lo = max(0, remaining - suffix[j + 1])
        hi = min(cols[j], remaining)
        for v in range(lo, hi + 1):
            row[j] = v
            emit(j + 1, remaining - v)

    if 0 <= n1 <= suffix[0]:
        emit(0, n1)
    return out


def enumerate_tables(row_sums: Sequence[int], col_sums: Sequence[int]) -> NullEnsemble:
    """Enumerate the conditional ensemble for the given margins.

    Rows are emitted in lexicographic order of the first row, so repeated
    calls and any downstream sums are reproducible.
    """
    margins = Margins(tuple(row_sums), tuple(col_sums))
    rows = _first_rows(margins.row_sums[0], margins.col_sums)
    if not rows:
        raise MarginError(f"no table satisfies margins {margins}")
    first_rows = np.array(rows, dtype=np.int64)
    cols = np.asarray(margins.col_sums)
    log_probs = _log_binom(cols, first_rows).sum(axis=1) - float(
        _log_binom(margins.N, margins.row_sums[0])
    )
    return NullEnsemble(margins, first_rows, log_probs)
