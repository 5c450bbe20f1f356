"""Order constraints and the cone of practical directions.

A pair of C-category distributions ``(p1, p2)`` satisfies the increasing
convex order restriction when every weighted cumulative difference

    delta_r = lam_r * sum_{j<=r} (p1j - p2j) + sum_{j>r} lam_j (p1j - p2j)

is nonnegative, for strictly decreasing positive weights ``lam_1 > ... >
lam_{C-1}``.  The same functionals applied to cell proportions of a 2xC table
define the empirical versions ``delta*_r``, and the table-space directions
that preserve margins while not decreasing any ``delta*_r`` form a polyhedral
cone ``{d : B d = 0, G d >= 0}`` built here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConvergenceError, NoAlternativeError, WeightError
from .tables import Table2xC

__all__ = [
    "Weights",
    "ProbPair",
    "ConeSpec",
    "build_cone",
    "delta_r",
    "all_deltas",
    "delta_star",
    "all_delta_stars",
    "is_practical_direction",
    "sample_cone_directions",
    "log_odds_ratios",
    "construct_p_from_nu",
    "find_icx_alternative",
]


@dataclass(frozen=True)
class Weights:
    """Strictly decreasing positive weights, one per non-terminal column."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if not vals:
            raise WeightError("at least one weight is required")
        if any(not math.isfinite(v) or v <= 0 for v in vals):
            raise WeightError(f"weights must be finite and positive: {vals}")
        if any(a <= b for a, b in zip(vals, vals[1:])):
            raise WeightError(f"weights must be strictly decreasing: {vals}")

    @classmethod
    def default(cls, C: int) -> "Weights":
        """The conventional choice ``(C-1, C-2, ..., 1)``."""
        if C < 2:
            raise WeightError("default weights need at least two columns")
        return cls(tuple(float(C - j) for j in range(1, C)))

    @property
    def C(self) -> int:
        return len(self.values) + 1

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


def _coerce_weights(weights, C: int | None = None) -> Weights:
    w = weights if isinstance(weights, Weights) else Weights(tuple(weights))
    if C is not None and w.C != C:
        raise WeightError(f"{len(w.values)} weights given but C = {C} needs {C - 1}")
    return w


@dataclass(frozen=True)
class ProbPair:
    """Two probability vectors over the same C categories."""

    p1: tuple[float, ...]
    p2: tuple[float, ...]

    def __post_init__(self):
        p1 = tuple(float(v) for v in self.p1)
        p2 = tuple(float(v) for v in self.p2)
        object.__setattr__(self, "p1", p1)
        object.__setattr__(self, "p2", p2)
        if len(p1) != len(p2) or not p1:
            raise ValueError("p1 and p2 must be nonempty and of equal length")
        for name, p in (("p1", p1), ("p2", p2)):
            if any(v < 0 or not math.isfinite(v) for v in p):
                raise ValueError(f"{name} has a negative or non-finite entry: {p}")
            if abs(sum(p) - 1.0) > 1e-12:
                raise ValueError(f"{name} sums to {sum(p)!r}, expected 1 within 1e-12")

    @classmethod
    def from_arrays(cls, p1, p2, normalize: bool = False) -> "ProbPair":
        a1 = np.asarray(p1, dtype=np.float64)
        a2 = np.asarray(p2, dtype=np.float64)
        if normalize:
            a1 = a1 / a1.sum()
            a2 = a2 / a2.sum()
        return cls(tuple(a1.tolist()), tuple(a2.tolist()))

    @property
    def C(self) -> int:
        return len(self.p1)

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.asarray(self.p1, dtype=np.float64),
            np.asarray(self.p2, dtype=np.float64),
        )


@dataclass(frozen=True, eq=False)
class ConeSpec:
    """Matrices defining the practical-direction cone for fixed row sums.

    ``eq_matrix`` (shape ``(C+1, 2C)``) annihilates exactly the directions
    that preserve all margins; ``ineq_matrix`` (shape ``(C-1, 2C)``) applied
    to a flattened table gives the empirical order functionals ``delta*_r``.
    ``ineq_row_block`` is the first-row block of ``ineq_matrix``.
    """

    eq_matrix: np.ndarray
    ineq_matrix: np.ndarray
    ineq_row_block: np.ndarray
    n1: int
    n2: int

    def __post_init__(self):
        for a in (self.eq_matrix, self.ineq_matrix, self.ineq_row_block):
            a.setflags(write=False)

    @property
    def C(self) -> int:
        return self.ineq_row_block.shape[1]


def _weight_pattern(weights: Weights) -> np.ndarray:
    """Row r (1-based) holds lam_r repeated r times, then lam_{r+1}, ..., 0."""
    lam = weights.as_array()
    C = weights.C
    pattern = np.zeros((C - 1, C))
    for r in range(C - 1):
        pattern[r, : r + 1] = lam[r]
        pattern[r, r + 1 : C - 1] = lam[r + 1 : C - 1]
    return pattern


def build_cone(C: int, weights, n1: int, n2: int) -> ConeSpec:
    """Build the margin-equality and order-inequality matrices for 2xC tables."""
    weights = _coerce_weights(weights, C)
    if n1 < 1 or n2 < 1:
        raise ValueError(f"row sums must be positive, got n1={n1}, n2={n2}")
    eq = np.zeros((C + 1, 2 * C))
    for j in range(C):
        eq[j, j] = 1.0
        eq[j, C + j] = 1.0
    eq[C, :C] = 1.0
    row_block = _weight_pattern(weights) / n1
    ineq = np.hstack([row_block, -(n1 / n2) * row_block])
    return ConeSpec(eq, ineq, row_block, int(n1), int(n2))


def delta_r(pair: ProbPair, weights, r: int) -> float:
    """Order functional ``delta_r`` of a probability pair, ``1 <= r <= C-1``."""
    weights = _coerce_weights(weights, pair.C)
    if not 1 <= r <= pair.C - 1:
        raise IndexError(f"r must lie in [1, {pair.C - 1}], got {r}")
    lam = weights.values
    p1, p2 = pair.as_arrays()
    d = p1 - p2
    head = lam[r - 1] * float(d[:r].sum())
    tail = sum(lam[j] * float(d[j]) for j in range(r, pair.C - 1))
    return head + tail


def all_deltas(pair: ProbPair, weights) -> np.ndarray:
    """All order functionals ``(delta_1, ..., delta_{C-1})``."""
    return np.array([delta_r(pair, weights, r) for r in range(1, pair.C)])


def delta_star(table: Table2xC, weights, r: int) -> float:
    """Empirical order functional of a table, ``delta_r`` at cell proportions."""
    n1, n2 = table.row_sums
    if n1 < 1 or n2 < 1:
        raise ValueError("both row sums must be positive")
    x = table.to_array()
    pair = ProbPair.from_arrays(x[0] / n1, x[1] / n2)
    return delta_r(pair, weights, r)


def all_delta_stars(table: Table2xC, weights) -> np.ndarray:
    return np.array([delta_star(table, weights, r) for r in range(1, table.C)])


def is_practical_direction(d, cone: ConeSpec, tol: float = 1e-9) -> bool:
    """Whether ``d`` preserves margins and does not decrease any ``delta*_r``."""
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (2 * cone.C,):
        raise ValueError(f"direction must have length {2 * cone.C}, got {d.shape}")
    if np.abs(cone.eq_matrix @ d).max() > tol:
        return False
    return bool((cone.ineq_matrix @ d).min() >= -tol)


def sample_cone_directions(cone: ConeSpec, count: int, seed: int) -> list[np.ndarray]:
    """Deterministically sample directions from the practical cone.

    The first ``C-1`` directions solve ``G1 delta = e_r`` on the
    margin-preserving subspace (one per order constraint); the rest are random
    nonnegative combinations of them.  Each returned vector is ``(delta,
    -delta)`` so the margin equalities hold by construction.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    C = cone.C
    ones = np.ones((1, C))
    system = np.vstack([cone.ineq_row_block, ones])
    basis = []
    for r in range(C - 1):
        rhs = np.zeros(C)
        rhs[r] = 1.0
        try:
            delta = np.linalg.solve(system, rhs)
        except np.linalg.LinAlgError:
            continue
        # the last column of the row block is zero, so forcing the exact
        # zero-sum onto the final coordinate leaves G1 delta untouched
        delta[-1] = -delta[:-1].sum()
        basis.append(delta)
    if not basis:
        raise ConvergenceError("no solvable order-constraint direction was found")
    rng = np.random.default_rng(seed)
    deltas = list(basis[:count])
    while len(deltas) < count:
        coeff = rng.uniform(0.05, 1.0, size=len(basis))
        combo = sum(c * b for c, b in zip(coeff, basis))
        combo[-1] = -combo[:-1].sum()
        deltas.append(combo)
    return [np.concatenate([d, -d]) for d in deltas]


def log_odds_ratios(pair: ProbPair) -> np.ndarray:
    """Log odds ratios against the terminal column, ``log(p1j p2C / (p1C p2j))``."""
    p1, p2 = pair.as_arrays()
    if p1.min() <= 0 or p2.min() <= 0:
        raise ValueError("log odds ratios need strictly positive cells")
    return np.log(p1[:-1]) - np.log(p1[-1]) + np.log(p2[-1]) - np.log(p2[:-1])


def _softmax(logw: np.ndarray) -> np.ndarray:
    w = np.exp(logw - logw.max())
    return w / w.sum()


def _tilt_constants(nu: np.ndarray, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-column exponents (a, b) whose differences reproduce ``nu``.

    Column ``q`` and the terminal column receive the large factor.  The
    identity ``nu_j = a_j + b_C - a_C - b_j`` holds for every j by
    construction, and for ``nu_q > 0`` the key inequality
    ``a_q + b_C > a_C + b_q`` follows.
    """
    C = nu.shape[0] + 1
    a = np.empty(C)
    a[: C - 1] = 1.5 * nu
    a[q] = 0.0
    a[C - 1] = 0.5 * nu[0]
    b = np.empty(C)
    b[C - 1] = 0.0
    b[: C - 1] = a[: C - 1] - a[C - 1] + b[C - 1] - nu
    return a, b


def construct_p_from_nu(nu: Sequence[float], delta_scale: float) -> ProbPair:
    """Build a strictly positive pair whose log odds ratios equal ``nu``.

    Probabilities are proportional to ``exp(a_j)`` in row 1 and ``exp(b_j)``
    in row 2, with the mass of one positive-``nu`` column and the terminal
    column amplified by ``delta_scale``; the amplification cancels in every
    log odds ratio.  For ``delta_scale`` large enough the pair also satisfies
    all order constraints (see :func:`find_icx_alternative`).

    Raises ``NoAlternativeError`` when every component of ``nu`` is negative:
    the final order functional then forces ``p2C >= p1C``, which such a
    ``nu`` contradicts, so no conforming pair exists.
    """
    nu = np.asarray(nu, dtype=np.float64)
    if nu.ndim != 1 or nu.size < 1 or not np.all(np.isfinite(nu)):
        raise ValueError("nu must be a finite vector of length C-1 >= 1")
    if not delta_scale > 0:
        raise ValueError(f"delta_scale must be positive, got {delta_scale}")
    if np.all(nu < 0):
        raise NoAlternativeError(
            "every log odds ratio is negative; no pair satisfies the order restriction"
        )
    positive = np.flatnonzero(nu > 0)
    if positive.size == 0:
        raise ValueError("the construction requires at least one positive component")
    q = int(positive[0])
    a, b = _tilt_constants(nu, q)
    log_delta = math.log(delta_scale)
    logw1 = a.copy()
    logw2 = b.copy()
    for logw in (logw1, logw2):
        logw[q] += log_delta
        logw[-1] += log_delta
    return ProbPair.from_arrays(_softmax(logw1), _softmax(logw2))


def find_icx_alternative(
    nu: Sequence[float],
    weights,
    *,
    initial_scale: float = 1.0,
    growth: float = 10.0,
    max_scale: float = 1e12,
) -> tuple[ProbPair, float]:
    """Geometric search for a ``delta_scale`` making all order functionals >= 0.

    Returns the first conforming pair together with the scale that produced
    it.  The search grows the scale by ``growth`` starting at
    ``initial_scale`` and gives up past ``max_scale``.
    """
    nu = np.asarray(nu, dtype=np.float64)
    weights = _coerce_weights(weights, nu.size + 1)
    scale = float(initial_scale)
    best = None
    while scale <= max_scale:
        pair = construct_p_from_nu(nu, scale)
        if all_deltas(pair, weights).min() >= 0.0:
            return pair, scale
        best = pair
        scale *= growth
    raise ConvergenceError(
        f"no scale up to {max_scale:g} satisfied the order restriction", best=best
    )
