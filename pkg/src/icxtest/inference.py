"""Exact conditional inference: p-values, randomized size-alpha rules, power.

Everything here enumerates the conditional ensemble of tables sharing the
observed margins, evaluates a test statistic on each, and then works with the
resulting discrete distribution directly.  No asymptotics are involved; the
only tolerance is a tie band that merges statistic values equal up to
floating-point noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .cone import ProbPair, Weights, _coerce_weights, log_odds_ratios
from .errors import AlternativeError, IcxError
from .statistics import DirectedChisqEngine, LrtEngine
from .tables import Margins, NullEnsemble, Table2xC, enumerate_tables

__all__ = [
    "TestReport",
    "RandomizedRule",
    "AlternativeSpec",
    "PowerReport",
    "evaluate_statistic",
    "exact_pvalue",
    "build_rule",
    "rejection_probs",
    "exact_power",
    "power_study",
    "STATISTICS",
]

STATISTICS = ("dchisq", "lrt")


def _tie_band(center: float, tie_tol: float) -> float:
    """Absolute half-width of the tie band around ``center``."""
    return max(tie_tol * max(1.0, abs(center)), 1e-12)


@dataclass(frozen=True)
class TestReport:
    """Outcome of one exact conditional test."""

    statistic: str
    statistic_value: float
    p_value: float
    tie_mass: float
    n_tables: int


@dataclass(frozen=True)
class RandomizedRule:
    """Reject above ``critical_value``; on its tie class reject with
    probability ``boundary_weight`` so the null size is exactly ``alpha``."""

    critical_value: float
    boundary_weight: float
    alpha: float


@dataclass(frozen=True)
class AlternativeSpec:
    """A strictly positive alternative pair and its induced log odds ratios."""

    pair: ProbPair

    def __post_init__(self):
        p1, p2 = self.pair.as_arrays()
        if p1.min() <= 0 or p2.min() <= 0:
            raise AlternativeError(
                "alternative cells must be strictly positive for finite log odds"
            )

    @cached_property
    def nu(self) -> np.ndarray:
        return log_odds_ratios(self.pair)


@dataclass(frozen=True)
class PowerReport:
    """Exact rejection probability of a randomized rule under one alternative."""

    statistic: str
    alternative: AlternativeSpec
    power: float
    rule: RandomizedRule
    n_tables: int


StatisticSpec = "str | Callable[[Table2xC], float]"


def _make_engine(statistic, margins: Margins, weights: Weights):
    if statistic == "dchisq":
        engine = DirectedChisqEngine(margins, weights)
        return "dchisq", engine.value
    if statistic == "lrt":
        engine = LrtEngine(margins, weights)
        return "lrt", engine.value
    if callable(statistic):
        name = getattr(statistic, "__name__", "custom")

        def from_first_row(first_row):
            return float(statistic(Table2xC.from_first_row(margins, first_row)))

        return name, from_first_row
    raise ValueError(f"unknown statistic {statistic!r}; expected 'dchisq', 'lrt', "
                     "or a callable")


def evaluate_statistic(ensemble: NullEnsemble, statistic, weights) -> np.ndarray:
    """Evaluate ``statistic`` on every table of the ensemble, in table order."""
    weights = _coerce_weights(weights, ensemble.margins.C)
    _, value_of = _make_engine(statistic, ensemble.margins, weights)
    values = np.empty(len(ensemble))
    for i, first_row in enumerate(ensemble.first_rows):
        try:
            values[i] = value_of(first_row)
        except IcxError as exc:
            raise IcxError(
                f"statistic failed on table with first row "
                f"{tuple(int(v) for v in first_row)}: {exc}"
            ) from exc
    return values


def exact_pvalue(table: Table2xC, statistic, weights, *,
                 tie_tol: float = 1e-9) -> TestReport:
    """Exact conditional p-value of ``statistic`` at the observed table.

    The p-value is the null probability of a statistic strictly above the
    observed value plus the probability of the observed tie class, values
    within ``tie_tol`` (relative, floored at 1e-12 absolute) counting as tied.
    """
    weights = _coerce_weights(weights, table.C)
    ensemble = enumerate_tables(table.row_sums, table.col_sums)
    name, _ = _make_engine(statistic, ensemble.margins, weights)
    values = evaluate_statistic(ensemble, statistic, weights)
    observed = values[ensemble.index_of(table.first_row)]
    probs = ensemble.probs
    band = _tie_band(observed, tie_tol)
    tie_mass = float(probs[np.abs(values - observed) <= band].sum())
    above = float(probs[values > observed + band].sum())
    return TestReport(
        statistic=name,
        statistic_value=float(observed),
        p_value=above + tie_mass,
        tie_mass=tie_mass,
        n_tables=len(ensemble),
    )


def _merge_ties(values: np.ndarray, tie_tol: float):
    """Cluster values that agree within the tie band.

    Returns ``(reps, cluster_ids)`` with cluster representatives (the largest
    member of each cluster) in descending order and a cluster index per
    input value.  Walking the sorted values and cutting whenever the gap to
    the current representative exceeds its band is deterministic and cannot
    chain unboundedly far from the representative.
    """
    order = np.argsort(-values, kind="stable")
    reps: list[float] = []
    cluster_ids = np.empty(values.shape[0], dtype=np.int64)
    for idx in order:
        v = float(values[idx])
        if not reps or reps[-1] - v > _tie_band(reps[-1], tie_tol):
            reps.append(v)
        cluster_ids[idx] = len(reps) - 1
    return np.asarray(reps), cluster_ids


def build_rule(ensemble: NullEnsemble, values: np.ndarray, alpha: float, *,
               tie_tol: float = 1e-9) -> RandomizedRule:
    """Randomized rejection rule with null size exactly ``alpha``.

    Statistic values are merged into tie classes, then mass is accumulated
    from the top until it reaches ``alpha``; the class on the boundary is
    rejected with the fractional weight that lands the size exactly.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (len(ensemble),):
        raise ValueError("one statistic value per ensemble table is required")
    probs = ensemble.probs
    reps, cluster_ids = _merge_ties(values, tie_tol)
    masses = np.bincount(cluster_ids, weights=probs, minlength=reps.shape[0])
    above = 0.0
    for k, mass in enumerate(masses):
        if above + mass >= alpha or k == len(masses) - 1:
            gamma = (alpha - above) / mass
            return RandomizedRule(float(reps[k]), float(gamma), float(alpha))
        above += mass
    raise IcxError("unreachable: tie classes exhaust all mass")  # pragma: no cover


def rejection_probs(values: np.ndarray, rule: RandomizedRule, *,
                    tie_tol: float = 1e-9) -> np.ndarray:
    """Per-table rejection probability under a randomized rule."""
    values = np.asarray(values, dtype=np.float64)
    reps, cluster_ids = _merge_ties(values, tie_tol)
    crit = np.flatnonzero(reps == rule.critical_value)
    if crit.size == 0:
        raise ValueError("rule critical value is not a tie-class representative "
                         "of these statistic values")
    k = int(crit[0])
    phi_class = np.zeros(reps.shape[0])
    phi_class[:k] = 1.0
    phi_class[k] = rule.boundary_weight
    return phi_class[cluster_ids]


def _coerce_alternative(alternative) -> AlternativeSpec:
    if isinstance(alternative, AlternativeSpec):
        return alternative
    if isinstance(alternative, ProbPair):
        return AlternativeSpec(alternative)
    raise TypeError("alternative must be an AlternativeSpec or ProbPair")


def exact_power(margins: Margins, statistic, weights, alternative,
                alpha: float, *, tie_tol: float = 1e-9) -> PowerReport:
    """Exact power of the size-``alpha`` randomized rule at one alternative.

    Tables are reweighted by the exponential tilt ``exp(x1 . nu)`` induced by
    the alternative and renormalized over the ensemble, so the power of the
    null alternative (equal rows) is ``alpha`` by construction.
    """
    reports = power_study(margins, weights, [alternative], alpha,
                          statistics=(statistic,), tie_tol=tie_tol)
    return reports[0]


def power_study(margins: Margins, weights, alternatives: Sequence,
                alpha: float, *, statistics=STATISTICS,
                tie_tol: float = 1e-9) -> list[PowerReport]:
    """Exact power for several alternatives and statistics on shared margins.

    The ensemble and the statistic values are computed once per statistic and
    reused across alternatives.  Reports are ordered alternative-major,
    statistic-minor.
    """
    weights = _coerce_weights(weights, margins.C)
    specs = [_coerce_alternative(a) for a in alternatives]
    for spec in specs:
        if spec.pair.C != margins.C:
            raise AlternativeError(
                f"alternative has {spec.pair.C} columns, margins have {margins.C}"
            )
    ensemble = enumerate_tables(margins.row_sums, margins.col_sums)
    prepared = []
    for statistic in statistics:
        name, _ = _make_engine(statistic, margins, weights)
        values = evaluate_statistic(ensemble, statistic, weights)
        rule = build_rule(ensemble, values, alpha, tie_tol=tie_tol)
        phi = rejection_probs(values, rule, tie_tol=tie_tol)
        prepared.append((name, rule, phi))
    reports = []
    for spec in specs:
        alt_probs = ensemble.alt_probs(spec.nu)
        for name, rule, phi in prepared:
            reports.append(PowerReport(
                statistic=name,
                alternative=spec,
                power=float(phi @ alt_probs),
                rule=rule,
                n_tables=len(ensemble),
            ))
    return reports
