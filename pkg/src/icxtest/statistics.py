"""Test statistics: the directed chi-square and the order-restricted LRT.

Both statistics measure how far a table leans toward the increasing convex
order alternative.  The directed chi-square is the weighted squared norm of
the table after projecting away every practical direction still available to
it; the likelihood-ratio statistic compares the multinomial log likelihood
maximized over the order-restricted region with its pooled null maximum.

Columns with a zero total are dropped before either statistic is computed:
their cells are deterministically zero and the chi-square cell weight
``1/(n_i t_j)`` is undefined there.  Surviving non-terminal columns keep
their original order weights, which makes both statistics invariant to
appending an empty column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .cone import ProbPair, Weights, _coerce_weights, _weight_pattern, build_cone
from .errors import ConvergenceError
from .qp import QpProblem, solve_qp
from .tables import Margins, Table2xC

__all__ = [
    "StatisticValue",
    "directed_chisq",
    "null_mle",
    "icx_constrained_mle",
    "lrt_statistic",
    "log_likelihood",
    "mle_kkt_residual",
    "DirectedChisqEngine",
    "LrtEngine",
]


@dataclass(frozen=True, eq=False)
class StatisticValue:
    """A statistic value plus the optimizer that produced it.

    ``minimizer`` is the projected table for the directed chi-square;
    ``mle`` is the constrained maximum-likelihood pair for the LRT.
    """

    value: float
    minimizer: np.ndarray | None = None
    mle: ProbPair | None = None


def _reduce_margins(margins: Margins, weights: Weights):
    """Drop zero-total columns; keep the weights of surviving non-terminal ones."""
    keep = [j for j, t in enumerate(margins.col_sums) if t > 0]
    if not keep:
        raise ValueError("all column totals are zero")
    reduced_weights = None
    if len(keep) >= 2:
        reduced_weights = Weights(tuple(weights.values[j] for j in keep[:-1]))
    return keep, reduced_weights


def _check_rows(margins: Margins) -> None:
    if min(margins.row_sums) < 1:
        raise ValueError(f"both row sums must be positive, got {margins.row_sums}")


class DirectedChisqEngine:
    """Directed chi-square solver for every table on one set of margins.

    The constraint structure depends only on the margins, so the cone, the
    equality system, and the cell weights are assembled once; per table only
    the inequality right-hand side changes.
    """

    def __init__(self, margins: Margins, weights):
        weights = _coerce_weights(weights, margins.C)
        _check_rows(margins)
        self.margins = margins
        self.keep, reduced = _reduce_margins(margins, weights)
        n1, n2 = margins.row_sums
        cols = np.asarray([margins.col_sums[j] for j in self.keep], dtype=np.float64)
        self._cols = cols
        self._trivial = len(self.keep) == 1
        if self._trivial:
            return
        cone = build_cone(len(self.keep), reduced, n1, n2)
        self._ineq = cone.ineq_matrix
        self._eq = cone.eq_matrix
        self._eq_rhs = np.concatenate([cols, [float(n1)]])
        self._w = np.concatenate([1.0 / (n1 * cols), 1.0 / (n2 * cols)])

    def value_detail(self, first_row) -> tuple[float, np.ndarray]:
        x1 = np.asarray(first_row, dtype=np.float64)
        x1r = x1[self.keep]
        x2r = self._cols - x1r
        full = np.zeros((2, self.margins.C))
        if self._trivial:
            # a single surviving column pins the minimizer to the table itself
            full[0, self.keep[0]] = x1r[0]
            full[1, self.keep[0]] = x2r[0]
            return 1.0, full
        xflat = np.concatenate([x1r, x2r])
        problem = QpProblem(self._w, self._eq, self._eq_rhs,
                            self._ineq, self._ineq @ xflat)
        sol = solve_qp(problem, xflat)
        k = len(self.keep)
        full[0, self.keep] = sol.minimizer[:k]
        full[1, self.keep] = sol.minimizer[k:]
        return sol.objective_value, full

    def value(self, first_row) -> float:
        return self.value_detail(first_row)[0]


def directed_chisq(table: Table2xC, weights) -> StatisticValue:
    """Directed chi-square of a table: the weighted squared norm ``sum
    u*_ij^2 / (n_i t_j)`` of the closest table reachable from ``table`` only
    by undoing practical directions.  Larger values are more extreme."""
    engine = DirectedChisqEngine(table.margins, weights)
    value, minimizer = engine.value_detail(table.first_row)
    return StatisticValue(value=value, minimizer=minimizer)


def null_mle(table: Table2xC) -> ProbPair:
    """Pooled maximum likelihood under equality: both rows get ``t_j / N``."""
    _check_rows(table.margins)
    pooled = np.asarray(table.col_sums, dtype=np.float64) / table.N
    return ProbPair.from_arrays(pooled, pooled)


def log_likelihood(table: Table2xC, pair: ProbPair) -> float:
    """Product-multinomial log likelihood ``sum x_ij log p_ij`` (0 log 0 = 0)."""
    x = table.to_array().astype(np.float64)
    p = np.vstack(pair.as_arrays())
    if p.shape != x.shape:
        raise ValueError("probability pair does not match the table shape")
    return _loglik(x, p)


def _loglik(x: np.ndarray, p: np.ndarray) -> float:
    mask = x > 0
    if np.any(p[mask] <= 0):
        return -np.inf
    return float((x[mask] * np.log(p[mask])).sum())


# ---------------------------------------------------------------------------
# order-restricted maximum likelihood
# ---------------------------------------------------------------------------


def _mle_starts(x: np.ndarray, pooled: np.ndarray, phat: np.ndarray,
                n_random: int, seed: int) -> list[np.ndarray]:
    C = x.shape[1]
    starts = [
        np.vstack([pooled, pooled]),
        0.5 * phat + 0.5 * np.vstack([pooled, pooled]),
        phat,
    ]
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        starts.append(np.vstack([rng.dirichlet(np.ones(C)),
                                 rng.dirichlet(np.ones(C))]))
    return starts


def _slsqp_once(xf: np.ndarray, M: np.ndarray, start: np.ndarray):
    C = M.shape[1]
    eq_jac = np.zeros((2, 2 * C))
    eq_jac[0, :C] = 1.0
    eq_jac[1, C:] = 1.0
    ineq_jac = np.hstack([M, -M])

    def fobj(z):
        zc = np.maximum(z, 1e-300)
        return -float(xf @ np.log(zc))

    def fgrad(z):
        zc = np.maximum(z, 1e-300)
        return -xf / zc

    res = minimize(
        fobj,
        start.ravel(),
        jac=fgrad,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * (2 * C),
        constraints=[
            {"type": "eq",
             "fun": lambda z: np.array([z[:C].sum() - 1.0, z[C:].sum() - 1.0]),
             "jac": lambda z: eq_jac},
            {"type": "ineq",
             "fun": lambda z: M @ (z[:C] - z[C:]),
             "jac": lambda z: ineq_jac},
        ],
        options={"ftol": 1e-12, "maxiter": 300},
    )
    p = np.maximum(res.x.reshape(2, C), 0.0)
    rows = p.sum(axis=1)
    if np.any(rows <= 0):
        return None, False
    return p / rows[:, None], bool(res.success)


def _polish_mle(x: np.ndarray, M: np.ndarray, p: np.ndarray, active: list[int]):
    """Newton-solve the KKT system on the identified active constraints.

    Cells with zero count whose probability has collapsed are clamped to zero
    and removed from the system.  Constraints whose multiplier comes out
    negative are released; inactive constraints that get violated are added.
    Returns the polished pair or ``None`` when the iteration fails.
    """
    C = M.shape[1]
    active = sorted(active)
    for _ in range(2 * (M.shape[0] + 1)):
        result = _newton_kkt(x, M, p, active)
        if result is None:
            return None
        p_new, pi = result
        deltas = M @ (p_new[0] - p_new[1])
        violated = [r for r in range(M.shape[0])
                    if r not in active and deltas[r] < -1e-12]
        if pi.size and pi.min() < -1e-9:
            active.remove(active[int(np.argmin(pi))])
            continue
        if violated:
            active = sorted(active + [violated[0]])
            continue
        return p_new
    return None


def _newton_kkt(x: np.ndarray, M: np.ndarray, p: np.ndarray, active: list[int]):
    """One Newton solve of the equality-form KKT system for a fixed active set.

    Unknowns are the free cell probabilities, the two row multipliers, and one
    multiplier per active constraint.  Returns ``(p, pi)`` or ``None``.
    """
    C = M.shape[1]
    clamp = (x == 0) & (p <= 1e-10)
    free = np.flatnonzero(~clamp.ravel())
    nf = free.size
    na = len(active)
    p_work = np.where(clamp, 0.0, np.maximum(p, 1e-12))
    xf = x.ravel().astype(np.float64)
    # constraint gradient in flat coordinates: +M on row 1, -M on row 2
    G = np.hstack([M[active], -M[active]]) if na else np.zeros((0, 2 * C))
    kappa = np.array([float(x[0].sum()), float(x[1].sum())])
    pi = np.zeros(na)
    row_of = np.repeat([0, 1], C)
    for _ in range(40):
        z = p_work.ravel()
        sig = G.T @ pi if na else np.zeros(2 * C)
        r_stat = xf[free] / z[free] + sig[free] - kappa[row_of[free]]
        r_row = p_work.sum(axis=1) - 1.0
        r_act = M[active] @ (p_work[0] - p_work[1]) if na else np.zeros(0)
        resid = np.concatenate([r_stat, r_row, r_act])
        if np.abs(resid).max() <= 1e-12:
            return p_work, pi
        # Jacobian over [p_free, kappa, pi]
        J = np.zeros((nf + 2 + na, nf + 2 + na))
        J[:nf, :nf] = np.diag(-xf[free] / z[free] ** 2)
        for col in range(2):
            J[:nf, nf + col] = -np.asarray(row_of[free] == col, dtype=np.float64)
            J[nf + col, :nf] = np.asarray(row_of[free] == col, dtype=np.float64)
        if na:
            J[:nf, nf + 2:] = G[:, free].T
            J[nf + 2:, :nf] = G[:, free]
        step, *_ = np.linalg.lstsq(J, -resid, rcond=None)
        dp = step[:nf]
        alpha = 1.0
        shrink = dp < 0
        if np.any(shrink):
            alpha = min(1.0, 0.9 * float(np.min(z[free][shrink] / -dp[shrink])))
        if alpha <= 1e-14:
            return None
        z = z.copy()
        z[free] = z[free] + alpha * dp
        p_work = z.reshape(2, C)
        kappa = kappa + alpha * step[nf:nf + 2]
        pi = pi + alpha * step[nf + 2:]
    return None


def _penalty_fallback(x: np.ndarray, M: np.ndarray, start: np.ndarray) -> np.ndarray:
    """Quadratic-penalty maximization in per-row softmax coordinates."""
    C = M.shape[1]
    n_i = x.sum(axis=1)

    def split_softmax(theta):
        t = theta.reshape(2, C)
        t = t - t.max(axis=1, keepdims=True)
        w = np.exp(t)
        return w / w.sum(axis=1, keepdims=True)

    def fg(theta, mu):
        p = split_softmax(theta)
        deltas = M @ (p[0] - p[1])
        viol = np.minimum(deltas, 0.0)
        val = -_loglik(x, p) + mu * float(viol @ viol)
        grad_l = n_i[:, None] * p - x
        grad = grad_l.copy()
        for r in np.flatnonzero(viol < 0):
            coeff = 2.0 * mu * viol[r]
            m_r = M[r]
            grad[0] += coeff * p[0] * (m_r - float(m_r @ p[0]))
            grad[1] += coeff * -p[1] * (m_r - float(m_r @ p[1]))
        return val, grad.ravel()

    theta = np.log(np.maximum(start, 1e-8)).ravel()
    for mu in (1e2, 1e4, 1e6, 1e8):
        res = minimize(fg, theta, args=(mu,), jac=True, method="BFGS",
                       options={"maxiter": 400, "gtol": 1e-10})
        theta = res.x
    return split_softmax(theta)


def _constrained_mle_reduced(x: np.ndarray, weights: Weights | None,
                             n_random_starts: int, seed: int):
    """Maximize the log likelihood over the order-restricted region.

    ``x`` is the reduced 2xC' count array; returns ``(pair, loglik)``.
    The problem is convex (linear constraints, concave objective), so any
    KKT point found from any start is the global answer; multiple starts
    guard against optimizer breakdowns, not local optima.
    """
    C = x.shape[1]
    rows = x.sum(axis=1).astype(np.float64)
    if C == 1:
        p = np.ones((2, 1))
        return p, _loglik(x, p)
    M = _weight_pattern(weights)
    phat = x / rows[:, None]
    if (M @ (phat[0] - phat[1])).min() >= -1e-12:
        return phat, _loglik(x, phat)

    cols = x.sum(axis=0).astype(np.float64)
    pooled = cols / cols.sum()
    l_pooled = _loglik(x, np.vstack([pooled, pooled]))
    xf = x.ravel().astype(np.float64)

    best_p = np.vstack([pooled, pooled])
    best_l = l_pooled
    any_success = False
    for start in _mle_starts(x, pooled, phat, n_random_starts, seed):
        p, ok = _slsqp_once(xf, M, start)
        if p is None:
            continue
        any_success = any_success or ok
        if (M @ (p[0] - p[1])).min() < -1e-8:
            continue
        l = _loglik(x, p)
        if l > best_l:
            best_p, best_l = p, l

    if not any_success:
        p = _penalty_fallback(x, M, np.vstack([pooled, pooled]))
        l = _loglik(x, p)
        if (M @ (p[0] - p[1])).min() >= -1e-8 and l > best_l:
            best_p, best_l = p, l

    deltas = M @ (best_p[0] - best_p[1])
    active = [r for r in range(M.shape[0]) if deltas[r] <= 1e-6]
    polished = _polish_mle(x, M, best_p, active)
    if polished is not None:
        l = _loglik(x, polished)
        if l >= best_l - 1e-9 and (M @ (polished[0] - polished[1])).min() >= -1e-9:
            best_p, best_l = polished, l
    if not any_success and best_l <= l_pooled + 1e-12:
        # nothing improved on the pooled fit and no optimizer reported success
        raise ConvergenceError(
            "order-restricted likelihood maximization did not converge",
            best=best_p,
        )
    return best_p, best_l


def icx_constrained_mle(table: Table2xC, weights, *, seed: int = 0,
                        n_random_starts: int = 5) -> ProbPair:
    """Maximum likelihood pair subject to all order functionals being >= 0.

    When the empirical proportions already satisfy the restriction they are
    returned unchanged.  Otherwise the convex program is solved from the
    pooled fit, the empirical fit, a blend, and ``n_random_starts`` seeded
    random points, and the winner is Newton-polished on its active set.
    """
    weights = _coerce_weights(weights, table.C)
    _check_rows(table.margins)
    keep, reduced_w = _reduce_margins(table.margins, weights)
    x = table.to_array().astype(np.float64)[:, keep]
    p, _ = _constrained_mle_reduced(x, reduced_w, n_random_starts, seed)
    full = np.zeros((2, table.C))
    full[:, keep] = p
    return ProbPair.from_arrays(full[0], full[1])


class LrtEngine:
    """Likelihood-ratio statistic for every table on one set of margins.

    The pooled null log likelihood depends only on the margins (cell counts
    enter through column totals alone), so it is precomputed once.
    """

    def __init__(self, margins: Margins, weights, *, seed: int = 0,
                 n_random_starts: int = 5):
        weights = _coerce_weights(weights, margins.C)
        _check_rows(margins)
        self.margins = margins
        self.keep, self._weights_r = _reduce_margins(margins, weights)
        self._cols = np.asarray(
            [margins.col_sums[j] for j in self.keep], dtype=np.float64
        )
        pooled = self._cols / self._cols.sum()
        self._l_null = float(self._cols @ np.log(pooled))
        self._seed = seed
        self._n_random_starts = n_random_starts

    def value_detail(self, first_row) -> tuple[float, ProbPair]:
        x1 = np.asarray(first_row, dtype=np.float64)[self.keep]
        x = np.vstack([x1, self._cols - x1])
        p, l_icx = _constrained_mle_reduced(
            x, self._weights_r, self._n_random_starts, self._seed
        )
        t = 2.0 * (l_icx - self._l_null)
        if t < -1e-9:
            raise ConvergenceError(
                f"restricted likelihood fell below the pooled null fit ({t=})",
                best=p,
            )
        full = np.zeros((2, self.margins.C))
        full[:, self.keep] = p
        return max(t, 0.0), ProbPair.from_arrays(full[0], full[1])

    def value(self, first_row) -> float:
        return self.value_detail(first_row)[0]


def lrt_statistic(table: Table2xC, weights, *, seed: int = 0,
                  n_random_starts: int = 5) -> StatisticValue:
    """Twice the gap between the order-restricted and pooled log likelihoods,
    clamped to zero from below."""
    engine = LrtEngine(table.margins, weights, seed=seed,
                       n_random_starts=n_random_starts)
    value, pair = engine.value_detail(table.first_row)
    return StatisticValue(value=value, mle=pair)


def mle_kkt_residual(table: Table2xC, weights, pair: ProbPair) -> float:
    """Worst KKT violation of ``pair`` for the order-restricted MLE problem.

    Multipliers for the row-sum equalities and the active order constraints
    are fitted by least squares on the interior-cell stationarity conditions;
    the returned value is the largest of the stationarity residual, primal
    violations, a negative active multiplier, and any boundary-cell
    optimality violation.
    """
    weights = _coerce_weights(weights, table.C)
    keep, reduced_w = _reduce_margins(table.margins, weights)
    x = table.to_array().astype(np.float64)[:, keep]
    p = np.vstack(pair.as_arrays())[:, keep]
    C = x.shape[1]
    if C == 1:
        return float(np.abs(p.sum(axis=1) - 1.0).max())
    M = _weight_pattern(reduced_w)
    deltas = M @ (p[0] - p[1])
    primal = max(0.0, float(-deltas.min()))
    primal = max(primal, float(np.abs(p.sum(axis=1) - 1.0).max()))
    if np.any((x > 0) & (p <= 0)):
        return np.inf
    active = [r for r in range(M.shape[0]) if deltas[r] <= 1e-7]
    zero = (p <= 1e-9)
    interior = np.flatnonzero(~zero.ravel())
    G = np.hstack([M[active], -M[active]]) if active else np.zeros((0, 2 * C))
    row_of = np.repeat([0, 1], C)
    grad = x.ravel()[interior] / p.ravel()[interior]
    while True:
        cols = [np.asarray(row_of[interior] == i, dtype=np.float64)
                for i in range(2)]
        A = np.column_stack(cols + [-G[k, interior] for k in range(len(active))]) \
            if active else np.column_stack(cols)
        theta, *_ = np.linalg.lstsq(A, grad, rcond=None)
        kappa, pi = theta[:2], theta[2:]
        if pi.size == 0 or pi.min() >= -1e-9:
            break
        active.pop(int(np.argmin(pi)))
        G = np.hstack([M[active], -M[active]]) if active else np.zeros((0, 2 * C))
    stationarity = float(np.abs(A @ theta - grad).max()) if interior.size else 0.0
    boundary = 0.0
    sig = G.T @ pi if len(active) else np.zeros(2 * C)
    for ij in np.flatnonzero(zero.ravel()):
        if x.ravel()[ij] == 0:
            boundary = max(boundary, float(sig[ij] - kappa[row_of[ij]]))
    neg_mult = max(0.0, float(-pi.min())) if pi.size else 0.0
    return max(primal, stationarity, boundary, neg_mult)
