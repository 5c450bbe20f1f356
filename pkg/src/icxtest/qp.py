"""Strictly convex diagonal quadratic programming over polyhedra.

Minimizes ``sum_k w_k u_k**2`` subject to ``E u = e`` and ``F u >= f`` with a
primal active-set method.  Problems of this shape arise when projecting a
table onto the complement of the practical-direction cone; they are tiny
(a few dozen variables at most) but must be solved exactly and
deterministically, so everything here uses dense factorizations and
index-based tie-breaking rather than a general-purpose solver.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, FeasibilityError, IcxError

__all__ = ["QpProblem", "QpSolution", "solve_qp", "brute_force_qp", "kkt_residuals"]

logger = logging.getLogger(__name__)

_BRUTE_FORCE_LIMIT = 20


def _readonly(a, dtype=np.float64) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class QpProblem:
    """``min sum w_k u_k^2  s.t.  eq_matrix u = eq_rhs, ineq_matrix u >= ineq_rhs``."""

    diag_weights: np.ndarray
    eq_matrix: np.ndarray
    eq_rhs: np.ndarray
    ineq_matrix: np.ndarray
    ineq_rhs: np.ndarray

    def __post_init__(self):
        w = _readonly(self.diag_weights)
        E = _readonly(np.atleast_2d(self.eq_matrix))
        e = _readonly(self.eq_rhs)
        F = _readonly(np.atleast_2d(self.ineq_matrix))
        f = _readonly(self.ineq_rhs)
        n = w.shape[0]
        if w.ndim != 1 or n == 0:
            raise ValueError("diag_weights must be a nonempty vector")
        if w.min() <= 0 or not np.all(np.isfinite(w)):
            raise ValueError("diag_weights must be strictly positive and finite")
        if E.size == 0:
            E = np.zeros((0, n))
        if F.size == 0:
            F = np.zeros((0, n))
        if E.shape[1] != n or F.shape[1] != n:
            raise ValueError("constraint matrices must have one column per variable")
        if e.shape != (E.shape[0],) or f.shape != (F.shape[0],):
            raise ValueError("constraint right-hand sides do not match matrix rows")
        object.__setattr__(self, "diag_weights", w)
        object.__setattr__(self, "eq_matrix", _readonly(E))
        object.__setattr__(self, "eq_rhs", e)
        object.__setattr__(self, "ineq_matrix", _readonly(F))
        object.__setattr__(self, "ineq_rhs", f)

    @property
    def n(self) -> int:
        return self.diag_weights.shape[0]

    def objective(self, u) -> float:
        u = np.asarray(u, dtype=np.float64)
        return float(self.diag_weights @ (u * u))


@dataclass(frozen=True, eq=False)
class QpSolution:
    """Minimizer with Lagrange multipliers in the convention
    ``2 diag(w) u = eq_matrix' mu + ineq_matrix' pi``, ``pi >= 0``."""

    minimizer: np.ndarray
    objective_value: float
    active_set: tuple[int, ...]
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray

    def __post_init__(self):
        self.minimizer.setflags(write=False)
        self.eq_multipliers.setflags(write=False)
        self.ineq_multipliers.setflags(write=False)


def _solve_equality_qp(w, A, b, pivot_rtol=1e-12):
    """Minimize ``u' diag(w) u`` subject to ``A u = b``.

    Linearly dependent rows of ``A`` are detected with a pivoted QR of the
    transpose and dropped; dropped rows keep a zero multiplier.  Returns
    ``(u, multipliers, residual)`` where ``residual`` is the worst violation
    of the original rows (nonzero when the dropped rows were inconsistent).
    """
    n = w.shape[0]
    m = A.shape[0]
    if m == 0:
        return np.zeros(n), np.zeros(0), 0.0
    _, R, piv = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = 0
    if diag.size and diag[0] > 0.0:
        rank = int(np.sum(diag > pivot_rtol * diag[0]))
    mult = np.zeros(m)
    if rank == 0:
        u = np.zeros(n)
        return u, mult, float(np.abs(A @ u - b).max())
    keep = np.sort(piv[:rank])
    Ak = A[keep]
    scaled = Ak.T / w[:, None]          # W^{-1} A_k'
    S = Ak @ scaled                     # A_k W^{-1} A_k', positive definite
    mk = np.linalg.solve(S, 2.0 * b[keep])
    u = scaled @ (0.5 * mk)
    mult[keep] = mk
    return u, mult, float(np.abs(A @ u - b).max())


def solve_qp(problem: QpProblem, start, *, feas_tol: float = 1e-9,
             max_iter: int | None = None) -> QpSolution:
    """Primal active-set solve from a feasible starting point.

    The working set is seeded with every inequality tight at ``start``.  Each
    iteration solves the equality-constrained subproblem on the working set;
    at a subproblem optimum the most negative multiplier leaves the set
    (lowest index on ties), otherwise the step is cut at the first blocking
    inequality, which joins the set.  Deterministic throughout.
    """
    w = problem.diag_weights
    E, e = problem.eq_matrix, problem.eq_rhs
    F, f = problem.ineq_matrix, problem.ineq_rhs
    me, mi = E.shape[0], F.shape[0]
    u = np.array(start, dtype=np.float64)
    if u.shape != (problem.n,):
        raise ValueError(f"start must have length {problem.n}")

    if me and np.abs(E @ u - e).max() > feas_tol:
        raise FeasibilityError("start violates an equality constraint")
    slack = F @ u - f if mi else np.zeros(0)
    if mi and slack.min() < -feas_tol:
        raise FeasibilityError("start violates an inequality constraint")

    working = slack <= feas_tol if mi else np.zeros(0, dtype=bool)
    cap = max_iter if max_iter is not None else 100 * problem.n

    for _ in range(cap):
        idx = np.flatnonzero(working)
        A = np.vstack([E, F[idx]]) if idx.size else E
        b = np.concatenate([e, f[idx]]) if idx.size else e
        u_new, mult, resid = _solve_equality_qp(w, A, b)
        if resid > 1e-7 * max(1.0, float(np.abs(b).max()) if b.size else 1.0):
            raise ConvergenceError(
                "working-set constraints became inconsistent", best=u
            )
        if np.abs(u_new - u).max() <= 1e-11 * max(1.0, np.abs(u).max()):
            pi_work = mult[me:]
            if pi_work.size == 0 or pi_work.min() >= -feas_tol:
                eq_mult = mult[:me]
                ineq_mult = np.zeros(mi)
                ineq_mult[idx] = pi_work
                return _finish(problem, u_new, eq_mult, ineq_mult, feas_tol)
            worst = int(idx[int(np.argmin(pi_work))])
            working[worst] = False
            u = u_new
            continue
        step = u_new - u
        alpha = 1.0
        blocker = -1
        if mi:
            rates = F @ step
            cur = F @ u - f
            for i in range(mi):
                if working[i] or rates[i] >= -1e-12:
                    continue
                bound = max(cur[i], 0.0) / (-rates[i])
                if bound < alpha:
                    alpha = bound
                    blocker = i
        u = u + alpha * step
        if blocker >= 0:
            working[blocker] = True
    raise ConvergenceError(f"no convergence within {cap} iterations", best=u)


def _finish(problem, u, eq_mult, ineq_mult, feas_tol) -> QpSolution:
    res = kkt_residuals(problem, u, eq_mult, ineq_mult)
    scale = max(1.0, float(np.abs(u).max()))
    if (res["stationarity"] > 1e-8 * scale or res["primal_eq"] > 1e-8 * scale
            or res["primal_ineq"] > 1e-8 * scale):
        raise ConvergenceError(f"KKT conditions violated at the endpoint: {res}",
                               best=u)
    tight = tuple(
        int(i)
        for i in np.flatnonzero(
            problem.ineq_matrix @ u - problem.ineq_rhs <= feas_tol
        )
    ) if problem.ineq_matrix.shape[0] else ()
    return QpSolution(u, problem.objective(u), tight, eq_mult, ineq_mult)


def kkt_residuals(problem: QpProblem, u, eq_mult, ineq_mult) -> dict[str, float]:
    """Stationarity, feasibility, and complementarity residuals at ``u``."""
    u = np.asarray(u, dtype=np.float64)
    E, F = problem.eq_matrix, problem.ineq_matrix
    grad = 2.0 * problem.diag_weights * u
    if E.shape[0]:
        grad = grad - E.T @ np.asarray(eq_mult, dtype=np.float64)
    slack = np.zeros(0)
    if F.shape[0]:
        pi = np.asarray(ineq_mult, dtype=np.float64)
        grad = grad - F.T @ pi
        slack = F @ u - problem.ineq_rhs
    return {
        "stationarity": float(np.abs(grad).max()),
        "primal_eq": float(np.abs(E @ u - problem.eq_rhs).max()) if E.shape[0] else 0.0,
        "primal_ineq": float(max(0.0, -slack.min())) if slack.size else 0.0,
        "min_multiplier": float(ineq_mult.min()) if F.shape[0] else 0.0,
        "comp_slack": float(np.abs(slack * ineq_mult).max()) if slack.size else 0.0,
    }


def brute_force_qp(problem: QpProblem, *, feas_tol: float = 1e-9) -> QpSolution:
    """Exhaustive reference solve over all active subsets of inequalities.

    Every subset is treated as equalities and its KKT system solved directly;
    candidates that are primal feasible with nonnegative active multipliers
    are kept, and the least objective wins.  Intended as an oracle for small
    problems; refuses more than 20 inequalities.
    """
    w = problem.diag_weights
    E, e = problem.eq_matrix, problem.eq_rhs
    F, f = problem.ineq_matrix, problem.ineq_rhs
    me, mi = E.shape[0], F.shape[0]
    if mi > _BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force supports at most {_BRUTE_FORCE_LIMIT} inequalities")
    best = None
    best_obj = np.inf
    for mask in range(1 << mi):
        subset = [i for i in range(mi) if mask >> i & 1]
        A = np.vstack([E, F[subset]]) if subset else E
        b = np.concatenate([e, f[subset]]) if subset else e
        u, mult, resid = _solve_equality_qp(w, A, b)
        if resid > 1e-7 * max(1.0, float(np.abs(b).max()) if b.size else 1.0):
            logger.debug("subset %s inconsistent (residual %.3e), skipped", subset, resid)
            continue
        if mi and (F @ u - f).min() < -feas_tol:
            continue
        pi_sub = mult[me:]
        if pi_sub.size and pi_sub.min() < -feas_tol:
            continue
        obj = problem.objective(u)
        if obj < best_obj:
            ineq_mult = np.zeros(mi)
            ineq_mult[subset] = pi_sub
            tight = tuple(
                int(i) for i in np.flatnonzero(F @ u - f <= feas_tol)
            ) if mi else ()
            best = QpSolution(u, obj, tight, mult[:me], ineq_mult)
            best_obj = obj
    if best is None:
        raise IcxError("no KKT point found; the problem appears infeasible")
    return best
