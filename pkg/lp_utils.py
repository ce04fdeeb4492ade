"""Dense two-phase primal simplex for the small LPs behind the DEA models.

Problems here have tens of rows and columns, so a dense numpy tableau is
enough. Pivoting is deterministic: Dantzig's rule with smallest-index
tie-breaks, switching to Bland's rule after a run of degenerate pivots.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from errors import InternalError, IterationLimitError, ParameterError

RELATIONS = ("<=", "=", ">=")
OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded"


@dataclass(frozen=True)
class LpTolerances:
    pivot: float = 1e-9
    feasibility: float = 1e-8
    optimality: float = 1e-9
    # None -> 10 * (rows + cols)^2
    max_iterations: int = None


@dataclass(frozen=True)
class LinearProgram:
    """max/min c.x subject to A x (<=|=|>=) b and x >= lower.

    lower defaults to 0 for every variable; -inf marks a free variable.
    """
    c: np.ndarray
    A: np.ndarray
    relations: tuple
    b: np.ndarray
    sense: str = "max"
    lower: np.ndarray = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        A = np.asarray(self.A, dtype=float)
        if A.ndim == 1:
            A = A.reshape(1, -1) if A.size else np.zeros((0, len(c)))
        b = np.asarray(self.b, dtype=float).ravel()
        lower = np.zeros(len(c)) if self.lower is None else np.asarray(self.lower, dtype=float).ravel()
        relations = tuple(self.relations)

        if self.sense not in ("max", "min"):
            raise ParameterError(f"Objective sense must be 'max' or 'min', got {self.sense!r}")
        if A.shape != (len(b), len(c)):
            raise ParameterError(f"Constraint matrix shape {A.shape} does not match {len(b)} rows x {len(c)} vars")
        if len(relations) != len(b):
            raise ParameterError(f"{len(relations)} relations for {len(b)} rows")
        bad = [r for r in relations if r not in RELATIONS]
        if bad:
            raise ParameterError(f"Unknown relation(s) {bad}")
        if len(lower) != len(c):
            raise ParameterError(f"{len(lower)} lower bounds for {len(c)} variables")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ParameterError("LP data must be finite")
        if np.any(np.isnan(lower)) or np.any(lower == np.inf):
            raise ParameterError("Lower bounds must be finite or -inf")

        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "relations", relations)

    @property
    def n_rows(self):
        return self.A.shape[0]

    @property
    def n_vars(self):
        return len(self.c)

    def max_violation(self, x):
        """Largest amount by which x breaks a constraint or bound."""
        x = np.asarray(x, dtype=float)
        worst = float(np.max(np.maximum(self.lower - x, 0.0), initial=0.0))
        lhs = self.A @ x
        for value, rel, rhs in zip(lhs, self.relations, self.b):
            if rel == "<=":
                worst = max(worst, value - rhs)
            elif rel == ">=":
                worst = max(worst, rhs - value)
            else:
                worst = max(worst, abs(value - rhs))
        return worst


@dataclass(frozen=True)
class LpSolution:
    status: str
    objective: float = float("nan")
    x: np.ndarray = field(default=None, compare=False)
    iterations: int = 0

    @property
    def optimal(self):
        return self.status == OPTIMAL


class _Tableau:
    """Working tableau in standard form: max c'x', A'x' = b' >= 0, x' >= 0."""

    def __init__(self, T, basis, tol, max_iterations, verbose):
        self.T = T
        self.basis = basis
        self.tol = tol
        self.max_iterations = max_iterations
        self.verbose = verbose
        self.iterations = 0

    def pivot(self, row, col):
        T = self.T
        T[row] /= T[row, col]
        factors = T[:, col].copy()
        factors[row] = 0.0
        T -= np.outer(factors, T[row])
        self.basis[row] = col
        self.iterations += 1

    def _entering(self, n_cols, bland):
        reduced = self.T[-1, :n_cols]
        candidates = np.flatnonzero(reduced < -self.tol.optimality)
        if candidates.size == 0:
            return -1
        if bland:
            return int(candidates[0])
        # argmin returns the first (smallest) index among equal minima
        return int(candidates[np.argmin(reduced[candidates])])

    def _leaving(self, col):
        T = self.T
        column = T[:-1, col]
        rows = np.flatnonzero(column > self.tol.pivot)
        if rows.size == 0:
            return -1
        ratios = T[rows, -1] / column[rows]
        best = ratios.min()
        tied = rows[ratios <= best + self.tol.feasibility]
        # smallest basic-variable index among ties (Bland)
        return int(min(tied, key=lambda r: self.basis[r]))

    def run(self, n_cols, phase):
        m = self.T.shape[0] - 1
        degenerate_limit = 2 * (m + n_cols)
        degenerate_run = 0
        bland = False
        while True:
            if self.iterations >= self.max_iterations:
                raise IterationLimitError(
                    f"Simplex phase {phase} hit the iteration cap ({self.max_iterations})")
            col = self._entering(n_cols, bland)
            if col < 0:
                return OPTIMAL
            row = self._leaving(col)
            if row < 0:
                return UNBOUNDED
            step = self.T[row, -1] / self.T[row, col]
            if step <= self.tol.feasibility:
                degenerate_run += 1
                if not bland and degenerate_run >= degenerate_limit:
                    logging.debug(f"Phase {phase}: {degenerate_run} degenerate pivots, switching to Bland's rule")
                    bland = True
            else:
                degenerate_run = 0
            self.pivot(row, col)
            if self.verbose:
                logging.debug(f"Phase {phase} iteration {self.iterations}: pivot row {row} col {col}\n{self.T}")


def _standard_form(lp):
    """Shift bounds, split free variables, make the objective a maximization.

    Returns (c, A, b, relations, recover) where recover maps a
    standard-form solution back to the original variables.
    """
    lower = lp.lower
    free = np.isneginf(lower)
    shift = np.where(free, 0.0, lower)

    b = lp.b - lp.A @ shift
    A = np.hstack([lp.A, -lp.A[:, free]])
    c = np.concatenate([lp.c, -lp.c[free]])
    if lp.sense == "min":
        c = -c
    free_idx = np.flatnonzero(free)
    n = lp.n_vars

    def recover(xs):
        x = xs[:n] + shift
        x[free_idx] -= xs[n:]
        return x

    return c, A, b, list(lp.relations), recover


def solve(lp, tol=None, verbose=False):
    """Solve a LinearProgram with the two-phase primal simplex method.

    Returns:
        LpSolution; infeasible and unbounded problems are reported via status.

    Raises:
        IterationLimitError: the pivot count reached the cap.
    """
    tol = tol or LpTolerances()
    c, A, b, relations, recover = _standard_form(lp)
    m, n = A.shape

    # b >= 0 by flipping rows
    A = A.copy()
    for i in range(m):
        if b[i] < 0:
            A[i] *= -1
            b[i] *= -1
            if relations[i] == "<=":
                relations[i] = ">="
            elif relations[i] == ">=":
                relations[i] = "<="

    n_slack = sum(1 for r in relations if r != "=")
    n_art = sum(1 for r in relations if r != "<=")
    width = n + n_slack + n_art
    T = np.zeros((m + 1, width + 1))
    T[:m, :n] = A
    T[:m, -1] = b
    basis = [0] * m
    s_col, a_col = n, n + n_slack
    artificial_rows = []
    for i, rel in enumerate(relations):
        if rel == "<=":
            T[i, s_col] = 1.0
            basis[i] = s_col
            s_col += 1
        else:
            if rel == ">=":
                T[i, s_col] = -1.0
                s_col += 1
            T[i, a_col] = 1.0
            basis[i] = a_col
            artificial_rows.append(i)
            a_col += 1

    max_iterations = tol.max_iterations or 10 * (lp.n_rows + lp.n_vars) ** 2
    tab = _Tableau(T, basis, tol, max_iterations, verbose)

    # Phase 1: maximize -sum(artificials)
    if n_art:
        T[-1, n + n_slack:width] = 1.0
        for i in artificial_rows:
            T[-1] -= T[i]
        status = tab.run(width, phase=1)
        if status != OPTIMAL or T[-1, -1] < -tol.feasibility:
            logging.debug(f"LP infeasible (phase 1 value {T[-1, -1]:.3g})")
            return LpSolution(status=INFEASIBLE, iterations=tab.iterations)

        # Drive remaining zero-valued artificials out of the basis
        keep_rows = []
        for i in range(m):
            if tab.basis[i] >= n + n_slack:
                candidates = np.flatnonzero(np.abs(T[i, :n + n_slack]) > tol.pivot)
                if candidates.size == 0:
                    # redundant equality
                    continue
                tab.pivot(i, int(candidates[0]))
            keep_rows.append(i)
        T = np.vstack([T[keep_rows], T[-1:]])
        T = np.hstack([T[:, :n + n_slack], T[:, -1:]])
        tab.T = T
        tab.basis = [tab.basis[i] for i in keep_rows]

    # Phase 2
    width = n + n_slack
    T = tab.T
    T[-1] = 0.0
    T[-1, :n] = -c
    for i, var in enumerate(tab.basis):
        if T[-1, var] != 0.0:
            T[-1] -= T[-1, var] * T[i]
    status = tab.run(width, phase=2)
    if status == UNBOUNDED:
        return LpSolution(status=UNBOUNDED, iterations=tab.iterations)

    xs = np.zeros(width)
    for i, var in enumerate(tab.basis):
        xs[var] = T[i, -1]
    x = recover(xs[:n])
    objective = float(lp.c @ x)
    violation = lp.max_violation(x)
    if violation > tol.feasibility * max(1.0, float(np.max(np.abs(lp.b), initial=0.0))):
        logging.warning(f"LP solution violates constraints by {violation:.3g}")
        raise InternalError(f"Optimal basis violates constraints by {violation:.3g}")
    return LpSolution(status=OPTIMAL, objective=objective, x=x, iterations=tab.iterations)
