"""
Dense two-phase primal simplex with Bland's rule.

    minimize    c . x
    subject to  A_ub x <= b_ub
                A_eq x == b_eq
                x >= 0
"""
import logging
from dataclasses import dataclass, field

import numpy as np

import config
from errors import IterationLimit, LPInfeasible, LPUnbounded, SolverError

logger = logging.getLogger(__name__)

OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded"
MAX_ITER = 50_000


def _block(A, b, n):
    A = np.zeros((0, n)) if A is None else np.atleast_2d(np.asarray(A, dtype=float))
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float).reshape(-1)
    if A.shape[0] == 0:
        A = np.zeros((0, n))
    return A, b


@dataclass(frozen=True, eq=False)
class LinearProgram:
    variables: tuple
    c: np.ndarray
    A_ub: np.ndarray = None
    b_ub: np.ndarray = None
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    ub_labels: tuple = ()
    eq_labels: tuple = ()
    name: str = "lp"
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        n = len(self.variables)
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if c.shape != (n,):
            raise ValueError(f"objective has {c.size} coefficients for {n} variables")
        A_ub, b_ub = _block(self.A_ub, self.b_ub, n)
        A_eq, b_eq = _block(self.A_eq, self.b_eq, n)
        for label, A, b in (("inequality", A_ub, b_ub), ("equality", A_eq, b_eq)):
            if A.shape[1] != n or A.shape[0] != b.size:
                raise ValueError(f"{label} block shape {A.shape} does not fit {n} variables / {b.size} bounds")
        for attr, value in (("c", c), ("A_ub", A_ub), ("b_ub", b_ub), ("A_eq", A_eq), ("b_eq", b_eq)):
            object.__setattr__(self, attr, value)

    @property
    def n_variables(self):
        return len(self.variables)

    @property
    def n_inequalities(self):
        return self.A_ub.shape[0]

    @property
    def n_equalities(self):
        return self.A_eq.shape[0]


@dataclass(frozen=True, eq=False)
class LPSolution:
    status: str
    objective: float = None
    x: np.ndarray = None
    iterations: int = 0
    ub_duals: np.ndarray = field(default=None, repr=False)   # multiplier >= 0 per inequality row

    def raise_for_status(self):
        if self.status == INFEASIBLE:
            raise LPInfeasible("linear program is infeasible")
        if self.status == UNBOUNDED:
            raise LPUnbounded("linear program is unbounded")
        return self


class _Tableau:
    """Constraint rows over [structural | slack | artificial] columns, RHS last; cost row at the bottom."""

    def __init__(self, lp, pivot_tol):
        n, m_ub, m_eq = lp.n_variables, lp.n_inequalities, lp.n_equalities
        m = m_ub + m_eq
        A = np.zeros((m, n + m_ub))
        A[:m_ub, :n] = lp.A_ub
        A[:m_ub, n:] = np.eye(m_ub)
        A[m_ub:, :n] = lp.A_eq
        b = np.concatenate([lp.b_ub, lp.b_eq])

        flip = b < 0
        A[flip] *= -1
        b[flip] *= -1
        # a slack can start in the basis only on an unflipped <= row
        needs_art = np.ones(m, dtype=bool)
        needs_art[:m_ub] = flip[:m_ub]
        art_rows = np.nonzero(needs_art)[0]

        width = n + m_ub + len(art_rows)
        self.T = np.zeros((m + 1, width + 1))
        self.T[:m, :n + m_ub] = A
        self.T[:m, -1] = b
        self.basis = np.empty(m, dtype=int)
        self.basis[:m_ub] = n + np.arange(m_ub)
        for k, r in enumerate(art_rows):
            col = n + m_ub + k
            self.T[r, col] = 1.0
            self.basis[r] = col
        # original rows; the tableau is rebuilt from these to shed rounding error
        self.T0 = self.T[:m].copy()
        self.costs = np.zeros(width)
        self.n, self.n_struct = n, n + m_ub
        self.pivot_tol = pivot_tol
        self.iterations = 0

    @property
    def m(self):
        return self.T.shape[0] - 1

    @property
    def width(self):
        return self.T.shape[1] - 1

    def pivot(self, r, j):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        rows = np.nonzero(col)[0]
        if rows.size:
            T[rows] -= np.outer(col[rows], T[r])
        T[np.abs(T) < 1e-14] = 0.0
        self.basis[r] = j

    def refactor(self):
        """Recompute B^-1 [A | b] from the original rows for the current basis."""
        m = self.m
        try:
            rows = np.linalg.solve(self.T0[:, self.basis], self.T0)
        except np.linalg.LinAlgError:
            logger.debug("Basis matrix singular, keeping the updated tableau")
            return False
        rows[np.abs(rows) < 1e-14] = 0.0
        rows[:, self.basis] = np.eye(m)
        rhs = rows[:, -1]
        rhs[(rhs < 0) & (rhs > -1e-9)] = 0.0
        self.T[:m] = rows
        self.set_costs(self.costs)
        return True

    def run(self, allowed, max_iter):
        """Bland: lowest-index improving column; ratio ties go to the lowest basic index."""
        m = self.m
        stale = 0
        while True:
            T = self.T
            reduced = T[m, :self.width]
            improving = np.nonzero((reduced < -self.pivot_tol) & allowed)[0]
            if improving.size == 0:
                if stale and self.refactor():
                    stale = 0
                    continue
                return OPTIMAL
            j = improving[0]
            col = T[:m, j]
            threshold = max(self.pivot_tol, config.RELATIVE_PIVOT_TOL * np.abs(col).max())
            positive = np.nonzero(col > threshold)[0]
            if positive.size == 0:
                return UNBOUNDED
            ratios = T[positive, -1] / col[positive]
            best = ratios.min()
            tied = positive[ratios <= best + 1e-12]
            r = tied[np.argmin(self.basis[tied])]
            self.pivot(r, j)
            self.iterations += 1
            stale += 1
            if self.iterations >= max_iter:
                raise IterationLimit(f"simplex stopped after {self.iterations} pivots")
            if stale >= max(config.REFACTOR_EVERY, m) and self.refactor():
                stale = 0

    def set_costs(self, costs):
        T, m = self.T, self.m
        self.costs = costs
        T[m] = 0.0
        T[m, :costs.size] = costs
        for r in range(m):
            cb = T[m, self.basis[r]]
            if cb:
                T[m] -= cb * T[r]


def _worst_violation(lp, x):
    gaps = [0.0]
    if lp.n_inequalities:
        gaps.append(float(np.max(lp.A_ub @ x - lp.b_ub)))
    if lp.n_equalities:
        gaps.append(float(np.max(np.abs(lp.A_eq @ x - lp.b_eq))))
    return max(gaps)


def solve_lp(lp, max_iter=MAX_ITER, pivot_tol=config.PIVOT_TOL, feas_tol=config.FEASIBILITY_TOL):
    tab = _Tableau(lp, pivot_tol)
    logger.debug(f"Simplex on {lp.name}: {tab.m} rows x {tab.width} columns")

    # 1. PHASE ONE: minimise the sum of artificials
    n_struct = tab.n_struct
    if tab.width > n_struct:
        phase1 = np.zeros(tab.width)
        phase1[n_struct:] = 1.0
        tab.set_costs(phase1)
        tab.run(np.ones(tab.width, dtype=bool), max_iter)
        if -tab.T[tab.m, -1] > feas_tol:
            logger.debug(f"Phase one ended at {-tab.T[tab.m, -1]:.3g}: infeasible")
            return LPSolution(INFEASIBLE, iterations=tab.iterations)

        # 2. DRIVE OUT ARTIFICIALS, dropping redundant rows
        redundant = []
        for r in range(tab.m):
            if tab.basis[r] < n_struct:
                continue
            candidates = np.nonzero(np.abs(tab.T[r, :n_struct]) > pivot_tol)[0]
            if candidates.size:
                tab.pivot(r, candidates[0])
            else:
                redundant.append(r)
        keep = np.setdiff1d(np.arange(tab.m), redundant)
        if redundant:
            tab.T = np.vstack([tab.T[keep], tab.T[-1:]])
            tab.basis = tab.basis[keep]
            logger.debug(f"Dropped {len(redundant)} redundant equality rows")
        tab.T = np.hstack([tab.T[:, :n_struct], tab.T[:, -1:]])
        tab.T0 = np.hstack([tab.T0[keep][:, :n_struct], tab.T0[keep][:, -1:]])
        tab.T[:tab.m, -1] = np.clip(tab.T[:tab.m, -1], 0.0, None)

    # 3. PHASE TWO
    costs = np.zeros(n_struct)
    costs[:tab.n] = lp.c
    tab.set_costs(costs)
    status = tab.run(np.ones(tab.width, dtype=bool), max_iter)
    if status == UNBOUNDED:
        return LPSolution(UNBOUNDED, iterations=tab.iterations)

    x = np.zeros(n_struct)
    x[tab.basis] = tab.T[:tab.m, -1]
    x = x[:tab.n]
    scale = 1.0 + max(np.abs(lp.b_ub).max(initial=0.0), np.abs(lp.b_eq).max(initial=0.0))
    worst = _worst_violation(lp, x)
    if worst > feas_tol * scale:
        raise SolverError(f"simplex on {lp.name} ended {worst:.3g} outside the constraints")
    duals = tab.T[tab.m, tab.n:n_struct].copy()
    logger.debug(f"Simplex on {lp.name} optimal after {tab.iterations} pivots")
    return LPSolution(OPTIMAL, float(lp.c @ x), x, tab.iterations, duals)


# --- EXPORT ---

def _term(coef, var, first):
    sign = "-" if coef < 0 else ("" if first else "+")
    mag = abs(coef)
    text = var if mag == 1 else f"{mag:.12g} {var}"
    return f"{sign} {text}".strip() if first else f"{sign} {text}"


def _row(coefs):
    nz = np.nonzero(coefs)[0]
    if nz.size == 0:
        return "0 x0"
    return " ".join(_term(coefs[j], f"x{j}", k == 0) for k, j in enumerate(nz))


def export_lp(lp):
    """CPLEX LP text; variables are x0..x{n-1}, their meaning listed in the header comments."""
    lines = [f"\\ {lp.name}"]
    lines += [f"\\ x{j} = {label}" for j, label in enumerate(lp.variables)]
    lines += ["Minimize", f" obj: {_row(lp.c)}", "Subject To"]
    for i in range(lp.n_inequalities):
        lines.append(f" u{i}: {_row(lp.A_ub[i])} <= {lp.b_ub[i]:.12g}")
    for i in range(lp.n_equalities):
        lines.append(f" e{i}: {_row(lp.A_eq[i])} = {lp.b_eq[i]:.12g}")
    lines.append("Bounds")
    lines += [f" x{j} >= 0" for j in range(lp.n_variables)]
    lines.append("End")
    return "\n".join(lines) + "\n"
