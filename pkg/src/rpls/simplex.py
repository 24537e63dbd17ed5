"""Dense two-phase tableau simplex for small LPs.

Solves ``min c.x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  x >= 0``.
Phase 1 runs once per constraint system; :meth:`DenseSimplex.minimize` then
re-prices that feasible basis for each new objective, which is what the
dominance module needs (one constraint set, many objectives).
"""

import numpy as np

TOL = 1e-9


class LPError(RuntimeError):
    pass


class InfeasibleError(LPError):
    pass


class UnboundedError(LPError):
    pass


def _pivot(T, r, c):
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _run(T, basis, n_cols, max_iter, stall_limit=50):
    """Minimise the objective stored in the last row of ``T`` (reduced costs, -value)."""
    m = T.shape[0] - 1
    bland = False
    stall = 0
    for _ in range(max_iter):
        reduced = T[-1, :n_cols]
        if bland:
            cand = np.flatnonzero(reduced < -TOL)
            if cand.size == 0:
                return
            c = int(cand[0])
        else:
            c = int(np.argmin(reduced))
            if reduced[c] >= -TOL:
                return
        col = T[:m, c]
        rhs = T[:m, -1]
        pos = col > TOL
        if not pos.any():
            raise UnboundedError("LP objective is unbounded below")
        ratios = np.full(m, np.inf)
        ratios[pos] = rhs[pos] / col[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + TOL)
        r = int(ties[np.argmin([basis[t] for t in ties])])
        if best <= TOL:
            stall += 1
            if stall >= stall_limit:
                bland = True
        else:
            stall = 0
        _pivot(T, r, c)
        basis[r] = c
    raise LPError("simplex iteration limit reached")


class DenseSimplex:
    """Constraint system solved to a feasible basis once, reused across objectives."""

    def __init__(self, A_ub=None, b_ub=None, A_eq=None, b_eq=None, n_vars=None, max_iter=20000):
        blocks = [np.atleast_2d(A) for A in (A_ub, A_eq) if A is not None and np.size(A)]
        if n_vars is None:
            if not blocks:
                raise ValueError("n_vars required when there are no constraints")
            n_vars = blocks[0].shape[1]
        A_ub = np.zeros((0, n_vars)) if A_ub is None or not np.size(A_ub) else np.atleast_2d(np.asarray(A_ub, float))
        A_eq = np.zeros((0, n_vars)) if A_eq is None or not np.size(A_eq) else np.atleast_2d(np.asarray(A_eq, float))
        b_ub = np.asarray(b_ub if b_ub is not None else [], float).ravel()
        b_eq = np.asarray(b_eq if b_eq is not None else [], float).ravel()
        self.n = n_vars
        self.max_iter = max_iter
        m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
        m = m_ub + m_eq
        # Columns: structural | slack/surplus (one per inequality) | artificial (as needed).
        rows = np.vstack([A_ub, A_eq])
        b = np.concatenate([b_ub, b_eq])
        flip = b < 0
        rows[flip] *= -1
        b = np.where(flip, -b, b)
        slack = np.zeros((m, m_ub))
        for i in range(m_ub):
            slack[i, i] = -1.0 if flip[i] else 1.0
        need_art = [i for i in range(m) if not (i < m_ub and not flip[i])]
        art = np.zeros((m, len(need_art)))
        for a, i in enumerate(need_art):
            art[i, a] = 1.0
        n_struct = n_vars + m_ub
        n_cols = n_struct + len(need_art)
        T = np.zeros((m + 1, n_cols + 1))
        T[:m, :n_vars] = rows
        T[:m, n_vars:n_struct] = slack
        T[:m, n_struct:n_cols] = art
        T[:m, -1] = b
        basis = [0] * m
        for i in range(m_ub):
            if not flip[i]:
                basis[i] = n_vars + i
        for a, i in enumerate(need_art):
            basis[i] = n_struct + a
        if need_art:
            T[-1, n_struct:n_cols] = 1.0
            for a, i in enumerate(need_art):
                T[-1] -= T[i]
            _run(T, basis, n_cols, max_iter)
            if -T[-1, -1] > 1e-7 * max(1.0, np.abs(b).max(initial=0.0)):
                raise InfeasibleError("LP constraints are infeasible")
            keep = []
            for r in range(m):
                if basis[r] >= n_struct:
                    nz = np.flatnonzero(np.abs(T[r, :n_struct]) > TOL)
                    if nz.size:
                        _pivot(T, r, int(nz[0]))
                        basis[r] = int(nz[0])
                        keep.append(r)
                else:
                    keep.append(r)
            T = np.column_stack([T[keep + [m], :n_struct], T[keep + [m], -1]])
            basis = [basis[r] for r in keep]
        else:
            T = np.column_stack([T[:, :n_struct], T[:, -1]])
        T[-1] = 0.0
        self._T = T
        self._basis = basis
        self._n_struct = n_struct
        self._flip = flip[:m_ub]
        self.slack_costs = None

    def minimize(self, c):
        """Return ``(value, x)`` minimising ``c.x`` over the stored constraint set."""
        c = np.asarray(c, dtype=float)
        if c.shape != (self.n,):
            raise ValueError(f"objective has shape {c.shape}, expected ({self.n},)")
        T = self._T.copy()
        basis = list(self._basis)
        cost = np.zeros(self._n_struct)
        cost[: self.n] = c
        m = T.shape[0] - 1
        T[-1, : self._n_struct] = cost
        T[-1, -1] = 0.0
        for r in range(m):
            if cost[basis[r]] != 0.0:
                T[-1] -= cost[basis[r]] * T[r]
        _run(T, basis, self._n_struct, self.max_iter)
        # reduced costs of the inequality slacks: the optimal multipliers, one per inequality
        self.slack_costs = T[-1, self.n : self._n_struct].copy()
        x = np.zeros(self._n_struct)
        for r in range(m):
            x[basis[r]] = T[r, -1]
        return float(c @ x[: self.n]), x[: self.n]


def minimize_dual(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, max_iter=20000):
    """Solve ``min c.x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  x >= 0`` through its dual.

    The dual has one inequality per primal variable, so a problem with a few
    dozen variables and thousands of constraints becomes a small tableau.
    Returns ``(value, x)`` with ``x`` read off the dual's slack reduced costs.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None or not np.size(A_ub) else np.atleast_2d(np.asarray(A_ub, float))
    A_eq = np.zeros((0, n)) if A_eq is None or not np.size(A_eq) else np.atleast_2d(np.asarray(A_eq, float))
    b_ub = np.asarray(b_ub if b_ub is not None else [], float).ravel()
    b_eq = np.asarray(b_eq if b_eq is not None else [], float).ravel()
    # dual: min b_ub.lam - b_eq.(zp - zm)  s.t.  -A_ub' lam + A_eq' (zp - zm) <= c,  lam, zp, zm >= 0
    M = np.hstack([-A_ub.T, A_eq.T, -A_eq.T])
    g = np.concatenate([b_ub, -b_eq, b_eq])
    try:
        lp = DenseSimplex(M, c, n_vars=M.shape[1], max_iter=max_iter)
        value, _ = lp.minimize(g)
    except UnboundedError:
        raise InfeasibleError("LP constraints are infeasible") from None
    except InfeasibleError:
        raise UnboundedError("LP objective is unbounded below or infeasible") from None
    x = np.maximum(lp.slack_costs, 0.0)
    return -value, x


def linprog_highs(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None):
    """Same problem through scipy's HiGHS; returns ``(value, x)``."""
    from scipy.optimize import linprog

    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status == 2:
        raise InfeasibleError(res.message)
    if res.status == 3:
        raise UnboundedError(res.message)
    if res.status != 0:
        raise LPError(res.message)
    return float(res.fun), res.x
