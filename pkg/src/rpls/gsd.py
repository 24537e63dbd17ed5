"""Generalized stochastic dominance over multi-dimensional utilities.

A candidate's utility at grid state s is a K-vector.  After per-dimension
min-max scaling to [0, 1] every distinct vector gets a variable phi(v) in
[0, 1]; the admissible phi are monotone for componentwise dominance (R1),
respect the ordering of componentwise differences (R2), and send the bottom
and top envelopes to 0 and 1.  d_pi(a1, a2) is the minimum over admissible
phi of E_pi[phi(u(a1))] - E_pi[phi(u(a2))], one LP per ordered pair.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .simplex import linprog_highs, minimize_dual

DOMINANCE_TOL = 1e-9
MAX_CANDIDATES = 25
MAX_STATES = 41
R2_MODES = ("cover", "full", "none")
SOLVERS = ("auto", "simplex", "highs")
# the dense tableau handles systems up to this many inequality rows; "auto" hands larger ones to HiGHS
DENSE_ROW_LIMIT = 250


class ScaleError(ValueError):
    pass


def _minmax(u):
    lo = u.min(axis=(0, 1), keepdims=True)
    hi = u.max(axis=(0, 1), keepdims=True)
    span = hi - lo
    out = np.where(span > 0, (u - lo) / np.where(span > 0, span, 1.0), 0.0)
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class DominanceInstance:
    """utilities[a, s, k] for candidate a at state s in dimension k; weights[p, s] per prior.

    Raw utilities are rescaled per dimension to [0, 1] on construction.
    """

    utilities: np.ndarray
    weights: np.ndarray = None
    candidates: tuple = ()

    def __post_init__(self):
        u = np.asarray(self.utilities, dtype=float)
        if u.ndim == 2:
            u = u[:, None, :]
        if u.ndim != 3:
            raise ValueError("utilities must have shape (candidates, states, dims)")
        if not np.all(np.isfinite(u)):
            raise ValueError("utilities must be finite")
        n, S, _ = u.shape
        w = np.full((1, S), 1.0 / S) if self.weights is None else np.atleast_2d(np.asarray(self.weights, float))
        if w.shape[1] != S:
            raise ValueError(f"weights cover {w.shape[1]} states, utilities have {S}")
        if np.any(w < 0) or np.any(np.abs(w.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("each prior's weights must be a probability vector")
        object.__setattr__(self, "utilities", _minmax(u))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "candidates", tuple(self.candidates) or tuple(range(n)))

    @classmethod
    def from_log_utilities(cls, log_u, weights=None, candidates=()):
        """Build from log-scale utilities; each dimension is shifted by its max before exp."""
        log_u = np.asarray(log_u, dtype=float)
        if log_u.ndim == 2:
            log_u = log_u[:, None, :]
        raw = np.exp(log_u - log_u.max(axis=(0, 1), keepdims=True))
        return cls(raw, weights, candidates)

    @property
    def n_candidates(self):
        return self.utilities.shape[0]

    @property
    def n_states(self):
        return self.utilities.shape[1]

    def to_dict(self):
        return {
            "utilities": self.utilities.tolist(),
            "weights": self.weights.tolist(),
            "candidates": list(self.candidates),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["utilities"], float), d.get("weights"), tuple(d.get("candidates", ())))


@dataclass(frozen=True)
class DominanceVerdict:
    d_values: dict
    nondominated: frozenset
    audit: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "d_values": [[a, b, v] for (a, b), v in sorted(self.d_values.items())],
            "nondominated": sorted(self.nondominated),
            "audit": self.audit,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class LinearProgram:
    """min c.x s.t. A_ub x <= b_ub, A_eq x = b_eq, x >= 0, with phi-variable bookkeeping."""

    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    c: np.ndarray
    vectors: np.ndarray
    margin: float = 0.0


class PreferenceSystem:
    """Distinct utility vectors, the dominance relations on them, and their LP constraints."""

    def __init__(self, instance, xi=0.0, r2="cover", solver="auto"):
        if not 0.0 <= xi <= 1.0:
            raise ValueError("xi must lie in [0, 1]")
        if r2 not in R2_MODES:
            raise ValueError(f"r2 must be one of {R2_MODES}")
        if solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")
        self.instance = instance
        u = instance.utilities
        n, S, K = u.shape
        flat = u.reshape(-1, K)
        K_dims = K
        bottom, top = np.zeros(K_dims), np.ones(K_dims)
        vecs, index = np.unique(np.vstack([flat, bottom, top]), axis=0, return_inverse=True)
        index = np.asarray(index).ravel()
        self.vectors = vecs
        self.state_index = index[: n * S].reshape(n, S)
        self.bottom = int(index[n * S])
        self.top = int(index[n * S + 1])
        ge = np.all(vecs[:, None, :] >= vecs[None, :, :], axis=2)
        strict = ge & ~np.eye(len(vecs), dtype=bool)
        self.strict = strict
        self.cover = strict & ~((strict.astype(int) @ strict.astype(int)) > 0)
        self.r2 = r2
        rows = self._r1_rows() + self._r2_rows()
        if solver == "auto":
            solver = "simplex" if len(rows) + len(vecs) <= DENSE_ROW_LIMIT else "highs"
        self.solver = solver
        self._r1_count = len(self._r1_rows())
        m = len(vecs)
        self.n_vars = m
        A = np.zeros((len(rows), m))
        for r, (plus, minus) in enumerate(rows):
            for v in plus:
                A[r, v] -= 1.0
            for v in minus:
                A[r, v] += 1.0
        self._A_base = A
        A_eq = np.zeros((2, m))
        A_eq[0, self.bottom] = 1.0
        A_eq[1, self.top] = 1.0
        self.A_eq = A_eq
        self.b_eq = np.array([0.0, 1.0])
        self.delta_max = self._max_margin() if xi > 0 else 0.0
        self.margin = xi * self.delta_max
        b = np.zeros(len(rows))
        b[: self._r1_count] = -self.margin
        self.A_ub = np.vstack([A, np.eye(m)])
        self.b_ub = np.concatenate([b, np.ones(m)])

    def _r1_rows(self):
        # phi(v) - phi(w) >= margin  ->  -phi(v) + phi(w) <= -margin
        return [((int(v),), (int(w),)) for v, w in zip(*np.nonzero(self.cover))]

    def _r2_rows(self):
        if self.r2 == "none":
            return []
        rel = self.cover if self.r2 == "cover" else self.strict
        edges = list(zip(*np.nonzero(rel)))
        if not edges:
            return []
        diffs = np.array([self.vectors[v] - self.vectors[w] for v, w in edges])
        ge = np.all(diffs[:, None, :] >= diffs[None, :, :] - 1e-15, axis=2)
        same = np.all(np.abs(diffs[:, None, :] - diffs[None, :, :]) <= 1e-15, axis=2)
        order = ge & ~np.eye(len(edges), dtype=bool)
        # equal differences constrain both ways; keep one direction per strict pair
        strict_order = order & ~same
        if self.r2 == "cover":
            so = strict_order.astype(int)
            strict_order = strict_order & ~((so @ so) > 0)
        pairs = set(zip(*np.nonzero(strict_order)))
        pairs |= {(a, b) for a, b in zip(*np.nonzero(order & same)) if a != b}
        rows = []
        for a, b in sorted(pairs):
            (v1, v2), (v3, v4) = edges[a], edges[b]
            # phi(v1) - phi(v2) >= phi(v3) - phi(v4)
            rows.append(((int(v1), int(v4)), (int(v2), int(v3))))
        return rows

    def _max_margin(self):
        """Largest common R1 increment compatible with R2 and the anchors."""
        m = len(self.vectors)
        r1 = self._A_base[: self._r1_count]
        r2 = self._A_base[self._r1_count :]
        A = np.vstack(
            [
                np.column_stack([r1, np.ones(len(r1))]),
                np.column_stack([r2, np.zeros(len(r2))]),
                np.column_stack([np.eye(m), np.zeros(m)]),
            ]
        )
        b = np.concatenate([np.zeros(len(r1) + len(r2)), np.ones(m)])
        A_eq = np.column_stack([self.A_eq, np.zeros(2)])
        c = np.zeros(m + 1)
        c[-1] = -1.0
        if self.solver == "highs":
            value, _ = linprog_highs(c, A, b, A_eq, self.b_eq)
        else:
            value, _ = minimize_dual(c, A, b, A_eq, self.b_eq)
        return max(-value, 0.0)

    def objective(self, a1, a2, pi):
        c = np.zeros(self.n_vars)
        np.add.at(c, self.state_index[a1], pi)
        np.add.at(c, self.state_index[a2], -np.asarray(pi))
        return c

    def solve(self, c):
        if self.solver == "highs":
            return linprog_highs(c, self.A_ub, self.b_ub, self.A_eq, self.b_eq)
        return minimize_dual(c, self.A_ub, self.b_ub, self.A_eq, self.b_eq)

    def build_lp(self, a1, a2, pi):
        return LinearProgram(
            self.A_ub, self.b_ub, self.A_eq, self.b_eq, self.objective(a1, a2, pi), self.vectors, self.margin
        )

    def d_pi(self, a1, a2, pi):
        if a1 == a2:
            return 0.0
        value, _ = self.solve(self.objective(a1, a2, pi))
        return value


def build_lp(instance, a1, a2, pi, xi_threshold=0.0, r2="cover"):
    return PreferenceSystem(instance, xi_threshold, r2).build_lp(a1, a2, pi)


def solve_lp(lp, solver="auto"):
    """Optimal value and phi certificate of a :class:`LinearProgram`."""
    if solver == "auto":
        solver = "simplex" if len(lp.b_ub) <= DENSE_ROW_LIMIT else "highs"
    if solver == "highs":
        return linprog_highs(lp.c, lp.A_ub, lp.b_ub, lp.A_eq, lp.b_eq)
    return minimize_dual(lp.c, lp.A_ub, lp.b_ub, lp.A_eq, lp.b_eq)


def nondominated_from(d_values, candidates, tol=DOMINANCE_TOL):
    out = set()
    for a in candidates:
        beaten = any(
            d_values[(b, a)] >= -tol and d_values[(a, b)] < -tol for b in candidates if b != a
        )
        if not beaten:
            out.add(a)
    return frozenset(out)


def _check_scale(instance):
    if instance.n_candidates > MAX_CANDIDATES or instance.n_states > MAX_STATES:
        raise ScaleError(
            f"instance has {instance.n_candidates} candidates and {instance.n_states} states; "
            f"limits are {MAX_CANDIDATES} and {MAX_STATES}"
        )


def _pairwise(system, pi):
    n = system.instance.n_candidates
    return {(a, b): system.d_pi(a, b, pi) for a in range(n) for b in range(n)}


def solution_set_pi(instance, pi=None, xi=0.0, r2="cover", solver="auto", system=None):
    """Candidates not dominated under the single prior ``pi`` (default: first weight row)."""
    _check_scale(instance)
    system = system or PreferenceSystem(instance, xi, r2, solver)
    pi = instance.weights[0] if pi is None else np.asarray(pi, float)
    d = _pairwise(system, pi)
    nd = nondominated_from(d, range(instance.n_candidates))
    return DominanceVerdict(d, nd, {"margin": system.margin, "n_vectors": system.n_vars})


def solution_set_Pi(instance, priors=None, xi=0.0, r2="cover", solver="auto", retained=None):
    """Candidates not dominated under D(a1, a2) = min over priors of d_pi(a1, a2).

    ``retained`` optionally restricts the prior rows (an alpha-cut).  The
    audit records the per-prior solution sets and whether their intersection
    coincides with the D-based set.
    """
    _check_scale(instance)
    W = instance.weights if priors is None else np.atleast_2d(np.asarray(priors, float))
    rows = range(len(W)) if retained is None else sorted(retained)
    if not rows:
        raise ValueError("no priors to evaluate")
    system = PreferenceSystem(instance, xi, r2, solver)
    n = instance.n_candidates
    per_prior = {}
    D = {(a, b): np.inf for a in range(n) for b in range(n)}
    for p in rows:
        d = _pairwise(system, W[p])
        per_prior[p] = sorted(nondominated_from(d, range(n)))
        for key, v in d.items():
            D[key] = min(D[key], v)
    nd = nondominated_from(D, range(n))
    inter = set(range(n))
    for s in per_prior.values():
        inter &= set(s)
    audit = {
        "per_prior": {str(p): s for p, s in per_prior.items()},
        "intersection": sorted(inter),
        "matches_intersection": set(nd) == inter,
        "margin": system.margin,
    }
    return DominanceVerdict(D, nd, audit)
