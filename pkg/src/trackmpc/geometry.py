"""H-representation polytopes and ellipsoids.

Everything here is half-space algebra plus LPs; no vertex enumeration.
"""

from dataclasses import dataclass

import numpy as np

from . import solver
from .errors import EmptyInput, OriginOutside, ShapeNotPD, SolverFailure, Unbounded
from .linalg import NotPositiveDefinite, cholesky

REDUNDANCY_TOL = 1e-9
EMPTY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Polytope:
    """``{x : H x <= h}``."""

    H: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        h = np.asarray(self.h, dtype=float).ravel()
        if H.ndim != 2:
            H = H.reshape(h.size, -1)
        if H.shape[0] != h.size:
            raise ValueError(f"H has {H.shape[0]} rows but h has {h.size} entries")
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(h))):
            raise ValueError("polytope data must be finite")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h", h)

    @property
    def dim(self):
        return self.H.shape[1]

    @property
    def n_rows(self):
        return self.H.shape[0]

    @classmethod
    def box(cls, upper, lower=None):
        upper = np.asarray(upper, dtype=float).ravel()
        lower = -upper if lower is None else np.asarray(lower, dtype=float).ravel()
        n = upper.size
        return cls(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([upper, -lower]))

    @classmethod
    def full_space(cls, dim):
        return cls(np.zeros((0, dim)), np.zeros(0))

    def canonical(self):
        """Rows scaled to unit Euclidean norm; zero rows with ``h >= 0`` dropped."""
        norms = np.linalg.norm(self.H, axis=1)
        keep = norms > 1e-14
        if np.any(self.h[~keep] < 0):
            # 0 <= negative: keep a single contradictory row so the set stays empty
            return Polytope(np.zeros((1, self.dim)), np.array([-1.0]))
        return Polytope(self.H[keep] / norms[keep, None], self.h[keep] / norms[keep])

    def map(self, M):
        """Preimage ``{z : M z in self}``."""
        return Polytope(self.H @ np.asarray(M, dtype=float), self.h)

    def intersect(self, other):
        return Polytope(np.vstack([self.H, other.H]), np.concatenate([self.h, other.h]))

    def __contains__(self, v):
        return contains(self, v)

    def __repr__(self):
        return f"Polytope(dim={self.dim}, rows={self.n_rows})"


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """``{v : v' shape v <= radius^2}``."""

    shape: np.ndarray
    radius: float

    def __post_init__(self):
        S = np.asarray(self.shape, dtype=float)
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        try:
            cholesky(S)
        except NotPositiveDefinite as exc:
            raise ShapeNotPD(str(exc)) from None
        object.__setattr__(self, "shape", S)
        object.__setattr__(self, "radius", float(self.radius))

    def norm(self, v):
        v = np.asarray(v, dtype=float)
        return float(np.sqrt(max(v @ self.shape @ v, 0.0)))

    def contains(self, v, tol=1e-9):
        return self.norm(v) <= self.radius + tol


def is_empty(P):
    value, _, _ = solver._phase1(*_normalized(P), np.zeros((0, P.dim)), np.zeros(0), None,
                                 _zero_violation(P))
    return bool(value > EMPTY_TOL)


def _normalized(P):
    Gn, hn, *_ = solver._prepare(P.H, P.h)
    return Gn, hn


def _zero_violation(P):
    return solver._prepare(P.H, P.h)[3]


def contains(P, v, tol=1e-9):
    v = np.asarray(v, dtype=float).ravel()
    if v.size != P.dim:
        raise ValueError(f"point dimension {v.size} does not match polytope dimension {P.dim}")
    if P.n_rows == 0:
        return True
    return bool(np.all(P.H @ v <= P.h + tol))


def margin(P, v):
    """``max_i (H_i v - h_i)``; nonpositive iff ``v`` is in ``P``."""
    v = np.asarray(v, dtype=float).ravel()
    return float(np.max(P.H @ v - P.h, initial=-np.inf))


def support(P, direction):
    """``max d'x`` over ``P``; ``inf`` when unbounded in that direction."""
    res = solver.solve_lp(-np.asarray(direction, dtype=float), P)
    if res.status is solver.Status.UNBOUNDED:
        return np.inf
    if not res.optimal:
        raise SolverFailure(f"support LP ended with {res.status.value}")
    return -res.objective


def is_bounded(P):
    for i in range(P.dim):
        e = np.zeros(P.dim)
        e[i] = 1.0
        if not np.isfinite(support(P, e)) or not np.isfinite(support(P, -e)):
            return False
    return True


def remove_redundancy(P, tol=REDUNDANCY_TOL, warm=None):
    """Drop rows implied by the others.

    A row is dropped when maximizing it over the remaining rows (plus the row
    itself relaxed by one unit, which keeps the LP bounded) stays within
    ``h_i + tol``. Rows are visited in order, so the first of two duplicates
    survives.
    """
    if P.n_rows == 0:
        return P
    if is_empty(P):
        raise EmptyInput("cannot remove redundancy from an empty polytope")
    C = P.canonical()
    H, h = _dedupe(C.H, C.h)
    keep = np.ones(H.shape[0], dtype=bool)
    for i in range(H.shape[0]):
        others = keep.copy()
        others[i] = False
        Hs = np.vstack([H[others], H[i:i + 1]])
        hs = np.concatenate([h[others], [h[i] + 1.0]])
        start = warm if warm is not None and np.all(Hs @ warm <= hs) else None
        res = solver.solve_lp(-H[i], solver.Inequalities(Hs, hs), warm=start, check_unbounded=False)
        if not res.optimal:
            raise SolverFailure(f"redundancy LP for row {i} ended with {res.status.value}")
        if lp_max_upper(res, hs) <= h[i] + tol:
            keep[i] = False
    return Polytope(H[keep], h[keep])


def lp_max_upper(res, h):
    """Conservative value of ``max d'x`` from a ``min -d'x`` result.

    Takes the larger of the primal value and the dual bound ``h' lam`` so that
    a row is declared redundant only when both agree.
    """
    value = -res.objective
    if res.ineq_dual is not None and res.ineq_dual.size == h.size:
        value = max(value, float(h @ res.ineq_dual))
    return value


def _dedupe(H, h, tol=1e-12):
    """Keep the tightest copy of rows that coincide after normalization."""
    order = np.lexsort(np.round(H, 12).T[::-1])
    keep = np.ones(H.shape[0], dtype=bool)
    i = 0
    while i < len(order):
        j = i + 1
        best = order[i]
        while j < len(order) and np.max(np.abs(H[order[j]] - H[order[i]])) <= tol:
            if h[order[j]] < h[best]:
                keep[best] = False
                best = order[j]
            else:
                keep[order[j]] = False
            j += 1
        i = j
    return H[keep], h[keep]


def scale(P, mu):
    if mu < 0:
        raise ValueError("scale factor must be nonnegative")
    if not contains(P, np.zeros(P.dim)):
        raise OriginOutside("scaling a set that does not contain the origin")
    return Polytope(P.H, mu * P.h)


def product(P1, P2):
    H = np.block([
        [P1.H, np.zeros((P1.n_rows, P2.dim))],
        [np.zeros((P2.n_rows, P1.dim)), P2.H],
    ])
    return Polytope(H, np.concatenate([P1.h, P2.h]))


def erosion_widths(H, D, E):
    """Per-row support of the ellipsoid image ``{D b : b in E}``."""
    D = np.asarray(D, dtype=float).reshape(H.shape[1], -1)
    try:
        L = cholesky(E.shape)
    except NotPositiveDefinite as exc:
        raise ShapeNotPD(str(exc)) from None
    # H D shape^{-1} D' H' row norms via the Cholesky factor
    W = np.linalg.solve(L, (H @ D).T)
    return np.sqrt(np.sum(W * W, axis=0))


def erode_by_ellipsoid_image(P, D, E):
    """Pontryagin difference ``P - {D b : b' shape b <= radius^2}``."""
    if E.radius == 0.0:
        return Polytope(P.H, P.h)
    return Polytope(P.H, P.h - E.radius * erosion_widths(P.H, D, E))


def chebyshev_center(P):
    """Center and radius of the largest inscribed Euclidean ball."""
    norms = np.linalg.norm(P.H, axis=1)
    G = np.hstack([P.H, norms[:, None]])
    G = np.vstack([G, np.concatenate([np.zeros(P.dim), [-1.0]])])
    h = np.concatenate([P.h, [0.0]])
    c = np.zeros(P.dim + 1)
    c[-1] = -1.0
    res = solver.solve_lp(c, solver.Inequalities(G, h))
    if res.status is solver.Status.UNBOUNDED:
        raise Unbounded("polytope contains arbitrarily large balls")
    if not res.optimal:
        raise SolverFailure(f"Chebyshev LP ended with {res.status.value}")
    return res.point[:-1], float(res.point[-1])


def _ray_length(P, center, d):
    Hd = P.H @ d
    pos = Hd > 1e-14 * np.linalg.norm(d)
    if not np.any(pos):
        raise Unbounded("sampling direction is unbounded")
    return float(np.min((P.h[pos] - P.H[pos] @ center) / Hd[pos]))


def sample_points(P, count, seed=0):
    """Deterministic interior samples.

    Each sample walks from the Chebyshev center along a random direction for
    a uniform fraction of the distance to the boundary.
    """
    rng = np.random.default_rng(seed)
    center, _ = chebyshev_center(P)
    pts = []
    for _ in range(count):
        d = rng.normal(size=P.dim)
        pts.append(center + rng.uniform() * _ray_length(P, center, d) * d)
    return pts


def sample_boundary_points(P, count, seed=0):
    """Boundary points hit by random rays from the Chebyshev center."""
    rng = np.random.default_rng(seed)
    center, _ = chebyshev_center(P)
    pts = []
    for _ in range(count):
        d = rng.normal(size=P.dim)
        pts.append(center + _ray_length(P, center, d) * d)
    return pts


def implies(P, Q, tol=REDUNDANCY_TOL):
    """LP certificate that every row of ``Q`` holds on ``P`` (``P subset Q``)."""
    for Hi, hi in zip(Q.H, Q.h):
        if support(P, Hi) > hi + tol * max(1.0, np.linalg.norm(Hi)):
            return False
    return True


def same_set(P, Q, tol=REDUNDANCY_TOL):
    return implies(P, Q, tol) and implies(Q, P, tol)
