"""Offline controller design.

Pipeline: regulator equations -> terminal cost P -> exosystem-invariant
weight T -> terminal set (maximal output admissible set of the augmented
error/reference system, split into a periodic polytope and a non-periodic
ellipsoid when the exosystem has non-periodic modes).
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry, solver
from .errors import NotFinitelyDetermined, ResonantSystem, SingularMatrix, SolverFailure, ValidationFailed
from .geometry import Ellipsoid, Polytope
from .linalg import cholesky, dlyap, eig2, rank, solve_linear, symmetrize
from .model import split, validate

log = logging.getLogger(__name__)

MOAS_TOL = 1e-9
MIN_MOAS_CAP = 200


@dataclass(frozen=True, eq=False)
class RegulatorSolution:
    Pi: np.ndarray
    Gamma: np.ndarray
    L: np.ndarray

    def residuals(self, plant, exo):
        """``(sylvester, output)`` Frobenius residuals of the regulator equations."""
        S = exo.S
        r1 = np.linalg.norm(plant.A @ self.Pi + plant.B @ self.Gamma - self.Pi @ S)
        r2 = np.linalg.norm(plant.C @ self.Pi - exo.Qe)
        return float(r1), float(r2)


@dataclass(frozen=True, eq=False)
class CostWeights:
    Q: np.ndarray
    P: np.ndarray
    T: np.ndarray


@dataclass(frozen=True, eq=False)
class TerminalSet:
    """Terminal constraint data.

    ``variant == "periodic"``: ``polytope`` is O_inf over ``[xbar; r]``.
    ``variant == "mixed"``: ``polytope`` is the periodic-part set over
    ``[xbar; alpha]``; the full set is ``f(|beta|_Tn) * polytope x {beta'Tn beta <= upsilon^2}``
    with ``f(s) = 1 - s/upsilon``.
    """

    variant: str
    polytope: Polytope
    iterations: int
    Tn: np.ndarray = None
    upsilon: float = math.inf
    growth: tuple = ()

    def scale_factor(self, beta):
        """``f(|beta|_Tn)``; negative outside the non-periodic ellipsoid."""
        if self.variant != "mixed" or beta.size == 0:
            return 1.0
        if math.isinf(self.upsilon):
            return 1.0
        nb = math.sqrt(max(float(beta @ self.Tn @ beta), 0.0))
        if self.upsilon == 0.0:
            return 1.0 if nb == 0.0 else -math.inf
        return 1.0 - nb / self.upsilon


@dataclass(frozen=True, eq=False)
class ControllerDesign:
    plant: object
    exo: object
    regulator: RegulatorSolution
    weights: CostWeights
    terminal: TerminalSet
    horizon: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")

    @property
    def output_map(self):
        return output_map(self.plant, self.regulator.Pi, self.regulator.Gamma)

    @property
    def decision_counts(self):
        """``(free, pinned, additional)`` QP variable counts.

        ``additional`` counts the artificial-reference variables beyond the
        ``N*m`` input moves (free and pinned alike).
        """
        exo = self.exo
        Nm = self.horizon * self.plant.m
        if self.terminal.variant == "mixed":
            return exo.q_p + Nm, exo.q_n, exo.q
        return exo.q + Nm, 0, exo.q


def output_map(plant, Pi, Gamma):
    """``[[I, Pi], [K, Gamma]]`` mapping ``[xbar; rbar]`` to ``[x; u]`` at ``v = 0``."""
    n = plant.n
    return np.block([[np.eye(n), Pi], [plant.K, Gamma]])


def block_diag(*mats):
    rows = sum(M.shape[0] for M in mats)
    cols = sum(M.shape[1] for M in mats)
    out = np.zeros((rows, cols))
    i = j = 0
    for M in mats:
        out[i:i + M.shape[0], j:j + M.shape[1]] = M
        i += M.shape[0]
        j += M.shape[1]
    return out


def solve_regulator(plant, exo):
    """Solve ``A Pi + B Gamma = Pi S``, ``C Pi = Qe`` in Kronecker form."""
    n, m, p, q = plant.n, plant.m, plant.p, exo.q
    if q == 0:
        Z = np.zeros((n, 0))
        return RegulatorSolution(Z, np.zeros((m, 0)), np.zeros((m, 0)))
    S = exo.S
    Iq = np.eye(q)
    top = np.hstack([np.kron(Iq, plant.A) - np.kron(S.T, np.eye(n)), np.kron(Iq, plant.B)])
    bot = np.hstack([np.kron(Iq, plant.C), np.zeros((p * q, m * q))])
    M = np.vstack([top, bot])
    rhs = np.concatenate([np.zeros(n * q), exo.Qe.reshape(-1, order="F")])
    if p == m:
        try:
            sol = solve_linear(M, rhs)
        except SingularMatrix as exc:
            raise ResonantSystem(f"regulator equations are singular: {exc}") from None
    else:
        if rank(M) < M.shape[0]:
            raise ResonantSystem("regulator equations are rank deficient")
        sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    Pi = sol[:n * q].reshape((n, q), order="F")
    Gamma = sol[n * q:].reshape((m, q), order="F")
    return RegulatorSolution(Pi, Gamma, Gamma - plant.K @ Pi)


def weight_T_periodic(Sp, k0, T0):
    """Average of ``T0`` over one period of ``Sp``."""
    Sp = np.asarray(Sp, dtype=float)
    T = np.zeros_like(Sp)
    Si = np.eye(Sp.shape[0])
    for _ in range(k0):
        Si = Si @ Sp
        T += Si.T @ T0 @ Si
    return symmetrize(T)


def weight_T_nonperiodic(blocks, Lambda):
    """Block-diagonal ``T_i = Lambda_i (E_i E_i^H)^{-1}`` from unit eigenvectors.

    ``Lambda`` holds one diagonal (length-2 sequence or scalar) per block.
    A real invariant weight needs equal diagonal entries within a conjugate
    pair, so unequal entries are rejected.
    """
    mats = []
    for b, lam_diag in zip(blocks, Lambda):
        M = b.M if hasattr(b, "M") else np.asarray(b, dtype=float)
        if M.shape != (2, 2):
            raise ValueError("non-periodic blocks must be 2x2")
        lam_diag = np.broadcast_to(np.asarray(lam_diag, dtype=float), (2,))
        if np.any(lam_diag <= 0):
            raise ValueError("Lambda entries must be positive")
        if abs(lam_diag[0] - lam_diag[1]) > 1e-12 * max(lam_diag):
            raise ValueError("Lambda must have equal entries for a complex-conjugate block")
        _, _, E = eig2(M)
        EEh = (E @ E.conj().T).real
        Ti = np.diag(lam_diag) @ solve_linear(EEh, np.eye(2))
        mats.append(symmetrize(Ti))
    if len(mats) != len(list(blocks)):
        raise ValueError("one Lambda entry per non-periodic block is required")
    return block_diag(*mats) if mats else np.zeros((0, 0))


def cost_weights(plant, exo, Q=None, T0=None, Lambda=None):
    n = plant.n
    Q = np.eye(n) if Q is None else np.asarray(Q, dtype=float)
    P = dlyap(plant.Acl, Q)
    sp = split(exo)
    q = exo.q
    T = np.zeros((q, q))
    if exo.q_p:
        T0 = np.eye(exo.q_p) if T0 is None else np.asarray(T0, dtype=float)
        T[np.ix_(sp.p_index, sp.p_index)] = weight_T_periodic(sp.Sp, exo.k0, T0)
    if exo.q_n:
        blocks = exo.nonperiodic_blocks()
        Lambda = [1.0] * len(blocks) if Lambda is None else Lambda
        T[np.ix_(sp.n_index, sp.n_index)] = weight_T_nonperiodic(blocks, Lambda)
    T = symmetrize(T)
    for M in (Q, P, T):
        if M.size:
            cholesky(M)
    return CostWeights(Q, P, T)


def _candidate_redundant(O_H, O_h, row, bound, tol):
    Hs = np.vstack([O_H, row[None, :]])
    hs = np.concatenate([O_h, [bound + 1.0]])
    res = solver.solve_lp(-row, solver.Inequalities(Hs, hs), warm=np.zeros(row.size),
                          check_unbounded=False)
    if not res.optimal:
        raise SolverFailure(f"MOAS LP ended with {res.status.value}")
    return geometry.lp_max_upper(res, hs) <= bound + tol, res.point


def moas(M, constraint, cap, prune_every=None, tol=MOAS_TOL, progress=None):
    """Maximal output admissible set of ``z+ = M z`` under ``z in constraint``.

    Runs ``O_t = O_{t-1} & {z : H M^t z <= h}`` adding only rows that are not
    implied by ``O_{t-1}``; stops at the first sweep in which every candidate
    row is implied. Returns ``(polytope, iterations, growth)``: ``iterations``
    counts the sweeps including the final, all-redundant one, and ``growth``
    lists the rows added per sweep.
    """
    M = np.asarray(M, dtype=float)
    C = constraint.canonical()
    if not geometry.contains(C, np.zeros(C.dim), tol=-1e-12):
        raise ValueError("MOAS needs the origin in the interior of the constraint set")
    H0, h0 = C.H, C.h
    O = geometry.remove_redundancy(C, warm=np.zeros(C.dim)) if C.n_rows else C
    O_H, O_h = O.H, O.h
    Mt = np.eye(M.shape[0])
    growth = []
    witnesses = np.zeros((0, M.shape[0]))
    for t in range(1, cap + 1):
        Mt = Mt @ M
        cand = H0 @ Mt
        new_H, new_h = [], []
        if witnesses.shape[0]:
            inside = np.all(witnesses @ O_H.T <= O_h + 1e-12, axis=1)
            witnesses = witnesses[inside]
        for row, b in zip(cand, h0):
            nr = np.linalg.norm(row)
            if nr <= 1e-14:
                if b < 0:
                    raise ValueError("constraint set excludes the origin")
                continue
            rn, bn = row / nr, b / nr
            if witnesses.shape[0] and np.max(witnesses @ rn) > bn + tol:
                new_H.append(rn)
                new_h.append(bn)
                continue
            redundant, point = _candidate_redundant(O_H, O_h, rn, bn, tol)
            if not redundant:
                new_H.append(rn)
                new_h.append(bn)
                witnesses = np.vstack([witnesses, point[None, :]])[-256:]
        growth.append(len(new_H))
        if progress is not None:
            progress(t, O_H.shape[0], len(new_H))
        if not new_H:
            return Polytope(O_H, O_h), t, tuple(growth)
        O_H = np.vstack([O_H, np.array(new_H)])
        O_h = np.concatenate([O_h, np.array(new_h)])
        if prune_every and t % prune_every == 0:
            O = geometry.remove_redundancy(Polytope(O_H, O_h), warm=np.zeros(M.shape[0]))
            O_H, O_h = O.H, O.h
    raise NotFinitelyDetermined(
        f"no fixed point after {cap} iterations ({O_H.shape[0]} rows)",
        iterations=cap, rows=O_H.shape[0], growth=growth)


def upsilon(Z, Pin, Gamman, Tn):
    """Largest ``rho`` such that ``Z`` eroded by ``[Pin; Gamman] {b : b'Tn b <= rho^2}`` is nonempty.

    Returns ``math.inf`` when the non-periodic modes do not reach the
    constraints at all (no tightening needed).
    """
    D = np.vstack([np.asarray(Pin, float), np.asarray(Gamman, float)])
    s = geometry.erosion_widths(Z.H, D, Ellipsoid(Tn, 1.0))
    if np.max(s, initial=0.0) <= 1e-14:
        return math.inf
    d = Z.dim
    G = np.hstack([Z.H, s[:, None]])
    c = np.zeros(d + 1)
    c[-1] = -1.0
    res = solver.solve_lp(c, solver.Inequalities(G, Z.h))
    if res.status is solver.Status.UNBOUNDED:
        return math.inf
    if not res.optimal:
        raise SolverFailure(f"upsilon LP ended with {res.status.value}")
    return max(float(res.point[-1]), 0.0)


def default_cap(k0):
    return max(5 * k0, MIN_MOAS_CAP)


def build_terminal_set(plant, exo, reg, weights, cap=None, progress=None):
    n = plant.n
    cap = default_cap(exo.k0) if cap is None else cap
    Acl = plant.Acl
    if exo.q_n == 0:
        M = block_diag(Acl, exo.S)
        constraint = plant.Z.map(output_map(plant, reg.Pi, reg.Gamma))
        O, it, growth = moas(M, constraint, cap, prune_every=exo.k0, progress=progress)
        return TerminalSet("periodic", O, it, growth=growth)
    sp = split(exo)
    Pip, Pin = sp.columns(reg.Pi)
    Gap, Gan = sp.columns(reg.Gamma)
    M = block_diag(Acl, sp.Sp)
    constraint = plant.Z.map(np.block([[np.eye(n), Pip], [plant.K, Gap]]))
    O, it, growth = moas(M, constraint, cap, prune_every=exo.k0, progress=progress)
    Tn = weights.T[np.ix_(sp.n_index, sp.n_index)]
    ups = upsilon(plant.Z, Pin, Gan, Tn)
    return TerminalSet("mixed", O, it, Tn=Tn, upsilon=ups, growth=growth)


def full_augmented_moas(design, cap=300, progress=None):
    """MOAS of the whole augmented system including non-periodic modes.

    For a non-periodic exosystem this is expected to raise
    NotFinitelyDetermined.
    """
    plant, exo, reg = design.plant, design.exo, design.regulator
    M = block_diag(plant.Acl, exo.S)
    constraint = plant.Z.map(output_map(plant, reg.Pi, reg.Gamma))
    return moas(M, constraint, cap, prune_every=exo.k0, progress=progress)


def terminal_contains(design, xbar, r, tol=1e-9):
    ts = design.terminal
    xbar = np.asarray(xbar, dtype=float)
    r = np.asarray(r, dtype=float)
    if ts.variant == "periodic":
        return geometry.contains(ts.polytope, np.concatenate([xbar, r]), tol)
    sp = split(design.exo)
    beta = r[sp.n_index]
    f = ts.scale_factor(beta)
    if f < -tol / max(ts.upsilon, 1.0):
        return False
    f = max(f, 0.0)
    z = np.concatenate([xbar, r[sp.p_index]])
    P = ts.polytope
    return bool(np.all(P.H @ z <= f * P.h + tol))


class MixedReferenceSet:
    """Membership evaluator for ``{(alpha, beta) : alpha in f(|beta|) R_p, |beta|_Tn <= upsilon}``."""

    def __init__(self, alpha_set, terminal, p_index, n_index):
        self.alpha_set = alpha_set
        self.terminal = terminal
        self.p_index = p_index
        self.n_index = n_index

    @property
    def dim(self):
        return self.p_index.size + self.n_index.size

    def contains(self, r, tol=1e-9):
        r = np.asarray(r, dtype=float)
        f = self.terminal.scale_factor(r[self.n_index])
        if f < -tol / max(self.terminal.upsilon, 1.0):
            return False
        f = max(f, 0.0)
        a = r[self.p_index]
        return bool(np.all(self.alpha_set.H @ a <= f * self.alpha_set.h + tol))

    def __contains__(self, r):
        return self.contains(r)


def rf_slice(design):
    """Admissible references ``{r : [0; r] in Z_f}``.

    A polytope for the periodic variant; a membership evaluator for the mixed
    variant, whose set is not polyhedral.
    """
    ts = design.terminal
    n = design.plant.n
    if ts.variant == "periodic":
        return Polytope(ts.polytope.H[:, n:], ts.polytope.h)
    sp = split(design.exo)
    alpha_set = Polytope(ts.polytope.H[:, n:], ts.polytope.h)
    return MixedReferenceSet(alpha_set, ts, sp.p_index, sp.n_index)


def rf_contains(design, r, tol=1e-9):
    R = rf_slice(design)
    if isinstance(R, Polytope):
        return geometry.contains(R, r, tol)
    return R.contains(r, tol)


def rfm_contains(r, design, tol=1e-9):
    """Steady tracking of ``r`` is feasible over the horizon and lands in Z_f."""
    r = np.asarray(r, dtype=float)
    n = design.plant.n
    Mo = design.output_map
    S = design.exo.S
    Z = design.plant.Z
    zero = np.zeros(n)
    rk = r.copy()
    for _ in range(design.horizon):
        if not geometry.contains(Z, Mo @ np.concatenate([zero, rk]), tol):
            return False
        rk = S @ rk
    return terminal_contains(design, zero, rk, tol)


def synthesize(plant, exo, Q=None, T0=None, Lambda=None, horizon=10, cap=None, progress=None,
               check=True):
    """Validate the models and run the full offline design."""
    if check:
        report = validate(plant, exo)
        if not report.passed:
            raise ValidationFailed(report)
    reg = solve_regulator(plant, exo)
    weights = cost_weights(plant, exo, Q, T0, Lambda)
    terminal = build_terminal_set(plant, exo, reg, weights, cap=cap, progress=progress)
    design = ControllerDesign(plant, exo, reg, weights, terminal, int(horizon))
    object.__setattr__(design, "meta", design_residuals(design))
    return design


def design_residuals(design):
    plant, exo = design.plant, design.exo
    reg, w = design.regulator, design.weights
    syl, outp = reg.residuals(plant, exo)
    Acl = plant.Acl
    lyap = np.linalg.norm(Acl.T @ w.P @ Acl - w.P + w.Q) / max(np.linalg.norm(w.Q), 1e-300)
    S = exo.S
    tres = (np.linalg.norm(S.T @ w.T @ S - w.T) / np.linalg.norm(w.T)) if exo.q else 0.0
    free, pinned, additional = design.decision_counts
    return {
        "regulator_residual": syl / (1.0 + np.linalg.norm(reg.Pi)),
        "output_residual": outp,
        "lyapunov_residual": float(lyap),
        "T_invariance_residual": float(tres),
        "moas_iterations": design.terminal.iterations,
        "terminal_rows": design.terminal.polytope.n_rows,
        "upsilon": design.terminal.upsilon,
        "decision_free": free,
        "decision_pinned": pinned,
        "additional_decision_variables": additional,
    }
