"""Plant and exosystem data model plus the assumption validator."""

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from . import geometry
from .errors import DefectiveBlock, NotSchur
from .geometry import Polytope
from .linalg import dlyap, eig2, lyapunov_residual, rank

UNIT_CIRCLE_TOL = 1e-9
PERIOD_TOL = 1e-8
EIG_DEDUP_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PlantModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    K: np.ndarray
    Z: Polytope

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        B = np.asarray(self.B, dtype=float).reshape(n, -1)
        m = B.shape[1]
        C = np.asarray(self.C, dtype=float).reshape(-1, n)
        K = np.asarray(self.K, dtype=float).reshape(m, n)
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        if self.Z.dim != n + m:
            raise ValueError(f"Z lives in dimension {self.Z.dim}, expected n+m = {n + m}")
        for name, M in (("A", A), ("B", B), ("C", C), ("K", K)):
            object.__setattr__(self, name, M)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    @property
    def Acl(self):
        return self.A + self.B @ self.K


@dataclass(frozen=True, eq=False)
class ExoBlock:
    kind: str
    M: np.ndarray

    def __post_init__(self):
        if self.kind not in ("periodic", "nonperiodic"):
            raise ValueError(f"block kind must be 'periodic' or 'nonperiodic', got {self.kind!r}")
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        if M.shape not in ((1, 1), (2, 2)):
            raise ValueError(f"exosystem blocks are 1x1 or 2x2, got {M.shape}")
        object.__setattr__(self, "M", M)

    @property
    def size(self):
        return self.M.shape[0]

    def eigenvalues(self):
        if self.size == 1:
            return [complex(self.M[0, 0])]
        lam1, lam2, _ = eig2(self.M)
        return [lam1, lam2]


@dataclass(frozen=True, eq=False)
class ExosystemModel:
    blocks: Tuple[ExoBlock, ...]
    Qe: np.ndarray
    k0: int = 1

    def __post_init__(self):
        blocks = tuple(self.blocks)
        q = sum(b.size for b in blocks)
        Qe = np.asarray(self.Qe, dtype=float)
        if Qe.ndim != 2:
            Qe = Qe.reshape(-1, q) if q else np.zeros((0, 0))
        if int(self.k0) < 1:
            raise ValueError("k0 must be a positive integer")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "Qe", Qe)
        object.__setattr__(self, "k0", int(self.k0))

    @property
    def q(self):
        return sum(b.size for b in self.blocks)

    @property
    def S(self):
        q = self.q
        S = np.zeros((q, q))
        i = 0
        for b in self.blocks:
            S[i:i + b.size, i:i + b.size] = b.M
            i += b.size
        return S

    def _indices(self, kind):
        idx = []
        i = 0
        for b in self.blocks:
            if b.kind == kind:
                idx.extend(range(i, i + b.size))
            i += b.size
        return np.array(idx, dtype=int)

    @property
    def periodic_index(self):
        return self._indices("periodic")

    @property
    def nonperiodic_index(self):
        return self._indices("nonperiodic")

    @property
    def q_p(self):
        return self.periodic_index.size

    @property
    def q_n(self):
        return self.nonperiodic_index.size

    def nonperiodic_blocks(self):
        return [b for b in self.blocks if b.kind == "nonperiodic"]


@dataclass(frozen=True, eq=False)
class Split:
    Sp: np.ndarray
    Sn: np.ndarray
    p_index: np.ndarray
    n_index: np.ndarray

    def columns(self, M):
        """``(M_p, M_n)`` column partition of a matrix with q columns."""
        M = np.asarray(M)
        return M[:, self.p_index], M[:, self.n_index]

    def assemble(self):
        q = self.p_index.size + self.n_index.size
        S = np.zeros((q, q))
        S[np.ix_(self.p_index, self.p_index)] = self.Sp
        S[np.ix_(self.n_index, self.n_index)] = self.Sn
        return S


def split(exo):
    S = exo.S
    pi, ni = exo.periodic_index, exo.nonperiodic_index
    return Split(S[np.ix_(pi, pi)], S[np.ix_(ni, ni)], pi, ni)


@dataclass
class Check:
    name: str
    passed: bool
    measured: float = float("nan")
    tolerance: float = float("nan")
    detail: str = ""


@dataclass
class ValidationReport:
    checks: List[Check] = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failed_names(self):
        return [c.name for c in self.checks if not c.passed]

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def format(self):
        lines = []
        for c in self.checks:
            mark = "PASS" if c.passed else "FAIL"
            line = f"[{mark}] {c.name:<28} measured={c.measured:.3e} tol={c.tolerance:.1e}"
            if c.detail:
                line += f"  ({c.detail})"
            lines.append(line)
        lines.append("all checks passed" if self.passed else "FAILED: " + ", ".join(self.failed_names()))
        return "\n".join(lines)


def distinct_eigenvalues(exo, tol=EIG_DEDUP_TOL):
    out = []
    for b in exo.blocks:
        for lam in b.eigenvalues():
            if all(abs(lam - mu) > tol for mu in out):
                out.append(lam)
    return out


def validate(plant, exo):
    """Check (A2)-(A5) and the declared periodic/non-periodic split."""
    rep = ValidationReport()
    n, m, p = plant.n, plant.m, plant.p
    if exo.Qe.shape != (p, exo.q):
        raise ValueError(f"Qe must be {p}x{exo.q}, got {exo.Qe.shape}")

    ctrb = np.hstack([np.linalg.matrix_power(plant.A, k) @ plant.B for k in range(n)])
    r = rank(ctrb)
    rep.checks.append(Check("A2 controllability", r == n, float(r), float(n), f"rank {r} of {n}"))

    try:
        Q = np.eye(n)
        P = dlyap(plant.Acl, Q)
        res = lyapunov_residual(plant.Acl, P, Q) / np.linalg.norm(Q)
        rep.checks.append(Check("A2 A+BK Schur", res <= 1e-8, res, 1e-8, "Lyapunov certificate"))
    except NotSchur as exc:
        rep.checks.append(Check("A2 A+BK Schur", False, float("inf"), 1e-8, str(exc)))

    bounded = geometry.is_bounded(plant.Z)
    rep.checks.append(Check("A3 Z bounded", bounded, 0.0 if bounded else float("inf"), 0.0))
    norms = np.linalg.norm(plant.Z.H, axis=1)
    inner = float(np.min(plant.Z.h / np.where(norms > 0, norms, 1.0), initial=np.inf))
    rep.checks.append(Check("A3 origin interior", inner >= 1e-9, inner, 1e-9, "min row distance"))

    worst = 0.0
    diag_ok = True
    for b in exo.blocks:
        try:
            lams = b.eigenvalues()
        except DefectiveBlock:
            diag_ok = False
            continue
        worst = max(worst, max(abs(abs(l) - 1.0) for l in lams))
    rep.checks.append(Check("A4 unit-circle spectrum", worst <= UNIT_CIRCLE_TOL and diag_ok, worst,
                            UNIT_CIRCLE_TOL))
    rep.checks.append(Check("A4 diagonalizable blocks", diag_ok, 0.0 if diag_ok else 1.0, 0.0))

    if diag_ok:
        worst_rank = n + p
        for lam in distinct_eigenvalues(exo):
            M = np.block([[plant.A - lam * np.eye(n), plant.B],
                          [plant.C.astype(complex), np.zeros((p, m))]])
            worst_rank = min(worst_rank, rank(M))
        rep.checks.append(Check("A5 non-resonance", worst_rank == n + p, float(worst_rank),
                                float(n + p), f"min rank over lambda(S), need {n + p}"))

    sp = split(exo)
    if sp.Sp.size:
        resid = float(np.linalg.norm(np.linalg.matrix_power(sp.Sp, exo.k0) - np.eye(sp.Sp.shape[0])))
    else:
        resid = 0.0
    rep.checks.append(Check("periodic part S_p^k0 = I", resid <= PERIOD_TOL, resid, PERIOD_TOL,
                            f"k0 = {exo.k0}"))

    np_ok = True
    detail = ""
    for b in exo.nonperiodic_blocks():
        if b.size != 2:
            np_ok = False
            detail = "non-periodic blocks must be 2x2 with a complex pair"
            break
        Mk = np.eye(2)
        for k in range(1, 4 * exo.k0 + 1):
            Mk = Mk @ b.M
            if np.linalg.norm(Mk - np.eye(2)) <= PERIOD_TOL:
                np_ok = False
                detail = f"block repeats after {k} steps"
                break
    rep.checks.append(Check("declared non-periodic blocks", np_ok, 0.0 if np_ok else 1.0, 0.0, detail))
    return rep
