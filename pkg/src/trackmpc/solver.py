"""Dense convex QP/LP backend.

One primal-dual interior-point iteration (Mehrotra predictor-corrector)
serves both quadratic and linear programs. Feasibility is decided up front by
a phase-1 LP that minimizes the largest (row-normalized) constraint
violation, and LP unboundedness by a bounded ray LP. Converged iterates are
polished by solving the KKT system on the identified active set, which pins
objective values to near machine precision.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

INFEASIBILITY_TOL = 1e-8
HESSIAN_REG = 1e-10
KKT_TOL = 1e-7
MAX_ITER = 200
ZERO_ROW_REL = 1e-10
REFINE_STEPS = 3


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class Inequalities:
    """Plain ``H x <= h`` pair; any object with ``H`` and ``h`` is accepted."""

    H: np.ndarray
    h: np.ndarray


@dataclass(frozen=True)
class ConvexProgram:
    """``min 1/2 z'Hz + g'z  s.t.  ineq.H z <= ineq.h,  Aeq z = beq``."""

    hessian: np.ndarray
    gradient: np.ndarray
    ineq: object = None
    eq: Optional[tuple] = None

    def __post_init__(self):
        g = np.asarray(self.gradient, dtype=float).ravel()
        d = g.size
        Hm = np.asarray(self.hessian, dtype=float)
        if Hm.shape != (d, d):
            raise ValueError(f"hessian shape {Hm.shape} does not match gradient length {d}")
        if np.max(np.abs(Hm - Hm.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(Hm), initial=0.0)):
            raise ValueError("hessian is not symmetric")
        if self.ineq is None:
            ineq = Inequalities(np.zeros((0, d)), np.zeros(0))
        else:
            ineq = Inequalities(np.asarray(self.ineq.H, dtype=float).reshape(-1, d),
                                np.asarray(self.ineq.h, dtype=float).ravel())
            if ineq.H.shape[0] != ineq.h.size:
                raise ValueError("inequality row count mismatch")
        if self.eq is None:
            eq = (np.zeros((0, d)), np.zeros(0))
        else:
            Aeq = np.asarray(self.eq[0], dtype=float).reshape(-1, d)
            beq = np.asarray(self.eq[1], dtype=float).ravel()
            if Aeq.shape[0] != beq.size:
                raise ValueError("equality row count mismatch")
            eq = (Aeq, beq)
        object.__setattr__(self, "hessian", 0.5 * (Hm + Hm.T))
        object.__setattr__(self, "gradient", g)
        object.__setattr__(self, "ineq", ineq)
        object.__setattr__(self, "eq", eq)

    @property
    def dim(self):
        return self.gradient.size

    @property
    def is_lp(self):
        return not np.any(self.hessian)

    def objective(self, z):
        return 0.5 * z @ self.hessian @ z + self.gradient @ z


@dataclass(frozen=True)
class SolveResult:
    status: Status
    point: Optional[np.ndarray] = None
    objective: Optional[float] = None
    iterations: int = 0
    ineq_dual: Optional[np.ndarray] = None
    eq_dual: Optional[np.ndarray] = None
    # phase-1 optimum (largest normalized violation); > 1e-8 certifies infeasibility
    infeasibility: float = float("nan")
    ray: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def optimal(self):
        return self.status is Status.OPTIMAL


def solve(program, warm=None):
    """Solve a convex QP/LP; see module docstring for the certification steps."""
    return _Solver(program).run(warm)


def solve_lp(c, ineq=None, eq=None, warm=None, check_unbounded=True):
    """Minimize ``c'x`` over ``{H x <= h, Aeq x = beq}``.

    ``check_unbounded=False`` skips the ray LP when the caller knows the
    objective is bounded on the feasible set.
    """
    c = np.asarray(c, dtype=float).ravel()
    program = ConvexProgram(np.zeros((c.size, c.size)), c, ineq, eq)
    return _Solver(program, check_unbounded=check_unbounded).run(warm)


def phase1(G, h, Aeq=None, beq=None, warm=None):
    """Largest normalized violation minimized over the equality set.

    Returns ``(value, point)``; the point is ``None`` when the equalities
    alone are inconsistent (value is then ``inf``).
    """
    G = np.asarray(G, dtype=float)
    d = G.shape[1]
    if Aeq is None:
        Aeq, beq = np.zeros((0, d)), np.zeros(0)
    prep = _prepare(G, np.asarray(h, dtype=float).ravel())
    value, point, _ = _phase1(prep[0], prep[1], np.asarray(Aeq, float),
                              np.asarray(beq, float).ravel(), warm, prep[3])
    return value, point


def _prepare(G, h):
    """Drop (numerically) zero rows and normalize the rest to unit norm.

    A row counts as zero when its norm is below ``1e-10`` of the largest row
    norm; it then only contributes the constant condition ``0 <= h_i``.
    """
    norms = np.linalg.norm(G, axis=1) if G.size else np.zeros(G.shape[0])
    zero = norms <= max(1e-14, ZERO_ROW_REL * np.max(norms, initial=0.0))
    bad_zero = float(np.max(-h[zero], initial=-np.inf))
    keep = ~zero
    Gn = G[keep] / norms[keep, None]
    hn = h[keep] / norms[keep]
    return Gn, hn, keep, bad_zero, norms


def _phase1(Gn, hn, Aeq, beq, warm, zero_violation):
    d = Gn.shape[1]
    x0 = _eq_point(Aeq, beq, d) if warm is None else np.asarray(warm, dtype=float).ravel()
    if x0 is None:
        return float("inf"), None, 0
    if Aeq.shape[0] and np.max(np.abs(Aeq @ x0 - beq)) > 1e-9 * (1 + np.max(np.abs(beq))):
        x0 = _eq_point(Aeq, beq, d)
        if x0 is None:
            return float("inf"), None, 0
    zv = zero_violation
    if Gn.shape[0] == 0:
        return max(zv, 0.0), x0, 0
    viol0 = float(np.max(Gn @ x0 - hn))
    if viol0 <= 0.0:
        return max(viol0, zv), x0, 0
    # variables (x, t): min t  s.t.  G x - t <= h,  -t <= 1
    m = Gn.shape[0]
    G1 = np.vstack([np.hstack([Gn, -np.ones((m, 1))]), np.hstack([np.zeros((1, d)), -np.ones((1, 1))])])
    h1 = np.concatenate([hn, [1.0]])
    A1 = np.hstack([Aeq, np.zeros((Aeq.shape[0], 1))])
    c1 = np.zeros(d + 1)
    c1[-1] = 1.0
    out = _ipm(np.zeros((d + 1, d + 1)), c1, G1, h1, A1, beq)
    if out is None:
        raise RuntimeError("phase-1 LP did not converge")
    xt, lam, nu, s, it = out
    value = float(np.max(Gn @ xt[:d] - hn))
    if np.isfinite(zv):
        value = max(value, zv)
    return value, xt[:d], it


def _eq_point(Aeq, beq, d):
    if Aeq.shape[0] == 0:
        return np.zeros(d)
    x, *_ = np.linalg.lstsq(Aeq, beq, rcond=None)
    if np.max(np.abs(Aeq @ x - beq)) > 1e-9 * (1 + np.max(np.abs(beq))):
        return None
    return x


class _Solver:
    """Mutable workspace for one solve; not shared across threads."""

    def __init__(self, program, check_unbounded=True):
        self.p = program
        self.check_unbounded = check_unbounded

    def run(self, warm=None):
        p = self.p
        d = p.dim
        G, h = p.ineq.H, p.ineq.h
        Aeq, beq = p.eq
        Gn, hn, keep, zero_violation, norms = _prepare(G, h)
        is_lp = p.is_lp
        Hq = p.hessian if is_lp else p.hessian + HESSIAN_REG * np.eye(d)
        iters = 0

        warm_ok = False
        if warm is not None:
            warm = np.asarray(warm, dtype=float).ravel()
            ok_ineq = Gn.shape[0] == 0 or np.max(Gn @ warm - hn) <= 1e-9
            ok_eq = Aeq.shape[0] == 0 or np.max(np.abs(Aeq @ warm - beq)) <= 1e-9 * (1 + np.max(np.abs(beq)))
            warm_ok = ok_ineq and ok_eq and not zero_violation > 1e-9
        if warm_ok:
            infeas = float(np.max(Gn @ warm - hn, initial=-np.inf))
            infeas = max(infeas, zero_violation) if np.isfinite(zero_violation) else infeas
        else:
            infeas, x1, it1 = _phase1(Gn, hn, Aeq, beq, None, zero_violation)
            iters += it1
            if not infeas <= INFEASIBILITY_TOL:
                return SolveResult(Status.INFEASIBLE, iterations=iters, infeasibility=infeas)
        if not np.isfinite(infeas):
            infeas = 0.0

        if is_lp and self.check_unbounded:
            ray, it_r = _ray(p.gradient, Gn, Aeq)
            iters += it_r
            if ray is not None:
                return SolveResult(Status.UNBOUNDED, iterations=iters, infeasibility=infeas, ray=ray)

        out = _ipm(Hq, p.gradient, Gn, hn, Aeq, beq)
        if out is None:
            return SolveResult(Status.ITERATION_LIMIT, iterations=iters + MAX_ITER, infeasibility=infeas)
        x, lam, nu, s, it = out
        iters += it
        x, lam, nu = _polish(Hq, p.gradient, Gn, hn, Aeq, beq, x, lam, nu, s)
        if not _kkt_ok(Hq, p.gradient, Gn, hn, Aeq, beq, x, lam, nu):
            return SolveResult(Status.ITERATION_LIMIT, iterations=iters, infeasibility=infeas)
        lam_full = np.zeros(G.shape[0])
        lam_full[keep] = lam / norms[keep]
        return SolveResult(Status.OPTIMAL, x, float(p.objective(x)), iters, lam_full, nu, infeas)


def _ray(c, Gn, Aeq):
    """Direction ``d`` with ``G d <= 0, Aeq d = 0, c'd < 0`` inside the unit box, if any."""
    d = c.size
    cnorm = np.max(np.abs(c), initial=0.0)
    if cnorm == 0.0:
        return None, 0
    Gr = np.vstack([Gn, np.eye(d), -np.eye(d)])
    hr = np.concatenate([np.zeros(Gn.shape[0]), np.ones(2 * d)])
    out = _ipm(np.zeros((d, d)), c / cnorm, Gr, hr, Aeq, np.zeros(Aeq.shape[0]))
    if out is None:
        raise RuntimeError("ray LP did not converge")
    x, lam, nu, s, it = out
    x, *_ = _polish(np.zeros((d, d)), c / cnorm, Gr, hr, Aeq, np.zeros(Aeq.shape[0]), x, lam, nu, s)
    if (c / cnorm) @ x < -1e-9 and np.max(Gn @ x, initial=0.0) <= 1e-10:
        return x, it
    return None, it


def _ipm(H, c, G, h, A, b):
    """Mehrotra predictor-corrector on normalized rows. Returns None on iteration limit."""
    d = c.size
    m = G.shape[0]
    me = A.shape[0]
    scale = 1.0 + max(np.max(np.abs(c), initial=0.0), np.max(np.abs(h), initial=0.0),
                      np.max(np.abs(b), initial=0.0))
    hdiag = np.max(np.abs(np.diag(H)), initial=0.0)
    delta = 1e-12 * (1.0 + hdiag)
    is_lp = not np.any(H)

    Lh = np.linalg.cholesky(H + delta * np.eye(d)) if not me else None

    def kkt_solve(w, r1, r2):
        if me:
            Kxx = H + (G.T * w) @ G + delta * np.eye(d)
            K = np.block([[Kxx, A.T], [A, -1e-14 * np.eye(me)]])
            sol = np.linalg.solve(K, np.concatenate([r1, r2]))
            return sol[:d], sol[d:]
        def op(v):
            return H @ v + delta * v + G.T @ (w * (G @ v))

        def refine(apply_inv, tol=0.0):
            sol = apply_inv(r1)
            for _ in range(REFINE_STEPS):
                res = r1 - op(sol)
                err = np.max(np.abs(res), initial=0.0)
                if err <= tol:
                    return sol, err
                sol = sol + apply_inv(res)
            return sol, np.max(np.abs(r1 - op(sol)), initial=0.0)

        # normal equations are fast and fine for QPs; LPs drive W to extremes
        # late in the run, where only the square-root form keeps dual accuracy
        if not is_lp:
            tol = 1e-10 * max(1.0, np.max(np.abs(r1), initial=0.0))
            try:
                fac = cho_factor(H + delta * np.eye(d) + (G.T * w) @ G, check_finite=False)
                sol, err = refine(lambda v: cho_solve(fac, v, check_finite=False), tol)
                if np.all(np.isfinite(sol)) and err <= tol:
                    return sol, np.zeros(0)
            except np.linalg.LinAlgError:
                pass
        # square-root form: R'R = H + delta I + G'WG from a QR of the stacked
        # factors, which avoids squaring the condition number of W^1/2 G
        R = np.linalg.qr(np.vstack([Lh.T, np.sqrt(w)[:, None] * G]), mode="r")
        if np.min(np.abs(np.diag(R))) <= 1e-300:
            raise np.linalg.LinAlgError("singular Newton system")
        sol, _ = refine(lambda v: solve_triangular(R, solve_triangular(R, v, trans="T")))
        return sol, np.zeros(0)

    # cvxopt-style starting point: least-squares fit with unit weights, shifted positive
    x, _ = kkt_solve(np.ones(m), -c + G.T @ h, b)
    s = h - G @ x
    lam = -s
    if m:
        shift = -np.min(s)
        if shift >= 0:
            s = s + 1.0 + shift
        shift = -np.min(lam)
        if shift >= 0:
            lam = lam + 1.0 + shift
    nu = np.zeros(me)
    best = (np.inf, None, None, None, None, 0)

    for it in range(1, MAX_ITER + 1):
        rd = H @ x + c + G.T @ lam + (A.T @ nu if me else 0.0)
        rp = G @ x + s - h
        re = A @ x - b if me else np.zeros(0)
        mu = (s @ lam) / m if m else 0.0
        obj = 0.5 * x @ H @ x + c @ x
        pres = max(np.max(np.abs(rp), initial=0.0), np.max(np.abs(re), initial=0.0))
        dres = np.max(np.abs(rd), initial=0.0)
        gap = m * mu
        merit = max(pres / scale, dres / scale, gap / max(1.0, abs(obj)))
        if pres <= 1e-9 * scale and dres <= 1e-9 * scale and gap <= 1e-10 * max(1.0, abs(obj)):
            return x, lam, nu, s, it
        if merit < best[0]:
            best = (merit, x, lam, nu, s, it)
        elif best[0] <= 1e-7 and it - best[5] >= 5:
            # stalled on an ill-conditioned Newton system; the polish step takes over
            break
        if m == 0:
            dx, dnu = kkt_solve(np.zeros(0), -rd, -re)
            x = x + dx
            nu = nu + dnu
            continue
        w = lam / s
        try:
            # predictor
            rc = s * lam
            r1 = -rd - G.T @ ((lam * rp - rc) / s)
            dx, dnu = kkt_solve(w, r1, -re)
            ds = -rp - G @ dx
            dl = -(rc + lam * ds) / s
            a_aff = _step(s, ds, lam, dl, 1.0)
            mu_aff = ((s + a_aff * ds) @ (lam + a_aff * dl)) / m
            sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
            # corrector
            rc = s * lam + ds * dl - sigma * mu
            r1 = -rd - G.T @ ((lam * rp - rc) / s)
            dx, dnu = kkt_solve(w, r1, -re)
        except np.linalg.LinAlgError:
            break
        ds = -rp - G @ dx
        dl = -(rc + lam * ds) / s
        if is_lp and not me:
            # independent primal and dual step lengths are valid for LPs
            ap = _step(s, ds, s, np.zeros(m), 0.99)
            ad = _step(lam, dl, lam, np.zeros(m), 0.99)
        else:
            ap = ad = _step(s, ds, lam, dl, 0.99)
        x = x + ap * dx
        s = s + ap * ds
        lam = lam + ad * dl
        nu = nu + ad * dnu
        if not (np.all(s > 0) and np.all(lam > 0) and np.all(np.isfinite(x))):
            break
    if best[0] <= 1e-7:
        return best[1:]
    return None


def _step(s, ds, lam, dl, frac):
    a = 1.0
    neg = ds < 0
    if np.any(neg):
        a = min(a, frac * np.min(-s[neg] / ds[neg]))
    neg = dl < 0
    if np.any(neg):
        a = min(a, frac * np.min(-lam[neg] / dl[neg]))
    return min(a, 1.0)


def _active_set(lam, s):
    """Rows judged active at the IPM point: those above the widest gap in ``lam/s``.

    The gap must span at least two decades; otherwise ``lam > s`` is used.
    """
    ratio = lam / np.maximum(s, 1e-300)
    if ratio.size < 2:
        return ratio > 1.0
    logs = np.log10(np.maximum(ratio, 1e-300))
    order = np.argsort(-logs)
    drops = logs[order[:-1]] - logs[order[1:]]
    k = int(np.argmax(drops))
    if drops[k] < 2.0:
        return ratio > 1.0
    active = np.zeros(ratio.size, dtype=bool)
    active[order[:k + 1]] = True
    return active


def _polish(H, c, G, h, A, b, x, lam, nu, s):
    """Tighten the IPM point; returns it unchanged when no repair certifies.

    First the active rows are made tight by the smallest correction of ``x``
    with multipliers from the same KKT solve. If that fails, ``x`` is kept and
    only the multipliers are re-fitted by NNLS on the nearly tight rows.
    """
    active = _active_set(lam, s)
    out = _polish_primal(H, c, G, h, A, b, x, active)
    if out is None:
        slack = h - G @ x
        tight = slack <= 1e-9 * (1.0 + np.max(np.abs(h), initial=0.0))
        for rows in (tight, tight | active):
            out = _polish_dual(H, c, G, A, x, rows, slack)
            if out is not None:
                break
    if out is None:
        out = _polish_scaled_dual(H, c, G, A, x, lam, nu)
    if out is None:
        return x, lam, nu
    xp, lamp, nup = out
    obj_ipm = 0.5 * x @ H @ x + c @ x
    obj_pol = 0.5 * xp @ H @ xp + c @ xp
    if obj_pol > obj_ipm + 1e-9 * max(1.0, abs(obj_ipm)):
        return x, lam, nu
    return xp, lamp, nup


def _stationary(H, c, Ga, A, x, la, nu):
    rd = H @ x + c + Ga.T @ la + (A.T @ nu if A.shape[0] else 0.0)
    sc = 1.0 + np.max(np.abs(c), initial=0.0) + np.max(np.abs(H @ x), initial=0.0)
    return np.max(np.abs(rd), initial=0.0) <= 1e-10 * sc


def _polish_primal(H, c, G, h, A, b, x, active):
    Ga = G[active]
    me = A.shape[0]
    na = Ga.shape[0]
    d = c.size
    K = np.block([
        [H, Ga.T, A.T],
        [Ga, np.zeros((na, na)), np.zeros((na, me))],
        [A, np.zeros((me, na)), np.zeros((me, me))],
    ])
    rhs = np.concatenate([-(H @ x + c), h[active] - Ga @ x, b - A @ x])
    try:
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    except np.linalg.LinAlgError:
        return None
    xp = x + sol[:d]
    la = sol[d:d + na]
    nup = sol[d + na:]
    if np.max(G @ xp - h, initial=-np.inf) > 1e-12 * (1.0 + np.max(np.abs(h), initial=0.0)):
        return None
    if me and np.max(np.abs(A @ xp - b)) > 1e-11 * (1.0 + np.max(np.abs(b))):
        return None
    if np.min(la, initial=0.0) < 0.0:
        la, nup = _nonnegative_multipliers(H @ xp + c, Ga, A)
    if not _stationary(H, c, Ga, A, xp, la, nup):
        return None
    lamp = np.zeros(G.shape[0])
    lamp[active] = la
    return xp, lamp, nup


def _polish_dual(H, c, G, A, x, tight, slack):
    Ga = G[tight]
    la, nup = _nonnegative_multipliers(H @ x + c, Ga, A)
    if not _stationary(H, c, Ga, A, x, la, nup):
        return None
    obj = 0.5 * x @ H @ x + c @ x
    if np.max(la * np.maximum(slack[tight], 0.0), initial=0.0) > 1e-9 * max(1.0, abs(obj)):
        return None
    lamp = np.zeros(G.shape[0])
    lamp[tight] = la
    return x, lamp, nup


def _polish_scaled_dual(H, c, G, A, x, lam, nu):
    # smallest correction in the lam-weighted norm that zeroes the dual
    # residual; entries pushed below zero are clipped, which removes them
    # from the weighting on the next pass
    lamp, nup = lam.copy(), nu.copy()
    for _ in range(5):
        rd = H @ x + c + G.T @ lamp + (A.T @ nup if A.shape[0] else 0.0)
        M = (G.T * lamp) @ G + A.T @ A
        try:
            g = np.linalg.lstsq(M, -rd, rcond=None)[0]
        except np.linalg.LinAlgError:
            return None
        lamp = np.maximum(lamp * (1.0 + G @ g), 0.0)
        nup = nup + A @ g
        if _stationary(H, c, G, A, x, lamp, nup):
            return x, lamp, nup
    return None


def _nonnegative_multipliers(grad, Ga, A):
    """Multipliers with ``grad + Ga' la + A' nu ~ 0`` and ``la >= 0`` (NNLS, nu split in +/-)."""
    from scipy.optimize import nnls

    me = A.shape[0]
    cols = np.hstack([Ga.T, A.T, -A.T]) if me else Ga.T
    if cols.shape[1] == 0:
        return np.zeros(0), np.zeros(me)
    sol, _ = nnls(cols, -grad, maxiter=50 * cols.shape[1])
    na = Ga.shape[0]
    return sol[:na], (sol[na:na + me] - sol[na + me:] if me else np.zeros(0))


def _kkt_ok(H, c, G, h, A, b, x, lam, nu):
    rd = H @ x + c + G.T @ lam + (A.T @ nu if A.shape[0] else 0.0)
    sc = 1.0 + np.max(np.abs(c), initial=0.0) + np.max(np.abs(H @ x), initial=0.0)
    if np.max(np.abs(rd), initial=0.0) > KKT_TOL * sc:
        return False
    slack = h - G @ x
    if np.min(slack, initial=0.0) < -KKT_TOL * (1 + np.max(np.abs(h), initial=0.0)):
        return False
    if A.shape[0] and np.max(np.abs(A @ x - b)) > KKT_TOL * (1 + np.max(np.abs(b))):
        return False
    if np.min(lam, initial=0.0) < -KKT_TOL:
        return False
    comp = np.abs(lam * np.maximum(slack, 0.0))
    return np.max(comp, initial=0.0) <= KKT_TOL * max(1.0, abs(0.5 * x @ H @ x + c @ x))


def kkt_residual(program, result):
    """Largest of stationarity, primal, dual and complementarity residuals."""
    p = program
    x = result.point
    lam = result.ineq_dual
    nu = result.eq_dual if result.eq_dual is not None else np.zeros(0)
    G, h = p.ineq.H, p.ineq.h
    A, b = p.eq
    Hq = p.hessian if p.is_lp else p.hessian + HESSIAN_REG * np.eye(p.dim)
    rd = Hq @ x + p.gradient + G.T @ lam + (A.T @ nu if A.shape[0] else 0.0)
    slack = h - G @ x
    vals = [np.max(np.abs(rd), initial=0.0),
            max(0.0, -np.min(slack, initial=0.0)),
            max(0.0, -np.min(lam, initial=0.0)),
            np.max(np.abs(lam * slack), initial=0.0)]
    if A.shape[0]:
        vals.append(np.max(np.abs(A @ x - b)))
    return float(max(vals))
