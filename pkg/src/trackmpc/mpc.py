"""Online controller: condensed tracking QP with an artificial reference.

Decision vector ``z = [free part of rbar(0); v(0); ...; v(N-1)]``. In the
mixed (non-periodic) case the non-periodic block of ``rbar(0)`` is pinned to
the saturated non-periodic part of the current reference, which keeps the
terminal constraint linear.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import solver
from .errors import NoFallback
from .model import split
from .solver import ConvexProgram, Inequalities, Status

log = logging.getLogger(__name__)

FEAS_TOL = 1e-7


def saturate_beta(beta, Tn, upsilon):
    """Radial projection of ``beta`` onto ``{b : b'Tn b <= upsilon^2}``."""
    beta = np.asarray(beta, dtype=float)
    if beta.size == 0:
        return beta.copy()
    nb = math.sqrt(max(float(beta @ Tn @ beta), 0.0))
    if nb == 0.0 or nb <= upsilon:
        return beta.copy()
    return (upsilon / nb) * beta


@dataclass(frozen=True, eq=False)
class Layout:
    """Index bookkeeping between ``y = [rbar(0); v]`` and the free vector ``z``."""

    q: int
    m: int
    horizon: int
    free: np.ndarray
    pinned: np.ndarray

    @property
    def dim(self):
        return self.free.size

    def expand(self, z, y_pin):
        y = y_pin.copy()
        y[self.free] = z
        return y

    def rbar(self, y):
        return y[:self.q]

    def moves(self, y):
        return y[self.q:].reshape(self.horizon, self.m)


class _Structure:
    """Everything in the QP that depends on the design alone."""

    def __init__(self, design, pin_reference):
        plant, exo = design.plant, design.exo
        n, m, q, N = plant.n, plant.m, exo.q, design.horizon
        Acl, B, K = plant.Acl, plant.B, plant.K
        Pi, Ga = design.regulator.Pi, design.regulator.Gamma
        S = exo.S
        w = design.weights
        self.n, self.m, self.q, self.N = n, m, q, N
        self.mixed = design.terminal.variant == "mixed"
        sp = split(exo)
        self.p_index, self.n_index = sp.p_index, sp.n_index
        dy = q + N * m

        # xbar(k) = Phi[k] x + Psi[k] y
        Phi = [np.eye(n)]
        Psi = [np.hstack([-Pi, np.zeros((n, N * m))])]
        for k in range(N):
            Ph = Acl @ Phi[-1]
            Ps = Acl @ Psi[-1]
            Ps[:, q + k * m:q + (k + 1) * m] += B
            Phi.append(Ph)
            Psi.append(Ps)
        self.Phi, self.Psi = Phi, Psi
        Er = np.hstack([np.eye(q), np.zeros((q, N * m))])

        Hy = Er.T @ w.T @ Er
        Gx = np.zeros((dy, n))
        Cx = np.zeros((n, n))
        for k in range(N + 1):
            W = w.P if k == N else w.Q
            Hy += Psi[k].T @ W @ Psi[k]
            Gx += Psi[k].T @ W @ Phi[k]
            Cx += Phi[k].T @ W @ Phi[k]
        # J = y'Hy y + 2 x'Gx'y - 2 r'T Er y + x'Cx x + r'T r
        self.Hy = 2.0 * Hy
        self.Gx = 2.0 * Gx
        self.Gr = -2.0 * Er.T @ w.T
        self.Cx = Cx
        self.T = w.T

        ZH, Zh = plant.Z.H, plant.Z.h
        rows, rhs_x = [], []
        Sk = np.eye(q)
        for k in range(N):
            Ev = np.zeros((m, dy))
            Ev[:, q + k * m:q + (k + 1) * m] = np.eye(m)
            top = Psi[k] + Pi @ Sk @ Er
            bot = K @ Psi[k] + Ga @ Sk @ Er + Ev
            rows.append(ZH @ np.vstack([top, bot]))
            rhs_x.append(ZH @ np.vstack([Phi[k], K @ Phi[k]]))
            Sk = S @ Sk
        self.stage_G = np.vstack(rows)
        self.stage_h = np.tile(Zh, N)
        self.stage_W = np.vstack(rhs_x)

        O = design.terminal.polytope
        if self.mixed:
            SpN = np.linalg.matrix_power(sp.Sp, N) if sp.Sp.size else np.zeros((0, 0))
            ref = SpN @ Er[self.p_index]
        else:
            ref = Sk @ Er
        self.term_G = O.H @ np.vstack([Psi[N], ref])
        self.term_h = O.h.copy()
        self.term_W = O.H[:, :n] @ Phi[N]
        self.G = np.vstack([self.stage_G, self.term_G])

        if pin_reference:
            pinned = np.arange(q)
        elif self.mixed:
            pinned = self.n_index.copy()
        else:
            pinned = np.zeros(0, dtype=int)
        free = np.setdiff1d(np.arange(dy), pinned)
        self.layout = Layout(q, m, N, free, pinned)
        self.Gz = self.G[:, free]
        self.Hz = self.Hy[np.ix_(free, free)]


_CACHE = {}


def structure(design, pin_reference=False):
    key = (id(design), bool(pin_reference))
    entry = _CACHE.get(key)
    if entry is None or entry[0] is not design:
        entry = (design, _Structure(design, pin_reference))
        _CACHE[key] = entry
    return entry[1]


def pinned_reference(design, r, pin_reference=False):
    """``y`` with the pinned entries filled in (zeros elsewhere)."""
    st = structure(design, pin_reference)
    y = np.zeros(st.q + st.N * st.m)
    r = np.asarray(r, dtype=float)
    if pin_reference:
        y[:st.q] = r
    elif st.mixed:
        ts = design.terminal
        y[st.n_index] = saturate_beta(r[st.n_index], ts.Tn, ts.upsilon)
    return y


def terminal_scale(design, y):
    """Factor multiplying the terminal right-hand side."""
    st = structure(design)
    if not st.mixed:
        return 1.0
    beta = y[st.n_index]
    return design.terminal.scale_factor(beta)


def build_qp(design, x, r, pin_reference=False):
    """Condensed QP at state ``x`` and reference ``r``.

    Returns ``(program, layout, y_pin)``; ``layout.expand(z, y_pin)`` maps a
    QP point back to ``[rbar(0); v]``. The program objective omits the
    constant term; use :func:`cost` for the true value of J.
    """
    st = structure(design, pin_reference)
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    y_pin = pinned_reference(design, r, pin_reference)
    f = terminal_scale(design, y_pin) if st.mixed else 1.0
    gy = st.Gx @ x + st.Gr @ r
    h = np.concatenate([st.stage_h - st.stage_W @ x, f * st.term_h - st.term_W @ x])
    h = h - st.G @ y_pin
    free = st.layout.free
    g = (st.Hy @ y_pin + gy)[free]
    program = ConvexProgram(st.Hz, g, Inequalities(st.Gz, h))
    return program, st.layout, y_pin


def predict(design, x, rbar0, moves):
    """Predicted ``xbar(0..N)`` and ``rbar(0..N)``."""
    plant = design.plant
    Acl, B = plant.Acl, plant.B
    S = design.exo.S
    xb = [np.asarray(x, dtype=float) - design.regulator.Pi @ rbar0]
    rb = [np.asarray(rbar0, dtype=float)]
    for v in moves:
        xb.append(Acl @ xb[-1] + B @ v)
        rb.append(S @ rb[-1])
    return np.array(xb), np.array(rb)


def cost(design, x, r, rbar0, moves):
    """Explicit ``J = sum |xbar(k)|_Q^2 + |xbar(N)|_P^2 + |r - rbar(0)|_T^2``."""
    w = design.weights
    xb, _ = predict(design, x, rbar0, moves)
    J = sum(float(e @ w.Q @ e) for e in xb[:-1]) + float(xb[-1] @ w.P @ xb[-1])
    er = np.asarray(r, dtype=float) - rbar0
    return J + float(er @ w.T @ er)


def control(design, x, rbar0, v0):
    """``u = K xbar(0) + Gamma rbar(0) + v(0)``."""
    plant, reg = design.plant, design.regulator
    xbar0 = np.asarray(x, dtype=float) - reg.Pi @ rbar0
    return plant.K @ xbar0 + reg.Gamma @ rbar0 + v0


@dataclass
class StepResult:
    u: np.ndarray
    rbar_star: np.ndarray
    v0_star: np.ndarray
    cost: float
    feasible: bool
    decision_dim: int
    qp_iterations: int
    xbar0: np.ndarray
    infeasibility: float = 0.0
    candidate_margin: float = -math.inf
    status: str = "optimal"


@dataclass
class ControllerState:
    design: object
    rbar: Optional[np.ndarray] = None
    moves: Optional[np.ndarray] = None
    steps: int = 0


class Controller:
    """Receding-horizon controller holding the warm-start memory.

    ``pin_reference`` fixes ``rbar(0) = r`` (diagnostic mode, no artificial
    reference). ``strict`` turns any infeasible step into :class:`NoFallback`
    instead of applying the shifted previous plan.
    """

    def __init__(self, design, pin_reference=False, strict=False):
        self.design = design
        self.pin_reference = pin_reference
        self.strict = strict or pin_reference
        self.state = ControllerState(design)

    def shift_candidate(self):
        st = self.state
        if st.rbar is None:
            return None
        S = self.design.exo.S
        moves = np.vstack([st.moves[1:], np.zeros((1, st.moves.shape[1]))])
        return S @ st.rbar, moves

    def step(self, x, r):
        design = self.design
        x = np.asarray(x, dtype=float)
        r = np.asarray(r, dtype=float)
        program, layout, y_pin = build_qp(design, x, r, self.pin_reference)
        cand = self.shift_candidate()
        warm = None
        cand_margin = -math.inf
        if cand is not None:
            y_c = np.concatenate([cand[0], cand[1].ravel()])
            z_c = y_c[layout.free]
            ineq = program.ineq
            cand_margin = float(np.max(ineq.H @ z_c - ineq.h, initial=-math.inf))
            # the candidate only matches the pinned block when r evolved as S r
            if np.allclose(y_c[layout.pinned], y_pin[layout.pinned], atol=1e-9, rtol=0.0):
                warm = z_c
            else:
                cand_margin = math.nan
        res = solver.solve(program, warm=warm)
        idx = self.state.steps
        self.state.steps += 1
        if res.optimal:
            y = layout.expand(res.point, y_pin)
            rbar0 = layout.rbar(y)
            moves = layout.moves(y)
            self.state.rbar, self.state.moves = rbar0.copy(), moves.copy()
            return StepResult(
                u=control(design, x, rbar0, moves[0]), rbar_star=rbar0, v0_star=moves[0].copy(),
                cost=cost(design, x, r, rbar0, moves), feasible=True, decision_dim=layout.dim,
                qp_iterations=res.iterations, xbar0=x - design.regulator.Pi @ rbar0,
                infeasibility=0.0, candidate_margin=cand_margin, status=res.status.value)
        infeas = float(res.infeasibility) if res.infeasibility is not None else math.nan
        if cand is None or self.strict:
            raise NoFallback(
                f"QP {res.status.value} at step {idx} (phase-1 value {infeas:.3e})",
                step=idx, infeasibility=infeas)
        log.warning("QP %s at step %d (phase-1 value %.3e); applying the shifted plan",
                    res.status.value, idx, infeas)
        rbar0, moves = cand
        self.state.rbar, self.state.moves = rbar0.copy(), moves.copy()
        return StepResult(
            u=control(design, x, rbar0, moves[0]), rbar_star=rbar0, v0_star=moves[0].copy(),
            cost=cost(design, x, r, rbar0, moves), feasible=False, decision_dim=layout.dim,
            qp_iterations=res.iterations, xbar0=x - design.regulator.Pi @ rbar0,
            infeasibility=infeas, candidate_margin=cand_margin, status=res.status.value)
