"""Closed-loop simulation, logging and run metrics."""

import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from . import geometry
from .errors import NoFallback, TheoremViolation
from .mpc import FEAS_TOL, Controller
from .synthesis import rfm_contains

COST_TOL = 1e-6
FINAL_WINDOW = 50


@dataclass(frozen=True)
class ReferenceProgram:
    """``r(0)`` plus scheduled overrides ``r(step) = value``."""

    initial: np.ndarray
    switches: Tuple[Tuple[int, np.ndarray], ...] = ()

    def __post_init__(self):
        init = np.asarray(self.initial, dtype=float).ravel()
        sw = tuple((int(k), np.asarray(v, dtype=float).ravel()) for k, v in self.switches)
        steps = [k for k, _ in sw]
        if any(k < 1 for k in steps):
            raise ValueError("switch steps must be >= 1")
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("switch steps must be strictly increasing")
        for _, v in sw:
            if v.size != init.size:
                raise ValueError("switch value has the wrong dimension")
        object.__setattr__(self, "initial", init)
        object.__setattr__(self, "switches", sw)

    @property
    def switch_steps(self):
        return [k for k, _ in self.switches]

    def value_at(self, t):
        for k, v in self.switches:
            if k == t:
                return v
        return None


def exo_step(exo, r, program, t):
    """``r(t+1)``: the scheduled value if ``t+1`` is a switch step, else ``S r(t)``."""
    nxt = program.value_at(t + 1)
    if nxt is not None:
        return nxt.copy()
    return exo.S @ np.asarray(r, dtype=float)


@dataclass
class SimLog:
    t: List[int] = field(default_factory=list)
    x: List[np.ndarray] = field(default_factory=list)
    u: List[np.ndarray] = field(default_factory=list)
    r: List[np.ndarray] = field(default_factory=list)
    rbar: List[np.ndarray] = field(default_factory=list)
    v0: List[np.ndarray] = field(default_factory=list)
    xbar0: List[np.ndarray] = field(default_factory=list)
    cost: List[float] = field(default_factory=list)
    feasible: List[bool] = field(default_factory=list)
    e: List[np.ndarray] = field(default_factory=list)
    margin: List[float] = field(default_factory=list)
    rfm: List[bool] = field(default_factory=list)
    candidate_margin: List[float] = field(default_factory=list)
    qp_iterations: List[int] = field(default_factory=list)
    x_final: np.ndarray = None

    def __len__(self):
        return len(self.t)

    def e_norm(self):
        return np.array([float(np.linalg.norm(e)) for e in self.e])


def run_closed_loop(plant, design, program, x0, steps, pin_reference=False, strict=False,
                    check_rfm=False):
    """Simulate ``steps`` closed-loop steps from ``x0``.

    ``strict`` raises :class:`TheoremViolation` when a feasible step breaks
    the input/state constraints or the shifted plan from the previous step is
    not feasible after a non-switch step. Infeasibility without a fallback
    propagates as :class:`NoFallback` carrying the step index and the log
    up to that step.
    """
    exo = design.exo
    ctrl = Controller(design, pin_reference=pin_reference, strict=strict)
    x = np.asarray(x0, dtype=float).copy()
    r = program.initial.copy()
    if x.size != plant.n:
        raise ValueError(f"x0 must have {plant.n} entries")
    switch = set(program.switch_steps)
    log = SimLog()
    Z = plant.Z
    Qe = exo.Qe
    for t in range(steps):
        try:
            res = ctrl.step(x, r)
        except NoFallback as exc:
            exc.step = t
            exc.log = log
            raise
        z = np.concatenate([x, res.u])
        mg = geometry.margin(Z, z)
        if strict and res.feasible and mg > FEAS_TOL:
            raise TheoremViolation(f"constraint margin {mg:.3e} at step {t}", step=t)
        if strict and t > 0 and t not in switch and res.candidate_margin > FEAS_TOL:
            raise TheoremViolation(
                f"shifted plan infeasible by {res.candidate_margin:.3e} at step {t}", step=t)
        log.t.append(t)
        log.x.append(x.copy())
        log.u.append(res.u.copy())
        log.r.append(r.copy())
        log.rbar.append(res.rbar_star.copy())
        log.v0.append(res.v0_star.copy())
        log.xbar0.append(res.xbar0.copy())
        log.cost.append(res.cost)
        log.feasible.append(res.feasible)
        log.e.append(plant.C @ x - Qe @ r)
        log.margin.append(mg)
        log.rfm.append(bool(rfm_contains(r, design)) if check_rfm else False)
        log.candidate_margin.append(res.candidate_margin)
        log.qp_iterations.append(res.qp_iterations)
        x = plant.A @ x + plant.B @ res.u
        r = exo_step(exo, r, program, t)
    log.x_final = x
    return log


@dataclass
class Metrics:
    steps: int
    max_margin: float
    constraint_violations: int
    cost_violations: int
    cost_increases: List[int]
    segment_final_error: List[float]
    feasible_steps: int

    def format(self):
        seg = ", ".join(f"{e:.3e}" for e in self.segment_final_error)
        return "\n".join([
            f"steps                     {self.steps}",
            f"feasible steps            {self.feasible_steps}",
            f"max constraint margin     {self.max_margin:.3e}",
            f"constraint violations     {self.constraint_violations}",
            f"cost-decrease violations  {self.cost_violations}",
            f"cost increases at         {self.cost_increases}",
            f"segment final max |e|     [{seg}]",
        ])


def metrics(log, switch_steps, Q, window=FINAL_WINDOW, tol=COST_TOL):
    """Summary figures of a run.

    A cost-decrease violation is a non-switch step with
    ``J(t+1) - J(t) > -|xbar(0|t)|_Q^2 + tol``. Segment errors are the max of
    ``|e|`` over the last ``window`` steps before each switch and before the end.
    Cost increases are steps where J grows by more than ``tol``.
    """
    T = len(log)
    if T == 0:
        return Metrics(0, -math.inf, 0, 0, [], [], 0)
    switch = set(switch_steps)
    margins = np.array(log.margin)
    viol = 0
    incs = []
    for t in range(T - 1):
        dJ = log.cost[t + 1] - log.cost[t]
        if dJ > tol:
            incs.append(t + 1)
        if (t + 1) in switch:
            continue
        xb = log.xbar0[t]
        if dJ > -float(xb @ Q @ xb) + tol:
            viol += 1
    en = log.e_norm()
    ends = sorted(k for k in switch if 0 < k <= T) + [T]
    starts = [0] + ends[:-1]
    seg = [float(np.max(en[max(s, e - window):e])) for s, e in zip(starts, ends) if e > s]
    return Metrics(T, float(np.max(margins)), int(np.sum(margins > FEAS_TOL)), viol, incs, seg,
                   int(sum(log.feasible)))
