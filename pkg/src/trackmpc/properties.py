"""Sampled checks of terminal-set invariance and reference-set identities.

Points are drawn deterministically from a seed so that a failing check can
be replayed. Each check returns a :class:`PropertyReport` holding the number
of samples, the number of failures and the worst constraint excess seen.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from . import geometry
from .geometry import Polytope
from .model import split
from .synthesis import rf_contains, rfm_contains, terminal_contains

SAMPLE_TOL = 1e-7


@dataclass
class PropertyReport:
    name: str
    samples: int
    failures: int
    worst: float

    @property
    def passed(self):
        return self.failures == 0

    def format(self):
        mark = "PASS" if self.passed else "FAIL"
        worst = "n/a" if math.isnan(self.worst) else f"{self.worst:.2e}"
        return (f"[{mark}] {self.name:<34} samples={self.samples:<5d} failures={self.failures:<4d} "
                f"worst excess={worst}")


def _ellipsoid_point(Tn, radius, rng):
    """Point with ``|b|_Tn = u * radius``, ``u`` uniform in [0, 1]."""
    d = rng.normal(size=Tn.shape[0])
    d /= math.sqrt(float(d @ Tn @ d))
    return rng.uniform() * radius * d


def _beta_radius(ts):
    return 1.0 if math.isinf(ts.upsilon) else ts.upsilon


def _terminal_samples(P, count, rng):
    # a tenth on the boundary, where invariance is tight
    nb = count // 10
    pts = geometry.sample_boundary_points(P, nb, seed=int(rng.integers(2**31)))
    return pts + geometry.sample_points(P, count - nb, seed=int(rng.integers(2**31)))


def sample_terminal(design, count, seed=0):
    """Points ``(xbar, r)`` of the terminal set, in natural reference order."""
    ts = design.terminal
    n = design.plant.n
    rng = np.random.default_rng(seed)
    if ts.variant == "periodic":
        return [(p[:n], p[n:]) for p in _terminal_samples(ts.polytope, count, rng)]
    sp = split(design.exo)
    inner = _terminal_samples(ts.polytope, count, rng)
    out = []
    for p in inner:
        beta = _ellipsoid_point(ts.Tn, _beta_radius(ts), rng)
        f = max(ts.scale_factor(beta), 0.0)
        r = np.zeros(design.exo.q)
        r[sp.p_index] = f * p[n:]
        r[sp.n_index] = beta
        out.append((f * p[:n], r))
    return out


def _alpha_slice(design):
    ts = design.terminal
    n = design.plant.n
    return Polytope(ts.polytope.H[:, n:], ts.polytope.h)


def sample_reference_set(design, count, seed=0):
    """Points of ``R_f = {r : [0; r] in Z_f}``."""
    ts = design.terminal
    rng = np.random.default_rng(seed)
    R = _alpha_slice(design)
    if R.dim == 0:
        pts = [np.zeros(0) for _ in range(count)]
    else:
        pts = geometry.sample_points(R, count, seed=int(rng.integers(2**31)))
    if ts.variant == "periodic":
        return pts
    sp = split(design.exo)
    out = []
    for a in pts:
        beta = _ellipsoid_point(ts.Tn, _beta_radius(ts), rng)
        r = np.zeros(design.exo.q)
        r[sp.p_index] = max(ts.scale_factor(beta), 0.0) * a
        r[sp.n_index] = beta
        out.append(r)
    return out


def _excess_terminal(design, xbar, r):
    """Largest violation of the terminal constraint at ``(xbar, r)`` (<= 0 inside)."""
    ts = design.terminal
    P = ts.polytope
    if ts.variant == "periodic":
        return float(np.max(P.H @ np.concatenate([xbar, r]) - P.h))
    sp = split(design.exo)
    f = ts.scale_factor(r[sp.n_index])
    z = np.concatenate([xbar, r[sp.p_index]])
    return float(max(np.max(P.H @ z - max(f, 0.0) * P.h), -f * _beta_radius(ts)))


def check_invariance(design, count=1000, seed=0, tol=SAMPLE_TOL):
    """(A8): successor stays in Z_f, and the steady input/state lies in Z."""
    Acl, S = design.plant.Acl, design.exo.S
    Mo = design.output_map
    Z = design.plant.Z
    fail_i = fail_ii = 0
    worst_i = worst_ii = -math.inf
    pts = sample_terminal(design, count, seed)
    for xbar, r in pts:
        e1 = _excess_terminal(design, Acl @ xbar, S @ r)
        e2 = float(np.max(Z.H @ (Mo @ np.concatenate([xbar, r])) - Z.h))
        worst_i, worst_ii = max(worst_i, e1), max(worst_ii, e2)
        fail_i += e1 > tol
        fail_ii += e2 > tol
    return [PropertyReport("invariance under (A_cl, S)", len(pts), fail_i, worst_i),
            PropertyReport("steady point inside Z", len(pts), fail_ii, worst_ii)]


def check_reference_set(design, count=200, seed=0, tol=SAMPLE_TOL):
    """R_f invariance under S and S^(k0-1), slice/projection agreement, R_f = R_f^m."""
    exo = design.exo
    S = exo.S
    Sback = np.linalg.matrix_power(S, max(exo.k0 - 1, 0)) if exo.q else S
    n = design.plant.n
    zero = np.zeros(n)
    refs = sample_reference_set(design, count, seed)
    f_inv = f_slice = f_m = 0
    worst_inv = worst_slice = -math.inf
    for r in refs:
        e = max(_excess_terminal(design, zero, S @ r), _excess_terminal(design, zero, Sback @ r))
        worst_inv = max(worst_inv, e)
        f_inv += e > tol
        f_m += not rfm_contains(r, design, tol)
    for xbar, r in sample_terminal(design, count, seed + 1):
        e = _excess_terminal(design, zero, r)
        worst_slice = max(worst_slice, e)
        f_slice += e > tol
    # outside points: stretch boundary-ish samples beyond the set and require
    # both descriptions to reject them
    rng = np.random.default_rng(seed + 2)
    outside = 0
    for r in refs:
        if not np.any(r):
            continue
        k = 1.0
        while rf_contains(design, k * r, 0.0) and k < 1e6:
            k *= 1.5
        if k >= 1e6:
            continue
        rr = k * r * (1.0 + 0.01 * rng.uniform())
        outside += 1
        f_m += rfm_contains(rr, design, 0.0) != terminal_contains(design, zero, rr, 0.0)
    return [
        PropertyReport("R_f invariant under S and S^(k0-1)", len(refs), f_inv, worst_inv),
        PropertyReport("projection of Z_f inside the slice", count, f_slice, worst_slice),
        PropertyReport("R_f = R_f^m membership agreement", len(refs) + outside, f_m, math.nan),
    ]


def seed_from_env(default=0):
    raw = os.environ.get("TRACKMPC_SEED")
    if raw is None or raw.strip() == "":
        return default
    return int(raw)
