"""JSON persistence of a synthesized :class:`ControllerDesign`.

Floats are written with Python's shortest round-trip repr and keys are
sorted, so ``dumps(loads(s)) == s`` byte for byte. Infinite values (an
unconstrained non-periodic part) are stored as the string ``"inf"``.
"""

import json
import math

import numpy as np

from .errors import ConfigError
from .geometry import Polytope
from .model import ExoBlock, ExosystemModel, PlantModel
from .synthesis import ControllerDesign, CostWeights, RegulatorSolution, TerminalSet

FORMAT = "trackmpc-design/1"


def _mat(M):
    M = np.asarray(M, dtype=float)
    return {"shape": list(M.shape), "data": [float(v) for v in M.ravel()]}


def _unmat(d):
    return np.array(d["data"], dtype=float).reshape(d["shape"])


def _num(v):
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _unnum(v):
    return float(v)


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return _num(v)
    return v


def to_dict(design, config_hash=""):
    p, e, reg, w, ts = design.plant, design.exo, design.regulator, design.weights, design.terminal
    return {
        "format": FORMAT,
        "config_hash": config_hash,
        "horizon": int(design.horizon),
        "plant": {"A": _mat(p.A), "B": _mat(p.B), "C": _mat(p.C), "K": _mat(p.K),
                  "Z_H": _mat(p.Z.H), "Z_h": _mat(p.Z.h)},
        "exosystem": {"k0": int(e.k0), "Qe": _mat(e.Qe),
                      "blocks": [{"kind": b.kind, "M": _mat(b.M)} for b in e.blocks]},
        "regulator": {"Pi": _mat(reg.Pi), "Gamma": _mat(reg.Gamma), "L": _mat(reg.L)},
        "weights": {"Q": _mat(w.Q), "P": _mat(w.P), "T": _mat(w.T)},
        "terminal": {
            "variant": ts.variant, "H": _mat(ts.polytope.H), "h": _mat(ts.polytope.h),
            "iterations": int(ts.iterations),
            "Tn": None if ts.Tn is None else _mat(ts.Tn),
            "upsilon": _num(ts.upsilon), "growth": [int(g) for g in ts.growth],
        },
        "meta": _plain(design.meta),
    }


def from_dict(d):
    if d.get("format") != FORMAT:
        raise ConfigError(f"unknown artifact format {d.get('format')!r}", field="format")
    pl, ex = d["plant"], d["exosystem"]
    plant = PlantModel(_unmat(pl["A"]), _unmat(pl["B"]), _unmat(pl["C"]), _unmat(pl["K"]),
                       Polytope(_unmat(pl["Z_H"]), _unmat(pl["Z_h"])))
    exo = ExosystemModel(tuple(ExoBlock(b["kind"], _unmat(b["M"])) for b in ex["blocks"]),
                         _unmat(ex["Qe"]), ex["k0"])
    rg, wt, tm = d["regulator"], d["weights"], d["terminal"]
    reg = RegulatorSolution(_unmat(rg["Pi"]), _unmat(rg["Gamma"]), _unmat(rg["L"]))
    weights = CostWeights(_unmat(wt["Q"]), _unmat(wt["P"]), _unmat(wt["T"]))
    ts = TerminalSet(tm["variant"], Polytope(_unmat(tm["H"]), _unmat(tm["h"])), tm["iterations"],
                     None if tm["Tn"] is None else _unmat(tm["Tn"]), _unnum(tm["upsilon"]),
                     tuple(tm["growth"]))
    design = ControllerDesign(plant, exo, reg, weights, ts, d["horizon"], dict(d["meta"]))
    return design, d.get("config_hash", "")


def dumps(design, config_hash=""):
    return json.dumps(to_dict(design, config_hash), sort_keys=True, indent=1) + "\n"


def loads(text):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"artifact is not valid JSON: {exc.msg}", line=exc.lineno,
                          field="<document>") from None
    try:
        return from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed artifact: {exc}", field="<artifact>") from None


def save(path, design, config_hash=""):
    with open(path, "w") as fh:
        fh.write(dumps(design, config_hash))


def load(path):
    with open(path) as fh:
        return loads(fh.read())
