"""YAML problem configuration.

Matrices are row-major nested lists. Any entry may be a number or a short
arithmetic expression string such as ``"-pi/24"`` or ``"cos(-0.45*pi)"``.
Exosystem blocks are given either as a discrete ``matrix`` or as a
continuous ``generator`` that is discretized with ``expm2`` over the block's
``sampling_period`` (default: the exosystem-level one).

Errors carry the YAML line of the offending field.
"""

import ast
import hashlib
import json
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .errors import ConfigError
from .geometry import Polytope
from .linalg import expm2
from .model import ExoBlock, ExosystemModel, PlantModel
from .sim import ReferenceProgram

_FUNCS = {"sin": math.sin, "cos": math.cos, "tan": math.tan, "sqrt": math.sqrt,
          "exp": math.exp, "log": math.log, "atan2": math.atan2}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}


def evaluate(expr):
    """Evaluate a numeric expression with ``pi``, ``e`` and a few math functions."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in _CONSTS:
            return _CONSTS[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](ev(node.operand))
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and not node.keywords):
            return float(_FUNCS[node.func.id](*[ev(a) for a in node.args]))
        raise ValueError(f"unsupported expression element {ast.dump(node)[:40]}")

    try:
        tree = ast.parse(str(expr).strip(), mode="eval")
    except SyntaxError:
        raise ValueError(f"cannot parse expression {expr!r}") from None
    value = ev(tree)
    if not math.isfinite(value):
        raise ValueError(f"expression {expr!r} is not finite")
    return value


def _line_index(text):
    """Map from key path (tuple) to 1-based line number."""
    index = {}

    def walk(node, path):
        index[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                walk(v, path + (k.value,))
                index.setdefault(path + (k.value,), k.start_mark.line + 1)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,))

    root = yaml.compose(text, Loader=yaml.SafeLoader)
    if root is not None:
        walk(root, ())
    return index


class _Reader:
    def __init__(self, data, lines):
        self.data = data
        self.lines = lines

    def line(self, path):
        path = tuple(path)
        while path and path not in self.lines:
            path = path[:-1]
        return self.lines.get(path)

    def fail(self, path, message):
        name = ".".join(str(p) for p in path) or "<root>"
        raise ConfigError(message, line=self.line(path), field=name)

    def get(self, path, default=KeyError):
        node = self.data
        for i, p in enumerate(path):
            if isinstance(node, dict) and p in node:
                node = node[p]
            elif isinstance(node, list) and isinstance(p, int) and p < len(node):
                node = node[p]
            else:
                if default is KeyError:
                    self.fail(path[:i + 1], "missing required field")
                return default
        return node

    def scalar(self, path, default=KeyError):
        v = self.get(path, default)
        if v is default and default is not KeyError:
            return v
        try:
            if isinstance(v, bool):
                raise ValueError("boolean is not a number")
            return float(v) if isinstance(v, (int, float)) else evaluate(v)
        except (ValueError, TypeError, ZeroDivisionError, OverflowError) as exc:
            self.fail(path, str(exc))

    def integer(self, path, default=KeyError):
        v = self.get(path, default)
        if v is default and default is not KeyError:
            return v
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail(path, f"expected an integer, got {v!r}")
        return v

    def vector(self, path, size=None, default=KeyError):
        v = self.get(path, default)
        if v is default and default is not KeyError:
            return v
        if not isinstance(v, list):
            self.fail(path, "expected a list of numbers")
        out = np.array([self.scalar(tuple(path) + (i,)) for i in range(len(v))])
        if size is not None and out.size != size:
            self.fail(path, f"expected {size} entries, got {out.size}")
        return out

    def matrix(self, path, shape=None, default=KeyError):
        """Nested list, a scalar (times identity) or the string ``"I"``."""
        v = self.get(path, default)
        if v is default and default is not KeyError:
            return v
        if isinstance(v, str) and v.strip() == "I" or not isinstance(v, list):
            if shape is None or shape[0] != shape[1]:
                self.fail(path, "scalar or identity shorthand needs a known square shape")
            s = 1.0 if isinstance(v, str) and v.strip() == "I" else self.scalar(path)
            return s * np.eye(shape[0])
        rows = []
        for i, row in enumerate(v):
            if not isinstance(row, list):
                self.fail(tuple(path) + (i,), "matrix rows must be lists")
            rows.append([self.scalar(tuple(path) + (i, j)) for j in range(len(row))])
        if rows and any(len(r) != len(rows[0]) for r in rows):
            self.fail(path, "matrix rows have different lengths")
        M = np.array(rows, dtype=float).reshape(len(rows), len(rows[0]) if rows else 0)
        if shape is not None:
            want = tuple(s if s is not None else M.shape[k] for k, s in enumerate(shape))
            if M.shape != want:
                self.fail(path, f"expected shape {want}, got {M.shape}")
        return M


@dataclass
class ProblemConfig:
    name: str
    plant: PlantModel
    exo: ExosystemModel
    Q: np.ndarray
    T0: Optional[np.ndarray]
    Lambda: Optional[list]
    horizon: int
    program: ReferenceProgram
    steps: int
    x0: np.ndarray
    moas_cap: Optional[int] = None
    output_dir: Optional[str] = None
    design_hash: str = ""
    source: str = field(default="", repr=False)


def _design_hash(plant, exo, Q, T0, Lambda, horizon, cap):
    def arr(M):
        return None if M is None else np.asarray(M, dtype=float).tolist()

    payload = {
        "A": arr(plant.A), "B": arr(plant.B), "C": arr(plant.C), "K": arr(plant.K),
        "ZH": arr(plant.Z.H), "Zh": arr(plant.Z.h),
        "blocks": [[b.kind, arr(b.M)] for b in exo.blocks], "Qe": arr(exo.Qe), "k0": exo.k0,
        "Q": arr(Q), "T0": arr(T0), "Lambda": Lambda, "N": horizon, "cap": cap,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _constraints(rd, n, m):
    if rd.get(("constraints", "H"), None) is not None:
        H = rd.matrix(("constraints", "H"), (None, n + m))
        h = rd.vector(("constraints", "h"), H.shape[0])
        return Polytope(H, h)
    xu = rd.vector(("constraints", "x_upper"), n)
    uu = rd.vector(("constraints", "u_upper"), m)
    xl = rd.vector(("constraints", "x_lower"), n, default=None)
    ul = rd.vector(("constraints", "u_lower"), m, default=None)
    lower = np.concatenate([-xu if xl is None else xl, -uu if ul is None else ul])
    upper = np.concatenate([xu, uu])
    if np.any(lower >= upper):
        rd.fail(("constraints",), "every lower bound must be below its upper bound")
    return Polytope.box(upper, lower)


def _blocks(rd):
    blocks = rd.get(("exosystem", "blocks"), [])
    if not isinstance(blocks, list):
        rd.fail(("exosystem", "blocks"), "expected a list of blocks")
    base_dt = rd.scalar(("exosystem", "sampling_period"), default=None)
    out = []
    for i, b in enumerate(blocks):
        path = ("exosystem", "blocks", i)
        if not isinstance(b, dict):
            rd.fail(path, "each block must be a mapping")
        kind = b.get("kind")
        if kind not in ("periodic", "nonperiodic"):
            rd.fail(path + ("kind",), "kind must be 'periodic' or 'nonperiodic'")
        if ("matrix" in b) == ("generator" in b):
            rd.fail(path, "give exactly one of 'matrix' or 'generator'")
        if "matrix" in b:
            M = rd.matrix(path + ("matrix",))
        else:
            G = rd.matrix(path + ("generator",), (2, 2))
            G = G * rd.scalar(path + ("scale",), default=1.0)
            dt = rd.scalar(path + ("sampling_period",), default=base_dt)
            if dt is None:
                rd.fail(path, "generator blocks need a sampling_period")
            M = expm2(G, dt)
        if M.shape not in ((1, 1), (2, 2)):
            rd.fail(path, f"blocks must be 1x1 or 2x2, got {M.shape}")
        out.append(ExoBlock(kind, M))
    return out


def parse_config(text, source="<string>"):
    try:
        data = yaml.safe_load(text)
        lines = _line_index(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"YAML syntax: {exc.problem}", line=line, field="<document>") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML error: {exc}", field="<document>") from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", line=1, field="<root>")
    rd = _Reader(data, lines)

    A = rd.matrix(("plant", "A"))
    n = A.shape[0]
    if A.shape != (n, n):
        rd.fail(("plant", "A"), f"A must be square, got {A.shape}")
    B = rd.matrix(("plant", "B"), (n, None))
    m = B.shape[1]
    C = rd.matrix(("plant", "C"), (None, n))
    K = rd.matrix(("plant", "K"), (m, n))
    Z = _constraints(rd, n, m)
    plant = PlantModel(A, B, C, K, Z)

    blocks = _blocks(rd)
    q = sum(b.M.shape[0] for b in blocks)
    Qe = rd.matrix(("exosystem", "Qe"), (C.shape[0], q)) if q else np.zeros((C.shape[0], 0))
    k0 = rd.integer(("exosystem", "k0"), default=1)
    if k0 < 1:
        rd.fail(("exosystem", "k0"), "k0 must be positive")
    exo = ExosystemModel(tuple(blocks), Qe, k0)

    Q = rd.matrix(("weights", "Q"), (n, n), default=None)
    Q = np.eye(n) if Q is None else Q
    qp = exo.q_p
    T0 = rd.matrix(("weights", "T0"), (qp, qp), default=None) if qp else None
    lam = rd.get(("weights", "Lambda"), default=None)
    if lam is not None:
        if not isinstance(lam, list):
            lam = [lam]
        lam = [rd.scalar(("weights", "Lambda", i)) if not isinstance(v, list)
               else rd.vector(("weights", "Lambda", i), 2).tolist() for i, v in enumerate(lam)]
        if len(lam) != len(exo.nonperiodic_blocks()):
            rd.fail(("weights", "Lambda"), "one Lambda entry per non-periodic block is required")
    horizon = rd.integer(("horizon",))
    if horizon < 1:
        rd.fail(("horizon",), "horizon must be at least 1")

    r0 = rd.vector(("reference", "initial"), q, default=None)
    r0 = np.zeros(q) if r0 is None else r0
    sw = rd.get(("reference", "switches"), default=[]) or []
    switches = []
    for i, s in enumerate(sw):
        path = ("reference", "switches", i)
        switches.append((rd.integer(path + ("step",)), rd.vector(path + ("value",), q)))
    try:
        program = ReferenceProgram(r0, tuple(switches))
    except ValueError as exc:
        rd.fail(("reference", "switches"), str(exc))
    steps = rd.integer(("simulation", "steps"), default=0)
    if steps < 0:
        rd.fail(("simulation", "steps"), "steps must be nonnegative")
    x0 = rd.vector(("simulation", "x0"), n, default=None)
    x0 = np.zeros(n) if x0 is None else x0
    cap = rd.integer(("moas", "cap"), default=None)
    out_dir = rd.get(("output", "dir"), default=None)
    name = str(data.get("name", Path(source).stem))
    return ProblemConfig(name, plant, exo, Q, T0, lam, horizon, program, steps, x0, cap, out_dir,
                         _design_hash(plant, exo, Q, T0, lam, horizon, cap), source)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", field=str(path)) from None
    return parse_config(text, str(path))
