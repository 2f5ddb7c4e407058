"""Declarative problem files: JSON documents with polynomial strings.

The polynomial grammar is deliberately small: numbers, declared variable
names, ``+ - * ^`` and parentheses, with ``^`` taking a nonnegative integer
exponent.  Strings parse to :class:`~barriercert.poly.Polynomial` over the
declared variable list.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from .conditions import (REQUIRED_SETS, VARIANTS, VerificationTask)
from .model import (ContinuousSystem, DiscreteAtoms, DiscreteSystem,
                    DisturbanceDistribution, UniformBox)
from .poly import Polynomial
from .sdp import SolverConfig
from .sets import SemialgebraicSet


class ValidationError(ValueError):
    """Problem-file level validation failure (CLI exit code 2)."""


# ---------------------------------------------------------------------------
# polynomial parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?"
                    r"|\d+(?:[eE][-+]?\d+)?)|([A-Za-z_][A-Za-z0-9_]*)|([-+*^()]))")


def _tokenize(s: str) -> List[Tuple[str, str]]:
    out, pos = [], 0
    while pos < len(s):
        m = _TOKEN.match(s, pos)
        if not m:
            raise ValidationError(f"bad character in polynomial at {s[pos:]!r}")
        num, name, op = m.groups()
        if num is not None:
            out.append(("num", num))
        elif name is not None:
            out.append(("var", name))
        else:
            out.append(("op", op))
        pos = m.end()
    out.append(("end", ""))
    return out


class _Parser:
    def __init__(self, text: str, variables: Sequence[str]):
        self.toks = _tokenize(text)
        self.i = 0
        self.vars = tuple(variables)
        self.text = text

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expr(self) -> Polynomial:
        kind, val = self.peek()
        sign = 1.0
        if kind == "op" and val in "+-":
            self.take()
            sign = -1.0 if val == "-" else 1.0
        p = self.term() * sign
        while True:
            kind, val = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                q = self.term()
                p = p + q if val == "+" else p - q
            else:
                return p

    def term(self) -> Polynomial:
        p = self.factor()
        while True:
            kind, val = self.peek()
            if kind == "op" and val == "*":
                self.take()
                p = p * self.factor()
            else:
                return p

    def factor(self) -> Polynomial:
        p = self.atom()
        kind, val = self.peek()
        if kind == "op" and val == "^":
            self.take()
            k, kv = self.take()
            if k != "num" or "." in kv or "e" in kv.lower():
                raise ValidationError(f"exponent must be a nonnegative integer in {self.text!r}")
            return p ** int(kv)
        return p

    def atom(self) -> Polynomial:
        kind, val = self.take()
        if kind == "num":
            return Polynomial.constant(float(val), self.vars)
        if kind == "var":
            if val not in self.vars:
                raise ValidationError(f"undeclared variable {val!r} in {self.text!r}")
            return Polynomial.variable(val).on_vars(self.vars)
        if kind == "op" and val == "(":
            p = self.expr()
            k, v = self.take()
            if (k, v) != ("op", ")"):
                raise ValidationError(f"unbalanced parentheses in {self.text!r}")
            return p
        if kind == "op" and val == "-":
            return -self.atom()
        raise ValidationError(f"unexpected token {val!r} in {self.text!r}")

    def parse(self) -> Polynomial:
        p = self.expr()
        if self.peek()[0] != "end":
            raise ValidationError(f"trailing input in polynomial {self.text!r}")
        return p


def parse_polynomial(text: str, variables: Sequence[str]) -> Polynomial:
    return _Parser(text, variables).parse()


# ---------------------------------------------------------------------------
# problem document
# ---------------------------------------------------------------------------


@dataclass
class Problem:
    system: Union[DiscreteSystem, ContinuousSystem]
    sets: Dict[str, SemialgebraicSet]
    variant: str
    horizon: float
    x0: Dict[str, float]
    alpha_grid: Tuple[float, ...]
    beta_grid: Union[Tuple[float, ...], str]  # or "decision"
    degrees: Tuple[Tuple[int, int], ...]
    solver_backend: str
    solver_config: SolverConfig
    degree_floor: int
    trajectories: int
    seed: int
    raw: dict = field(default_factory=dict)

    def task(self, alpha: float, beta, deg: Tuple[int, int]) -> VerificationTask:
        return VerificationTask(variant=self.variant, system=self.system,
                                sets=self.sets, horizon=self.horizon,
                                alpha=alpha, beta=beta, x0=self.x0,
                                deg_x=deg[0], deg_t=deg[1])


def _parse_set(doc, variables, name) -> SemialgebraicSet:
    if isinstance(doc, list):
        ge, eq = doc, []
    elif isinstance(doc, dict):
        ge = doc.get("ge", [])
        eq = doc.get("eq", [])
        extra = set(doc) - {"ge", "eq"}
        if extra:
            raise ValidationError(f"set {name!r}: unknown keys {sorted(extra)}")
    else:
        raise ValidationError(f"set {name!r} must be a list or {{ge,eq}} object")
    return SemialgebraicSet(
        tuple(parse_polynomial(s, variables) for s in ge),
        tuple(parse_polynomial(s, variables) for s in eq))


def _parse_distribution(doc) -> DisturbanceDistribution:
    kind = doc.get("type")
    if kind == "uniform_box":
        return UniformBox(tuple(map(float, doc["lo"])), tuple(map(float, doc["hi"])))
    if kind == "atoms":
        return DiscreteAtoms(tuple(tuple(map(float, p)) for p in doc["points"]),
                             tuple(map(float, doc["weights"])))
    raise ValidationError(f"unknown distribution type {kind!r}")


def load_problem(path_or_doc) -> Problem:
    if isinstance(path_or_doc, (str,)):
        with open(path_or_doc) as f:
            doc = json.load(f)
    else:
        doc = path_or_doc
    try:
        return _build(doc)
    except ValidationError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError(str(e)) from e


def _build(doc: Mapping) -> Problem:
    sysdoc = doc["system"]
    variables = tuple(sysdoc["variables"])
    kind = sysdoc["type"]

    # Optional per-variable positive scale factors s: the problem is solved
    # in coordinates x_hat = x / s.  This is a pure change of variables -- the
    # probability bound and the Monte-Carlo estimate are invariant -- but it
    # can improve SDP conditioning dramatically when the safe set is far from
    # the unit ball.
    scale_doc = doc.get("scale")
    if scale_doc is None:
        scale = {v: 1.0 for v in variables}
    elif isinstance(scale_doc, list):
        if len(scale_doc) != len(variables):
            raise ValidationError("scale length does not match variable count")
        scale = {v: float(c) for v, c in zip(variables, scale_doc)}
    elif isinstance(scale_doc, dict):
        scale = {v: float(scale_doc.get(v, 1.0)) for v in variables}
    else:
        raise ValidationError("scale must be a list or an object")
    if any(not (c > 0.0) for c in scale.values()):
        raise ValidationError("scale factors must be positive")
    scaled = any(c != 1.0 for c in scale.values())
    # substitution x -> s*x_hat applied to every problem polynomial
    subs = {v: Polynomial.variable(v) * scale[v] for v in variables}

    if kind == "discrete":
        dvars = tuple(sysdoc.get("disturbance_variables", ()))
        allvars = tuple(sorted(variables + dvars))
        update = tuple(parse_polynomial(sysdoc["update"][v], allvars) for v in variables)
        if scaled:
            # f_hat_i(x_hat, d) = f_i(s * x_hat, d) / s_i
            update = tuple(f.substitute(subs) * (1.0 / scale[v])
                           for v, f in zip(variables, update))
        system = DiscreteSystem(variables, dvars, update,
                                _parse_distribution(sysdoc["distribution"]))
    elif kind == "continuous":
        drift = tuple(parse_polynomial(s, variables) for s in sysdoc["drift"])
        diffusion = tuple(tuple(parse_polynomial(s, variables) for s in row)
                          for row in sysdoc["diffusion"])
        if scaled:
            drift = tuple(b.substitute(subs) * (1.0 / scale[v])
                          for v, b in zip(variables, drift))
            diffusion = tuple(tuple(g.substitute(subs) * (1.0 / scale[v]) for g in row)
                              for v, row in zip(variables, diffusion))
        system = ContinuousSystem(variables, drift, diffusion)
    else:
        raise ValidationError(f"system type must be discrete or continuous, got {kind!r}")

    sets = {name: _parse_set(sdoc, variables, name)
            for name, sdoc in doc.get("sets", {}).items()}
    if scaled:
        sets = {name: SemialgebraicSet(
                    tuple(g.substitute(subs) for g in st.inequalities),
                    tuple(h.substitute(subs) for h in st.equalities))
                for name, st in sets.items()}

    q = doc["query"]
    variant = q["variant"]
    if variant not in VARIANTS:
        raise ValidationError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    missing = [s for s in REQUIRED_SETS[variant] if s not in sets]
    if missing:
        raise ValidationError(f"variant {variant} requires sets {missing}")
    horizon = q["N"] if "N" in q else q["T"]
    x0doc = q["x0"]
    if isinstance(x0doc, list):
        if len(x0doc) != len(variables):
            raise ValidationError("x0 length does not match variable count")
        x0 = {v: float(c) for v, c in zip(variables, x0doc)}
    else:
        x0 = {v: float(x0doc[v]) for v in variables}
    if scaled:
        x0 = {v: c / scale[v] for v, c in x0.items()}
    alpha_grid = tuple(float(a) for a in q["alpha_grid"])
    bg = q.get("beta_grid", [0.0])
    beta_grid = "decision" if bg == "decision" else tuple(float(b) for b in bg)
    degrees = []
    for d in q["degrees"]:
        if isinstance(d, (list, tuple)):
            degrees.append((int(d[0]), int(d[1])))
        else:
            degrees.append((int(d), 0))

    sv = doc.get("solver", {})
    backend = sv.get("backend", "builtin")
    if backend not in ("builtin", "external", "external-sdpa"):
        raise ValidationError(f"unknown solver backend {backend!r}")
    solver_config = SolverConfig(
        max_iters=int(sv.get("max_iters", 200)),
        feasibility_tol=float(sv.get("feasibility_tol", 1e-8)),
        duality_gap_tol=float(sv.get("duality_gap_tol", 1e-8)),
        step_fraction=float(sv.get("step_fraction", 0.98)))

    sim = doc.get("simulate", {})
    problem = Problem(system=system, sets=sets, variant=variant, horizon=horizon,
                      x0=x0, alpha_grid=alpha_grid, beta_grid=beta_grid,
                      degrees=tuple(degrees), solver_backend=backend,
                      solver_config=solver_config,
                      degree_floor=int(sv.get("degree_floor", 0)),
                      trajectories=int(sim.get("trajectories", 1_000_000)),
                      seed=int(sim.get("seed", 0)), raw=dict(doc))
    # construct one task eagerly so parameter-range violations surface as
    # validation errors, not mid-run failures
    beta0 = "decision" if beta_grid == "decision" else beta_grid[0]
    try:
        problem.task(alpha_grid[0], beta0, problem.degrees[0])
    except ValueError as e:
        raise ValidationError(str(e)) from e
    return problem
