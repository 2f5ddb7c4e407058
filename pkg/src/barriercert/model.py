"""Stochastic system models and their symbolic expectation operators.

Two system classes are supported:

* :class:`DiscreteSystem` -- x(l+1) = f(x(l), theta(l)) with i.i.d.
  disturbances theta drawn from a distribution with a closed-form raw
  moment oracle.  The key symbolic operator is
  :func:`pushforward_expectation`, computing E_theta[v(f(x, theta))] as a
  polynomial in the state.
* :class:`ContinuousSystem` -- dX = b(X) dt + sigma(X) dW.  The key
  symbolic operator is :func:`generator`, the second-order differential
  operator dv/dt + grad(v).b + 1/2 tr(sigma^T H(v) sigma).

Disturbance distributions expose exact raw moments; coordinates of a
uniform box are mutually independent, so joint moments factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Sequence, Tuple

import numpy as np

from .poly import Polynomial

TIME_VAR = "t"


class DisturbanceDistribution:
    """Moment oracle interface: implementations give exact raw moments."""

    dim: int

    def raw_moment(self, exponent: Sequence[int]) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """(n, dim) array of i.i.d. draws."""
        raise NotImplementedError


@dataclass(frozen=True)
class UniformBox(DisturbanceDistribution):
    """Product of independent uniform[lo_i, hi_i] coordinates."""

    lo: Tuple[float, ...]
    hi: Tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("lo/hi length mismatch")
        for a, b in zip(self.lo, self.hi):
            if not a < b:
                raise ValueError(f"need lo < hi per coordinate, got [{a}, {b}]")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def raw_moment(self, exponent: Sequence[int]) -> float:
        if len(exponent) != self.dim:
            raise ValueError("exponent length must equal distribution dimension")
        m = 1.0
        for a, b, k in zip(self.lo, self.hi, exponent):
            if k:
                # int_a^b u^k du / (b - a)
                m *= (b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (b - a))
        return m

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))


@dataclass(frozen=True)
class DiscreteAtoms(DisturbanceDistribution):
    """Finitely supported distribution: atoms with probability weights."""

    points: Tuple[Tuple[float, ...], ...]
    weights: Tuple[float, ...]

    def __post_init__(self):
        if len(self.points) != len(self.weights):
            raise ValueError("points/weights length mismatch")
        if not self.points:
            raise ValueError("need at least one atom")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative")
        d = len(self.points[0])
        if any(len(p) != d for p in self.points):
            raise ValueError("atoms must share a dimension")

    @property
    def dim(self) -> int:
        return len(self.points[0])

    def raw_moment(self, exponent: Sequence[int]) -> float:
        if len(exponent) != self.dim:
            raise ValueError("exponent length must equal distribution dimension")
        total = 0.0
        for p, w in zip(self.points, self.weights):
            m = w
            for x, k in zip(p, exponent):
                if k:
                    m *= x ** k
            total += m
        return total

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        idx = rng.choice(len(self.points), size=n, p=np.asarray(self.weights))
        return np.asarray(self.points)[idx]


@dataclass(frozen=True)
class DiscreteSystem:
    """x(l+1) = f(x(l), theta(l)) with polynomial update map f."""

    state_vars: Tuple[str, ...]
    disturbance_vars: Tuple[str, ...]
    update: Tuple[Polynomial, ...]
    distribution: DisturbanceDistribution

    def __post_init__(self):
        if len(self.update) != len(self.state_vars):
            raise ValueError("update must have one component per state variable")
        if len(self.disturbance_vars) != self.distribution.dim:
            raise ValueError("disturbance variables must match distribution dimension")
        if set(self.state_vars) & set(self.disturbance_vars):
            raise ValueError("state and disturbance variables must be disjoint")
        allowed = set(self.state_vars) | set(self.disturbance_vars)
        for f in self.update:
            extra = set(f.vars) - allowed
            if any(f.degree_in(v) > 0 for v in extra):
                raise ValueError(f"update mentions undeclared variables {sorted(extra)}")

    @property
    def dim(self) -> int:
        return len(self.state_vars)


@dataclass(frozen=True)
class ContinuousSystem:
    """dX = b(X) dt + sigma(X) dW, time-invariant polynomial coefficients."""

    state_vars: Tuple[str, ...]
    drift: Tuple[Polynomial, ...]
    diffusion: Tuple[Tuple[Polynomial, ...], ...]  # n x k
    time_var: str = TIME_VAR

    def __post_init__(self):
        n = len(self.state_vars)
        if len(self.drift) != n or len(self.diffusion) != n:
            raise ValueError("drift/diffusion must have one row per state variable")
        k = len(self.diffusion[0])
        if any(len(row) != k for row in self.diffusion):
            raise ValueError("diffusion rows must share a width")
        if self.time_var in self.state_vars:
            raise ValueError("time variable clashes with a state variable")
        allowed = set(self.state_vars)
        for p in list(self.drift) + [q for row in self.diffusion for q in row]:
            extra = set(p.vars) - allowed
            if any(p.degree_in(v) > 0 for v in extra):
                raise ValueError(f"dynamics mention undeclared variables {sorted(extra)}")

    @property
    def dim(self) -> int:
        return len(self.state_vars)

    @property
    def wiener_dim(self) -> int:
        return len(self.diffusion[0])


def pushforward_expectation(sys: DiscreteSystem, v: Polynomial) -> Polynomial:
    """E_theta[v(f(x, theta))] as a polynomial in the state variables."""
    extra = [w for w in v.vars if w not in sys.state_vars and v.degree_in(w) > 0]
    if extra:
        raise ValueError(f"v mentions non-state variables {extra}")
    v = v.on_vars(tuple(sorted(set(v.vars) | set(sys.state_vars))))
    composed = v.substitute({x: f for x, f in zip(sys.state_vars, sys.update)})
    # integrate out the disturbance monomials via the moment oracle
    vs = composed.vars
    sidx = [i for i, w in enumerate(vs) if w in sys.state_vars]
    didx = {w: i for i, w in enumerate(vs) if w in sys.disturbance_vars}
    out_vars = tuple(sys.state_vars)
    out_pos = {w: j for j, w in enumerate(out_vars)}
    terms: Dict[Tuple[int, ...], float] = {}
    for e, c in composed.terms.items():
        theta_exp = tuple(e[didx[w]] if w in didx else 0 for w in sys.disturbance_vars)
        mom = sys.distribution.raw_moment(theta_exp)
        if mom == 0.0:
            continue
        ne = [0] * len(out_vars)
        for i in sidx:
            ne[out_pos[vs[i]]] = e[i]
        key = tuple(ne)
        terms[key] = terms.get(key, 0.0) + c * mom
    return Polynomial(out_vars, terms)


def generator(sys: ContinuousSystem, v: Polynomial) -> Polynomial:
    """Infinitesimal generator Lv = dv/dt + grad(v).b + 1/2 tr(s^T H(v) s)."""
    extra = [w for w in v.vars
             if w not in sys.state_vars and w != sys.time_var and v.degree_in(w) > 0]
    if extra:
        raise ValueError(f"v mentions unknown variables {extra}")
    out = Polynomial.zero()
    if sys.time_var in v.vars:
        out = out + v.differentiate(sys.time_var)
    grads = {x: v.differentiate(x) if x in v.vars else Polynomial.zero()
             for x in sys.state_vars}
    for x, b in zip(sys.state_vars, sys.drift):
        if not grads[x].is_zero():
            out = out + grads[x] * b
    # diffusion matrix a = sigma sigma^T; add 1/2 sum a_ij d2v/dxi dxj
    n = sys.dim
    for i in range(n):
        xi = sys.state_vars[i]
        for j in range(n):
            xj = sys.state_vars[j]
            hij = grads[xi].differentiate(xj) if xj in grads[xi].vars else Polynomial.zero()
            if hij.is_zero():
                continue
            a_ij = Polynomial.zero()
            for l in range(sys.wiener_dim):
                a_ij = a_ij + sys.diffusion[i][l] * sys.diffusion[j][l]
            if not a_ij.is_zero():
                out = out + 0.5 * a_ij * hij
    return out


def step(sys: DiscreteSystem, state: Mapping[str, float], theta: Mapping[str, float]) -> Dict[str, float]:
    """One numeric transition of a discrete system."""
    point = {**state, **theta}
    return {x: f.evaluate({v: point.get(v, 0.0) for v in f.vars})
            for x, f in zip(sys.state_vars, sys.update)}
