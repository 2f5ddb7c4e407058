"""Sparse multivariate polynomial arithmetic over named variables.

Polynomials are the universal carrier in this package: system dynamics,
set descriptions, certificate templates and SOS multipliers are all
instances of :class:`Polynomial`.  Coefficients are double-precision
floats; terms whose coefficient magnitude drops below ``COEF_EPS`` after
any operation are discarded.  Monomials are kept in a fixed graded
ordering (total degree first, lexicographic tie-break) so that all
downstream SDP assembly is deterministic.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Sequence, Tuple, Union

import numpy as np

COEF_EPS = 1e-14

Exponent = Tuple[int, ...]
Scalar = Union[int, float]


def _grlex_key(e: Exponent):
    return (sum(e), e)


class Polynomial:
    """Immutable sparse polynomial over a sorted tuple of variable names."""

    __slots__ = ("vars", "terms")

    def __init__(self, variables: Sequence[str], terms: Mapping[Exponent, float]):
        vs = tuple(variables)
        if list(vs) != sorted(set(vs)):
            raise ValueError(f"variable list must be sorted and duplicate-free: {vs}")
        clean: Dict[Exponent, float] = {}
        for e, c in terms.items():
            e = tuple(int(k) for k in e)
            if len(e) != len(vs):
                raise ValueError(f"exponent {e} does not match variables {vs}")
            if any(k < 0 for k in e):
                raise ValueError(f"negative exponent in {e}")
            c = float(c)
            if abs(c) >= COEF_EPS:
                clean[e] = clean.get(e, 0.0) + c
        clean = {e: c for e, c in clean.items() if abs(c) >= COEF_EPS}
        object.__setattr__(self, "vars", vs)
        object.__setattr__(self, "terms", clean)

    def __setattr__(self, *a):  # pragma: no cover - immutability guard
        raise AttributeError("Polynomial is immutable")

    # -- constructors -------------------------------------------------

    @staticmethod
    def zero(variables: Sequence[str] = ()) -> "Polynomial":
        return Polynomial(variables, {})

    @staticmethod
    def constant(c: Scalar, variables: Sequence[str] = ()) -> "Polynomial":
        n = len(tuple(variables))
        return Polynomial(variables, {(0,) * n: float(c)})

    @staticmethod
    def variable(name: str) -> "Polynomial":
        return Polynomial((name,), {(1,): 1.0})

    @staticmethod
    def monomial(variables: Sequence[str], exponent: Exponent, c: Scalar = 1.0) -> "Polynomial":
        return Polynomial(variables, {tuple(exponent): float(c)})

    # -- basic queries -------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def degree_in(self, var: str) -> int:
        if var not in self.vars:
            return 0
        i = self.vars.index(var)
        return max((e[i] for e in self.terms), default=0)

    def constant_term(self) -> float:
        return self.terms.get((0,) * len(self.vars), 0.0)

    def coefficient(self, exponent: Exponent) -> float:
        return self.terms.get(tuple(exponent), 0.0)

    # -- variable alignment ---------------------------------------------

    def on_vars(self, variables: Sequence[str]) -> "Polynomial":
        """Re-express over a superset of the current variables."""
        vs = tuple(variables)
        if vs == self.vars:
            return self
        missing = set(self.vars) - set(vs)
        if missing:
            raise ValueError(f"target variables {vs} missing {sorted(missing)}")
        idx = [vs.index(v) for v in self.vars]
        terms: Dict[Exponent, float] = {}
        for e, c in self.terms.items():
            ne = [0] * len(vs)
            for j, k in zip(idx, e):
                ne[j] = k
            terms[tuple(ne)] = terms.get(tuple(ne), 0.0) + c
        return Polynomial(vs, terms)

    @staticmethod
    def _merge_vars(p: "Polynomial", q: "Polynomial") -> Tuple[str, ...]:
        return tuple(sorted(set(p.vars) | set(q.vars)))

    # -- arithmetic -----------------------------------------------------

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            return other
        if isinstance(other, (int, float)):
            return Polynomial.constant(other, self.vars)
        return NotImplemented

    def __add__(self, other) -> "Polynomial":
        q = self._coerce(other)
        if q is NotImplemented:
            return NotImplemented
        vs = self._merge_vars(self, q)
        a, b = self.on_vars(vs), q.on_vars(vs)
        terms = dict(a.terms)
        for e, c in b.terms.items():
            terms[e] = terms.get(e, 0.0) + c
        return Polynomial(vs, terms)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.vars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other) -> "Polynomial":
        q = self._coerce(other)
        if q is NotImplemented:
            return NotImplemented
        return self + (-q)

    def __rsub__(self, other) -> "Polynomial":
        return -(self - other)

    def __mul__(self, other) -> "Polynomial":
        q = self._coerce(other)
        if q is NotImplemented:
            return NotImplemented
        vs = self._merge_vars(self, q)
        a, b = self.on_vars(vs), q.on_vars(vs)
        terms: Dict[Exponent, float] = {}
        for e1, c1 in a.terms.items():
            for e2, c2 in b.terms.items():
                e = tuple(i + j for i, j in zip(e1, e2))
                terms[e] = terms.get(e, 0.0) + c1 * c2
        return Polynomial(vs, terms)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Polynomial":
        if not isinstance(k, int) or k < 0:
            raise ValueError("only nonnegative integer powers")
        out = Polynomial.constant(1.0, self.vars)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base if k > 1 else base
            k >>= 1
        return out

    # -- calculus / composition -----------------------------------------

    def differentiate(self, var: str) -> "Polynomial":
        if var not in self.vars:
            raise ValueError(f"unknown variable {var!r} (have {self.vars})")
        i = self.vars.index(var)
        terms: Dict[Exponent, float] = {}
        for e, c in self.terms.items():
            if e[i] == 0:
                continue
            ne = list(e)
            ne[i] -= 1
            terms[tuple(ne)] = terms.get(tuple(ne), 0.0) + c * e[i]
        return Polynomial(self.vars, terms)

    def substitute(self, bindings: Mapping[str, Union["Polynomial", Scalar]]) -> "Polynomial":
        """Simultaneous substitution var -> polynomial, fully expanded."""
        unknown = [v for v in bindings if v not in self.vars]
        if unknown:
            warnings.warn(f"substitute: ignoring bindings for {unknown}, not in scope {self.vars}")
        binds: Dict[str, Polynomial] = {}
        for v, b in bindings.items():
            if v in self.vars:
                binds[v] = b if isinstance(b, Polynomial) else Polynomial.constant(b)
        if not binds:
            return self
        # cache powers of every substituted polynomial
        powcache: Dict[Tuple[str, int], Polynomial] = {}

        def power(v: str, k: int) -> Polynomial:
            key = (v, k)
            if key not in powcache:
                powcache[key] = binds[v] ** k
            return powcache[key]

        kept = [v for v in self.vars if v not in binds]
        out = Polynomial.zero(kept)
        for e, c in self.terms.items():
            piece = Polynomial.constant(c, kept)
            for v, k in zip(self.vars, e):
                if k == 0:
                    continue
                piece = piece * (power(v, k) if v in binds else Polynomial.monomial((v,), (k,)))
            out = out + piece
        return out

    def evaluate(self, point: Mapping[str, Scalar]) -> float:
        missing = [v for v in self.vars if v not in point]
        if missing:
            raise ValueError(f"evaluate: missing bindings for {missing}")
        vals = [float(point[v]) for v in self.vars]
        total = 0.0
        for e, c in self.terms.items():
            m = c
            for x, k in zip(vals, e):
                if k:
                    m *= x ** k
            total += m
        return total

    def evaluate_batch(self, columns: Mapping[str, np.ndarray]) -> np.ndarray:
        """Vectorized evaluation; each variable maps to an equal-length array."""
        missing = [v for v in self.vars if v not in columns]
        if missing:
            raise ValueError(f"evaluate_batch: missing columns for {missing}")
        cols = [np.asarray(columns[v], dtype=float) for v in self.vars]
        shape = cols[0].shape if cols else ()
        total = np.zeros(shape)
        for e, c in self.terms.items():
            m = np.full(shape, c)
            for x, k in zip(cols, e):
                if k:
                    m = m * x ** k
            total = total + m
        return total

    # -- printing --------------------------------------------------------

    def to_string(self) -> str:
        """Canonical printer: graded order, explicit signs, '^' powers."""
        if not self.terms:
            return "0"
        parts = []
        for e in sorted(self.terms, key=_grlex_key):
            c = self.terms[e]
            factors = []
            for v, k in zip(self.vars, e):
                if k == 1:
                    factors.append(v)
                elif k > 1:
                    factors.append(f"{v}^{k}")
            mag = abs(c)
            if factors and abs(mag - 1.0) < 1e-15:
                body = "*".join(factors)
            elif factors:
                body = "*".join([f"{mag:.12g}"] + factors)
            else:
                body = f"{mag:.12g}"
            parts.append(("- " if c < 0 else "+ ") + body)
        out = " ".join(parts)
        return out[2:] if out.startswith("+ ") else ("-" + out[2:])

    __str__ = to_string

    def __repr__(self) -> str:
        return f"Polynomial({self.to_string()!r})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        vs = self._merge_vars(self, other)
        return self.on_vars(vs).terms == other.on_vars(vs).terms

    def __hash__(self):
        return hash((self.vars, frozenset(self.terms.items())))

    def almost_equal(self, other: "Polynomial", tol: float = 1e-12) -> bool:
        vs = self._merge_vars(self, other)
        a, b = self.on_vars(vs).terms, other.on_vars(vs).terms
        for e in set(a) | set(b):
            if abs(a.get(e, 0.0) - b.get(e, 0.0)) > tol:
                return False
        return True

    def max_abs_coef(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)


@dataclass(frozen=True)
class MonomialBasis:
    """Ordered monomial basis (graded order) used for Gram matrices."""

    vars: Tuple[str, ...]
    exponents: Tuple[Exponent, ...]

    def __post_init__(self):
        if list(self.exponents) != sorted(set(self.exponents), key=_grlex_key):
            raise ValueError("exponents must be unique and graded-lex ordered")

    def __len__(self) -> int:
        return len(self.exponents)

    def polynomials(self) -> Tuple[Polynomial, ...]:
        return tuple(Polynomial.monomial(self.vars, e) for e in self.exponents)

    def evaluate(self, point: Mapping[str, Scalar]) -> np.ndarray:
        vals = [float(point[v]) for v in self.vars]
        out = np.empty(len(self.exponents))
        for i, e in enumerate(self.exponents):
            m = 1.0
            for x, k in zip(vals, e):
                if k:
                    m *= x ** k
            out[i] = m
        return out


def monomials_up_to(variables: Sequence[str], degree: int) -> MonomialBasis:
    """All monomials of total degree <= degree, in graded-lex order."""
    if degree < 0:
        raise ValueError("degree must be >= 0")
    vs = tuple(sorted(set(variables)))
    n = len(vs)
    if n == 0:
        return MonomialBasis((), ((),))
    exps = [e for e in itertools.product(range(degree + 1), repeat=n) if sum(e) <= degree]
    exps.sort(key=_grlex_key)
    assert len(exps) == math.comb(n + degree, n)
    return MonomialBasis(vs, tuple(exps))


def product_basis(state_vars: Sequence[str], state_degree: int,
                  extra_var: str = None, extra_degree: int = 0) -> MonomialBasis:
    """Monomials x^e * u^j with |e| <= state_degree and j <= extra_degree.

    Used for time-dependent certificate templates where the time degree is
    capped separately from the state degree.
    """
    base = monomials_up_to(state_vars, state_degree)
    if extra_var is None:
        return base
    vs = tuple(sorted(set(state_vars) | {extra_var}))
    pos = vs.index(extra_var)
    state_pos = [vs.index(v) for v in base.vars]
    exps = []
    for e in base.exponents:
        for j in range(extra_degree + 1):
            ne = [0] * len(vs)
            ne[pos] = j
            for p, k in zip(state_pos, e):
                ne[p] = k
            exps.append(tuple(ne))
    exps.sort(key=_grlex_key)
    return MonomialBasis(vs, tuple(exps))
