"""Affine-in-unknowns polynomial templates.

Certificate synthesis searches over scalar decision variables (template
coefficients, the offset beta, the envelope bound M).  Every quantity the
encoders emit is affine in those unknowns, so a parametric polynomial is
simply a polynomial whose coefficients are :class:`AffineExpr` values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Sequence, Tuple, Union

from .poly import Exponent, MonomialBasis, Polynomial

Scalar = Union[int, float]


@dataclass(frozen=True)
class AffineExpr:
    """const + sum(coef_i * decision_var_i)."""

    const: float = 0.0
    lin: Tuple[Tuple[str, float], ...] = ()

    @staticmethod
    def of(const: Scalar = 0.0, **coefs: Scalar) -> "AffineExpr":
        return AffineExpr(float(const), tuple(sorted((k, float(v)) for k, v in coefs.items())))

    @staticmethod
    def var(name: str, coef: Scalar = 1.0) -> "AffineExpr":
        return AffineExpr(0.0, ((name, float(coef)),))

    def lin_dict(self) -> Dict[str, float]:
        return dict(self.lin)

    def __add__(self, other: Union["AffineExpr", Scalar]) -> "AffineExpr":
        if isinstance(other, (int, float)):
            return AffineExpr(self.const + other, self.lin)
        d = self.lin_dict()
        for k, v in other.lin:
            d[k] = d.get(k, 0.0) + v
        d = {k: v for k, v in d.items() if v != 0.0}
        return AffineExpr(self.const + other.const, tuple(sorted(d.items())))

    __radd__ = __add__

    def __neg__(self) -> "AffineExpr":
        return AffineExpr(-self.const, tuple((k, -v) for k, v in self.lin))

    def __sub__(self, other: Union["AffineExpr", Scalar]) -> "AffineExpr":
        if isinstance(other, (int, float)):
            return self + (-other)
        return self + (-other)

    def __rsub__(self, other: Scalar) -> "AffineExpr":
        return (-self) + other

    def __mul__(self, c: Scalar) -> "AffineExpr":
        c = float(c)
        if c == 0.0:
            return AffineExpr()
        return AffineExpr(self.const * c, tuple((k, v * c) for k, v in self.lin))

    __rmul__ = __mul__

    def is_zero(self, tol: float = 0.0) -> bool:
        return abs(self.const) <= tol and all(abs(v) <= tol for _, v in self.lin)

    def value(self, assignment: Mapping[str, float]) -> float:
        return self.const + sum(v * assignment[k] for k, v in self.lin)


class ParamPoly:
    """Polynomial with AffineExpr coefficients over named variables."""

    __slots__ = ("vars", "terms")

    def __init__(self, variables: Sequence[str], terms: Mapping[Exponent, AffineExpr]):
        self.vars = tuple(variables)
        self.terms = {tuple(e): a for e, a in terms.items() if not a.is_zero()}

    # -- constructors -----------------------------------------------------

    @staticmethod
    def from_poly(p: Polynomial) -> "ParamPoly":
        return ParamPoly(p.vars, {e: AffineExpr(c) for e, c in p.terms.items()})

    @staticmethod
    def template(basis: MonomialBasis, var_names: Sequence[str]) -> "ParamPoly":
        """sum_j c_j * m_j with fresh decision variables c_j."""
        if len(var_names) != len(basis):
            raise ValueError("one decision variable per basis monomial")
        return ParamPoly(basis.vars, {e: AffineExpr.var(n) for e, n in zip(basis.exponents, var_names)})

    @staticmethod
    def linear_image(polys: Sequence[Polynomial], var_names: Sequence[str]) -> "ParamPoly":
        """sum_j c_j * P_j for concrete polynomials P_j (e.g. a linear operator
        applied to each template basis monomial)."""
        if len(polys) != len(var_names):
            raise ValueError("length mismatch")
        vs = tuple(sorted(set().union(*[set(p.vars) for p in polys]))) if polys else ()
        acc: Dict[Exponent, Dict[str, float]] = {}
        for p, name in zip(polys, var_names):
            pa = p.on_vars(vs)
            for e, c in pa.terms.items():
                acc.setdefault(e, {})[name] = acc.get(e, {}).get(name, 0.0) + c
        return ParamPoly(vs, {e: AffineExpr(0.0, tuple(sorted(d.items()))) for e, d in acc.items()})

    @staticmethod
    def constant(a: Union[AffineExpr, Scalar], variables: Sequence[str] = ()) -> "ParamPoly":
        if isinstance(a, (int, float)):
            a = AffineExpr(float(a))
        n = len(tuple(variables))
        return ParamPoly(variables, {(0,) * n: a})

    # -- algebra ------------------------------------------------------------

    def on_vars(self, variables: Sequence[str]) -> "ParamPoly":
        vs = tuple(variables)
        if vs == self.vars:
            return self
        missing = set(self.vars) - set(vs)
        if missing:
            raise ValueError(f"target variables missing {sorted(missing)}")
        idx = [vs.index(v) for v in self.vars]
        terms: Dict[Exponent, AffineExpr] = {}
        for e, a in self.terms.items():
            ne = [0] * len(vs)
            for j, k in zip(idx, e):
                ne[j] = k
            key = tuple(ne)
            terms[key] = terms.get(key, AffineExpr()) + a
        return ParamPoly(vs, terms)

    def _merge(self, other: "ParamPoly") -> Tuple["ParamPoly", "ParamPoly"]:
        vs = tuple(sorted(set(self.vars) | set(other.vars)))
        return self.on_vars(vs), other.on_vars(vs)

    def __add__(self, other) -> "ParamPoly":
        if isinstance(other, Polynomial):
            other = ParamPoly.from_poly(other)
        elif isinstance(other, (int, float, AffineExpr)):
            other = ParamPoly.constant(other, self.vars)
        a, b = self._merge(other)
        terms = dict(a.terms)
        for e, x in b.terms.items():
            terms[e] = terms.get(e, AffineExpr()) + x
        return ParamPoly(a.vars, terms)

    __radd__ = __add__

    def __neg__(self) -> "ParamPoly":
        return ParamPoly(self.vars, {e: -a for e, a in self.terms.items()})

    def __sub__(self, other) -> "ParamPoly":
        if isinstance(other, (int, float)):
            return self + (-float(other))
        if isinstance(other, Polynomial):
            other = ParamPoly.from_poly(other)
        if isinstance(other, AffineExpr):
            other = ParamPoly.constant(other, self.vars)
        return self + (-other)

    def __rsub__(self, other) -> "ParamPoly":
        return (-self) + other

    def scale(self, c: Scalar) -> "ParamPoly":
        return ParamPoly(self.vars, {e: a * c for e, a in self.terms.items()})

    def mul_poly(self, p: Polynomial) -> "ParamPoly":
        """Multiply by a concrete polynomial (keeps affinity in unknowns)."""
        vs = tuple(sorted(set(self.vars) | set(p.vars)))
        a = self.on_vars(vs)
        pb = p.on_vars(vs)
        terms: Dict[Exponent, AffineExpr] = {}
        for e1, ax in a.terms.items():
            for e2, c in pb.terms.items():
                e = tuple(i + j for i, j in zip(e1, e2))
                terms[e] = terms.get(e, AffineExpr()) + ax * c
        return ParamPoly(vs, terms)

    # -- queries --------------------------------------------------------------

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def decision_vars(self) -> Tuple[str, ...]:
        names = set()
        for a in self.terms.values():
            names.update(k for k, _ in a.lin)
        return tuple(sorted(names))

    def instantiate(self, assignment: Mapping[str, float]) -> Polynomial:
        return Polynomial(self.vars, {e: a.value(assignment) for e, a in self.terms.items()})

    def __repr__(self) -> str:
        return f"ParamPoly(vars={self.vars}, nterms={len(self.terms)})"
