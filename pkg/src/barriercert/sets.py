"""Basic semialgebraic sets: conjunctions of polynomial inequalities g >= 0
and equalities h = 0."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence, Tuple

import numpy as np

from .poly import Polynomial


@dataclass(frozen=True)
class SemialgebraicSet:
    """{x : g_i(x) >= 0 for all i, h_j(x) = 0 for all j}.

    Both lists empty means the full space.
    """

    inequalities: Tuple[Polynomial, ...] = ()
    equalities: Tuple[Polynomial, ...] = ()

    @staticmethod
    def full_space() -> "SemialgebraicSet":
        return SemialgebraicSet()

    @property
    def vars(self) -> Tuple[str, ...]:
        names = set()
        for p in self.inequalities + self.equalities:
            names.update(v for v in p.vars if p.degree_in(v) > 0)
        return tuple(sorted(names))

    def contains(self, point: Mapping[str, float], tol: float = 0.0) -> bool:
        for g in self.inequalities:
            if g.evaluate({v: point[v] for v in g.vars}) < -tol:
                return False
        for h in self.equalities:
            if abs(h.evaluate({v: point[v] for v in h.vars})) > tol:
                return False
        return True

    def contains_batch(self, columns: Mapping[str, np.ndarray], tol: float = 0.0) -> np.ndarray:
        """Vectorized membership over columns of equal length."""
        some = next(iter(columns.values()))
        ok = np.ones(np.shape(some), dtype=bool)
        for g in self.inequalities:
            ok &= g.evaluate_batch(columns) >= -tol
        for h in self.equalities:
            ok &= np.abs(h.evaluate_batch(columns)) <= tol
        return ok

    def intersect(self, other: "SemialgebraicSet") -> "SemialgebraicSet":
        return SemialgebraicSet(self.inequalities + other.inequalities,
                                self.equalities + other.equalities)

    def adjoin_inequality(self, g: Polynomial) -> "SemialgebraicSet":
        return SemialgebraicSet(self.inequalities + (g,), self.equalities)

    def normalized(self) -> "SemialgebraicSet":
        """Rescale every defining polynomial to unit max-abs coefficient.

        Describes the same point set; keeps the numeric data handed to the
        SDP solver well-conditioned regardless of how the user wrote the
        constraints (multipliers absorb the positive scale factors).
        """
        def norm(p: Polynomial) -> Polynomial:
            m = p.max_abs_coef()
            return p * (1.0 / m) if m not in (0.0, 1.0) else p
        return SemialgebraicSet(tuple(norm(g) for g in self.inequalities),
                                tuple(norm(h) for h in self.equalities))


def boundary_union(a: SemialgebraicSet, b: SemialgebraicSet) -> SemialgebraicSet:
    """Union of two equality-described sets, via products of the defining
    equalities.  Requires each set to be cut out by a single equality (plus
    optional shared inequalities); this covers boundary sets like
    {h1 = 0} u {h2 = 0} = {h1*h2 = 0}.
    """
    if len(a.equalities) != 1 or len(b.equalities) != 1:
        raise ValueError("boundary_union needs sets described by a single equality each")
    return SemialgebraicSet(a.inequalities + b.inequalities,
                            (a.equalities[0] * b.equalities[0],))
