"""Weighted sum-of-squares lowering of positivity constraints to SDP form.

A :class:`SosProgram` is a list of polynomial nonnegativity constraints,
each over a semialgebraic domain {g_i >= 0, h_j = 0}, with targets that are
affine in scalar decision variables, plus a linear objective to maximize.
:func:`lower` rewrites every constraint via the weighted-SOS ansatz

    target = sigma_0 + sum_i sigma_i * g_i + sum_j lambda_j * h_j

with SOS multipliers sigma (one Gram matrix each) and free-coefficient
polynomials lambda, then matches coefficients monomial by monomial.  The
result is a block-diagonal semidefinite feasibility/optimization problem
with free scalars.  Lowering is deterministic: fixed variable order, graded
monomial order, fixed block order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .poly import MonomialBasis, Polynomial, _grlex_key, monomials_up_to
from .sets import SemialgebraicSet
from .template import AffineExpr, ParamPoly


@dataclass(frozen=True)
class PositivityConstraint:
    """target(x) >= 0 for all x in domain; target affine in the unknowns."""

    target: ParamPoly
    domain: SemialgebraicSet
    label: str


@dataclass
class SosProgram:
    """Constraints plus an affine objective over the scalar decision vars."""

    decision_vars: Tuple[str, ...]
    constraints: Tuple[PositivityConstraint, ...]
    objective: AffineExpr  # maximized
    meta: dict = field(default_factory=dict)


@dataclass
class SdpRow:
    """One equality row: sum <A_b, X_b> + sum d_v z_v = rhs.

    Gram coefficients follow the symmetric inner-product convention: a
    stored value c at (block, i, j) with i < j contributes 2*c*X_ij, and
    c*X_ii on the diagonal.
    """

    gram: Dict[Tuple[int, int, int], float]
    free: Dict[str, float]
    rhs: float
    label: str


@dataclass
class SdpProblem:
    blocks: List[Tuple[str, int]]
    free_vars: List[str]
    rows: List[SdpRow]
    objective_free: Dict[str, float]  # maximized
    objective_const: float
    # Gram-side objective terms (same <.,.> convention as rows); empty for
    # programs produced by lower(), may be populated by SDPA import.
    objective_gram: Dict[Tuple[int, int, int], float] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def num_rows(self) -> int:
        return len(self.rows)


def _even_ceil(d: int) -> int:
    return d if d % 2 == 0 else d + 1


def _even_floor(d: int) -> int:
    return d if d % 2 == 0 else d - 1


def lower(program: SosProgram, degree_floor: int = 0) -> SdpProblem:
    """Lower all constraints into one block-diagonal SDP.

    degree_floor raises the matched identity degree D of every constraint
    (D = smallest even integer >= max(target degree, degree_floor)).
    """
    blocks: List[Tuple[str, int]] = []
    free_vars: List[str] = list(program.decision_vars)
    rows: List[SdpRow] = []
    meta: dict = {"constraints": [], "program_meta": program.meta}

    for k, con in enumerate(program.constraints):
        names = set(con.target.vars)
        for p in con.domain.inequalities + con.domain.equalities:
            names.update(v for v in p.vars if p.degree_in(v) > 0)
        target = con.target.on_vars(tuple(sorted(names)))
        vs = target.vars
        D = _even_ceil(max(target.degree(), degree_floor))

        cmeta = {"label": con.label, "vars": vs, "degree": D,
                 "blocks": [], "lambdas": []}

        # accumulate rows keyed by monomial exponent over vs
        acc: Dict[Tuple[int, ...], SdpRow] = {}

        def row_for(e) -> SdpRow:
            if e not in acc:
                acc[e] = SdpRow({}, {}, 0.0, f"{con.label}:{e}")
            return acc[e]

        # sigma_0 (plain SOS part) and weighted sigma_i * g_i
        weights: List[Tuple[Optional[Polynomial], int]] = [(None, D)]
        for g in con.domain.inequalities:
            dg = g.on_vars(vs).degree()
            ds = _even_floor(D - dg)
            if ds < 0:
                continue
            weights.append((g.on_vars(vs), ds))

        for widx, (g, ds) in enumerate(weights):
            basis = monomials_up_to(vs, ds // 2)
            bidx = len(blocks)
            bname = f"c{k}:s{widx}"
            blocks.append((bname, len(basis)))
            cmeta["blocks"].append({"name": bname, "index": bidx,
                                    "basis": [list(e) for e in basis.exponents],
                                    "weight": g.to_string() if g is not None else "1"})
            gterms = g.terms if g is not None else {(0,) * len(vs): 1.0}
            exps = basis.exponents
            for a in range(len(exps)):
                for b in range(a, len(exps)):
                    eab = tuple(i + j for i, j in zip(exps[a], exps[b]))
                    for eh, ch in gterms.items():
                        e = tuple(i + j for i, j in zip(eab, eh))
                        r = row_for(e)
                        key = (bidx, a, b)
                        r.gram[key] = r.gram.get(key, 0.0) + ch

        # lambda_j * h_j with free-coefficient lambda_j
        for j, h in enumerate(con.domain.equalities):
            hh = h.on_vars(vs)
            dl = D - hh.degree()
            if dl < 0:
                continue
            lam_basis = monomials_up_to(vs, dl)
            lam_names = [f"c{k}.h{j}[{m}]" for m in range(len(lam_basis))]
            free_vars.extend(lam_names)
            cmeta["lambdas"].append({"names": lam_names, "equality": hh.to_string(),
                                     "basis": [list(e) for e in lam_basis.exponents]})
            for name, em in zip(lam_names, lam_basis.exponents):
                for eh, ch in hh.terms.items():
                    e = tuple(i + j for i, j in zip(em, eh))
                    r = row_for(e)
                    r.free[name] = r.free.get(name, 0.0) + ch

        # target side: grams + lambdas - lin.z = const
        for e, a in target.terms.items():
            r = row_for(e)
            r.rhs += a.const
            for name, c in a.lin:
                r.free[name] = r.free.get(name, 0.0) - c

        for e in sorted(acc, key=_grlex_key):
            rows.append(acc[e])
        meta["constraints"].append(cmeta)

    obj_free = {name: c for name, c in program.objective.lin}
    return SdpProblem(blocks=blocks, free_vars=free_vars, rows=rows,
                      objective_free=obj_free,
                      objective_const=program.objective.const, meta=meta)


# ---------------------------------------------------------------------------
# certificate checking
# ---------------------------------------------------------------------------


def _gram_to_poly(Q: np.ndarray, vs: Tuple[str, ...], exps: Sequence[Tuple[int, ...]]) -> Polynomial:
    terms: Dict[Tuple[int, ...], float] = {}
    n = len(exps)
    for a in range(n):
        for b in range(n):
            e = tuple(i + j for i, j in zip(exps[a], exps[b]))
            terms[e] = terms.get(e, 0.0) + Q[a, b]
    return Polynomial(vs, terms)


def check_certificate(program: SosProgram, sdp: SdpProblem,
                      gram: Mapping[str, np.ndarray],
                      free: Mapping[str, float]) -> dict:
    """Recompute every weighted-SOS identity symbolically from a solution.

    Returns residual inf-norm (max abs coefficient of the identity defect
    over all constraints), the minimum Gram eigenvalue across blocks, and
    the objective value.  Purely diagnostic; never raises on bad data.
    """
    free = dict(free)
    min_eig = float("inf")
    residual = 0.0
    per_constraint = []
    for cmeta, con in zip(sdp.meta["constraints"], program.constraints):
        vs = tuple(cmeta["vars"])
        assign = {name: free.get(name, 0.0) for name in con.target.decision_vars()}
        lhs = Polynomial.zero(vs)
        for binfo in cmeta["blocks"]:
            Q = np.asarray(gram[binfo["name"]])
            min_eig = min(min_eig, float(np.linalg.eigvalsh((Q + Q.T) / 2).min()) if Q.size else 0.0)
            sig = _gram_to_poly((Q + Q.T) / 2, vs, [tuple(e) for e in binfo["basis"]])
            if binfo["weight"] != "1":
                g = _find_weight(con.domain, binfo["weight"], vs)
                sig = sig * g
            lhs = lhs + sig
        for linfo in cmeta["lambdas"]:
            h = _find_weight(con.domain, linfo["equality"], vs, equalities=True)
            lam = Polynomial(vs, {tuple(e): free.get(name, 0.0)
                                  for name, e in zip(linfo["names"], linfo["basis"])})
            lhs = lhs + lam * h
        tgt = con.target.instantiate(assign).on_vars(
            tuple(sorted(set(con.target.vars) | set(vs))))
        defect = tgt - lhs
        r = defect.max_abs_coef()
        residual = max(residual, r)
        per_constraint.append({"label": con.label, "residual": r})
    obj = program.objective.value({k: free.get(k, 0.0) for k, _ in program.objective.lin})
    return {"residual_inf_norm": residual,
            "min_gram_eigenvalue": min_eig if min_eig != float("inf") else 0.0,
            "objective_value": obj,
            "constraints": per_constraint}


def _find_weight(domain: SemialgebraicSet, printed: str, vs, equalities: bool = False) -> Polynomial:
    pool = domain.equalities if equalities else domain.inequalities
    for p in pool:
        if p.to_string() == printed:
            return p.on_vars(tuple(sorted(set(p.vars) | set(vs))))
    raise KeyError(f"weight polynomial {printed!r} not found in domain")


# ---------------------------------------------------------------------------
# dense sampling of constraint domains
# ---------------------------------------------------------------------------


def _univariate_roots(p: Polynomial) -> List[float]:
    active = [v for v in p.vars if p.degree_in(v) > 0]
    if len(active) != 1:
        raise ValueError("root enumeration needs a univariate equality")
    v = active[0]
    i = p.vars.index(v)
    d = p.degree_in(v)
    coeffs = np.zeros(d + 1)
    for e, c in p.terms.items():
        coeffs[d - e[i]] += c
    roots = np.roots(coeffs)
    return sorted(float(r.real) for r in roots if abs(r.imag) < 1e-9)


def sample_domain_points(domain: SemialgebraicSet,
                         box: Mapping[str, Tuple[float, float]],
                         n: int, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    """Draw up to n points of the domain inside the given box.

    Inequality-only domains use rejection sampling.  Equality constraints
    are handled when each equality is univariate: its real roots replace
    sampling along that coordinate (boundary sets like {x - 1 = 0}).
    """
    names = sorted(box)
    cols = {v: rng.uniform(box[v][0], box[v][1], size=n) for v in names}
    for h in domain.equalities:
        roots = _univariate_roots(h)
        active = [v for v in h.vars if h.degree_in(v) > 0][0]
        if not roots:
            return {v: np.empty(0) for v in names}
        cols[active] = np.asarray(roots)[rng.integers(0, len(roots), size=n)]
    ok = np.ones(n, dtype=bool)
    for g in domain.inequalities:
        ok &= g.evaluate_batch({v: cols[v] for v in g.vars}) >= 0
    return {v: c[ok] for v, c in cols.items()}


def sample_check(target: Polynomial, domain: SemialgebraicSet,
                 box: Mapping[str, Tuple[float, float]], n: int,
                 rng: np.random.Generator, tol: float) -> dict:
    """Empirically test target >= -tol on sampled domain points."""
    need = {v for v in target.vars if target.degree_in(v) > 0} | set(domain.vars)
    full_box = {v: box.get(v, (-1.0, 1.0)) for v in sorted(need)}
    pts = sample_domain_points(domain, full_box, n, rng)
    m = len(next(iter(pts.values()))) if pts else 0
    if m == 0:
        return {"points": 0, "min_value": None, "violations": 0}
    vals = target.evaluate_batch({v: pts[v] for v in target.vars}) if target.vars \
        else np.full(m, target.constant_term())
    return {"points": int(m),
            "min_value": float(np.min(vals)),
            "violations": int(np.sum(vals < -tol))}
