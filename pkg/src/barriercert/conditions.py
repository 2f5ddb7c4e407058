"""Barrier-like certificate conditions and their probability bounds.

Each encoder turns one condition variant into a :class:`~barriercert.sos.SosProgram`:
polynomial nonnegativity constraints over semialgebraic domains, affine in
the template coefficients, plus a linear objective whose optimum feeds the
closed-form probability bound in :func:`eval_bound`.

For the continuous-time variants the time axis is normalized internally:
the template lives over (x, t) with t in [0, 1] standing for physical time
t*T, so every physical time derivative picks up a factor 1/T.  This is an
exact reparametrization; it only exists to keep the SDP well conditioned
for long horizons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace as _dc_replace
from typing import Dict, Mapping, Optional, Tuple, Union

from .model import ContinuousSystem, DiscreteSystem, generator, pushforward_expectation
from .poly import Polynomial, monomials_up_to, product_basis
from .sets import SemialgebraicSet, boundary_union
from .sos import PositivityConstraint, SosProgram
from .template import AffineExpr, ParamPoly

DISCRETE_UPPER_NEW = "DiscreteUpperNew"
DISCRETE_UPPER_PROP1 = "DiscreteUpperProp1"
CT_TIMEDEP = "CtReachAvoidTimeDep"
CT_TIMEINDEP = "CtReachAvoidTimeIndep"
CT_PROP2 = "CtReachAvoidProp2"
CT_PROP3 = "CtReachAvoidProp3"

VARIANTS = (DISCRETE_UPPER_NEW, DISCRETE_UPPER_PROP1, CT_TIMEDEP,
            CT_TIMEINDEP, CT_PROP2, CT_PROP3)

UPPER_VARIANTS = (DISCRETE_UPPER_NEW, DISCRETE_UPPER_PROP1)
LOWER_VARIANTS = (CT_TIMEDEP, CT_TIMEINDEP, CT_PROP2, CT_PROP3)

# named sets each variant consumes; complements/boundaries are user-supplied
REQUIRED_SETS: Dict[str, Tuple[str, ...]] = {
    DISCRETE_UPPER_NEW: ("safe", "safe_complement"),
    DISCRETE_UPPER_PROP1: ("safe", "safe_complement", "xtilde"),
    CT_TIMEDEP: ("safe_minus_target", "boundary_target", "boundary_safe", "closure"),
    CT_TIMEINDEP: ("safe_minus_target", "closure", "boundary_safe"),
    CT_PROP2: ("safe_minus_target", "boundary_safe", "boundary_target", "closure"),
    CT_PROP3: ("safe_minus_target", "boundary_safe", "boundary_target", "closure"),
}

TIME_DEPENDENT = (CT_TIMEDEP, CT_PROP2)

ALPHA_EPS = 1e-10  # below this, formulas switch to their alpha=0 limit


@dataclass(frozen=True)
class VerificationTask:
    """One certificate-synthesis instance: system, condition variant,
    named sets, horizon, parameters and template degrees."""

    variant: str
    system: Union[DiscreteSystem, ContinuousSystem]
    sets: Mapping[str, SemialgebraicSet]
    horizon: float  # N (discrete) or T (continuous)
    alpha: float
    beta: Union[float, str]  # "decision" allowed only for DiscreteUpperNew
    x0: Mapping[str, float]
    deg_x: int
    deg_t: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        missing = [s for s in REQUIRED_SETS[self.variant] if s not in self.sets]
        if missing:
            raise ValueError(f"{self.variant} requires sets {missing}")
        a, b = self.alpha, self.beta
        if b == "decision":
            if self.variant != DISCRETE_UPPER_NEW:
                raise ValueError("beta can be a decision variable only for "
                                 f"{DISCRETE_UPPER_NEW}")
        elif not isinstance(b, (int, float)):
            raise ValueError("beta must be a number or 'decision'")
        if self.variant == DISCRETE_UPPER_NEW and a < 0:
            raise ValueError("DiscreteUpperNew needs alpha >= 0")
        if self.variant == DISCRETE_UPPER_PROP1:
            if a < 1:
                raise ValueError("DiscreteUpperProp1 needs alpha >= 1")
            if b == "decision" or b <= 1 - a:
                raise ValueError("DiscreteUpperProp1 needs beta > 1 - alpha")
        if self.variant == CT_TIMEDEP:
            if a < 0:
                raise ValueError("CtReachAvoidTimeDep needs alpha >= 0")
            if b == "decision" or a + b <= 0:
                raise ValueError("CtReachAvoidTimeDep needs alpha + beta > 0")
        if self.variant == CT_TIMEINDEP:
            if a <= 0:
                raise ValueError("CtReachAvoidTimeIndep needs alpha > 0")
            if b == "decision" or a + b <= 0:
                raise ValueError("CtReachAvoidTimeIndep needs alpha + beta > 0")
        if self.variant in (CT_PROP2, CT_PROP3) and b == "decision":
            raise ValueError(f"{self.variant} needs a numeric beta")
        if self.variant in (DISCRETE_UPPER_NEW, DISCRETE_UPPER_PROP1):
            if self.horizon < 0 or self.horizon != int(self.horizon):
                raise ValueError("discrete variants need an integer horizon N >= 0")
        elif self.horizon <= 0:
            raise ValueError("continuous variants need a horizon T > 0")
        if self.deg_x < 0 or self.deg_t < 0:
            raise ValueError("degrees must be nonnegative")
        if self.variant not in TIME_DEPENDENT and self.deg_t != 0:
            raise ValueError(f"{self.variant} uses a time-independent template")
        start = self.sets.get("safe", self.sets.get("safe_minus_target"))
        if start is not None and not start.contains(dict(self.x0), tol=1e-9):
            raise ValueError("x0 is not in the declared safe region")

    @property
    def N(self) -> int:
        return int(self.horizon)

    @property
    def T(self) -> float:
        return float(self.horizon)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _value_affine(pp: ParamPoly, point: Mapping[str, float]) -> AffineExpr:
    """Evaluate a parametric polynomial at a numeric point."""
    out = AffineExpr()
    for e, a in pp.terms.items():
        m = 1.0
        for v, k in zip(pp.vars, e):
            if k:
                m *= float(point[v]) ** k
        out = out + a * m
    return out


def _template(prefix: str, state_vars, deg_x: int, tvar: Optional[str],
              deg_t: int) -> Tuple[ParamPoly, Tuple[str, ...]]:
    basis = product_basis(state_vars, deg_x, tvar, deg_t)
    names = tuple(f"{prefix}[{i}]" for i in range(len(basis)))
    return ParamPoly.template(basis, names), names


def _apply_linear(op, pp: ParamPoly) -> ParamPoly:
    """Apply a linear operator (given on concrete polynomials) monomial-wise."""
    names, polys = [], []
    extra = AffineExpr()
    for e, a in pp.terms.items():
        mono = Polynomial.monomial(pp.vars, e)
        img = op(mono)
        if a.lin and a.const:
            raise ValueError("mixed affine coefficient under linear operator")
        if a.lin:
            for nm, c in a.lin:
                names.append(nm)
                polys.append(img * c)
        else:
            polys.append(img * a.const)
            names.append("__const__")
    out = ParamPoly.linear_image(polys, [f"#{i}" for i in range(len(polys))])
    # re-fold: linear_image keyed per fresh name; rebuild with true names
    acc: Dict[tuple, AffineExpr] = {}
    for (p, nm) in zip(polys, names):
        pa = p.on_vars(out.vars) if out.vars else p
        for e, c in pa.terms.items():
            cur = acc.get(e, AffineExpr())
            acc[e] = cur + (AffineExpr(c) if nm == "__const__" else AffineExpr.var(nm, c))
    return ParamPoly(out.vars if out.vars else pp.vars, acc)


def _time_window(s: SemialgebraicSet, tvar: str) -> SemialgebraicSet:
    t = Polynomial.variable(tvar)
    return s.adjoin_inequality(t * (1 - t))


def _geom_sum(alpha: float, terms: int) -> float:
    # sum_{i=0}^{terms-1} alpha^i  (empty sum for terms <= 0)
    if terms <= 0:
        return 0.0
    if abs(alpha - 1.0) < 1e-14:
        return float(terms)
    return (alpha ** terms - 1.0) / (alpha - 1.0)


# ---------------------------------------------------------------------------
# discrete-time encoders
# ---------------------------------------------------------------------------


def encode_discrete_upper_new(task: VerificationTask) -> SosProgram:
    """Finite-horizon safety upper bound with beta optionally a decision var.

    Lines: v <= 0 on the safe set, v <= 1 off it, the one-step expectation
    dominates alpha*v + beta on the safe set, and an exit cap off the safe
    set.  Telescoping the expectation inequality to the first exit time
    tau in {1..N} requires v*alpha^j + beta*sum_{i<j} alpha^i <= 1 at the
    exit state for every j = N - tau in {0..N-1}; pointwise in x this
    expression is monotone in j, so the family reduces to its endpoints
    j = 0 (the "v <= 1" line) and j = N-1 (the cap line below).  The cap
    row is scaled by its geometric-sum constant to keep coefficients O(1).

    Certified bound: 1 - (v(x0)*alpha^N + beta*sum_{i=0}^{N-1} alpha^i).
    """
    if task.variant != DISCRETE_UPPER_NEW:
        raise ValueError("variant mismatch")
    sys: DiscreteSystem = task.system
    a, N = task.alpha, task.N
    S_obj = _geom_sum(a, N)        # sum_{i=0}^{N-1}
    S_cap = _geom_sum(a, N - 1)    # sum_{i=0}^{N-2}
    beta = AffineExpr.var("beta") if task.beta == "decision" else AffineExpr(float(task.beta))

    v, names = _template("v", sys.state_vars, task.deg_x, None, 0)
    Ev = _apply_linear(lambda p: pushforward_expectation(sys, p), v)

    safe = task.sets["safe"]
    comp = task.sets["safe_complement"]
    cons = [
        PositivityConstraint(-v, safe, "v-nonpositive-on-safe"),
        PositivityConstraint(1.0 - v, comp, "v-below-one-off-safe"),
        PositivityConstraint(Ev - v.scale(a) - beta, safe, "expectation-growth"),
    ]
    if N >= 2:
        # normalize the row only when the geometric constant actually is
        # large; rescaling well-conditioned rows hurts more than it helps
        r = 1.0 / S_cap if S_cap > 100.0 else 1.0
        cap = (ParamPoly.constant(AffineExpr(r), sys.state_vars)
               - v.scale(a ** (N - 1) * r)
               - ParamPoly.constant(beta * (S_cap * r), sys.state_vars))
        cons.append(PositivityConstraint(cap, comp, "horizon-cap"))
    objective = _value_affine(v, task.x0) * (a ** N) + beta * S_obj
    dvars = names + (("beta",) if task.beta == "decision" else ())
    return SosProgram(dvars, tuple(cons), objective,
                      meta={"variant": task.variant, "alpha": a, "beta": task.beta,
                            "N": N, "geom_sum": S_obj,
                            "v_template": v, "x0_point": dict(task.x0)})


def encode_discrete_upper_prop1(task: VerificationTask) -> SosProgram:
    """c-martingale style upper bound with an explicit sup bound M on an
    over-approximation xtilde of the reachable set."""
    if task.variant != DISCRETE_UPPER_PROP1:
        raise ValueError("variant mismatch")
    sys: DiscreteSystem = task.system
    a, b, N = task.alpha, float(task.beta), task.N

    v, names = _template("v", sys.state_vars, task.deg_x, None, 0)
    Ev = _apply_linear(lambda p: pushforward_expectation(sys, p), v)

    safe = task.sets["safe"]
    off = task.sets["xtilde"].intersect(task.sets["safe_complement"])
    xt = task.sets["xtilde"]
    M = AffineExpr.var("M")
    cons = (
        PositivityConstraint(Ev - v.scale(a) - b, safe, "expectation-growth"),
        PositivityConstraint(1.0 - v, off, "v-below-one-off-safe"),
        PositivityConstraint(ParamPoly.constant(M, v.vars) - v, xt, "sup-envelope"),
    )
    v0 = _value_affine(v, task.x0)
    if a > 1:
        objective = v0 * (a ** (N + 1)) - M
    else:
        objective = v0 - M
    return SosProgram(names + ("M",), cons, objective,
                      meta={"variant": task.variant, "alpha": a, "beta": b, "N": N,
                            "v_template": v, "x0_point": dict(task.x0)})


# ---------------------------------------------------------------------------
# continuous-time encoders
# ---------------------------------------------------------------------------


def _ct_operators(task: VerificationTask, pp: ParamPoly):
    """Generator and time derivative in normalized time t in [0,1]."""
    sys: ContinuousSystem = task.system
    T = task.T
    tv = sys.time_var

    def dt(p: Polynomial) -> Polynomial:
        if tv not in p.vars:
            return Polynomial.zero(p.vars)
        return p.differentiate(tv) * (1.0 / T)

    def gen(p: Polynomial) -> Polynomial:
        # generator() contributes the time derivative with weight 1; swap
        # in the normalized-time weight 1/T
        g = generator(sys, p)
        if tv in p.vars:
            g = g + p.differentiate(tv) * (1.0 / T - 1.0)
        return g

    return (_apply_linear(gen, pp), _apply_linear(dt, pp))


def encode_ct_timedep(task: VerificationTask) -> SosProgram:
    """Time-dependent reach-avoid lower bound (four lines)."""
    if task.variant != CT_TIMEDEP:
        raise ValueError("variant mismatch")
    sys: ContinuousSystem = task.system
    a, b = task.alpha, float(task.beta)
    tv = sys.time_var
    v, names = _template("v", sys.state_vars, task.deg_x, tv, task.deg_t)
    Lv, dtv = _ct_operators(task, v)

    main = _time_window(task.sets["safe_minus_target"], tv)
    btgt = _time_window(task.sets["boundary_target"], tv)
    bsafe = _time_window(task.sets["boundary_safe"], tv)
    clo = _time_window(task.sets["closure"], tv)
    cons = (
        PositivityConstraint(Lv - v.scale(a) - b, main, "generator-growth"),
        PositivityConstraint(dtv + a - v.scale(a), btgt, "target-boundary"),
        PositivityConstraint(dtv - v.scale(a) - b, bsafe, "safe-boundary"),
        PositivityConstraint(1.0 - v, clo, "v-below-one"),
    )
    objective = _value_affine(v, {**dict(task.x0), tv: 0.0})
    return SosProgram(names, cons, objective,
                      meta={"variant": task.variant, "alpha": a, "beta": b, "T": task.T,
                            "v_template": v, "x0_point": {**dict(task.x0), tv: 0.0}})


def encode_ct_timeindep(task: VerificationTask) -> SosProgram:
    """Time-independent reach-avoid lower bound (three lines)."""
    if task.variant != CT_TIMEINDEP:
        raise ValueError("variant mismatch")
    sys: ContinuousSystem = task.system
    a, b = task.alpha, float(task.beta)
    v, names = _template("v", sys.state_vars, task.deg_x, None, 0)
    Lv, _ = _ct_operators(task, v)
    cons = (
        PositivityConstraint(Lv - v.scale(a) - b, task.sets["safe_minus_target"],
                             "generator-growth"),
        PositivityConstraint(1.0 - v, task.sets["closure"], "v-below-one"),
        PositivityConstraint(-(v.scale(a) + b), task.sets["boundary_safe"],
                             "safe-boundary"),
    )
    objective = _value_affine(v, task.x0)
    return SosProgram(names, cons, objective,
                      meta={"variant": task.variant, "alpha": a, "beta": b, "T": task.T,
                            "v_template": v, "x0_point": dict(task.x0)})


def _envelope(w: ParamPoly, domain: SemialgebraicSet):
    M = AffineExpr.var("M")
    return (
        PositivityConstraint(ParamPoly.constant(M, w.vars) - w, domain, "envelope-upper"),
        PositivityConstraint(w + ParamPoly.constant(M, w.vars), domain, "envelope-lower"),
    )


def _prop_objective(task: VerificationTask, v0: AffineExpr) -> AffineExpr:
    a, T = task.alpha, task.T
    M = AffineExpr.var("M")
    if abs(a) < ALPHA_EPS:
        return v0 * T - M * 2.0
    return v0 * ((math.exp(a * T) - 1.0) / a) - M * 2.0


def encode_ct_prop2(task: VerificationTask) -> SosProgram:
    """Time-dependent lower bound with auxiliary w and envelope scalar M
    (five lines plus the two-sided |w| <= M envelope)."""
    if task.variant != CT_PROP2:
        raise ValueError("variant mismatch")
    sys: ContinuousSystem = task.system
    a, b = task.alpha, float(task.beta)
    tv = sys.time_var
    v, vn = _template("v", sys.state_vars, task.deg_x, tv, task.deg_t)
    w, wn = _template("w", sys.state_vars, task.deg_x, tv, max(task.deg_t, 1))
    Lv, dtv = _ct_operators(task, v)
    Lw, dtw = _ct_operators(task, w)

    main = _time_window(task.sets["safe_minus_target"], tv)
    bunion = _time_window(boundary_union(task.sets["boundary_safe"],
                                         task.sets["boundary_target"]), tv)
    btgt = _time_window(task.sets["boundary_target"], tv)
    bsafe = _time_window(task.sets["boundary_safe"], tv)
    clo = _time_window(task.sets["closure"], tv)
    cons = (
        PositivityConstraint(Lv - v.scale(a) - b, main, "generator-growth"),
        PositivityConstraint(dtv - v.scale(a) - b, bunion, "boundary-growth"),
        PositivityConstraint(1.0 + dtw - v, btgt, "target-boundary"),
        PositivityConstraint(Lw - v, main, "w-generator"),
        PositivityConstraint(dtw - v, bsafe, "safe-boundary"),
    ) + _envelope(w, clo)
    v0 = _value_affine(v, {**dict(task.x0), tv: 0.0})
    return SosProgram(vn + wn + ("M",), cons, _prop_objective(task, v0),
                      meta={"variant": task.variant, "alpha": a, "beta": b, "T": task.T,
                            "v_template": v, "w_template": w,
                            "x0_point": {**dict(task.x0), tv: 0.0}})


def encode_ct_prop3(task: VerificationTask) -> SosProgram:
    """Time-independent counterpart of the auxiliary-w lower bound."""
    if task.variant != CT_PROP3:
        raise ValueError("variant mismatch")
    sys: ContinuousSystem = task.system
    a, b = task.alpha, float(task.beta)
    if abs(a) < ALPHA_EPS and task.beta is None:
        raise ValueError("beta required")
    v, vn = _template("v", sys.state_vars, task.deg_x, None, 0)
    w, wn = _template("w", sys.state_vars, task.deg_x, None, 0)
    Lv, _ = _ct_operators(task, v)
    Lw, _ = _ct_operators(task, w)

    main = task.sets["safe_minus_target"]
    bunion = boundary_union(task.sets["boundary_safe"], task.sets["boundary_target"])
    cons = (
        PositivityConstraint(Lv - v.scale(a) - b, main, "generator-growth"),
        PositivityConstraint(-(v.scale(a) + b), bunion, "boundary-cap"),
        PositivityConstraint(1.0 - v, task.sets["boundary_target"], "target-boundary"),
        PositivityConstraint(Lw - v, main, "w-generator"),
        PositivityConstraint(-v, task.sets["boundary_safe"], "safe-boundary"),
    ) + _envelope(w, task.sets["closure"])
    v0 = _value_affine(v, task.x0)
    return SosProgram(vn + wn + ("M",), cons, _prop_objective(task, v0),
                      meta={"variant": task.variant, "alpha": a, "beta": b, "T": task.T,
                            "v_template": v, "w_template": w,
                            "x0_point": dict(task.x0)})


ENCODERS = {
    DISCRETE_UPPER_NEW: encode_discrete_upper_new,
    DISCRETE_UPPER_PROP1: encode_discrete_upper_prop1,
    CT_TIMEDEP: encode_ct_timedep,
    CT_TIMEINDEP: encode_ct_timeindep,
    CT_PROP2: encode_ct_prop2,
    CT_PROP3: encode_ct_prop3,
}


def encode(task: VerificationTask) -> SosProgram:
    # normalize set descriptions to unit max-abs coefficient; same point
    # sets, far better conditioned SDP data
    task = _dc_replace(
        task, sets={k: s.normalized() for k, s in task.sets.items()})
    return ENCODERS[task.variant](task)


# ---------------------------------------------------------------------------
# closed-form bounds
# ---------------------------------------------------------------------------


def eval_bound(variant: str, params: Mapping[str, float]) -> Tuple[float, float]:
    """Closed-form probability bound for a solved certificate.

    params: alpha, beta, N or T, v_at_x0, and M for the variants that
    carry the envelope scalar.  Returns (clamped to [0,1], raw).
    """
    a = float(params["alpha"])
    b = float(params["beta"])
    v0 = float(params["v_at_x0"])
    if variant == DISCRETE_UPPER_NEW:
        N = int(params["N"])
        raw = 1.0 - (v0 * a ** N + b * _geom_sum(a, N))
    elif variant == DISCRETE_UPPER_PROP1:
        N = int(params["N"])
        M = float(params["M"])
        if a > 1:
            aN1 = a ** (N + 1)
            raw = 1.0 - ((aN1 * v0 - M) * (a - 1.0) + b * (aN1 - 1.0)) \
                / ((a + b - 1.0) * (aN1 - 1.0))
        else:
            raw = (v0 - M) / (b * (N + 1))
    elif variant in (CT_TIMEDEP, CT_TIMEINDEP):
        T = float(params["T"])
        if abs(a) < ALPHA_EPS:
            raw = (v0 - 1.0) / (b * T) + 1.0
        else:
            e = math.exp(a * T)
            raw = (e * (a * v0 + b) - (a + b)) / ((a + b) * (e - 1.0))
    elif variant in (CT_PROP2, CT_PROP3):
        T = float(params["T"])
        M = float(params["M"])
        if abs(a) < ALPHA_EPS:
            raw = v0 + 0.5 * b * T - 2.0 * M / T
        else:
            e = math.exp(a * T)
            raw = ((v0 / a + b / a ** 2) * (e - 1.0) - (b / a) * T) / T - 2.0 * M / T
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return min(1.0, max(0.0, raw)), raw


def bound_params(variant: str, task: VerificationTask, objective_value: float,
                 free: Mapping[str, float]) -> Dict[str, float]:
    """Assemble eval_bound params from a solved program's scalars."""
    out = {"alpha": task.alpha,
           "beta": float(free.get("beta", task.beta if task.beta != "decision" else 0.0))}
    if variant in (DISCRETE_UPPER_NEW, DISCRETE_UPPER_PROP1):
        out["N"] = task.N
    else:
        out["T"] = task.T
    if variant in (DISCRETE_UPPER_PROP1, CT_PROP2, CT_PROP3):
        out["M"] = float(free.get("M", 0.0))
    return out
