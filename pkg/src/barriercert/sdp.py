"""Primal-dual interior-point solver for block-diagonal SDPs with free scalars.

Solves problems of the form

    maximize    sum_v obj_v * z_v            (objective_const added on top)
    subject to  <A_i, X> + d_i^T z = b_i     for every row i
                X = blockdiag(X_1, ..., X_B) >= 0,   z free

using an infeasible-start Mehrotra predictor-corrector method with the
HKM search direction and a dense Schur complement.  Free scalars are kept
in the Newton saddle system natively rather than being split into
differences of nonnegative variables.

Problems in this package are small (Gram blocks below ~250x250, a few
hundred to a few thousand equality rows), so dense linear algebra is
adequate throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
import scipy.linalg as sla

from .sos import SdpProblem

_EQUIL_ROUNDS = 0  # equilibration sweeps over the Gram/free columns

STATUS_OPTIMAL = "optimal"
STATUS_NEAR_OPTIMAL = "near-optimal"
STATUS_INFEASIBLE = "infeasible-certificate"
STATUS_ITERATION_LIMIT = "iteration-limit"
STATUS_NUMERICAL_FAILURE = "numerical-failure"


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 200
    feasibility_tol: float = 1e-8
    duality_gap_tol: float = 1e-8
    step_fraction: float = 0.98
    verbose: bool = False
    # Proximal trace penalty eps*tr(X) added to the internal minimization
    # objective.  Zero by default; `solve` retries with a small penalty when
    # the unregularized run stalls, because it restores dual attainment on
    # degenerate instances whose optimal face passes through X = 0.  The
    # reported objective is always evaluated on the original data and the
    # bias bound eps*tr(X) is folded into the reported gap.
    trace_reg: float = 0.0

    def __post_init__(self):
        if self.feasibility_tol <= 0 or self.duality_gap_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not 0.0 < self.step_fraction < 1.0:
            raise ValueError("step_fraction must lie in (0, 1)")
        if self.trace_reg < 0:
            raise ValueError("trace_reg must be nonnegative")


@dataclass
class SolveResult:
    status: str
    gram: Dict[str, np.ndarray]
    free: Dict[str, float]
    y: np.ndarray
    objective: Optional[float]
    gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    message: str = ""


class _Data:
    """Preprocessed problem data: stacked per-block constraint tensors."""

    def __init__(self, p: SdpProblem):
        self.blocks = list(p.blocks)
        self.free_vars = list(p.free_vars)
        self.m = len(p.rows)
        self.p = len(self.free_vars)
        vidx = {v: j for j, v in enumerate(self.free_vars)}
        m = self.m

        b = np.array([row.rhs for row in p.rows])

        D = np.zeros((m, self.p))
        for i, row in enumerate(p.rows):
            for v, c in row.free.items():
                D[i, vidx[v]] = c

        # per block: indices of touching rows and stacked symmetric matrices
        self.block_rows: List[np.ndarray] = []
        block_mats: List[np.ndarray] = []
        for bi, (_, n) in enumerate(self.blocks):
            touch: Dict[int, List[Tuple[int, int, float]]] = {}
            for i, row in enumerate(p.rows):
                for (blk, a, c), val in row.gram.items():
                    if blk == bi:
                        touch.setdefault(i, []).append((a, c, val))
            ridx = np.array(sorted(touch), dtype=int)
            mats = np.zeros((len(ridx), n, n))
            for t, i in enumerate(ridx):
                for a, c, val in touch[i]:
                    mats[t, a, c] += val
                    if a != c:
                        mats[t, c, a] += val
            self.block_rows.append(ridx)
            block_mats.append(mats)

        # Ruiz-style equilibration: congruence scaling of each Gram basis
        # direction, column scaling of free variables, and row scaling.
        # Monomial bases make the raw data span many orders of magnitude;
        # without this the interior-point iteration hits its conditioning
        # floor well before the requested tolerances.
        self.row_scale = np.ones(m)
        gscale = [np.ones(n) for _, n in self.blocks]
        fscale = np.ones(self.p)
        for _ in range(_EQUIL_ROUNDS):
            # basis-direction scaling: max entry magnitude seen in any row
            for bi, ((_, n), mats) in enumerate(zip(self.blocks, block_mats)):
                if not len(mats):
                    continue
                colmax = np.abs(mats).max(axis=(0, 1))
                colmax[colmax == 0] = 1.0
                s = colmax ** -0.25
                mats *= s[None, :, None] * s[None, None, :]
                gscale[bi] *= s
            if self.p:
                colmax = np.abs(D).max(axis=0)
                colmax[colmax == 0] = 1.0
                s = colmax ** -0.5
                D *= s[None, :]
                fscale *= s
        # row normalization by the largest entry
        rowmax = np.zeros(m)
        for ridx, mats in zip(self.block_rows, block_mats):
            if len(ridx):
                np.maximum.at(rowmax, ridx, np.abs(mats).max(axis=(1, 2)))
        if self.p:
            rowmax = np.maximum(rowmax, np.abs(D).max(axis=1))
        rowmax = np.maximum(rowmax, np.abs(b))
        rowmax[rowmax == 0] = 1.0
        r = 1.0 / rowmax
        b = b * r
        if self.p:
            D *= r[:, None]
        for ridx, mats in zip(self.block_rows, block_mats):
            if len(ridx):
                mats *= r[ridx][:, None, None]
        self.row_scale = r

        self.b = b
        self.D = D
        self.block_mats = block_mats
        self.gscale = gscale
        self.fscale = fscale

        # objective in max form, expressed on the scaled variables; internal
        # minimization uses the negation.  <C, X> is invariant because the
        # stored C is congruence-scaled the same way as X.
        self.c = np.zeros(self.p)
        for v, coef in p.objective_free.items():
            if v in vidx:
                self.c[vidx[v]] = coef
        self.c *= fscale
        self.Cg = [np.zeros((n, n)) for _, n in self.blocks]
        for (blk, a, c), val in p.objective_gram.items():
            self.Cg[blk][a, c] += val
            if a != c:
                self.Cg[blk][c, a] += val
        for bi, C in enumerate(self.Cg):
            g = gscale[bi]
            C *= g[:, None] * g[None, :]
        cg_max = max([float(np.abs(C).max()) for C in self.Cg] + [0.0])
        self.obj_scale = max(1.0, float(np.abs(self.c).max()) if self.p else 1.0, cg_max)

    def apply_A(self, X: List[np.ndarray]) -> np.ndarray:
        out = np.zeros(self.m)
        for ridx, mats, Xb in zip(self.block_rows, self.block_mats, X):
            if len(ridx):
                out[ridx] += np.tensordot(mats, Xb, axes=([1, 2], [0, 1]))
        return out

    def apply_At(self, y: np.ndarray) -> List[np.ndarray]:
        out = []
        for (_, n), ridx, mats in zip(self.blocks, self.block_rows, self.block_mats):
            if len(ridx):
                out.append(np.tensordot(y[ridx], mats, axes=1))
            else:
                out.append(np.zeros((n, n)))
        return out


def _ray_test(data, y: np.ndarray, nf: int, by_thresh: float, lam_tol: float) -> bool:
    by = float(data.b @ y) if len(y) else 0.0
    if by <= by_thresh:
        return False
    yn = y / by
    Atyn = data.apply_At(yn)
    lam_max = max([float(np.linalg.eigvalsh(_sym(A)).max()) for A in Atyn] + [0.0])
    fr = float(np.abs(data.D.T @ yn).max()) if nf else 0.0
    ynorm = float(np.abs(yn).max())
    return lam_max <= lam_tol * (1 + ynorm) and fr <= lam_tol * (1 + ynorm)


def _sym(M: np.ndarray) -> np.ndarray:
    return (M + M.T) / 2


def polish_solution(p: SdpProblem, gram: Mapping[str, np.ndarray],
                    free: Mapping[str, float]
                    ) -> Tuple[Dict[str, np.ndarray], Dict[str, float], float, float]:
    """Polish an externally produced iterate against the problem rows.

    Alternates least-norm row correction with PSD-cone projection (the same
    machinery the interior-point loop uses on its own stall iterates).
    Returns (gram, free, relative row residual, min block eigenvalue).
    """
    data = _Data(p)
    X = [np.asarray(gram[name], dtype=float) / np.outer(g, g)
         for (name, _), g in zip(data.blocks, data.gscale)]
    z = np.array([float(free.get(v, 0.0)) / f
                  for v, f in zip(data.free_vars, data.fscale)])
    Xp, zp, pres, mineig = _polish(data, X, z, None)
    gram_out = {name: g[:, None] * Xb * g[None, :]
                for (name, _), Xb, g in zip(data.blocks, Xp, data.gscale)}
    free_out = {v: float(zv * fv)
                for v, zv, fv in zip(data.free_vars, zp, data.fscale)}
    bmax = float(np.abs(data.b).max()) if data.m else 0.0
    return gram_out, free_out, pres / (1.0 + bmax), mineig


def _polish(data: "_Data", X: List[np.ndarray], z: np.ndarray,
            S: Optional[List[np.ndarray]] = None,
            rounds: int = 60, target: float = 1e-10) -> Tuple[List[np.ndarray], np.ndarray, float, float]:
    """Polish a near-optimal primal iterate; see _polish_once.

    Strict complementarity decides how much of each block belongs to the
    optimal face, and no single cutoff works for every problem, so try a
    ladder of face cutoffs (including none) and keep the best result.
    """
    best = None
    for cut in (1e-7, 1e-5, 1e-3, None):
        Xc, zc, res, mineig = _polish_once(data, [Xb.copy() for Xb in X],
                                           z.copy(), S, cut, rounds, target)
        score = max(res, -mineig)
        if best is None or score < best[0]:
            best = (score, Xc, zc, res, mineig)
        if res <= target and mineig >= -target:
            break
        if cut is None and S is not None and best[0] > 1e-8:
            # last resort: face from the primal eigenvalues themselves
            Xc, zc, res, mineig = _polish_once(data, [Xb.copy() for Xb in X],
                                               z.copy(), None, None, rounds, target)
            score = max(res, -mineig)
            if score < best[0]:
                best = (score, Xc, zc, res, mineig)
    _, Xb, zb, res, mineig = best
    if -1e-6 < mineig < 0:
        # lift barely-negative eigenvalues; the residual cost is of the same
        # (tiny) order and usually a better trade than the eigenvalue deficit
        shift = -1.01 * mineig
        Xs = [Xb_ + shift * np.eye(Xb_.shape[0]) for Xb_ in Xb]
        rp = data.b - data.apply_A(Xs) - (data.D @ zb if data.p else 0.0)
        res_s = float(np.abs(rp).max())
        if max(res_s, 0.0) < max(res, -mineig):
            return Xs, zb, res_s, 0.0
    return Xb, zb, res, mineig


def _polish_once(data: "_Data", X: List[np.ndarray], z: np.ndarray,
                 S: Optional[List[np.ndarray]], face_cut: Optional[float],
                 rounds: int, target: float) -> Tuple[List[np.ndarray], np.ndarray, float, float]:
    """Alternate PSD-cone projection with least-norm row correction.

    When the dual blocks S are supplied, each primal block is first
    restricted to the near-null space of its dual block (the optimal face
    under strict complementarity); polishing inside the face avoids the
    sublinear convergence of plain alternating projections at rank-deficient
    optima.  Returns (X, z, max scaled row residual, min eigenvalue).
    """
    m, nf = data.m, data.p
    if m == 0:
        return X, z, 0.0, 0.0

    # face projectors from the dual blocks: X lives where S is (near) zero
    projs: List[Optional[np.ndarray]] = [None] * len(X)
    if S is not None and face_cut is not None:
        for bi, Sb in enumerate(S):
            w, V = np.linalg.eigh(_sym(Sb))
            keep = w <= face_cut * max(1.0, float(w.max()))
            if keep.all():
                continue
            Vk = V[:, keep]
            projs[bi] = Vk @ Vk.T

    def project_face(mats3):
        out = []
        for P, mats in zip(projs, mats3):
            if P is None or not len(mats):
                out.append(mats)
            else:
                out.append(np.matmul(P, np.matmul(mats, P)))
        return out

    fmats = project_face(data.block_mats)
    X = [(_sym(P @ Xb @ P) if P is not None else _sym(Xb)) for P, Xb in zip(projs, X)]

    def applyA(Xl):
        out = np.zeros(m)
        for ridx, mats, Xb in zip(data.block_rows, fmats, Xl):
            if len(ridx):
                out[ridx] += np.tensordot(mats, Xb, axes=([1, 2], [0, 1]))
        return out

    def applyAt(lam):
        out = []
        for (_, n), ridx, mats in zip(data.blocks, data.block_rows, fmats):
            if len(ridx):
                out.append(np.tensordot(lam[ridx], mats, axes=1))
            else:
                out.append(np.zeros((n, n)))
        return out

    # Gram matrix of the (face-restricted) constraint map
    G = np.zeros((m, m))
    for ridx, mats in zip(data.block_rows, fmats):
        if len(ridx):
            G[np.ix_(ridx, ridx)] += np.tensordot(mats, mats, axes=([1, 2], [1, 2]))
    if nf:
        G += data.D @ data.D.T
    G += (1e-13 * (1 + np.trace(G) / m)) * np.eye(m)
    try:
        cho = sla.cho_factor(G)
    except np.linalg.LinAlgError:
        rp = data.b - data.apply_A(X) - (data.D @ z if nf else 0.0)
        mineig = min([float(np.linalg.eigvalsh(_sym(Xb)).min()) for Xb in X] + [0.0])
        return X, z, float(np.abs(rp).max()), mineig

    for _ in range(rounds):
        # project blocks onto the PSD cone (stays inside the face)
        mineig = 0.0
        newX = []
        for Xb in X:
            w, V = np.linalg.eigh(_sym(Xb))
            mineig = min(mineig, float(w.min()))
            newX.append((V * np.maximum(w, 0.0)) @ V.T)
        X = newX
        # least-norm correction back onto the affine rows
        rp = data.b - applyA(X) - (data.D @ z if nf else 0.0)
        res = float(np.abs(rp).max())
        if res <= target and mineig >= -target:
            break
        lam = sla.cho_solve(cho, rp)
        corr = applyAt(lam)
        X = [Xb + _sym(Cb) for Xb, Cb in zip(X, corr)]
        if nf:
            z = z + data.D.T @ lam
    rp = data.b - data.apply_A(X) - (data.D @ z if nf else 0.0)
    res = float(np.abs(rp).max())
    mineig = min([float(np.linalg.eigvalsh(_sym(Xb)).min()) for Xb in X] + [0.0])
    return X, z, res, mineig


def _max_step(L: np.ndarray, delta: np.ndarray) -> float:
    """Largest a such that X + a*delta stays PSD, X = L L^T."""
    W = sla.solve_triangular(L, delta, lower=True)
    W = sla.solve_triangular(L, W.T, lower=True)
    lam = float(np.linalg.eigvalsh(_sym(W)).min())
    if lam >= -1e-14:
        return np.inf
    return -1.0 / lam


def solve(p: SdpProblem, cfg: SolverConfig = SolverConfig()) -> SolveResult:
    """Solve an SdpProblem; see module docstring for the method.

    Runs the interior-point method as configured; if the run stalls and no
    explicit trace penalty was requested, retries with small proximal trace
    penalties (these restore dual attainment on degenerate instances whose
    optimum sits at X = 0, where the plain dual is approached only along a
    diverging ray).
    """
    res = _solve_attempt(p, cfg, cfg.trace_reg)
    if res.status in (STATUS_ITERATION_LIMIT, STATUS_NUMERICAL_FAILURE,
                      STATUS_NEAR_OPTIMAL) and cfg.trace_reg == 0.0:
        best = res
        for eps in (1e-7, 1e-6):
            retry = _solve_attempt(p, cfg, eps)
            if retry.status == STATUS_OPTIMAL:
                return retry
            if _preferable(retry, best):
                best = retry
        res = best
    return res


_STATUS_RANK = {STATUS_NEAR_OPTIMAL: 1, STATUS_ITERATION_LIMIT: 2,
                STATUS_NUMERICAL_FAILURE: 3}


def _preferable(a: SolveResult, b: SolveResult) -> bool:
    """Order non-optimal outcomes: near-optimal beats any failure; ties on
    status break toward the smaller duality gap."""
    ra = _STATUS_RANK.get(a.status, 4)
    rb = _STATUS_RANK.get(b.status, 4)
    if ra != rb:
        return ra < rb
    return a.gap < b.gap


def _solve_attempt(p: SdpProblem, cfg: SolverConfig, trace_reg: float) -> SolveResult:
    data = _Data(p)
    m, nf = data.m, data.p

    if m == 0 and not data.blocks:
        return SolveResult(STATUS_OPTIMAL, {}, {v: 0.0 for v in data.free_vars},
                           np.zeros(0), p.objective_const, 0.0, 0.0, 0.0, 0)

    cmin = -data.c / data.obj_scale  # internal minimization objective on z
    Cmin = [-C / data.obj_scale + trace_reg * np.eye(C.shape[0]) for C in data.Cg]

    bscale = max(1.0, float(np.abs(data.b).max()) if m else 1.0)
    X = [np.eye(n) * max(10.0, bscale) for _, n in data.blocks]
    S = [np.eye(n) * max(10.0, data.obj_scale) for _, n in data.blocks]
    y = np.zeros(m)
    z = np.zeros(nf)
    ntot = max(1, sum(n for _, n in data.blocks))

    status = STATUS_ITERATION_LIMIT
    message = ""
    it = 0
    best_merit = np.inf
    stall = 0
    restarts = 10

    def residuals():
        rp = data.b - data.apply_A(X) - (data.D @ z if nf else 0.0)
        Aty = data.apply_At(y)
        Rd = [C - aty - s for C, aty, s in zip(Cmin, Aty, S)]
        rf = cmin - (data.D.T @ y if nf else np.zeros(0))
        return rp, Rd, rf, Aty

    for it in range(1, cfg.max_iters + 1):
        rp, Rd, rf, Aty = residuals()
        mu = sum(float(np.tensordot(Xb, Sb)) for Xb, Sb in zip(X, S)) / ntot

        pobj = (float(cmin @ z) if nf else 0.0) \
            + sum(float(np.tensordot(C, Xb)) for C, Xb in zip(Cmin, X))
        dobj = float(data.b @ y)
        pinf = float(np.abs(rp).max()) / (1 + float(np.abs(data.b).max())) if m else 0.0
        dinf = max([float(np.abs(R).max()) for R in Rd] + [0.0])
        dinf = max(dinf, float(np.abs(rf).max()) if nf else 0.0) / (1 + float(np.abs(cmin).max()) if nf else 1.0)
        relgap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))

        if cfg.verbose:
            print(f"iter {it:3d} mu={mu:9.2e} pinf={pinf:9.2e} dinf={dinf:9.2e} gap={relgap:9.2e}")

        if pinf <= cfg.feasibility_tol and dinf <= cfg.feasibility_tol and relgap <= cfg.duality_gap_tol:
            status = STATUS_OPTIMAL
            break

        # conditioning floor: residuals stop improving while complementarity
        # is already at machine level; accept if the polish step below can
        # certify the primal iterate
        merit = max(pinf, dinf, relgap)
        if merit < 0.99 * best_merit:
            best_merit = merit
            stall = 0
        else:
            stall += 1
        if stall >= 12 and mu < 1e-10:
            if restarts > 0 and merit > 1e-7:
                # re-center: lift both iterates back into the cone interior
                # and let the iteration approach the optimum afresh
                restarts -= 1
                stall = 0
                best_merit = np.inf
                lift = max(merit, 1e-6)
                X = [Xb + lift * max(1.0, np.trace(Xb) / Xb.shape[0]) * np.eye(Xb.shape[0])
                     for Xb in X]
                S = [Sb + lift * max(1.0, np.trace(Sb) / Sb.shape[0]) * np.eye(Sb.shape[0])
                     for Sb in S]
                continue
            message = "progress stalled at the numerical conditioning floor"
            break

        # primal infeasibility certificate: y with A*(y) <= 0, D^T y = 0,
        # b^T y > 0.  Divergence of b^T y signals the dual improving ray.
        if _ray_test(data, y, nf, by_thresh=1e6, lam_tol=1e-8):
            status = STATUS_INFEASIBLE
            message = "dual improving ray found (no weighted-SOS certificate at this degree)"
            break

        try:
            Lx = [np.linalg.cholesky(Xb) for Xb in X]
            Ls = [np.linalg.cholesky(Sb) for Sb in S]
        except np.linalg.LinAlgError:
            status = STATUS_NUMERICAL_FAILURE
            message = "iterate left the PSD cone (factorization failed)"
            break

        Sinv = [sla.cho_solve((L, True), np.eye(L.shape[0])) for L in Ls]

        # Schur complement M_ij = tr(A_i X A_j S^{-1}), assembled per block
        M = np.zeros((m, m))
        XA_Sinv: List[np.ndarray] = []  # cache X A_j S^{-1} stacks
        for ridx, mats, Xb, Si in zip(data.block_rows, data.block_mats, X, Sinv):
            if not len(ridx):
                XA_Sinv.append(None)
                continue
            T = np.matmul(Xb, np.matmul(mats, Si))
            M[np.ix_(ridx, ridx)] += np.tensordot(mats, T, axes=([1, 2], [1, 2]))
        M = _sym(M)

        reg = 1e-12 * (1 + np.trace(M) / max(1, m))
        K = np.zeros((m + nf, m + nf))
        K[:m, :m] = M + reg * np.eye(m)
        if nf:
            K[:m, m:] = data.D
            K[m:, :m] = data.D.T
            K[m:, m:] = -reg * np.eye(nf)
        try:
            lu = sla.lu_factor(K)
        except (np.linalg.LinAlgError, ValueError):
            status = STATUS_NUMERICAL_FAILURE
            message = "Newton system factorization failed"
            break

        def direction(sigma_mu: float, corr: Optional[List[np.ndarray]] = None):
            G = []
            for Xb, Si, Rb, i in zip(X, Sinv, Rd, range(len(X))):
                Gb = sigma_mu * Si - Xb - Xb @ Rb @ Si
                if corr is not None:
                    Gb = Gb - corr[i] @ Si
                G.append(Gb)
            h = rp - data.apply_A([_sym(Gb) for Gb in G])
            rhs = np.concatenate([h, rf]) if nf else h
            sol = sla.lu_solve(lu, rhs)
            for _ in range(2):  # iterative refinement against conditioning
                rres = rhs - K @ sol
                if float(np.abs(rres).max()) <= 1e-14 * (1 + float(np.abs(rhs).max())):
                    break
                sol = sol + sla.lu_solve(lu, rres)
            dy = sol[:m]
            dz = sol[m:] if nf else np.zeros(0)
            Atdy = data.apply_At(dy)
            dS = [_sym(Rb - Ab) for Rb, Ab in zip(Rd, Atdy)]
            dX = [_sym(Gb + Xb @ Ab @ Si)
                  for Gb, Xb, Ab, Si in zip(G, X, Atdy, Sinv)]
            return dX, dS, dy, dz

        # predictor
        dXa, dSa, dya, dza = direction(0.0)
        ap = min([_max_step(L, dx) for L, dx in zip(Lx, dXa)] + [np.inf])
        ad = min([_max_step(L, ds) for L, ds in zip(Ls, dSa)] + [np.inf])
        ap = min(1.0, cfg.step_fraction * ap)
        ad = min(1.0, cfg.step_fraction * ad)
        mu_aff = sum(float(np.tensordot(Xb + ap * dx, Sb + ad * ds))
                     for Xb, dx, Sb, ds in zip(X, dXa, S, dSa)) / ntot
        sigma = min(1.0, max(0.0, (mu_aff / mu)) ** 3) if mu > 0 else 0.1

        # corrector
        corr = [dx @ ds for dx, ds in zip(dXa, dSa)]
        dX, dS, dy, dz = direction(sigma * mu, corr)
        ap = min([_max_step(L, dx) for L, dx in zip(Lx, dX)] + [np.inf])
        ad = min([_max_step(L, ds) for L, ds in zip(Ls, dS)] + [np.inf])
        ap = min(1.0, cfg.step_fraction * ap)
        ad = min(1.0, cfg.step_fraction * ad)
        if max(pinf, dinf) > 10.0 * mu / (1 + data.obj_scale):
            # residuals lag complementarity: equalize steps so feasibility
            # and centrality shrink together instead of mu collapsing first
            ap = ad = min(ap, ad)

        for _ in range(30):
            okp = all(_is_pd(Xb + ap * dx) for Xb, dx in zip(X, dX))
            okd = all(_is_pd(Sb + ad * ds) for Sb, ds in zip(S, dS))
            if okp and okd:
                break
            if not okp:
                ap *= 0.8
            if not okd:
                ad *= 0.8
        else:
            status = STATUS_NUMERICAL_FAILURE
            message = "could not find a positive step"
            break

        X = [Xb + ap * dx for Xb, dx in zip(X, dX)]
        S = [Sb + ad * ds for Sb, ds in zip(S, dS)]
        y = y + ad * dy
        z = z + ap * dz

        if ap < 1e-10 and ad < 1e-10:
            status = STATUS_NUMERICAL_FAILURE
            message = "step lengths collapsed"
            break

    if status == STATUS_ITERATION_LIMIT and _ray_test(data, y, nf,
                                                      by_thresh=1e2, lam_tol=1e-6):
        status = STATUS_INFEASIBLE
        message = "dual improving ray found (no weighted-SOS certificate at this degree)"

    rp, Rd, rf, _ = residuals()
    pinf = float(np.abs(rp).max()) / (1 + float(np.abs(data.b).max())) if m else 0.0
    dinf = max([float(np.abs(R).max()) for R in Rd] + [0.0])
    pobj = (float(cmin @ z) if nf else 0.0) \
        + sum(float(np.tensordot(C, Xb)) for C, Xb in zip(Cmin, X))
    dobj = float(data.b @ y)
    relgap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))

    # polish the primal iterate: exact-level row residuals and PSD blocks.
    # Also rescues stalled runs whose iterates are near-optimal: the polished
    # point is feasible to solver noise, so the gap against the dual value
    # certifies it.
    if status == STATUS_OPTIMAL or (status == STATUS_ITERATION_LIMIT
                                    and pinf <= 1e-2 and dinf <= 1e-3):
        Xp, zp, pres, mineig = _polish(data, X, z, S)
        if pres <= 1e-7 * (1 + float(np.abs(data.b).max())) and mineig >= -5e-9:
            pobj_pol = (float(cmin @ zp) if nf else 0.0) \
                + sum(float(np.tensordot(C, Xb)) for C, Xb in zip(Cmin, Xp))
            gap_pol = abs(pobj_pol - dobj) / (1 + abs(pobj_pol) + abs(dobj))
            if status == STATUS_OPTIMAL or gap_pol <= 1e-5:
                X, z = Xp, zp
                pinf = pres / (1 + float(np.abs(data.b).max())) if m else 0.0
                relgap = gap_pol
                if status == STATUS_ITERATION_LIMIT:
                    status = STATUS_OPTIMAL
                    message = "accepted after primal polish at the conditioning floor"
            else:
                # the polished point is feasible to solver noise but the gap
                # against the dual is too wide to certify optimality; it
                # still encodes a valid (weaker) certificate
                X, z = Xp, zp
                pinf = pres / (1 + float(np.abs(data.b).max())) if m else 0.0
                relgap = gap_pol
                status = STATUS_NEAR_OPTIMAL
                message = "feasible certificate at the stall point (suboptimal)"
        elif status == STATUS_ITERATION_LIMIT:
            message = "stalled and primal polish did not certify the iterate"

    if trace_reg:
        # the regularized dual certifies optimality of the penalized
        # objective; translate to a gap bound for the original one
        tr = sum(float(np.trace(Xb)) for Xb in X)
        relgap += trace_reg * tr / (1 + abs(pobj) + abs(dobj))

    gram = {name: g[:, None] * Xb * g[None, :]
            for (name, _), Xb, g in zip(data.blocks, X, data.gscale)}
    free = {v: float(zv * fv) for v, zv, fv in zip(data.free_vars, z, data.fscale)}
    objective = None
    if status in (STATUS_OPTIMAL, STATUS_NEAR_OPTIMAL):
        objective = (float(data.c @ z) if nf else 0.0) \
            + sum(float(np.tensordot(C, Xb)) for C, Xb in zip(data.Cg, X)) \
            + p.objective_const
    return SolveResult(status=status, gram=gram, free=free, y=y,
                       objective=objective, gap=relgap,
                       primal_residual=pinf, dual_residual=dinf,
                       iterations=it, message=message)


def _is_pd(M: np.ndarray) -> bool:
    if M.size == 0:
        return True
    try:
        np.linalg.cholesky(_sym(M))
        return True
    except np.linalg.LinAlgError:
        return False


def verify(p: SdpProblem, res: SolveResult) -> dict:
    """Recompute feasibility of a result from the raw (unscaled) problem data.

    Independent of the solver's own bookkeeping: evaluates every equality
    row at the returned (Gram, free) values and reports the worst residual
    and the smallest Gram eigenvalue.
    """
    name_to_idx = {name: i for i, (name, _) in enumerate(p.blocks)}
    mats = [np.asarray(res.gram[name]) for name, _ in p.blocks]
    worst = 0.0
    for row in p.rows:
        val = 0.0
        for (blk, a, c), coef in row.gram.items():
            X = mats[blk]
            val += coef * X[a, c] * (1.0 if a == c else 2.0)
        for v, coef in row.free.items():
            val += coef * res.free.get(v, 0.0)
        worst = max(worst, abs(val - row.rhs))
    min_eig = min([float(np.linalg.eigvalsh(_sym(M)).min()) for M in mats if M.size]
                  + [0.0])
    obj = sum(coef * res.free.get(v, 0.0) for v, coef in p.objective_free.items()) \
        + sum(coef * mats[blk][a, c] * (1.0 if a == c else 2.0)
              for (blk, a, c), coef in p.objective_gram.items()) \
        + p.objective_const
    return {"primal_residual_inf": worst, "min_eigenvalue": min_eig, "objective": obj}
