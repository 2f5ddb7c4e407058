"""External SDP backends.

Three paths:

* :func:`solve_clarabel` -- hands the problem to the Clarabel conic
  solver (homogeneous embedding, NT scaling).  The preferred external
  backend: an entirely independent implementation used to cross-check
  the built-in solver, and markedly more robust on ill-conditioned
  high-degree instances.
* :func:`solve_cvxopt` -- CVXOPT's conic interior point solver, a second
  independent cross-check.
* :func:`solve_binary` -- writes SDPA sparse input and shells out to an
  SDPA-family command-line solver named by the BARRIERCERT_SDPA_BIN
  environment variable.

:func:`solve_external` dispatches to whichever is available (Clarabel
first).  All report results in the same
:class:`~barriercert.sdp.SolveResult` shape as the built-in solver.
"""

from __future__ import annotations

import math
import os
import re
import subprocess
import tempfile
from typing import Dict, List

import numpy as np

from .sdp import (STATUS_INFEASIBLE, STATUS_NEAR_OPTIMAL,
                  STATUS_NUMERICAL_FAILURE, STATUS_OPTIMAL,
                  SolveResult, SolverConfig)
from .sos import SdpProblem

ENV_SDPA_BIN = "BARRIERCERT_SDPA_BIN"


def _svec_index(n: int) -> List[tuple]:
    """Scaled-triangle coordinate order: upper triangle stacked column-wise."""
    return [(r, c) for c in range(n) for r in range(c + 1)]


def solve_clarabel(p: SdpProblem, cfg: SolverConfig = SolverConfig()) -> SolveResult:
    """Solve via Clarabel over the scaled-triangle PSD cones.

    The Gram blocks enter in svec form (off-diagonal entries carry a
    sqrt(2) factor), so <A, G> contributes the diagonal coefficient as-is
    and sqrt(2) times the symmetrized off-diagonal coefficient.
    """
    import clarabel
    import scipy.sparse as spa

    if not p.rows and not p.blocks:
        return SolveResult(STATUS_OPTIMAL, {}, {v: 0.0 for v in p.free_vars},
                           np.zeros(0), p.objective_const, 0.0, 0.0, 0.0, 0)

    blocks = list(p.blocks)
    tri, offs, pos = [], [], []
    off = 0
    for _, n in blocks:
        order = _svec_index(n)
        tri.append(order)
        pos.append({rc: k for k, rc in enumerate(order)})
        offs.append(off)
        off += n * (n + 1) // 2
    nfree = len(p.free_vars)
    vidx = {v: j for j, v in enumerate(p.free_vars)}
    nx = off + nfree
    m = len(p.rows)
    s2 = math.sqrt(2.0)

    def symmetrize(items):
        acc: Dict[tuple, float] = {}
        for (blk, a, c), val in items:
            key = (blk, a, c) if a <= c else (blk, c, a)
            acc[key] = acc.get(key, 0.0) + val
        return acc

    ri, ci, vals = [], [], []
    b = np.zeros(m)
    for i, row in enumerate(p.rows):
        b[i] = row.rhs
        for (blk, r_, c_), val in symmetrize(row.gram.items()).items():
            ri.append(i)
            ci.append(offs[blk] + pos[blk][(r_, c_)])
            vals.append(val if r_ == c_ else val * s2)
        for v, cv in row.free.items():
            ri.append(i)
            ci.append(off + vidx[v])
            vals.append(cv)
    Aeq = spa.csc_matrix((vals, (ri, ci)), shape=(m, nx))

    # PSD membership rows: -x_block + s = 0 with s in the triangle cone
    Apsd = spa.hstack([-spa.identity(off, format="csc"),
                       spa.csc_matrix((off, nfree))], format="csc")
    A = spa.vstack([Aeq, Apsd], format="csc")
    bfull = np.concatenate([b, np.zeros(off)])

    # Clarabel minimizes q^T x; negate to maximize our objective
    q = np.zeros(nx)
    for (blk, r_, c_), val in symmetrize(p.objective_gram.items()).items():
        q[offs[blk] + pos[blk][(r_, c_)]] = -(val if r_ == c_ else val * s2)
    for v, coef in p.objective_free.items():
        q[off + vidx[v]] = -coef

    cones = [clarabel.ZeroConeT(m)] \
        + [clarabel.PSDTriangleConeT(n) for _, n in blocks]
    tol = min(1e-9, cfg.duality_gap_tol)
    st = clarabel.DefaultSettings()
    st.verbose = False
    st.tol_gap_abs = tol
    st.tol_gap_rel = tol
    st.tol_feas = min(1e-9, cfg.feasibility_tol)
    st.max_iter = cfg.max_iters
    sol = clarabel.DefaultSolver(spa.csc_matrix((nx, nx)), q, A, bfull,
                                 cones, st).solve()
    raw = str(sol.status)

    if "Solved" in raw:
        # AlmostSolved (reduced-accuracy exit) is accepted only if the
        # recomputed residuals below still meet the configured tolerances
        mapped = STATUS_OPTIMAL
    elif "PrimalInfeasible" in raw:
        mapped = STATUS_INFEASIBLE  # no weighted-SOS certificate
    elif "DualInfeasible" in raw:
        mapped = STATUS_NUMERICAL_FAILURE
        raw += " (objective unbounded above)"
    else:
        mapped = STATUS_NUMERICAL_FAILURE
    it = int(getattr(sol, "iterations", 0))
    if mapped != STATUS_OPTIMAL:
        return SolveResult(mapped, {}, {}, np.zeros(m), None, np.inf, np.inf,
                           np.inf, it, message=f"clarabel status: {raw}")

    x = np.asarray(sol.x)
    z = np.asarray(sol.z)[:m]
    pinf = float(np.abs(Aeq @ x - b).max()) / (1 + float(np.abs(b).max() if m else 0.0))
    pobj = float(q @ x)
    dobj = -float(b @ z)
    gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
    status = STATUS_OPTIMAL
    message = ""
    if "Almost" in raw and (pinf > cfg.feasibility_tol or gap > cfg.duality_gap_tol):
        # reduced-accuracy exit: hand the iterate back as near-optimal so the
        # pipeline can attempt symbolic certificate verification on it
        status = STATUS_NEAR_OPTIMAL
        message = f"clarabel status: {raw} (residuals above tolerance)"

    gram = {}
    for bi, (name, n) in enumerate(blocks):
        G = np.zeros((n, n))
        for k, (r_, c_) in enumerate(tri[bi]):
            vv = x[offs[bi] + k]
            if r_ == c_:
                G[r_, c_] = vv
            else:
                G[r_, c_] = G[c_, r_] = vv / s2
        gram[name] = G
    free = {v: float(x[off + j]) for v, j in vidx.items()}
    objective = -pobj + p.objective_const
    return SolveResult(status, gram, free, z, objective, gap,
                       pinf, 0.0, it, message=message)


def solve_external(p: SdpProblem, cfg: SolverConfig = SolverConfig()) -> SolveResult:
    """Dispatch to the best available external backend (Clarabel first)."""
    try:
        import clarabel  # noqa: F401
        return solve_clarabel(p, cfg)
    except ImportError:
        pass
    try:
        import cvxopt  # noqa: F401
        return solve_cvxopt(p, cfg)
    except ImportError:
        pass
    return solve_binary(p, cfg)


def solve_cvxopt(p: SdpProblem, cfg: SolverConfig = SolverConfig()) -> SolveResult:
    """Solve via CVXOPT; the SdpProblem is passed as the SDPA (P)/(D) pair.

    CVXOPT minimizes rhs^T x over the LMI  sum_k x_k F_k - F_0 >= 0 (the
    SDPA primal); the dual matrix variable it returns is exactly our Gram
    block stack, and the LP-cone dual recovers the free scalars from their
    +/- diagonal pair encoding.
    """
    import cvxopt
    import cvxopt.solvers

    m = len(p.rows)
    nfree = len(p.free_vars)
    vidx = {v: j for j, v in enumerate(p.free_vars)}

    if m == 0 and not p.blocks:
        return SolveResult(STATUS_OPTIMAL, {}, {v: 0.0 for v in p.free_vars},
                           np.zeros(0), p.objective_const, 0.0, 0.0, 0.0, 0)

    c = cvxopt.matrix([row.rhs for row in p.rows])

    Gs, hs = [], []
    for bi, (_, n) in enumerate(p.blocks):
        G = np.zeros((n * n, m))
        for k, row in enumerate(p.rows):
            for (blk, a, cc), val in row.gram.items():
                if blk == bi:
                    G[a * n + cc, k] -= val
                    if a != cc:
                        G[cc * n + a, k] -= val
        h = np.zeros((n, n))
        for (blk, a, cc), val in p.objective_gram.items():
            if blk == bi:
                h[a, cc] -= val
                if a != cc:
                    h[cc, a] -= val
        Gs.append(cvxopt.matrix(G))
        hs.append(cvxopt.matrix(h))

    # free scalars: +/- diagonal pairs live in the LP cone
    Gl = np.zeros((2 * nfree, m))
    hl = np.zeros(2 * nfree)
    for k, row in enumerate(p.rows):
        for v, val in row.free.items():
            j = vidx[v]
            Gl[2 * j, k] -= val
            Gl[2 * j + 1, k] += val
    for v, val in p.objective_free.items():
        j = vidx[v]
        hl[2 * j] -= val
        hl[2 * j + 1] += val

    opts = {"show_progress": False,
            "abstol": min(1e-9, cfg.duality_gap_tol),
            "reltol": min(1e-9, cfg.duality_gap_tol),
            "feastol": min(1e-9, cfg.feasibility_tol),
            "maxiters": cfg.max_iters}
    try:
        sol = cvxopt.solvers.sdp(c,
                                 Gl=cvxopt.matrix(Gl) if nfree else None,
                                 hl=cvxopt.matrix(hl) if nfree else None,
                                 Gs=Gs, hs=hs, options=opts)
    except (ValueError, ArithmeticError) as e:
        return SolveResult(STATUS_NUMERICAL_FAILURE, {}, {}, np.zeros(m), None,
                           np.inf, np.inf, np.inf, 0, message=str(e))

    status = sol["status"]
    if status == "primal infeasible":
        # (P) infeasible would mean our (D) is unbounded; for these programs
        # the meaningful failure is dual infeasibility = no certificate
        mapped = STATUS_NUMERICAL_FAILURE
    elif status == "dual infeasible":
        mapped = STATUS_INFEASIBLE
    elif status == "optimal":
        mapped = STATUS_OPTIMAL
    else:
        mapped = STATUS_NUMERICAL_FAILURE
    if mapped != STATUS_OPTIMAL:
        return SolveResult(mapped, {}, {}, np.zeros(m), None, np.inf, np.inf,
                           np.inf, int(sol.get("iterations", 0)),
                           message=f"cvxopt status: {status}")

    gram = {}
    for (name, n), Z in zip(p.blocks, sol["zs"]):
        gram[name] = np.asarray(Z).reshape(n, n)
    free: Dict[str, float] = {}
    if nfree:
        zl = np.asarray(sol["zl"]).ravel()
        for v, j in vidx.items():
            free[v] = float(zl[2 * j] - zl[2 * j + 1])
    x = np.asarray(sol["x"]).ravel()
    objective = float(sol["primal objective"]) + p.objective_const
    gap = abs(float(sol["primal objective"]) - float(sol["dual objective"])) \
        / (1 + abs(float(sol["primal objective"])))
    return SolveResult(STATUS_OPTIMAL, gram, free, x, objective, gap,
                       float(sol.get("primal infeasibility") or 0.0),
                       float(sol.get("dual infeasibility") or 0.0),
                       int(sol.get("iterations", 0)))


def solve_binary(p: SdpProblem, cfg: SolverConfig = SolverConfig(),
                 bin_path: str = None) -> SolveResult:
    """Run an external SDPA-compatible binary on the exported problem.

    The binary is taken from BARRIERCERT_SDPA_BIN unless given explicitly.
    Only the objective values and status are parsed from the output file;
    certificate matrices are not reconstructed on this path.
    """
    from .sdpa import export_sdpa

    bin_path = bin_path or os.environ.get(ENV_SDPA_BIN)
    if not bin_path:
        raise RuntimeError(f"no external solver: set {ENV_SDPA_BIN}")
    with tempfile.TemporaryDirectory() as td:
        inp = os.path.join(td, "problem.dat-s")
        outp = os.path.join(td, "problem.result")
        with open(inp, "w") as f:
            f.write(export_sdpa(p))
        proc = subprocess.run([bin_path, "-ds", inp, "-o", outp],
                              capture_output=True, text=True)
        if proc.returncode != 0 or not os.path.exists(outp):
            return SolveResult(STATUS_NUMERICAL_FAILURE, {}, {}, np.zeros(0),
                               None, np.inf, np.inf, np.inf, 0,
                               message=proc.stderr[-500:])
        text = open(outp).read()
    phase = re.search(r"phase.value\s*=\s*(\S+)", text)
    objp = re.search(r"objValPrimal\s*=\s*([-+0-9.eE]+)", text)
    status = STATUS_OPTIMAL if phase and phase.group(1).startswith("pdOPT") \
        else STATUS_NUMERICAL_FAILURE
    obj = float(objp.group(1)) + p.objective_const if objp else None
    return SolveResult(status, {}, {}, np.zeros(0), obj, np.inf, np.inf,
                       np.inf, 0, message=phase.group(1) if phase else "unparsed")
