"""Monte-Carlo oracle for safety / reach-avoid probabilities.

Vectorized, chunked simulation with per-chunk RNG streams derived from
(seed, chunk index), so estimates are reproducible independent of how the
chunks are scheduled.  Intervals are exact Clopper-Pearson.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Mapping, Optional

import numpy as np
from scipy import stats

from .model import ContinuousSystem, DiscreteSystem
from .poly import Polynomial
from .sets import SemialgebraicSet

CHUNK = 1 << 16


@dataclass(frozen=True)
class SimConfig:
    trajectories: int = 1_000_000
    seed: int = 0
    em_step: Optional[float] = None  # default: T/1e4 capped at 1e-2
    confidence: float = 0.99

    def __post_init__(self):
        if self.trajectories < 1:
            raise ValueError("trajectories >= 1 required")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence in (0,1) required")
        if self.em_step is not None and self.em_step <= 0:
            raise ValueError("em_step > 0 required")

    def step_for(self, T: float) -> float:
        return self.em_step if self.em_step is not None else min(T / 1e4, 1e-2)


def clopper_pearson(successes: int, trials: int, confidence: float) -> tuple:
    a = 1.0 - confidence
    k, n = successes, trials
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


@dataclass(frozen=True)
class ProbabilityEstimate:
    successes: int
    trials: int
    confidence: float

    @property
    def p_hat(self) -> float:
        return self.successes / self.trials

    @property
    def ci_lo(self) -> float:
        return clopper_pearson(self.successes, self.trials, self.confidence)[0]

    @property
    def ci_hi(self) -> float:
        return clopper_pearson(self.successes, self.trials, self.confidence)[1]

    @property
    def half_width(self) -> float:
        return (self.ci_hi - self.ci_lo) / 2.0

    def as_dict(self) -> dict:
        return {"p_hat": self.p_hat, "ci_lo": self.ci_lo, "ci_hi": self.ci_hi,
                "successes": self.successes, "trials": self.trials,
                "confidence": self.confidence}


def _chunks(total: int):
    start = 0
    idx = 0
    while start < total:
        yield idx, min(CHUNK, total - start)
        start += CHUNK
        idx += 1


def _rng(seed: int, chunk_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, chunk_index])


def estimate_safety(sys: DiscreteSystem, safe: SemialgebraicSet,
                    x0: Mapping[str, float], N: int,
                    cfg: SimConfig = SimConfig()) -> ProbabilityEstimate:
    """Fraction of trajectories staying in `safe` at every step 0..N."""
    if not safe.contains(dict(x0), tol=0.0):
        raise ValueError("x0 must lie in the safe set")
    successes = 0
    for ci, m in _chunks(cfg.trajectories):
        rng = _rng(cfg.seed, ci)
        state = {v: np.full(m, float(x0[v])) for v in sys.state_vars}
        alive = m
        for _ in range(N):
            theta = sys.distribution.sample(rng, alive)
            cols: Dict[str, np.ndarray] = dict(state)
            for j, dv in enumerate(sys.disturbance_vars):
                cols[dv] = theta[:, j]
            nxt = {v: f.evaluate_batch({u: cols[u] for u in f.vars})
                   for v, f in zip(sys.state_vars, sys.update)}
            ok = safe.contains_batch(nxt)
            state = {v: a[ok] for v, a in nxt.items()}
            alive = int(np.sum(ok))
            if alive == 0:
                break
        successes += alive
    return ProbabilityEstimate(successes, cfg.trajectories, cfg.confidence)


def estimate_reach_avoid(sys: ContinuousSystem, safe: SemialgebraicSet,
                         target: SemialgebraicSet, x0: Mapping[str, float],
                         T: float, cfg: SimConfig = SimConfig()) -> ProbabilityEstimate:
    """Euler-Maruyama estimate of P(hit target before leaving safe, by T).

    Per step the state is first tested for target membership (success,
    stop), then for safe membership (failure, stop); surviving the whole
    horizon counts as failure.
    """
    x0 = dict(x0)
    if target.contains(x0, tol=0.0):
        raise ValueError("x0 must lie outside the target set")
    if not safe.contains(x0, tol=0.0):
        raise ValueError("x0 must lie in the safe set")
    h = cfg.step_for(T)
    steps = int(math.ceil(T / h))
    sqh = math.sqrt(h)
    kdim = sys.wiener_dim
    successes = 0
    for ci, m in _chunks(cfg.trajectories):
        rng = _rng(cfg.seed, ci)
        state = {v: np.full(m, float(x0[v])) for v in sys.state_vars}
        alive = m
        for _ in range(steps):
            cols = {v: state[v] for v in sys.state_vars}
            drift = [b.evaluate_batch({u: cols[u] for u in b.vars}) if b.vars
                     else np.full(alive, b.constant_term()) for b in sys.drift]
            dW = rng.standard_normal((alive, kdim)) * sqh
            nxt = {}
            for i, v in enumerate(sys.state_vars):
                x = state[v] + drift[i] * h
                for j in range(kdim):
                    sij = sys.diffusion[i][j]
                    if sij.is_zero():
                        continue
                    sval = sij.evaluate_batch({u: cols[u] for u in sij.vars}) \
                        if sij.vars else sij.constant_term()
                    x = x + sval * dW[:, j]
                nxt[v] = x
            hit = target.contains_batch(nxt)
            successes += int(np.sum(hit))
            keep = ~hit & safe.contains_batch(nxt)
            state = {v: a[keep] for v, a in nxt.items()}
            alive = int(np.sum(keep))
            if alive == 0:
                break
    return ProbabilityEstimate(successes, cfg.trajectories, cfg.confidence)


def evaluate_certificate_along_paths(v: Polynomial, sys: DiscreteSystem,
                                     safe: SemialgebraicSet,
                                     x0: Mapping[str, float], N: int,
                                     cfg: SimConfig = SimConfig()) -> dict:
    """Sanity instrument: simulate the stopped chain and compare empirical
    one-step increments of v with the exact pushforward expectation.

    Returns the sample mean of v at the stopped/terminal state and the
    number of steps whose mean Dynkin increment (empirical E[v(next)] minus
    exact E[v(next)|current]) exceeds 3 standard errors.
    """
    from .model import pushforward_expectation

    if cfg.trajectories < 1:
        raise ValueError("need at least one trajectory")
    ev = pushforward_expectation(sys, v.on_vars(sys.state_vars))
    violations = 0
    steps_checked = 0
    terminal_sum = 0.0
    terminal_n = 0
    for ci, m in _chunks(cfg.trajectories):
        rng = _rng(cfg.seed, ci)
        state = {u: np.full(m, float(x0[u])) for u in sys.state_vars}
        for _ in range(N):
            alive = len(next(iter(state.values())))
            if alive == 0:
                break
            predicted = ev.evaluate_batch({u: state[u] for u in ev.vars}) if ev.vars \
                else np.full(alive, ev.constant_term())
            theta = sys.distribution.sample(rng, alive)
            cols: Dict[str, np.ndarray] = dict(state)
            for j, dv in enumerate(sys.disturbance_vars):
                cols[dv] = theta[:, j]
            nxt = {u: f.evaluate_batch({w: cols[w] for w in f.vars})
                   for u, f in zip(sys.state_vars, sys.update)}
            observed = v.evaluate_batch({u: nxt[u] for u in v.vars}) if v.vars \
                else np.full(alive, v.constant_term())
            diff = observed - predicted
            se = diff.std(ddof=1) / math.sqrt(alive) if alive > 1 else 0.0
            steps_checked += 1
            if se > 0 and abs(diff.mean()) > 3 * se:
                violations += 1
            ok = safe.contains_batch(nxt)
            stopped = {u: a[~ok] for u, a in nxt.items()}
            ns = int(np.sum(~ok))
            if ns:
                vals = v.evaluate_batch({u: stopped[u] for u in v.vars}) if v.vars \
                    else np.full(ns, v.constant_term())
                terminal_sum += float(vals.sum())
                terminal_n += ns
            state = {u: a[ok] for u, a in nxt.items()}
        alive = len(next(iter(state.values())))
        if alive:
            vals = v.evaluate_batch({u: state[u] for u in v.vars}) if v.vars \
                else np.full(alive, v.constant_term())
            terminal_sum += float(vals.sum())
            terminal_n += alive
    return {"mean_v_terminal": terminal_sum / terminal_n,
            "violation_steps": violations,
            "steps_checked": steps_checked}
