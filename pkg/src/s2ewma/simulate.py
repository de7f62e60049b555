"""Brute-force Monte Carlo simulation of phase-I estimation plus phase-II
EWMA variance monitoring; the independent oracle for the numerical modules.

Reproducibility: one PCG64 generator is seeded from the spec and consumed in
a fixed order (all phase-I estimates first, then phase-II subgroup draws in
lockstep batches over the replications still running), so identical seeds
give bit-identical results regardless of host.  Subgroup variances are drawn
directly as scaled chi-square deviates by default; drawing raw normal
observations and pooling them is available as a cross-validation mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conditional import ChartConfig, Limits
from .unconditional import PhaseIConfig

__all__ = [
    "SimulationSpec",
    "EmpiricalRL",
    "simulate_phase1_estimate",
    "simulate_run_length",
    "estimate_unconditional",
]

_DEFAULT_L_CAP = 1_000_000


@dataclass(frozen=True)
class SimulationSpec:
    """One simulation campaign; phase1 None means the in-control variance is
    treated as known (no estimation step)."""

    config: ChartConfig
    sigma: float
    limits: Limits
    replications: int
    phase1: PhaseIConfig | None = None
    l_cap: int = _DEFAULT_L_CAP
    seed: int = 0

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError("sigma must be positive")
        if self.replications < 1:
            raise ValueError("replications must be positive")
        if self.l_cap < 1:
            raise ValueError("l_cap must be positive")


@dataclass
class EmpiricalRL:
    """Capped run lengths plus censoring bookkeeping.

    run_lengths holds min(L, l_cap + 1) per replication, where l_cap + 1
    marks a run still alive at the truncation horizon.
    """

    run_lengths: np.ndarray
    censored_count: int
    l_cap: int

    @property
    def replications(self) -> int:
        return len(self.run_lengths)

    def sf_at(self, l: int) -> tuple[float, float]:
        """Estimate of P(L > l) with its binomial standard error (l <= l_cap)."""
        if l > self.l_cap:
            raise ValueError(f"l={l} beyond the simulation horizon {self.l_cap}")
        n = self.replications
        p = float(np.count_nonzero(self.run_lengths > l)) / n
        return p, math.sqrt(p * (1.0 - p) / n)

    def cdf_at(self, l: int) -> tuple[float, float]:
        p, se = self.sf_at(l)
        return 1.0 - p, se

    def arl_estimate(self) -> tuple[float, float, bool]:
        """Mean run length, its standard error, and a flag telling whether
        censoring makes it a lower bound only."""
        n = self.replications
        vals = np.minimum(self.run_lengths, self.l_cap)
        mean = float(np.mean(vals))
        se = float(np.std(vals, ddof=1)) / math.sqrt(n) if n > 1 else 0.0
        return mean, se, self.censored_count > 0


def simulate_phase1_estimate(phase1: PhaseIConfig, rng: np.random.Generator,
                             mode: str = "chi2") -> float:
    """One draw of the pooled variance estimate (in-control variance 1).

    mode "chi2" draws the estimator directly from its scaled chi-square law;
    mode "normals" simulates the m*n raw observations and pools the subgroup
    variances, validating the direct draw.
    """
    if mode == "chi2":
        K = phase1.df_total
        return float(rng.chisquare(K)) / K
    if mode == "normals":
        x = rng.standard_normal((phase1.m, phase1.n))
        return float(np.mean(np.var(x, axis=1, ddof=1)))
    raise ValueError(f"unknown mode {mode!r}")


def simulate_run_length(config: ChartConfig, sigma2_effective: float,
                        limits: Limits, l_cap: int,
                        rng: np.random.Generator) -> int | None:
    """First index whose EWMA value breaches a limit; None when censored at
    l_cap.  sigma2_effective is the monitored variance after standardizing by
    the phase-I estimate."""
    if not sigma2_effective > 0.0:
        raise ValueError("sigma2_effective must be positive")
    lam, df = config.lam, config.df
    scale = sigma2_effective / df
    cl = limits.lower if config.sided == "two" else None
    z = config.z0
    for i in range(1, l_cap + 1):
        z = (1.0 - lam) * z + lam * scale * rng.chisquare(df)
        if z > limits.cu or (cl is not None and z < cl):
            return i
    return None


def estimate_unconditional(spec: SimulationSpec) -> EmpiricalRL:
    """Simulate the full two-phase scheme: a fresh phase-I estimate per
    replication, then one monitoring run at variance sigma^2/estimate.

    Replications are stepped in vectorized batches; the draw order is fixed,
    so results are reproducible and independent of scheduling.
    """
    cfg, lims = spec.config, spec.limits
    rng = np.random.default_rng(spec.seed)
    n_rep = spec.replications

    if spec.phase1 is not None:
        K = spec.phase1.df_total
        s2 = rng.chisquare(K, size=n_rep) / K
    else:
        s2 = np.ones(n_rep)
    v_eff = (spec.sigma * spec.sigma) / s2

    lam, df = cfg.lam, cfg.df
    cl = lims.lower if cfg.sided == "two" else None
    out = np.full(n_rep, spec.l_cap + 1, dtype=np.int64)
    alive = np.arange(n_rep)
    z = np.full(n_rep, cfg.z0, dtype=np.float64)
    scale = v_eff / df
    for step in range(1, spec.l_cap + 1):
        if alive.size == 0:
            break
        z_alive = (1.0 - lam) * z[alive] + lam * scale[alive] * rng.chisquare(df, size=alive.size)
        hit = z_alive > lims.cu
        if cl is not None:
            hit |= z_alive < cl
        if np.any(hit):
            out[alive[hit]] = step
            z[alive] = z_alive
            alive = alive[~hit]
        else:
            z[alive] = z_alive
    censored = int(np.count_nonzero(out > spec.l_cap))
    return EmpiricalRL(run_lengths=out, censored_count=censored, l_cap=spec.l_cap)
