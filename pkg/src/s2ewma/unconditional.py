"""Unconditional run-length quantities: conditional curves mixed over the
sampling distribution of the phase-I pooled variance estimator.

With m phase-I subgroups of size n the pooled estimator is distributed as
chi-square with K = m*(n-1) degrees of freedom divided by K.  After
standardizing the monitored data by the estimate, the chart effectively runs
at variance sigma^2 / s^2 where s^2 is the realized estimator value, so every
unconditional quantity is a single integral of the conditional one against
the estimator density.  The integral is evaluated by Gauss-Legendre
quadrature between the far quantiles of the estimator distribution, and each
quadrature node exploits its own geometric run-length tail; the mixture
itself has no geometric tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conditional import ChartConfig, Limits, _colloc_engine, _markov_engine, _RLEngine
from .errors import DivergenceError, SaturationError
from .numerics import chi2_pdf, chi2_quantile, gauss_legendre

__all__ = [
    "PhaseIConfig",
    "MixingRule",
    "build_mixing_rule",
    "sf_unconditional",
    "cdf_unconditional",
    "arl_unconditional",
    "quantile_unconditional",
    "percentile_marginal",
]

#: mass left outside the integration range, per tail
_TAIL_MASS = 1e-10
#: default quadrature size for the phase-I mixture
_DEFAULT_NODES = 60
#: hard search cap for unconditional quantiles
_QUANTILE_CAP = 10_000_000


@dataclass(frozen=True)
class PhaseIConfig:
    """Phase-I sample: m subgroups of size n, pooled-variance estimator with
    m*(n-1) degrees of freedom."""

    m: int
    n: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n}")

    @property
    def df_total(self) -> int:
        return self.m * (self.n - 1)


@dataclass(frozen=True)
class MixingRule:
    """Quadrature abscissae (variance ratios) and density-weighted weights
    for averaging conditional quantities over the estimator distribution."""

    s2_nodes: np.ndarray
    s2_weights: np.ndarray
    lower_cut: float
    upper_cut: float


def build_mixing_rule(phase1: PhaseIConfig, n_nodes: int = _DEFAULT_NODES) -> MixingRule:
    """Gauss-Legendre rule between the 1e-10 and 1-1e-10 quantiles of the
    estimator distribution, with weights carrying the estimator density."""
    if n_nodes < 2:
        raise ValueError("n_nodes must be >= 2")
    K = float(phase1.df_total)
    lower = chi2_quantile(_TAIL_MASS, K) / K
    upper = chi2_quantile(1.0 - _TAIL_MASS, K) / K
    rule = gauss_legendre(n_nodes, lower, upper)
    dens = np.array([K * chi2_pdf(K * s, K) for s in rule.nodes])
    return MixingRule(s2_nodes=rule.nodes, s2_weights=rule.weights * dens,
                      lower_cut=lower, upper_cut=upper)


def _node_engines(config: ChartConfig, phase1: PhaseIConfig, sigma: float,
                  limits: Limits, N: int, n_nodes: int,
                  method: str = "collocation", n_states: int = 500,
                  longdouble: bool = False) -> tuple[MixingRule, list[_RLEngine]]:
    if not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    rule = build_mixing_rule(phase1, n_nodes)
    engines: list[_RLEngine] = []
    for s2 in rule.s2_nodes:
        v = sigma * sigma / float(s2)
        if method == "collocation":
            engines.append(_colloc_engine(config, v, limits, N, longdouble))
        elif method == "markov":
            engines.append(_markov_engine(config, v, limits, n_states))
        else:
            raise ValueError(f"unknown method {method!r}")
    return rule, engines


def sf_unconditional(l_max: int, config: ChartConfig, phase1: PhaseIConfig,
                     sigma: float, limits: Limits, N: int = 50,
                     n_nodes: int = _DEFAULT_NODES, method: str = "collocation",
                     n_states: int = 500) -> np.ndarray:
    """Unconditional survival function P(L > l) for l = 1..l_max.

    The returned vector has no geometric tail of its own; each quadrature
    node is extended by its individual tail before mixing.
    """
    if l_max < 1:
        raise ValueError("l_max must be >= 1")
    rule, engines = _node_engines(config, phase1, sigma, limits, N, n_nodes,
                                  method, n_states)
    out = np.zeros(l_max)
    for w, eng in zip(rule.s2_weights, engines):
        out += w * eng.prefix(l_max)
    return out


def cdf_unconditional(l: int, config: ChartConfig, phase1: PhaseIConfig,
                      sigma: float, limits: Limits, N: int = 50,
                      n_nodes: int = _DEFAULT_NODES, method: str = "collocation",
                      n_states: int = 500) -> float:
    """Unconditional P(L <= l)."""
    if l < 1:
        return 0.0
    rule, engines = _node_engines(config, phase1, sigma, limits, N, n_nodes,
                                  method, n_states)
    sf = sum(w * eng.sf_at(l) for w, eng in zip(rule.s2_weights, engines))
    return 1.0 - sf


def arl_unconditional(config: ChartConfig, phase1: PhaseIConfig, sigma: float,
                      limits: Limits, N: int = 50, n_nodes: int = _DEFAULT_NODES,
                      method: str = "collocation", n_states: int = 500,
                      divergence: str = "error",
                      longdouble: bool = False) -> float:
    """Unconditional ARL as the quadrature average of conditional ARLs
    (node-wise means; identical to summing the mixed survival function).

    divergence:
      * ``"error"``  -- raise DivergenceError when any node's tail ratio is
        not resolvable below 1 at working precision;
      * ``"lower-bound"`` -- substitute an understated tail at such nodes, so
        the result is a defensible lower bound for the quadrature value.
    """
    if divergence not in ("error", "lower-bound"):
        raise ValueError(f"unknown divergence policy {divergence!r}")
    floor = None
    if divergence == "lower-bound":
        floor = 1e-16 if longdouble else 1e-13
    rule, engines = _node_engines(config, phase1, sigma, limits, N, n_nodes,
                                  longdouble=longdouble)
    total = 0.0
    for s2, w, eng in zip(rule.s2_nodes, rule.s2_weights, engines):
        try:
            total += float(w) * eng.arl(one_minus_floor=floor)
        except DivergenceError as exc:
            raise DivergenceError(
                f"conditional ARL diverges at quadrature node s^2={float(s2):.6f}: {exc}"
            ) from exc
    return total


def quantile_unconditional(alpha: float, config: ChartConfig, phase1: PhaseIConfig,
                           sigma: float, limits: Limits, N: int = 50,
                           n_nodes: int = _DEFAULT_NODES,
                           l_cap: int = _QUANTILE_CAP) -> int:
    """Smallest l with unconditional P(L <= l) >= alpha (bisection on l)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    rule, engines = _node_engines(config, phase1, sigma, limits, N, n_nodes)

    def cdf(l: int) -> float:
        return 1.0 - sum(w * eng.sf_at(l) for w, eng in zip(rule.s2_weights, engines))

    if cdf(1) >= alpha:
        return 1
    if cdf(l_cap) < alpha:
        raise SaturationError(
            f"unconditional CDF still below alpha={alpha} at l={l_cap}")
    lo, hi = 1, l_cap  # cdf(lo) < alpha <= cdf(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if cdf(mid) >= alpha:
            hi = mid
        else:
            lo = mid
    return hi


def percentile_marginal(alpha: float, config: ChartConfig, phase1: PhaseIConfig,
                        sigma: float, limits: Limits, N: int = 50,
                        n_nodes: int = _DEFAULT_NODES,
                        longdouble: bool = False) -> float:
    """Quadrature average of the conditional RL quantiles (a diagnostic
    measure; not the unconditional quantile, which is usually far smaller)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    rule, engines = _node_engines(config, phase1, sigma, limits, N, n_nodes,
                                  longdouble=longdouble)
    total = 0.0
    for s2, w, eng in zip(rule.s2_nodes, rule.s2_weights, engines):
        try:
            total += float(w) * eng.quantile(alpha)
        except DivergenceError as exc:
            raise DivergenceError(
                f"conditional quantile diverges at node s^2={float(s2):.6f}: {exc}"
            ) from exc
    return total
