"""Inverse design: control limits meeting an in-control ARL target or the
false-alarm rule P(L <= l_bar) = alpha, conditionally or mixed over phase-I
estimation.

All solvers reduce to bracketed scalar root finding (secant-type with a
regula-falsi safeguard).  Two-sided charts have no intrinsic symmetric
design; besides the naive symmetric variant the solvers support the exact
"unbiased" design (the in-control point is a stationary minimum of the alarm
probability over the true sigma, or a maximum of the ARL) via a nested
iteration, and the cheaper "quasi-unbiased" shortcut which inflates the
known-variance unbiased limits by a single factor xi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .conditional import ChartConfig, Limits, arl_conditional, _colloc_engine
from .errors import InfeasibleTargetError, SolverError
from .unconditional import PhaseIConfig, arl_unconditional, _node_engines

__all__ = [
    "QuantileRule",
    "ArlRule",
    "TwoSidedDesign",
    "solve_upper",
    "solve_two_sided_symmetric",
    "solve_two_sided_unbiased",
    "solve_two_sided_quasi",
    "solve_two_sided_arl_unbiased",
    "limit_vs_m_profile",
]

#: probability-residual tolerance for quantile-rule targets
_PROB_TOL = 1e-6
#: relative tolerance for ARL-rule targets
_ARL_RTOL = 1e-4
#: limit tolerance
_X_TOL = 1e-6
#: sigma offset for the stationarity (unbiasedness) condition; small enough
#: that the symmetric-difference balance point matches exact stationarity to
#: well below the limit tolerances
_UNBIASED_EPS = 0.002
#: admissible upper-limit range, in units of z0, for bracket expansion
_CU_SPAN = 50.0


@dataclass(frozen=True)
class QuantileRule:
    """Target P(L <= l_bar) = alpha for the in-control RL distribution."""
    l_bar: int
    alpha: float

    def __post_init__(self):
        if self.l_bar < 1:
            raise ValueError("l_bar must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")


@dataclass(frozen=True)
class ArlRule:
    """Target in-control ARL."""
    arl0: float

    def __post_init__(self):
        if not self.arl0 > 1.0:
            raise ValueError("arl0 must exceed 1")


DesignTarget = QuantileRule | ArlRule


@dataclass(frozen=True)
class TwoSidedDesign:
    """Metadata of a two-sided solve: the variant used, plus the correction
    factor and base (known-variance) limits for the quasi-unbiased method."""
    variant: str
    xi: float | None = None
    base_limits: Limits | None = None


# ---------------------------------------------------------------------------
# Scalar root machinery
# ---------------------------------------------------------------------------

def _illinois(f, a, b, fa, fb, xtol=_X_TOL, ftol=_PROB_TOL, max_iter=200):
    """Regula falsi with the Illinois side-weighting safeguard on [a, b]."""
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if (fa > 0.0) == (fb > 0.0):
        raise SolverError(f"no sign change on bracket [{a}, {b}]")
    side = 0
    x = a
    for _ in range(max_iter):
        x = (a * fb - b * fa) / (fb - fa)
        lo, hi = (a, b) if a < b else (b, a)
        if not lo < x < hi:
            x = 0.5 * (a + b)
        fx = f(x)
        if (abs(fx) <= ftol and abs(b - a) <= xtol * max(1.0, abs(x))) or fx == 0.0:
            return x
        if (fx > 0.0) == (fa > 0.0):
            a, fa = x, fx
            if side == -1:
                fb *= 0.5
            side = -1
        else:
            b, fb = x, fx
            if side == 1:
                fa *= 0.5
            side = 1
        if abs(b - a) <= 1e-13 * max(1.0, abs(x)):
            return x
    return x


def _bracket_scan(f, xs, what="target"):
    """Walk an ascending ladder of candidates until the residual changes
    sign; flags grossly non-monotone residual paths."""
    prev_x = prev_f = None
    last_step = None
    reversals = 0
    for x in xs:
        fx = f(x)
        if fx == 0.0:
            return x, x, fx, fx
        if prev_f is not None:
            if (fx > 0.0) != (prev_f > 0.0):
                return prev_x, x, prev_f, fx
            step = fx - prev_f
            scale = 1e-3 * max(abs(fx), abs(prev_f), 1e-9)
            if last_step is not None and abs(step) > scale and abs(last_step) > scale:
                if (step > 0.0) != (last_step > 0.0):
                    reversals += 1
                    if reversals > 2:
                        raise SolverError(
                            f"residual for {what} is not monotone along the scan")
            last_step = step
        prev_x, prev_f = x, fx
    raise InfeasibleTargetError(
        f"no bracket found for {what} within the scanned range "
        f"[{xs[0]:.6g}, {xs[-1]:.6g}]")


def _ladder(lo, hi, first_step, grow=1.6):
    out = [lo]
    x, step = lo, first_step
    while x < hi:
        x = min(x + step, hi)
        out.append(x)
        step *= grow
    return out


# ---------------------------------------------------------------------------
# Residual evaluators
# ---------------------------------------------------------------------------

def _cdf_at(config: ChartConfig, limits: Limits, sigma: float,
            phase1: PhaseIConfig | None, l_bar: int, N: int, n_nodes: int) -> float:
    if phase1 is None:
        eng = _colloc_engine(config, sigma * sigma, limits, N, False)
        return 1.0 - eng.sf_at(l_bar)
    rule, engines = _node_engines(config, phase1, sigma, limits, N, n_nodes)
    return 1.0 - sum(w * e.sf_at(l_bar) for w, e in zip(rule.s2_weights, engines))


def _arl_at(config: ChartConfig, limits: Limits, sigma: float,
            phase1: PhaseIConfig | None, N: int, n_nodes: int) -> float:
    if phase1 is None:
        return arl_conditional(config, sigma * sigma, limits, N=N)
    return arl_unconditional(config, phase1, sigma, limits, N=N, n_nodes=n_nodes)


def _target_residual(config, limits, phase1, target, N, n_nodes):
    """Signed residual at sigma = 1; increasing in cu for both target kinds
    after orientation (see callers)."""
    if isinstance(target, QuantileRule):
        return _cdf_at(config, limits, 1.0, phase1, target.l_bar, N, n_nodes) - target.alpha
    return _arl_at(config, limits, 1.0, phase1, N, n_nodes) - target.arl0


def _ftol_for(target) -> float:
    if isinstance(target, QuantileRule):
        return _PROB_TOL
    return _ARL_RTOL * target.arl0


# ---------------------------------------------------------------------------
# Upper chart
# ---------------------------------------------------------------------------

def solve_upper(config: ChartConfig, target: DesignTarget,
                phase1: PhaseIConfig | None = None, N: int = 50,
                n_nodes: int = 60, start: float | None = None) -> Limits:
    """Upper limit meeting the target, conditionally (phase1 None) or under
    phase-I mixing."""
    if config.sided != "upper":
        raise ValueError("solve_upper needs an upper-sided ChartConfig")

    def resid(cu: float) -> float:
        return _target_residual(config, Limits(cu=cu), phase1, target, N, n_nodes)

    z0 = config.z0
    edge = (1.0 - config.lam) * z0
    if start is None and phase1 is not None:
        # start from slightly widened known-variance limits
        start = solve_upper(config, target, None, N=N).cu * 1.02

    if start is not None:
        xs = _ladder(max(edge + 1e-9, start * 0.9), _CU_SPAN * z0, 0.02 * start)
    else:
        xs = _ladder(edge + 1e-9, _CU_SPAN * z0, 0.05 * z0)
    a, b, fa, fb = _bracket_scan(resid, xs, what="upper-limit target")
    if a == b:
        return Limits(cu=a)
    cu = _illinois(resid, a, b, fa, fb, ftol=_ftol_for(target))
    return Limits(cu=cu)


# ---------------------------------------------------------------------------
# Two-sided charts
# ---------------------------------------------------------------------------

def _two_limits(config: ChartConfig, c: float) -> Limits:
    # half-width design; the lower limit is floored at 0
    return Limits(cu=config.z0 + c, cl=max(config.z0 - c, 0.0))


def solve_two_sided_symmetric(config: ChartConfig, target: DesignTarget,
                              phase1: PhaseIConfig | None = None, N: int = 50,
                              n_nodes: int = 60) -> Limits:
    """Symmetric design z0 +/- c (ignores the skewness of the chart)."""
    if config.sided != "two":
        raise ValueError("two-sided solver needs sided='two'")

    def resid(c: float) -> float:
        return _target_residual(config, _two_limits(config, c), phase1, target, N, n_nodes)

    xs = _ladder(1e-3 * config.z0, (_CU_SPAN - 1.0) * config.z0, 0.05 * config.z0)
    a, b, fa, fb = _bracket_scan(resid, xs, what="symmetric half width")
    c = a if a == b else _illinois(resid, a, b, fa, fb, ftol=_ftol_for(target))
    return _two_limits(config, c)


class _InnerUpper:
    """Solves cu for the target at fixed cl, warm-started across calls.

    The search is capped at the reach of the EWMA statistic under the bulk of
    the mixing distribution: past that point the upper limit no longer
    influences the run length and the residual degenerates into
    approximation noise, which would otherwise fake a root whenever the
    lower limit alone already violates the target.  Found roots are
    validated by their local slope for the same reason."""

    def __init__(self, config, target, phase1, N, n_nodes):
        self.config = config
        self.target = target
        self.phase1 = phase1
        self.N = N
        self.n_nodes = n_nodes
        self.last_cu: float | None = None
        v_bulk = 1.1
        if phase1 is not None:
            from .numerics import chi2_quantile
            K = float(phase1.df_total)
            v_bulk = 1.1 / (chi2_quantile(0.01, K) / K)
        lam, df = config.lam, config.df
        spread = 12.0 * math.sqrt(2.0 / df) * math.sqrt(lam / (2.0 - lam))
        self.cu_cap = min(v_bulk * (1.0 + spread) + config.z0, _CU_SPAN * config.z0)

    def __call__(self, cl: float) -> float:
        cfg = self.config

        def resid(cu: float) -> float:
            return _target_residual(cfg, Limits(cu=cu, cl=cl), self.phase1,
                                    self.target, self.N, self.n_nodes)

        # orientation: sign of the residual as cu approaches the lower edge
        sign_lo = 1.0 if isinstance(self.target, QuantileRule) else -1.0
        lo_edge = max(cl, (1.0 - cfg.lam) * cfg.z0) + 1e-9
        if self.last_cu is not None and lo_edge < self.last_cu < self.cu_cap:
            start = self.last_cu
            f0 = resid(start)
            if f0 == 0.0:
                return start
            if (f0 > 0.0) == (sign_lo > 0.0):
                xs = _ladder(start, self.cu_cap, 0.01 * start)
            else:
                down = _ladder(lo_edge, start, 0.01 * start)
                xs = down[::-1]
            a, b, fa, fb = _bracket_scan(resid, xs, what="two-sided upper limit")
        else:
            guess = max(cfg.z0 * 1.2, lo_edge + 0.3)
            xs = _ladder(max(lo_edge, guess * 0.85), self.cu_cap, 0.03 * guess)
            a, b, fa, fb = _bracket_scan(resid, xs, what="two-sided upper limit")
        cu = a if a == b else _illinois(resid, a, b, fa, fb, ftol=_ftol_for(self.target))
        # a genuine root responds strongly to a 3% limit shift; a root faked
        # by approximation noise in the saturated regime does not
        probe = max(lo_edge + 0.25 * (cu - lo_edge), 0.97 * cu)
        if abs(resid(probe)) < 10.0 * _ftol_for(self.target):
            raise InfeasibleTargetError(
                "upper limit is inactive at the candidate root "
                "(lower-limit alarms alone exceed the target)")
        self.last_cu = cu
        return cu


def _solve_unbiased(config: ChartConfig, target: DesignTarget,
                    phase1: PhaseIConfig | None, N: int, n_nodes: int,
                    eps: float, cl_hint: float | None,
                    hint_tight: bool = False) -> Limits:
    """Nested iteration: the outer loop moves cl to balance the alarm measure
    (probability or ARL) across sigma = 1 -/+ eps; the inner solves cu for
    the in-control target."""
    inner = _InnerUpper(config, target, phase1, N, n_nodes)
    quantile = isinstance(target, QuantileRule)

    def measure(limits: Limits, sigma: float) -> float:
        if quantile:
            return _cdf_at(config, limits, sigma, phase1, target.l_bar, N, n_nodes)
        return _arl_at(config, limits, sigma, phase1, N, n_nodes)

    def theta(cl: float) -> float:
        try:
            lim = Limits(cu=inner(cl), cl=cl)
        except InfeasibleTargetError:
            # cl so large that lower-limit alarms alone exceed the target:
            # definitively on the positive side of the balance
            return 1e3
        lo = measure(lim, 1.0 - eps)
        hi = measure(lim, 1.0 + eps)
        diff = lo - hi
        if not quantile:
            diff = -diff / target.arl0  # orient increasing in cl, scaled
        return diff

    z0 = config.z0
    ftol = _PROB_TOL if quantile else _ARL_RTOL * 0.1
    if cl_hint is not None:
        # mixing widens both limits, so cl sits at or below the hint: probe
        # downward from it until the balance residual changes sign
        start = min(cl_hint, 0.999 * z0)
        f_start = theta(start)
        if f_start == 0.0:
            return Limits(cu=inner(start), cl=start)
        if f_start > 0.0:
            # theta increases with cl, so the root lies below the hint
            down = (0.995, 0.985, 0.97) if hint_tight else ()
            probes = [cl_hint * f for f in
                      down + (0.93, 0.86, 0.76, 0.62, 0.45, 0.25, 0.08, 0.01)]
        else:
            up = (1.005, 1.015, 1.03) if hint_tight else ()
            probes = [min(cl_hint * f, 0.999 * z0) for f in
                      up + (1.05, 1.12, 1.25, 1.45, 1.7)]
        a, fa = start, f_start
        for x in probes:
            fx = theta(x)
            if (fx > 0.0) != (fa > 0.0):
                cl = _illinois(theta, a, x, fa, fx, ftol=ftol)
                return Limits(cu=inner(cl), cl=cl)
            a, fa = x, fx
        raise InfeasibleTargetError(
            "no balance bracket near the known-variance lower limit")
    ladder = [f * z0 for f in (0.002, 0.01, 0.05, 0.12, 0.25, 0.40, 0.55,
                               0.70, 0.82, 0.92, 0.98)]
    ladder = [c for c in ladder if c < z0]
    a, b, fa, fb = _bracket_scan(theta, ladder, what="two-sided balance")
    cl = a if a == b else _illinois(theta, a, b, fa, fb, ftol=ftol)
    return Limits(cu=inner(cl), cl=cl)


def solve_two_sided_unbiased(config: ChartConfig, target: DesignTarget,
                             phase1: PhaseIConfig | None = None, N: int = 50,
                             n_nodes: int = 60, eps: float = _UNBIASED_EPS) -> Limits:
    """Limits meeting the in-control target with P_sigma(L <= l_bar) (or the
    ARL) stationary at sigma = 1."""
    if config.sided != "two":
        raise ValueError("two-sided solver needs sided='two'")
    if phase1 is None:
        return _solve_unbiased(config, target, None, N, n_nodes, eps, None)
    # phase-I mixing makes every evaluation ~60x dearer, so locate the
    # balance point cheaply first and polish it at full resolution
    cl_hint = solve_two_sided_unbiased(config, target, None, N=N, eps=eps).cl
    coarse = _solve_unbiased(config, target, phase1, min(N, 28), min(n_nodes, 32),
                             eps, cl_hint)
    return _solve_unbiased(config, target, phase1, N, n_nodes, eps, coarse.cl,
                           hint_tight=True)


def solve_two_sided_arl_unbiased(config: ChartConfig, arl0: float, N: int = 50,
                                 eps: float = _UNBIASED_EPS) -> Limits:
    """Known-variance benchmark: IC ARL equal to arl0 and maximal at sigma=1."""
    if config.sided != "two":
        raise ValueError("two-sided solver needs sided='two'")
    return _solve_unbiased(config, ArlRule(arl0), None, N, 60, eps, None)


def solve_two_sided_quasi(config: ChartConfig, target: DesignTarget,
                          phase1: PhaseIConfig, N: int = 50, n_nodes: int = 60,
                          eps: float = _UNBIASED_EPS) -> tuple[Limits, TwoSidedDesign]:
    """Quasi-unbiased shortcut: inflate the known-variance unbiased limits
    (cl0, cu0) to (cl0/xi, cu0*xi) so the mixed in-control target holds."""
    if phase1 is None:
        raise ValueError("quasi-unbiased design requires a phase-I configuration")
    if not isinstance(target, QuantileRule):
        raise ValueError("quasi-unbiased design is defined for quantile targets")
    base = solve_two_sided_unbiased(config, target, None, N=N, eps=eps)

    def resid(xi: float) -> float:
        lim = Limits(cu=base.cu * xi, cl=base.cl / xi)
        return _cdf_at(config, lim, 1.0, phase1, target.l_bar, N, n_nodes) - target.alpha

    xs = [1.0, 1.005, 1.01, 1.02, 1.04, 1.07, 1.12, 1.2, 1.35, 1.6, 2.0, 2.5, 3.0]
    try:
        a, b, fa, fb = _bracket_scan(resid, xs, what="quasi-unbiased correction")
    except InfeasibleTargetError:
        raise InfeasibleTargetError("no correction factor in (1, 3] meets the target")
    xi = a if a == b else _illinois(resid, a, b, fa, fb, ftol=_PROB_TOL)
    limits = Limits(cu=base.cu * xi, cl=base.cl / xi)
    return limits, TwoSidedDesign(variant="quasi-unbiased", xi=xi, base_limits=base)


def limit_vs_m_profile(config: ChartConfig, target: DesignTarget,
                       m_list: list[int], N: int = 50,
                       n_nodes: int = 60) -> list[tuple[int, Limits]]:
    """Solved limits for each phase-I size m (ascending), upper charts via
    solve_upper and two-sided charts via the unbiased design."""
    if not m_list or sorted(m_list) != list(m_list):
        raise ValueError("m_list must be nonempty and ascending")
    rows: list[tuple[int, Limits]] = []
    prev_cu: float | None = None
    for m in m_list:
        phase1 = PhaseIConfig(m=m, n=config.n)
        try:
            if config.sided == "upper":
                lim = solve_upper(config, target, phase1, N=N, n_nodes=n_nodes,
                                  start=prev_cu)
            else:
                lim = solve_two_sided_unbiased(config, target, phase1, N=N,
                                               n_nodes=n_nodes)
        except (InfeasibleTargetError, SolverError) as exc:
            raise type(exc)(f"m={m}: {exc}") from exc
        rows.append((m, lim))
        prev_cu = lim.cu
    return rows
