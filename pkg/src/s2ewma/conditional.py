"""Run-length (RL) distribution of an EWMA chart on subgroup variances when
the in-control variance is known.

The survival function p_l(z) = P(L > l | Z_0 = z) satisfies an integral
recursion driven by the one-step transition density of the EWMA statistic.
The primary solver expands p_l in shifted Chebyshev polynomials and enforces
the recursion at the Chebyshev nodes; the kernel integrals are computed once
per (chart, variance, limits) and reused for every l.  A Markov-chain
discretization over equal-width cells of the continuation region is provided
as an independent comparator.

Both solvers detect the geometric tail of the RL distribution (successive
survival ratios stabilizing) and use it to extend curves, sum ARLs in closed
form, and locate quantiles far beyond the iterated range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DivergenceError
from .numerics import (
    _cheb_vander,
    _chi2_cdf_array,
    _chi2_pdf_array,
    _legendre_ref,
    _legendre_ref_longdouble,
    chebyshev_nodes,
    chi2_cdf,
    chi2_pdf,
)

__all__ = [
    "ChartConfig",
    "Limits",
    "RLCurve",
    "transition_density",
    "sf_conditional",
    "sf_markov_chain",
    "arl_conditional",
    "rl_quantile_conditional",
]

#: ratio-agreement window and tolerance for declaring the geometric tail
_TAIL_WINDOW = 5
_TAIL_TOL = 1e-10
_TAIL_MIN_L = 20
#: hard cap on recursion steps while hunting for the tail
_TAIL_MAX_ITER = 20_000
#: extra steps after detection to polish the ratio (huge ARLs need the
#: ratio resolved far below the 1e-10 detection window)
_TAIL_REFINE_MAX = 4_000
#: per-step ratio drift, relative to 1-ratio, at which refinement stops
_TAIL_REFINE_REL = 1e-7
#: absolute drift floor: consecutive-ratio noise at working precision
_TAIL_DRIFT_FLOOR = 4e-16


@dataclass(frozen=True)
class ChartConfig:
    """Shape of the chart: smoothing constant, subgroup size, sidedness and
    head start (on the standardized scale the head start is 1)."""

    lam: float
    n: int
    sided: str = "upper"  # "upper" or "two"
    z0: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lam must be in (0, 1], got {self.lam}")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"subgroup size n must be an integer >= 2, got {self.n}")
        if self.sided not in ("upper", "two"):
            raise ValueError(f"sided must be 'upper' or 'two', got {self.sided!r}")
        if not self.z0 > 0.0:
            raise ValueError(f"head start z0 must be positive, got {self.z0}")

    @property
    def df(self) -> int:
        return self.n - 1


@dataclass(frozen=True)
class Limits:
    """Control thresholds; cl is None for upper charts."""

    cu: float
    cl: float | None = None

    def __post_init__(self):
        if not self.cu > 0.0:
            raise ValueError(f"cu must be positive, got {self.cu}")
        if self.cl is not None:
            if self.cl < 0.0 or self.cl >= self.cu:
                raise ValueError(f"need 0 <= cl < cu, got cl={self.cl}, cu={self.cu}")

    @property
    def lower(self) -> float:
        return 0.0 if self.cl is None else self.cl


@dataclass
class RLCurve:
    """Survival-function values p_1..p_L with geometric-tail parameters.

    Beyond ``tail_start`` the stored values follow p_{l+1} = tail_ratio * p_l;
    ``one_minus_ratio`` carries 1 - tail_ratio computed difference-wise (it
    keeps relative precision when the ratio is close to 1).  ``tail_converged``
    is False when the ratio never stabilized within the iteration budget.
    """

    sf: np.ndarray
    tail_start: int
    tail_ratio: float
    one_minus_ratio: float
    tail_converged: bool

    def sf_at(self, l: int) -> float:
        if l < 1:
            return 1.0
        if l <= len(self.sf):
            return float(self.sf[l - 1])
        if self.tail_ratio <= 0.0:
            return 0.0
        anchor = float(self.sf[-1])
        return anchor * math.exp((l - len(self.sf)) * math.log1p(-self.one_minus_ratio))

    def cdf_at(self, l: int) -> float:
        return 1.0 - self.sf_at(l)


def transition_density(z0: float, z: float, config: ChartConfig, sigma2: float) -> float:
    """One-step density of the EWMA statistic moving from z0 to z; zero below
    the support edge (1-lam)*z0."""
    if not sigma2 > 0.0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    lam = config.lam
    edge = (1.0 - lam) * z0
    if z < edge:
        return 0.0
    scale = config.df / sigma2
    return chi2_pdf(scale * (z - edge) / lam, config.df) * scale / lam


# ---------------------------------------------------------------------------
# Shared iteration/tail machinery
# ---------------------------------------------------------------------------

class _RLEngine:
    """Iterates p_1, p_2, ... for one (config, variance, limits) and memoizes
    the prefix plus the detected geometric tail."""

    def __init__(self):
        self._p: list[float] = []
        self._tail: tuple[int, float, float, bool] | None = None  # (t, rho, 1-rho, ok)
        self._dead = False  # curve hit exact zero
        self._refined = False

    # subclasses supply these
    def _first(self) -> float:
        raise NotImplementedError

    def _advance(self) -> float:
        raise NotImplementedError

    def _step(self) -> None:
        if not self._p:
            p = self._first()
        else:
            p = self._advance()
        p = float(p)
        if not math.isfinite(p) or p <= 0.0:
            self._dead = True
            p = 0.0
        self._p.append(p)
        if self._dead and self._tail is None:
            t = len(self._p)
            self._tail = (t, 0.0, 1.0, True)
            return
        self._check_tail()

    def _check_tail(self) -> None:
        l = len(self._p)
        if self._tail is not None or l < max(_TAIL_MIN_L + 1, _TAIL_WINDOW + 1):
            return
        window = self._p[-(_TAIL_WINDOW + 1):]
        ratios = [window[i + 1] / window[i] for i in range(_TAIL_WINDOW)]
        if max(ratios) - min(ratios) < _TAIL_TOL:
            one_minus = (window[-2] - window[-1]) / window[-2]
            self._tail = (l, ratios[-1], one_minus, True)

    def _refine_tail(self) -> None:
        """Polish the tail ratio before it is amplified by 1/(1-ratio).

        The successive ratios approach their limit geometrically; stopping at
        the detection tolerance leaves a bias of order 1e-10 in the ratio,
        which matters for ARLs and far quantiles (the closed-form tail sum
        amplifies ratio errors by 1/(1-ratio)) but not for survival values a
        bounded distance past the stored prefix.  Iterate further until the
        per-step drift is negligible relative to 1-ratio (or hits the noise
        floor), then remove the remaining transient by Aitken extrapolation.
        """
        if self._refined:
            return
        self._refined = True
        if self._tail is None or self._tail[1] <= 0.0 or not self._tail[3]:
            return
        for _ in range(_TAIL_REFINE_MAX):
            p2, p1, p0 = self._p[-3], self._p[-2], self._p[-1]
            if p0 <= 0.0 or p1 <= 0.0 or p2 <= 0.0:
                self._tail = (len(self._p), 0.0, 1.0, True)
                return
            r_prev = p1 / p2
            r_last = p0 / p1
            drift = abs(r_last - r_prev)
            if drift <= max(_TAIL_REFINE_REL * (1.0 - r_last), _TAIL_DRIFT_FLOOR):
                break
            p = float(self._advance())
            if not math.isfinite(p) or p <= 0.0:
                self._dead = True
                self._p.append(0.0)
                self._tail = (len(self._p), 0.0, 1.0, True)
                return
            self._p.append(p)

        # Aitken extrapolation of the ratio sequence through the last four p's
        p3, p2, p1, p0 = self._p[-4], self._p[-3], self._p[-2], self._p[-1]
        r2, r1, r0 = p2 / p3, p1 / p2, p0 / p1
        one_minus = (p1 - p0) / p1
        d1, d0 = r1 - r2, r0 - r1
        denom = d1 - d0
        if denom != 0.0 and abs(d0) < abs(d1):
            corr = d0 * d0 / denom
            if abs(corr) < 0.5 * max(one_minus, 1e-300):
                one_minus = one_minus - corr
        rho = 1.0 - one_minus
        self._tail = (len(self._p), rho, one_minus, True)

    def _extend_to(self, l: int) -> None:
        while len(self._p) < l and self._tail is None:
            self._step()

    def _ensure_tail(self, max_iter: int = _TAIL_MAX_ITER) -> None:
        while self._tail is None and len(self._p) < max_iter:
            self._step()
        if self._tail is None:
            # ratio never settled: record the last observed one, flagged
            rho = self._p[-1] / self._p[-2]
            one_minus = (self._p[-2] - self._p[-1]) / self._p[-2]
            self._tail = (len(self._p), rho, one_minus, False)

    # -- public queries ----------------------------------------------------

    def sf_at(self, l: int) -> float:
        if l < 1:
            return 1.0
        self._extend_to(l)
        if l <= len(self._p):
            return min(1.0, max(0.0, self._p[l - 1]))
        t, rho, one_minus, _ = self._tail
        if rho <= 0.0:
            return 0.0
        return self._p[t - 1] * math.exp((l - t) * math.log1p(-one_minus))

    def prefix(self, l_max: int) -> np.ndarray:
        self._extend_to(l_max)
        stored = min(len(self._p), l_max)
        out = np.empty(l_max, dtype=np.float64)
        out[:stored] = self._p[:stored]
        if stored < l_max:
            t, rho, one_minus, _ = self._tail
            if rho <= 0.0:
                out[stored:] = 0.0
            else:
                k = np.arange(1, l_max - stored + 1, dtype=np.float64)
                out[stored:] = self._p[stored - 1] * np.exp(k * math.log1p(-one_minus))
        # guard against roundoff-scale oscillation in emitted values
        np.clip(out, 0.0, 1.0, out=out)
        return np.minimum.accumulate(out)

    def tail_info(self, l_max: int | None = None) -> tuple[int, float, float, bool]:
        if l_max is not None:
            self._extend_to(l_max)
            if self._tail is None:
                rho = self._p[-1] / self._p[-2]
                one_minus = (self._p[-2] - self._p[-1]) / self._p[-2]
                return (l_max, rho, one_minus, False)
        else:
            self._ensure_tail()
        return self._tail

    def arl(self, one_minus_floor: float | None = None) -> float:
        """Sum of the survival function (plus 1) with the tail in closed form.

        ``one_minus_floor`` substitutes an understated tail when the ratio is
        not resolvable below 1.0 at working precision, turning the result into
        a lower bound instead of raising DivergenceError.
        """
        self._ensure_tail()
        self._refine_tail()
        t, rho, one_minus, ok = self._tail
        if rho <= 0.0:
            return 1.0 + float(np.sum(self._p[:t]))
        if one_minus <= 0.0 or not ok:
            if one_minus_floor is None:
                raise DivergenceError(
                    f"tail ratio {rho!r} not resolvable below 1 (converged={ok})")
            one_minus = max(one_minus, one_minus_floor)
        partial = float(np.sum(self._p[:t]))
        return 1.0 + partial + self._p[t - 1] * (1.0 - one_minus) / one_minus

    def quantile(self, alpha: float) -> int:
        """Smallest l with 1 - p_l >= alpha."""
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {alpha}")
        s = 1.0 - alpha
        for i, p in enumerate(self._p):
            if p <= s:
                return i + 1
        while self._tail is None:
            self._step()
            if self._p[-1] <= s:
                return len(self._p)
        self._refine_tail()
        t, rho, one_minus, ok = self._tail
        anchor = self._p[t - 1]
        if anchor <= s:
            for i, p in enumerate(self._p):
                if p <= s:
                    return i + 1
        if one_minus <= 0.0:
            raise DivergenceError("tail ratio at 1 within working precision; "
                                  "quantile beyond reach")
        log_rho = math.log1p(-one_minus)
        k = math.ceil(math.log(s / anchor) / log_rho)
        k = max(k, 1)
        # integer-boundary guard against log roundoff
        while k > 1 and anchor * math.exp((k - 1) * log_rho) <= s:
            k -= 1
        while anchor * math.exp(k * log_rho) > s:
            k += 1
        return t + k


# ---------------------------------------------------------------------------
# Collocation engine
# ---------------------------------------------------------------------------

def _pieces_for(config: ChartConfig, limits: Limits) -> list[tuple[float, float]]:
    """Sub-intervals of the continuation region carrying independent bases.

    Two-sided charts are split where the transition-density support edge
    (1-lam)*z crosses the lower limit, i.e. at z = cl/(1-lam): below that
    point the one-step survival picks up a lower-limit term and loses
    smoothness.
    """
    cu = limits.cu
    lo = limits.lower if config.sided == "two" else 0.0
    if config.sided == "two" and config.lam < 1.0 and lo > 0.0:
        z_star = lo / (1.0 - config.lam)
        if lo < z_star < cu:
            return [(lo, z_star), (z_star, cu)]
    return [(lo, cu)]


def _inv_gauss_jordan(A: np.ndarray) -> np.ndarray:
    """Dtype-agnostic matrix inverse (partial pivoting); np.linalg does not
    accept longdouble."""
    n = A.shape[0]
    aug = np.hstack([A.copy(), np.eye(n, dtype=A.dtype)])
    for col in range(n):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if aug[piv, col] == 0:
            raise np.linalg.LinAlgError("singular collocation matrix")
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        aug[col] /= aug[col, col]
        for row in range(n):
            if row != col and aug[row, col] != 0:
                aug[row] -= aug[row, col] * aug[col]
    return aug[:, n:]


class _CollocationEngine(_RLEngine):
    def __init__(self, config: ChartConfig, sigma2: float, limits: Limits,
                 N: int = 50, longdouble: bool = False):
        super().__init__()
        if not sigma2 > 0.0:
            raise ValueError(f"sigma2 must be positive, got {sigma2}")
        if N < 2:
            raise ValueError("basis size N must be >= 2")
        self.config = config
        self.sigma2 = sigma2
        self.limits = limits
        self.N = N
        self.dtype = np.longdouble if longdouble else np.float64

        lam = config.lam
        edge0 = (1.0 - lam) * config.z0
        # instant absorption: every step exceeds cu with probability one
        self._degenerate = limits.cu <= edge0 or self._p1_closed(config.z0) <= 0.0
        if self._degenerate:
            return
        self._build()

    # closed form of the one-step survival from any starting value
    def _p1_closed(self, z: float) -> float:
        cfg, lims = self.config, self.limits
        lam, df, v = cfg.lam, cfg.df, self.sigma2
        edge = (1.0 - lam) * z
        scale = df / v
        val = chi2_cdf(scale * (lims.cu - edge) / lam, df)
        if cfg.sided == "two":
            val -= chi2_cdf(scale * (lims.lower - edge) / lam, df)
        return max(val, 0.0)

    def _build(self) -> None:
        cfg, lims = self.config, self.limits
        dt = self.dtype
        lam = dt(cfg.lam)
        df = cfg.df
        v = dt(self.sigma2)
        N = self.N
        pieces = _pieces_for(cfg, lims)
        self._piece_bounds = pieces

        nodes = np.concatenate([chebyshev_nodes(N, lo, hi) for lo, hi in pieces]).astype(dt)
        n_all = len(nodes)

        # Chebyshev-Vandermonde at the per-piece nodes is piece-independent
        theta = (2.0 * np.arange(1, N + 1) - 1.0) * math.pi / (2.0 * N)
        C = np.cos(np.outer(theta, np.arange(N))).astype(dt)
        Cinv = (_inv_gauss_jordan(C) if dt is np.longdouble
                else np.linalg.inv(C).astype(dt))

        if dt is np.longdouble:
            gx, gw = _legendre_ref_longdouble(3 * N)
        else:
            gx, gw = _legendre_ref(3 * N)
        gx = gx.astype(dt)
        gw = gw.astype(dt)

        def kernel_rows(z_from: np.ndarray) -> np.ndarray:
            """Integrals of each basis polynomial against the transition
            densities delta(z_r, .), batched over starting values z_r."""
            z_from = np.asarray(z_from, dtype=dt)
            support_lo = (1.0 - lam) * z_from
            scale = df / v
            out = np.empty((len(z_from), n_all), dtype=dt)
            for p_idx, (plo, phi) in enumerate(pieces):
                a = np.minimum(np.maximum(dt(plo), support_lo), dt(phi))
                half = 0.5 * (dt(phi) - a)          # zero width => zero weights
                x = (a + half)[:, None] + half[:, None] * gx[None, :]
                w = half[:, None] * gw[None, :]
                arg = np.maximum(scale * (x - support_lo[:, None]) / lam, dt(1e-300))
                dens = _chi2_pdf_array(arg, df) * (scale / lam)
                xi = (2.0 * x - (phi + plo)) / (phi - plo)
                basis = _cheb_vander(np.clip(xi, -1.0, 1.0), N)
                out[:, p_idx * N:(p_idx + 1) * N] = np.einsum(
                    "rq,rqn->rn", w * dens, basis)
            return out

        K = kernel_rows(nodes)

        n_pieces = len(pieces)
        M = np.empty_like(K)
        for p_idx in range(n_pieces):
            sl = slice(p_idx * N, (p_idx + 1) * N)
            M[sl] = Cinv @ K[sl]
        self._M = M
        self._k0 = kernel_rows(np.array([cfg.z0]))[0]

        edge = (1.0 - float(lam)) * nodes.astype(np.float64)
        scale64 = df / float(v)
        lam64 = float(lam)
        p1_nodes = _chi2_cdf_array(scale64 * (lims.cu - edge) / lam64, df)
        if cfg.sided == "two":
            p1_nodes = p1_nodes - _chi2_cdf_array(
                scale64 * (lims.lower - edge) / lam64, df)
        p1_nodes = np.maximum(p1_nodes, 0.0).astype(dt)
        g1 = np.empty(n_all, dtype=dt)
        for p_idx in range(n_pieces):
            sl = slice(p_idx * N, (p_idx + 1) * N)
            g1[sl] = Cinv @ p1_nodes[sl]
        self._g = g1

    def _first(self) -> float:
        if self._degenerate:
            return 0.0
        return self._p1_closed(self.config.z0)

    def _advance(self) -> float:
        if self._degenerate:
            return 0.0
        p_next = float(self._k0 @ self._g)
        self._g = self._M @ self._g
        return p_next


# ---------------------------------------------------------------------------
# Markov-chain comparator
# ---------------------------------------------------------------------------

class _MarkovEngine(_RLEngine):
    """Discrete-state approximation over equal-width cells of the
    continuation region; converges to the collocation answer as the state
    count grows."""

    def __init__(self, config: ChartConfig, sigma2: float, limits: Limits,
                 n_states: int = 500):
        super().__init__()
        if not sigma2 > 0.0:
            raise ValueError(f"sigma2 must be positive, got {sigma2}")
        if n_states < 2:
            raise ValueError("n_states must be >= 2")
        self.config = config
        self.sigma2 = sigma2
        self.limits = limits

        lam, df = config.lam, config.df
        lo = limits.lower if config.sided == "two" else 0.0
        cu = limits.cu
        edge0 = (1.0 - lam) * config.z0
        self._degenerate = cu <= edge0
        if self._degenerate:
            return

        edges = np.linspace(lo, cu, n_states + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        scale = df / sigma2

        def cdf_from(z: np.ndarray) -> np.ndarray:
            args = scale * (edges[None, :] - (1.0 - lam) * np.asarray(z)[:, None]) / lam
            return _chi2_cdf_array(args, df)

        F = cdf_from(mids)
        self._Q = F[:, 1:] - F[:, :-1]
        F0 = cdf_from(np.array([config.z0]))[0]
        self._w = F0[1:] - F0[:-1]

    def _first(self) -> float:
        if self._degenerate:
            return 0.0
        return float(np.sum(self._w))

    def _advance(self) -> float:
        if self._degenerate:
            return 0.0
        self._w = self._w @ self._Q
        return float(np.sum(self._w))


# ---------------------------------------------------------------------------
# Cached engine access and the module-level API
# ---------------------------------------------------------------------------

@lru_cache(maxsize=256)
def _colloc_engine(config: ChartConfig, sigma2: float, limits: Limits,
                   N: int, longdouble: bool) -> _CollocationEngine:
    return _CollocationEngine(config, sigma2, limits, N=N, longdouble=longdouble)


@lru_cache(maxsize=16)
def _markov_engine(config: ChartConfig, sigma2: float, limits: Limits,
                   n_states: int) -> _MarkovEngine:
    return _MarkovEngine(config, sigma2, limits, n_states=n_states)


def _make_curve(engine: _RLEngine, l_max: int) -> RLCurve:
    sf = engine.prefix(l_max)
    t, rho, one_minus, ok = engine.tail_info(l_max)
    return RLCurve(sf=sf, tail_start=min(t, l_max), tail_ratio=float(rho),
                   one_minus_ratio=float(one_minus), tail_converged=ok)


def sf_conditional(config: ChartConfig, sigma2: float, limits: Limits,
                   l_max: int, N: int = 50) -> RLCurve:
    """Survival function P(L > l), l = 1..l_max, by Chebyshev collocation."""
    if l_max < 1:
        raise ValueError("l_max must be >= 1")
    return _make_curve(_colloc_engine(config, sigma2, limits, N, False), l_max)


def sf_markov_chain(config: ChartConfig, sigma2: float, limits: Limits,
                    l_max: int, N_states: int = 500) -> RLCurve:
    """Same quantity as sf_conditional via the Markov-chain discretization."""
    if l_max < 1:
        raise ValueError("l_max must be >= 1")
    return _make_curve(_markov_engine(config, sigma2, limits, N_states), l_max)


def arl_conditional(config: ChartConfig, sigma2: float, limits: Limits,
                    N: int = 50) -> float:
    """Expected run length: full survival sum with a closed-form tail."""
    return _colloc_engine(config, sigma2, limits, N, False).arl()


def rl_quantile_conditional(config: ChartConfig, sigma2: float, limits: Limits,
                            alpha: float, N: int = 50) -> int:
    """Smallest l with P(L <= l) >= alpha."""
    return _colloc_engine(config, sigma2, limits, N, False).quantile(alpha)
