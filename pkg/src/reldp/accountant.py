"""Renyi-DP accounting for node-private relational training.

The privacy loss of one noisy step is controlled by Renyi divergences between
a base Gaussian and Gaussian mixtures whose weights reflect how the sampler
can involve one node: a Binomial number ``l`` of its incident edges enter the
positive sample, and its chance of entering the negative sample grows with
``l``. Everything here reduces to log-space evaluation of

    psi = E_{x ~ N(0, sigma^2)} [ r(x)^exponent ],

where ``r`` is the likelihood ratio of a mean-shifted Gaussian mixture to the
base. The moment is computed two independent ways: closed forms for integer
orders (binomial/multinomial expansions of the mixture power), and adaptive
Gauss-Legendre panel quadrature for everything else. Quadrature normalizes by
the integrand's peak before exponentiating, so moments far beyond float range
(log psi in the thousands) are still evaluated to 1e-12 relative accuracy.

Bounds offered per optimization step, all on a shared alpha grid:

* adaptive clipping: two-point mixture at shift 1, expectation over the
  Binomial edge count (the amplified bound for frequency-aware clipping);
* standard clipping: a ``2(K+1)``-component mixture with means ``i + 2j``,
  maximized over both divergence directions;
* naive: ``alpha / (2 sigma^2)``, no amplification.

Composition is additive in the number of steps, and conversion to
``(eps, delta)``-DP minimizes the standard RDP conversion over the grid.
"""

from __future__ import annotations

import dataclasses
import math
import warnings

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import binom as _binom

from .errors import CalibrationError, NumericError

_LOG_2PI = math.log(2.0 * math.pi)

MIXTURE_VS_BASE = "mixture_vs_base"
BASE_VS_MIXTURE = "base_vs_mixture"

# Truncation of the Binomial expectation: the support is widened until the
# worst-case surcharge for the discarded upper tail is below this fraction
# of the retained sum, so truncation never bends the reported bound.
_TAIL_REL = 1e-15
_QUAD_RTOL = 1e-12


def default_alpha_grid() -> np.ndarray:
    """Fractional orders near 1 plus every integer order 2..256."""
    return np.array([1.25, 1.5, 1.75] + list(range(2, 257)), dtype=np.float64)


@dataclasses.dataclass(frozen=True)
class AccountantParams:
    """Per-step sampling geometry and noise level.

    ``num_edges`` is the positive-edge count after degree capping,
    ``max_degree`` the cap, ``gamma`` the per-edge Poisson rate, ``k_neg``
    the negatives drawn per positive, and ``sigma`` the noise multiplier
    (noise std is ``sigma`` times the certified sensitivity).
    """

    num_edges: int
    num_nodes: int
    max_degree: int
    gamma: float
    k_neg: int
    sigma: float

    def __post_init__(self):
        if self.num_edges < 0:
            raise ValueError("num_edges must be >= 0")
        if self.num_nodes < 1 or self.max_degree < 1 or self.k_neg < 1:
            raise ValueError("num_nodes, max_degree, k_neg must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclasses.dataclass
class RdpCurve:
    """epsilon(alpha) on a strictly increasing alpha grid."""

    alphas: np.ndarray
    eps: np.ndarray

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=np.float64)
        self.eps = np.asarray(self.eps, dtype=np.float64)
        if self.alphas.ndim != 1 or self.alphas.shape != self.eps.shape:
            raise ValueError("alphas and eps must be matching 1-d arrays")
        if self.alphas.size and (np.diff(self.alphas) <= 0).any():
            raise ValueError("alphas must be strictly increasing")
        if self.alphas.size and self.alphas.min() <= 1:
            raise ValueError("alpha orders must exceed 1")
        if not np.all(np.isfinite(self.eps)) or (self.eps < 0).any():
            raise ValueError("eps values must be finite and >= 0")


@dataclasses.dataclass(frozen=True)
class DpResult:
    eps: float
    delta: float
    best_alpha: float
    iterations: int


# --------------------------------------------------------------------------
# effective participation rate

def effective_rate(params: AccountantParams, ell: int) -> float:
    """Mixture weight of the shifted component given ``ell`` sampled edges.

    Computes ``1 - (1-gamma)^K * (1 - ell*k_neg/n)`` through ``log1p`` and
    ``expm1`` so values around 1e-4 keep full precision. Clamped to 1 when
    ``ell*k_neg > n`` (only reachable deep in the Binomial tail).
    """
    if ell < 0:
        raise ValueError("ell must be >= 0")
    return float(_effective_rate_vec(params, np.array([ell], dtype=np.float64))[0])


def _effective_rate_vec(params: AccountantParams, ells: np.ndarray) -> np.ndarray:
    frac = ells * params.k_neg / params.num_nodes
    over = frac >= 1.0
    if over.any():
        warnings.warn(
            "ell*k_neg exceeds the node count for part of the Binomial "
            "support; the participation rate is clamped to 1 there",
            RuntimeWarning, stacklevel=3)
    safe = np.where(over, 0.0, frac)
    log_keep = params.max_degree * math.log1p(-params.gamma) if params.gamma < 1 else -np.inf
    out = -np.expm1(log_keep + np.log1p(-safe))
    return np.where(over, 1.0, out)


# --------------------------------------------------------------------------
# closed forms (integer alpha)

def _log_psi_two_point_closed(q: np.ndarray, sigma: float, alpha: int) -> np.ndarray:
    """log E[r^alpha] for the two-point mixture, binomial expansion.

    The k-th term pairs C(alpha,k) (1-q)^(alpha-k) q^k with the cross moment
    exp(k(k-1)/(2 sigma^2)); everything stays in logs since the k = alpha
    term alone can be exp(thousands).
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.arange(alpha + 1, dtype=np.float64)
    log_binom = gammaln(alpha + 1) - gammaln(k + 1) - gammaln(alpha - k + 1)
    moment = k * (k - 1) / (2.0 * sigma * sigma)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_q = np.where(q > 0, np.log(q), -np.inf)
        log_1mq = np.where(q < 1, np.log1p(-q), -np.inf)
        terms = (log_binom[None, :]
                 + (alpha - k)[None, :] * log_1mq[:, None]
                 + k[None, :] * log_q[:, None]
                 + moment[None, :])
    # 0 * (-inf) at the q = 0 and q = 1 endpoints must read as 0, not nan
    terms = np.where(np.isnan(terms), -np.inf, terms)
    out = logsumexp(terms, axis=1)
    out = np.where(q == 0.0, 0.0, out)
    out = np.where(q == 1.0, alpha * (alpha - 1) / (2.0 * sigma * sigma), out)
    return np.maximum(out, 0.0)


def psi_mixture_multinomial(weights, means, sigma: float, alpha: int) -> float:
    """Forward-direction log psi by exact multinomial expansion.

    Expands ``(sum_c w_c P_c / Q)^alpha`` over multi-indices ``k`` with
    ``|k| = alpha`` and uses the Gaussian cross-moment
    ``E[prod (P_c/Q)^{k_c}] = exp(((sum k mu)^2 - sum k mu^2) / (2 sigma^2))``.
    Exponential in the component count, so this is a cross-check tool;
    the term count is capped at 2e6. Returns log psi.
    """
    import itertools

    weights = np.asarray(weights, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    if alpha != int(alpha) or alpha < 2:
        raise ValueError("multinomial form needs integer alpha >= 2")
    alpha = int(alpha)
    ncomp = weights.size
    n_terms = math.comb(alpha + ncomp - 1, ncomp - 1)
    if n_terms > 2_000_000:
        raise ValueError(f"{n_terms} multinomial terms exceed the cross-check cap")
    with np.errstate(divide="ignore"):
        log_w = np.where(weights > 0, np.log(weights), -np.inf)
    two_s2 = 2.0 * sigma * sigma
    log_terms = []
    for combo in itertools.combinations_with_replacement(range(ncomp), alpha):
        counts = np.bincount(combo, minlength=ncomp).astype(np.float64)
        if np.any((counts > 0) & ~np.isfinite(log_w)):
            continue
        log_coeff = gammaln(alpha + 1) - gammaln(counts + 1).sum()
        s1 = float(counts @ means)
        s2 = float(counts @ (means * means))
        log_terms.append(log_coeff + float(counts @ np.where(np.isfinite(log_w), log_w, 0.0))
                         + (s1 * s1 - s2) / two_s2)
    if not log_terms:
        raise ValueError("all mixture weight is on zero-weight components")
    return float(logsumexp(np.array(log_terms)))


# --------------------------------------------------------------------------
# panel quadrature

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)
_X_CHUNK = 16384


def _quad_rows(profiles_fn, log_w: np.ndarray, mean_lo: float, mean_hi: float,
               sigma: float, exponent: float, rtol: float = _QUAD_RTOL) -> np.ndarray:
    """log E_{x~N(0,sigma^2)}[(sum_c w_c e^{p_c(x)})^exponent] per weight row.

    ``profiles_fn(x) -> (len(x), C)`` returns the log density ratios of the
    components against the base; each column must be convex in x (affine for
    pure Gaussian shifts). ``log_w`` is (L, C), one mixture per row, rows
    summing to one. Every stationary point of the log integrand lies in
    ``exponent * [mean_lo, mean_hi]``, which brackets the integration window.

    The integrand is evaluated on Gauss-Legendre panels, normalized by its
    per-row peak, and refined by halving the panel width until successive
    levels agree to ``rtol`` in log; failure raises ``NumericError`` with the
    tolerance actually reached.
    """
    log_w = np.atleast_2d(np.asarray(log_w, dtype=np.float64))
    station = np.array([0.0, exponent * mean_lo, exponent * mean_hi])
    lo = float(station.min() - 13.0 * sigma)
    hi = float(station.max() + 13.0 * sigma)

    if exponent < 0:
        # negative powers of a convex-in-log ratio give a strictly concave
        # log integrand: locate the per-row peaks by coarse scan and
        # integrate a tight window around them instead of the full bracket
        n_scan = max(1025, int(math.ceil((hi - lo) / (sigma / 4.0))) + 1)
        grid = np.linspace(lo, hi, n_scan)
        h = _log_integrand(profiles_fn, log_w, grid, sigma, exponent)
        peaks = grid[np.argmax(h, axis=0)]
        lo = float(peaks.min() - 14.0 * sigma)
        hi = float(peaks.max() + 14.0 * sigma)

    for _ in range(8):  # widen if the edge-decay check ever trips
        panels = _initial_panels(profiles_fn, log_w, lo, hi, sigma, exponent)
        prev = None
        width = sigma
        last_gap = np.inf
        for _level in range(6):
            val = _eval_panels(profiles_fn, log_w, panels, width, sigma, exponent)
            if prev is not None:
                # huge log magnitudes round at |val|*eps; don't demand better
                allow = np.maximum(rtol, np.abs(val) * 4.0 * np.finfo(np.float64).eps)
                last_gap = float(np.max(np.abs(val - prev)))
                if bool(np.all(np.abs(val - prev) <= allow)):
                    if _edges_negligible(profiles_fn, log_w, lo, hi, sigma,
                                         exponent, val, rtol):
                        return val
                    break  # widen the window
            prev = val
            width /= 2.0
        else:
            raise NumericError("panel quadrature failed to converge",
                               achieved=last_gap)
        lo -= 6.0 * sigma
        hi += 6.0 * sigma
    raise NumericError("quadrature window kept growing without converging")


def _initial_panels(profiles_fn, log_w, lo, hi, sigma, exponent):
    """Contiguous integration runs covering [lo, hi], pruned on a sigma/2 grid.

    A cell survives if an upper bound of the log integrand on it comes
    within 60 nats of a lower bound of the global peak. The bounds use
    ``min_c p_c <= log r <= max_c p_c`` (rows are convex combinations), and
    columnwise convexity makes the cell max of ``max_c p_c`` attain at the
    cell edges, so edge evaluation suffices. Adjacent survivors merge into
    runs that the node iterator subdivides at the current panel width.
    """
    n_cells = max(8, int(math.ceil((hi - lo) / (sigma / 2.0))))
    edges = np.linspace(lo, hi, n_cells + 1)
    if exponent < 0 or n_cells <= 256:
        return [(lo, hi)]
    prof = profiles_fn(edges)
    log_phi = -0.5 * (edges / sigma) ** 2 - math.log(sigma) - 0.5 * _LOG_2PI
    upper = log_phi + exponent * prof.max(axis=1)
    lower = log_phi + exponent * prof.min(axis=1)
    peak_lb = lower.max()
    curv = (sigma / 4.0) ** 2 / (2.0 * sigma * sigma)  # concave base term slack
    keep = np.maximum(upper[:-1], upper[1:]) + curv >= peak_lb - 60.0
    return _merge_cells(edges, keep)


def _merge_cells(edges, keep):
    runs = []
    start = None
    for i, k in enumerate(keep):
        if k and start is None:
            start = edges[i]
        elif not k and start is not None:
            runs.append((start, edges[i]))
            start = None
    if start is not None:
        runs.append((start, edges[-1]))
    return runs or [(edges[0], edges[-1])]


def _eval_panels(profiles_fn, log_w, panels, width, sigma, exponent):
    """Streaming peak-normalized sum of exp over refined panels."""
    L = log_w.shape[0]
    run_max = np.full(L, -np.inf)
    run_sum = np.zeros(L)
    for x, wts in _iter_nodes(panels, width):
        h = _log_integrand(profiles_fn, log_w, x, sigma, exponent)
        m = np.maximum(run_max, h.max(axis=0))
        scale = np.exp(run_max - np.where(np.isfinite(m), m, 0.0))
        run_sum = run_sum * scale + np.exp(h - m[None, :]) .T @ wts
        run_max = m
    with np.errstate(divide="ignore"):
        return run_max + np.log(run_sum)


def _iter_nodes(panels, width):
    """Yield Gauss-Legendre nodes/weights over runs split to ``width``."""
    xs, ws = [], []
    size = 0
    for p0, p1 in panels:
        n_sub = max(1, int(round((p1 - p0) / width)))
        sub = np.linspace(p0, p1, n_sub + 1)
        half = (sub[1:] - sub[:-1]) / 2.0
        mid = (sub[1:] + sub[:-1]) / 2.0
        xs.append((mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel())
        ws.append((half[:, None] * _GL_WEIGHTS[None, :]).ravel())
        size += xs[-1].size
        if size >= _X_CHUNK:
            x, w = np.concatenate(xs), np.concatenate(ws)
            for i in range(0, x.size - _X_CHUNK + 1, _X_CHUNK):
                yield x[i:i + _X_CHUNK], w[i:i + _X_CHUNK]
            rem = x.size % _X_CHUNK
            xs, ws = ([x[-rem:]], [w[-rem:]]) if rem else ([], [])
            size = rem
    if size:
        yield np.concatenate(xs), np.concatenate(ws)


def _log_integrand(profiles_fn, log_w, x, sigma, exponent):
    """(len(x), L) log of weight * density * ratio^exponent."""
    prof = profiles_fn(x)  # (X, C)
    out = None
    for c in range(log_w.shape[1]):
        term = prof[:, c][:, None] + log_w[:, c][None, :]
        out = term if out is None else np.logaddexp(out, term)
    log_phi = -0.5 * (x / sigma) ** 2 - math.log(sigma) - 0.5 * _LOG_2PI
    return log_phi[:, None] + exponent * out


def _edges_negligible(profiles_fn, log_w, lo, hi, sigma, exponent, val, rtol):
    """Bound the discarded tails by the integrand decay at the window edges.

    Both window edges sit at least 13 sigma past every stationary point (for
    the concave negative-exponent case, past every row peak), so the log
    integrand falls at rate >= 13/sigma beyond them and each tail is at most
    the edge value times sigma/13.
    """
    edge = _log_integrand(profiles_fn, log_w, np.array([lo, hi]), sigma, exponent)
    tail = logsumexp(edge, axis=0) + math.log(sigma / 13.0)
    return bool(np.all(tail <= val + math.log(rtol) - math.log(4.0)))


def _log_cross_moments(profiles_fn, alpha: int, slope_lo, slope_hi,
                       sigma: float, rtol: float = _QUAD_RTOL) -> np.ndarray:
    """log E_{x~N(0,sigma^2)}[A(x)^(alpha-k) B(x)^k] for k = 0..alpha.

    ``profiles_fn`` returns the two log profiles ``[log A, log B]``;
    ``slope_lo``/``slope_hi`` bound their log-slopes times sigma^2 (the
    component means), bracketing every stationary point. Shares one panel
    grid across all k, so the Binomial recombination over mixture rows
    costs nothing extra.
    """
    k = np.arange(alpha + 1, dtype=np.float64)
    erows = np.stack([alpha - k, k], axis=1)  # (alpha+1, 2)
    station = np.array([0.0, alpha * slope_lo, alpha * slope_hi])
    lo = float(station.min() - 13.0 * sigma)
    hi = float(station.max() + 13.0 * sigma)

    def h_of(x):
        prof = profiles_fn(x)
        log_phi = -0.5 * (x / sigma) ** 2 - math.log(sigma) - 0.5 * _LOG_2PI
        return log_phi[:, None] + prof @ erows.T

    for _ in range(8):
        panels = _cross_panels(profiles_fn, alpha, lo, hi, sigma)
        prev = None
        width = sigma
        last_gap = np.inf
        for _level in range(6):
            run_max = np.full(alpha + 1, -np.inf)
            run_sum = np.zeros(alpha + 1)
            for x, wts in _iter_nodes(panels, width):
                h = h_of(x)
                m = np.maximum(run_max, h.max(axis=0))
                scale = np.exp(run_max - np.where(np.isfinite(m), m, 0.0))
                run_sum = run_sum * scale + np.exp(h - m[None, :]).T @ wts
                run_max = m
            with np.errstate(divide="ignore"):
                val = run_max + np.log(run_sum)
            if prev is not None:
                allow = np.maximum(rtol, np.abs(val) * 4.0 * np.finfo(np.float64).eps)
                last_gap = float(np.max(np.abs(val - prev)))
                if bool(np.all(np.abs(val - prev) <= allow)):
                    tail = logsumexp(h_of(np.array([lo, hi])), axis=0) + math.log(sigma / 13.0)
                    if bool(np.all(tail <= val + math.log(rtol) - math.log(4.0))):
                        return val
                    break
            prev = val
            width /= 2.0
        else:
            raise NumericError("cross-moment quadrature failed to converge",
                               achieved=last_gap)
        lo -= 6.0 * sigma
        hi += 6.0 * sigma
    raise NumericError("cross-moment window kept growing without converging")


def _cross_panels(profiles_fn, alpha, lo, hi, sigma):
    """Pruned integration runs for the cross-moment family.

    Every row satisfies ``alpha*min(pA,pB) <= (alpha-k) pA + k pB
    <= alpha*max(pA,pB)``; both envelopes are convex, so edge evaluation
    bounds each sigma/2 cell.
    """
    n_cells = max(8, int(math.ceil((hi - lo) / (sigma / 2.0))))
    edges = np.linspace(lo, hi, n_cells + 1)
    if n_cells <= 256:
        return [(lo, hi)]
    prof = profiles_fn(edges)
    log_phi = -0.5 * (edges / sigma) ** 2 - math.log(sigma) - 0.5 * _LOG_2PI
    upper = log_phi + alpha * prof.max(axis=1)
    lower = log_phi + alpha * prof.min(axis=1)
    peak_lb = lower.max()
    curv = (sigma / 4.0) ** 2 / (2.0 * sigma * sigma)
    keep = np.maximum(upper[:-1], upper[1:]) + curv >= peak_lb - 60.0
    return _merge_cells(edges, keep)


def _affine_profiles(means: np.ndarray, sigma: float):
    """Log density ratios of unit-variance-scaled shifted Gaussians."""
    means = np.asarray(means, dtype=np.float64)
    two_s2 = 2.0 * sigma * sigma

    def fn(x: np.ndarray) -> np.ndarray:
        return (2.0 * x[:, None] * means[None, :] - (means * means)[None, :]) / two_s2

    return fn


# --------------------------------------------------------------------------
# public psi operations

def log_psi_two_point(q: float, sigma: float, alpha: float) -> float:
    """log of the alpha-th ratio moment of ((1-q) N(0,s2) + q N(1,s2)) vs N(0,s2)."""
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if q == 0.0:
        return 0.0
    if q == 1.0:
        return alpha * (alpha - 1) / (2.0 * sigma * sigma)
    if float(alpha).is_integer():
        return float(_log_psi_two_point_closed(np.array([q]), sigma, int(alpha))[0])
    log_w = np.log(np.array([[1.0 - q, q]]))
    return float(_quad_rows(_affine_profiles(np.array([0.0, 1.0]), sigma),
                            log_w, 0.0, 1.0, sigma, alpha)[0])


def psi_two_point(q: float, sigma: float, alpha: float) -> float:
    """Plain-value version of :func:`log_psi_two_point` (may overflow to inf)."""
    return float(np.exp(log_psi_two_point(q, sigma, alpha)))


def log_psi_mixture(weights, means, sigma: float, alpha: float,
                    direction: str = MIXTURE_VS_BASE) -> float:
    """log ratio moment between a shifted-Gaussian mixture and the base.

    ``mixture_vs_base`` evaluates ``E_base[(P/Q)^alpha]``; ``base_vs_mixture``
    the reversed divergence ``E_base[(P/Q)^(1-alpha)]``. Quadrature both ways;
    integer-order forward values can be cross-checked against
    :func:`psi_mixture_multinomial`.
    """
    weights = np.asarray(weights, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    if weights.shape != means.shape or weights.ndim != 1 or weights.size == 0:
        raise ValueError("weights and means must be matching 1-d lists")
    if abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError("weights must sum to 1")
    if (weights < 0).any():
        raise ValueError("weights must be nonnegative")
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    if direction not in (MIXTURE_VS_BASE, BASE_VS_MIXTURE):
        raise ValueError(f"unknown direction {direction!r}")
    exponent = alpha if direction == MIXTURE_VS_BASE else 1.0 - alpha
    with np.errstate(divide="ignore"):
        log_w = np.where(weights > 0, np.log(weights), -np.inf)[None, :]
    out = _quad_rows(_affine_profiles(means, sigma), log_w,
                     float(means.min()), float(means.max()), sigma, exponent)
    return float(max(out[0], 0.0))


def psi_mixture(weights, means, sigma: float, alpha: float,
                direction: str = MIXTURE_VS_BASE) -> float:
    return float(np.exp(log_psi_mixture(weights, means, sigma, alpha, direction)))


# --------------------------------------------------------------------------
# Binomial support

def _binom_support(params: AccountantParams, log_psi_worst: float, psi_of_ells):
    """Truncated expectation of psi over ell ~ Binomial(m, gamma).

    Returns the log expectation. The lower tail is folded onto the smallest
    retained ell (psi grows with ell, so that is conservative); the upper
    tail is surcharged at the worst-case mixture ``log_psi_worst``. The
    support is widened until the surcharge is below ``_TAIL_REL`` of the
    total, keeping the truncation error far under the output tolerance.
    """
    m, gamma = params.num_edges, params.gamma
    if m == 0 or gamma == 0.0:
        return float(psi_of_ells(np.array([0.0]))[0])
    if gamma == 1.0:
        return float(psi_of_ells(np.array([float(m)]))[0])

    lo = int(max(0, _binom.ppf(1e-16, m, gamma) - 1))
    # isf cannot invert masses much below 1e-16; start from an invertible
    # quantile and let the surcharge test (logsf stays accurate) extend
    hi = int(min(m, _binom.isf(max(_TAIL_REL, 1e-12), m, gamma) + 1))
    done = 0.0  # log-space accumulator over already-evaluated ell blocks
    have_done = False
    for _ in range(64):
        block = []
        for start in range(lo, hi + 1, 1 << 15):
            ells = np.arange(start, min(start + (1 << 15), hi + 1), dtype=np.float64)
            log_pmf = (gammaln(m + 1) - gammaln(ells + 1) - gammaln(m - ells + 1)
                       + ells * math.log(gamma)
                       + (m - ells) * math.log1p(-gamma))
            log_psi = psi_of_ells(ells)
            if start == lo and lo > 0 and not have_done:
                lower = float(_binom.logcdf(lo - 1, m, gamma))
                block.append(lower + log_psi[0])
            block.append(float(logsumexp(log_pmf + log_psi)))
        chunk = float(logsumexp(np.array(block))) if block else -np.inf
        done = chunk if not have_done else float(np.logaddexp(done, chunk))
        have_done = True
        if hi >= m:
            return done
        surcharge = float(_binom.logsf(hi, m, gamma)) + log_psi_worst
        if surcharge <= done + math.log(_TAIL_REL):
            return float(np.logaddexp(done, surcharge))
        lo, hi = hi + 1, int(min(m, math.ceil(hi * 1.6) + 16))
    raise NumericError("Binomial support extension did not stabilize")


# --------------------------------------------------------------------------
# per-step RDP bounds

def rdp_adaptive(params: AccountantParams, alpha: float) -> float:
    """Amplified per-step bound for frequency-aware clipping.

    eps(alpha) = log E_{ell ~ Bin(m, gamma)} psi_two_point(rate(ell)) / (alpha-1),
    with the participation rate of the shifted component given by
    :func:`effective_rate`.
    """
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    sigma = params.sigma
    log_psi_worst = alpha * (alpha - 1) / (2.0 * sigma * sigma)  # rate = 1

    if float(alpha).is_integer():
        def psi_of_ells(ells):
            rates = _effective_rate_vec(params, ells)
            return _log_psi_two_point_closed(rates, sigma, int(alpha))
    else:
        profiles = _affine_profiles(np.array([0.0, 1.0]), sigma)

        def psi_of_ells(ells):
            rates = _effective_rate_vec(params, ells)
            with np.errstate(divide="ignore"):
                log_w = np.stack([np.log1p(-rates), np.log(rates)], axis=1)
            log_w = np.where(np.isnan(log_w), -np.inf, log_w)
            return np.maximum(_quad_rows(profiles, log_w, 0.0, 1.0, sigma, alpha), 0.0)

    log_e = _binom_support(params, log_psi_worst, psi_of_ells)
    return max(log_e, 0.0) / (alpha - 1.0)


def _standard_profiles(params: AccountantParams):
    """Two grouped log profiles for the standard-clipping mixture.

    Conditioned on ell, the mixture is (1-s) A + s B with s = ell*k_neg/n,
    where A carries means i (no negative replacement) and B means i+2, both
    weighted Binomial(K, gamma) over i. Grouping by the replacement indicator
    leaves a two-column profile whose row weights are the only ell-dependence.
    """
    K, gamma, sigma = params.max_degree, params.gamma, params.sigma
    i = np.arange(K + 1, dtype=np.float64)
    log_pi = (gammaln(K + 1) - gammaln(i + 1) - gammaln(K - i + 1)
              + np.where(i > 0, i * np.log(gamma) if gamma > 0 else -np.inf, 0.0)
              + np.where(K - i > 0, (K - i) * math.log1p(-gamma) if gamma < 1 else -np.inf, 0.0))
    log_pi = np.where(np.isnan(log_pi), -np.inf, log_pi)
    two_s2 = 2.0 * sigma * sigma
    means_a, means_b = i, i + 2.0

    def fn(x: np.ndarray) -> np.ndarray:
        pa = logsumexp(log_pi[None, :] + (2.0 * x[:, None] * means_a[None, :]
                                          - (means_a ** 2)[None, :]) / two_s2, axis=1)
        pb = logsumexp(log_pi[None, :] + (2.0 * x[:, None] * means_b[None, :]
                                          - (means_b ** 2)[None, :]) / two_s2, axis=1)
        return np.stack([pa, pb], axis=1)

    return fn


def _replacement_share(params: AccountantParams, ells: np.ndarray) -> np.ndarray:
    share = ells * params.k_neg / params.num_nodes
    if (share > 1.0).any():
        warnings.warn("replacement share clamped to 1 in the Binomial tail",
                      RuntimeWarning, stacklevel=3)
    return np.minimum(share, 1.0)


def rdp_standard(params: AccountantParams, alpha: float) -> float:
    """Per-step bound when tuples are clipped by flat norm only.

    For each ell the dominating pair is a 2(K+1)-component mixture against
    the base Gaussian; both divergence directions are averaged over the
    Binomial ell separately and the worse one is reported.
    """
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    profiles = _standard_profiles(params)
    mean_hi = params.max_degree + 2.0
    out = []

    # forward direction; integer orders expand the two-group power binomially
    # over ell-independent cross moments, so the Binomial support costs one
    # shared quadrature pass
    if float(alpha).is_integer():
        a_int = int(alpha)
        log_m = _log_cross_moments(profiles, a_int, 0.0, mean_hi, params.sigma)
        k = np.arange(a_int + 1, dtype=np.float64)
        log_binom = gammaln(a_int + 1) - gammaln(k + 1) - gammaln(a_int - k + 1)

        def psi_fwd(ells):
            share = _replacement_share(params, ells)
            with np.errstate(divide="ignore", invalid="ignore"):
                terms = (log_binom[None, :] + log_m[None, :]
                         + (a_int - k)[None, :] * np.log1p(-share)[:, None]
                         + k[None, :] * np.log(share)[:, None])
            terms = np.where(np.isnan(terms), -np.inf, terms)
            return np.maximum(logsumexp(terms, axis=1), 0.0)

        out.append(_binom_support(params, float(log_m[a_int]), psi_fwd))
    else:
        def psi_fwd(ells):
            share = _replacement_share(params, ells)
            with np.errstate(divide="ignore"):
                log_w = np.stack([np.log1p(-share), np.log(share)], axis=1)
            log_w = np.where(np.isnan(log_w), -np.inf, log_w)
            vals = _quad_rows(profiles, log_w, 0.0, mean_hi, params.sigma, alpha)
            return np.maximum(vals, 0.0)

        worst_fwd = float(_quad_rows(profiles, np.log(np.array([[1e-300, 1.0]])),
                                     0.0, mean_hi, params.sigma, alpha)[0])
        out.append(_binom_support(params, worst_fwd, psi_fwd))

    # reversed direction: negative exponent, handled by the concave-window
    # quadrature path
    exponent = 1.0 - alpha
    worst_rev = float(_quad_rows(profiles, np.log(np.array([[1e-300, 1.0]])),
                                 0.0, mean_hi, params.sigma, exponent)[0])

    def psi_rev(ells):
        share = _replacement_share(params, ells)
        with np.errstate(divide="ignore"):
            log_w = np.stack([np.log1p(-share), np.log(share)], axis=1)
        log_w = np.where(np.isnan(log_w), -np.inf, log_w)
        vals = _quad_rows(profiles, log_w, 0.0, mean_hi, params.sigma, exponent)
        return np.maximum(vals, 0.0)

    out.append(_binom_support(params, worst_rev, psi_rev))
    return max(0.0, max(out)) / (alpha - 1.0)


def rdp_naive(sigma: float, alpha: float, loose: bool = False) -> float:
    """Unamplified Gaussian bound; ``loose`` doubles it (alpha/sigma^2)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    eps = alpha / (2.0 * sigma * sigma)
    return 2.0 * eps if loose else eps


def rdp_curve(params: AccountantParams, mode: str,
              alphas: np.ndarray | None = None, loose_naive: bool = False) -> RdpCurve:
    """Evaluate one bound mode over an alpha grid."""
    if alphas is None:
        alphas = default_alpha_grid()
    alphas = np.asarray(alphas, dtype=np.float64)
    if mode == "adaptive":
        eps = np.array([rdp_adaptive(params, a) for a in alphas])
    elif mode == "standard":
        eps = np.array([rdp_standard(params, a) for a in alphas])
    elif mode == "naive":
        eps = np.array([rdp_naive(params.sigma, a, loose=loose_naive) for a in alphas])
    else:
        raise ValueError(f"unknown bound mode {mode!r}")
    return RdpCurve(alphas=alphas, eps=eps)


# --------------------------------------------------------------------------
# composition, conversion, calibration

def compose(curve: RdpCurve, iterations: int) -> RdpCurve:
    """Additive composition: iterations scale the curve pointwise."""
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    return RdpCurve(alphas=curve.alphas.copy(), eps=curve.eps * float(iterations))


def rdp_to_dp(curve: RdpCurve, delta: float, iterations: int = 1) -> DpResult:
    """Best (eps, delta) conversion over the curve's grid.

    Uses eps_dp(alpha) = eps(alpha) + log((alpha-1)/alpha)
    - (log delta + log alpha)/(alpha-1), minimized over the grid and clamped
    at zero.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if curve.alphas.size == 0:
        raise ValueError("empty RDP curve")
    a = curve.alphas
    conv = (curve.eps + np.log((a - 1.0) / a) - (math.log(delta) + np.log(a)) / (a - 1.0))
    best = int(np.argmin(conv))
    return DpResult(eps=float(max(conv[best], 0.0)), delta=float(delta),
                    best_alpha=float(a[best]), iterations=int(iterations))


def calibrate_sigma(target_eps: float, delta: float, iterations: int,
                    params: AccountantParams, mode: str = "adaptive",
                    alphas: np.ndarray | None = None) -> float:
    """Smallest noise multiplier whose composed eps lands in [0.99, 1] x target.

    Bisection over sigma in [1e-2, 1e3]; eps decreases in sigma, so the
    bracket shrinks toward the crossing and stops once the converted value
    is within one percent below the target.
    """
    if not math.isfinite(target_eps) or target_eps <= 0:
        raise ValueError("target_eps must be positive and finite")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if alphas is None:
        alphas = default_alpha_grid()

    def eps_at(sigma: float) -> float:
        trial = dataclasses.replace(params, sigma=sigma)
        curve = rdp_curve(trial, mode, alphas=alphas)
        return rdp_to_dp(compose(curve, iterations), delta).eps

    lo, hi = 1e-2, 1e3
    eps_lo, eps_hi = eps_at(lo), eps_at(hi)
    if eps_hi > target_eps or eps_lo < 0.99 * target_eps:
        raise CalibrationError(
            f"target eps {target_eps:g} unreachable in sigma bracket "
            f"[{lo:g}, {hi:g}]: eps({lo:g}) = {eps_lo:.6g}, "
            f"eps({hi:g}) = {eps_hi:.6g}")
    if eps_lo <= target_eps:
        return lo  # even the smallest sigma already satisfies the target
    for _ in range(200):
        if 0.99 * target_eps <= eps_hi <= target_eps:
            return hi
        mid = math.sqrt(lo * hi)  # sigma spans decades; bisect in log
        eps_mid = eps_at(mid)
        if eps_mid > target_eps:
            lo = mid
        else:
            hi, eps_hi = mid, eps_mid
    raise CalibrationError(
        f"bisection failed to land within 1% below target {target_eps:g}; "
        f"best eps {eps_hi:.6g} at sigma {hi:.6g}")


# --------------------------------------------------------------------------
# curve serialization

def write_curve_csv(curve: RdpCurve, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("alpha,eps\n")
        for a, e in zip(curve.alphas, curve.eps):
            fh.write(f"{a:.17g},{e:.17g}\n")


def read_curve_csv(path) -> RdpCurve:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=np.float64)
    return RdpCurve(alphas=data[:, 0], eps=data[:, 1])


def write_composite_csv(rows: list[tuple[int, float, float]], path) -> None:
    """Rows of (iterations, converted eps, argmin alpha)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("T,eps_dp,best_alpha\n")
        for t, e, a in rows:
            fh.write(f"{t},{e:.17g},{a:.17g}\n")
