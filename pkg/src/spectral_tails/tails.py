"""Tail bounds and Monte Carlo estimators for the largest eigenvalue.

Analytic pieces carry explicit constants derived from their proofs:

* conditioned chi-square tail, ``C = 1``: with ``t`` the truncation point and
  ``r = sqrt(1 - 2s)``, ``E exp(s Y~^2) = Q(r t) / (r Q(t))``; since
  ``x Q(x) / phi(x)`` is increasing, ``Q(r t) / Q(t) <= exp(s t^2) / r`` and so
  ``E exp(s Y~^2) <= exp(s t^2) / (1 - 2s)``. Chernoff at ``s = (1 - m/L) / 2``
  gives the bound with ``C = 1``.
* max of Gaussians: ``1 - (1 - Q)^m >= (1 - 1/e) min(1, m Q)`` and
  ``Q(t) >= phi(t) / (2t)`` for ``t >= 1`` give ``c' = (1 - 1/e) c / (2 sqrt(2 pi) sqrt(2 (1+delta)))``.
* subgraph counts: ``C(n, k) <= (e n / k)^k / sqrt(2 pi k)`` and
  ``C(C(k,2), k+l) <= (e k^2 / (2 (k+l)))^(k+l)`` with the exact heavy-edge density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb, gammaln, ndtr
from scipy.stats import chi2, linregress, t as student_t

from .graph import clique_number, WeightedGraph
from .montecarlo import (
    BlockResult,
    _components,
    clopper_pearson,
    exceeds_level,
    iter_chunks,
    run_blocks,
)
from .rate import psi
from .sampler import ModelParams, lower_level, upper_level

__all__ = [
    "TailEstimate",
    "ExponentFit",
    "ComponentBoundParams",
    "gaussian_tail_bounds",
    "log_gaussian_tail_bounds",
    "max_gaussian_constant",
    "max_gaussian_bounds",
    "chi_tail_bound",
    "chi_tail_power_form",
    "component_tail_bound",
    "expected_subgraph_bound",
    "expected_subgraph_exact",
    "clique_existence_scaling",
    "clique_count_moments",
    "planted_exponent",
    "planted_argmax",
    "upper_tail_naive",
    "upper_tail_planted_lower",
    "upper_tail_union_bound",
    "lower_tail_mc",
    "fit_exponent",
    "double_log_ratio",
]

SQRT_2PI = math.sqrt(2 * math.pi)
CHI_TAIL_CONSTANT = 1.0
DEFAULT_BLOCK = 20_000


@dataclass(frozen=True)
class TailEstimate:
    probability: float
    ci_low: float
    ci_high: float
    trials: int
    hits: int
    method: str
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.ci_low <= self.probability <= self.ci_high:
            raise ValueError("need ci_low <= probability <= ci_high")
        if not 0 <= self.hits <= self.trials:
            raise ValueError("need 0 <= hits <= trials")

    def to_dict(self) -> dict:
        return {
            "probability": self.probability,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "trials": self.trials,
            "hits": self.hits,
            "method": self.method,
            **self.details,
        }


@dataclass(frozen=True)
class ExponentFit:
    n_grid: tuple[int, ...]
    log_probs: tuple[float, ...]
    slope: float
    slope_ci: tuple[float, float]
    intercept: float = 0.0

    def __post_init__(self):
        if len(self.n_grid) < 3 or len(self.log_probs) != len(self.n_grid):
            raise ValueError("need at least three grid points with one log-probability each")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("n_grid must be strictly increasing")

    def to_dict(self) -> dict:
        return {
            "n_grid": list(self.n_grid),
            "log_probs": list(self.log_probs),
            "slope": self.slope,
            "slope_ci": list(self.slope_ci),
            "intercept": self.intercept,
        }


@dataclass(frozen=True)
class ComponentBoundParams:
    c1: float
    c2: float
    c3: float
    alpha: float
    gamma: float
    eta: float
    epsilon: float
    k: int

    def __post_init__(self):
        if min(self.c1, self.c2, self.c3) < 0:
            raise ValueError("c1, c2, c3 must be nonnegative")
        if self.alpha <= 0 or self.gamma <= 0:
            raise ValueError("alpha and gamma must be positive")
        if not 0 < self.eta < 0.5:
            raise ValueError("eta must lie in (0, 1/2)")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if int(self.k) != self.k or self.k < 2:
            raise ValueError("k must be an integer >= 2")
        if not 0 < self.theta < 1:
            raise ValueError(f"theta = {self.theta} must lie in (0, 1)")

    @property
    def theta(self) -> float:
        return (2 * self.eta**2 + 2 * self.eta**4 * self.c3) ** 0.25


# ------------------------------------------------------------ analytic bounds


def gaussian_tail_bounds(t: float) -> tuple[float, float]:
    """``(t / (t^2 + 1), 1 / t) * exp(-t^2 / 2) / sqrt(2 pi)``, bracketing ``P(Y >= t)``."""
    t = float(t)
    if not t > 0 or not math.isfinite(t):
        raise ValueError(f"t must be a positive real, got {t!r}")
    dens = math.exp(-t * t / 2) / SQRT_2PI
    return t / (t * t + 1) * dens, dens / t


def log_gaussian_tail_bounds(t: float) -> tuple[float, float]:
    """Natural logs of :func:`gaussian_tail_bounds`; finite where the bounds underflow."""
    t = float(t)
    if not t > 0 or not math.isfinite(t):
        raise ValueError(f"t must be a positive real, got {t!r}")
    base = -t * t / 2 - math.log(SQRT_2PI)
    return base + math.log(t) - math.log1p(t * t), base - math.log(t)


def max_gaussian_constant(c: float, delta: float) -> float:
    """Constructive ``c'`` for the upper-tail half of the max-Gaussian bound."""
    return (1 - 1 / math.e) * c / (2 * SQRT_2PI * math.sqrt(2 * (1 + delta)))


def max_gaussian_bounds(m: int, n: int, delta: float, c: float) -> tuple[float, float]:
    """Lower bound on ``P(max >= sqrt(2(1+d) log n))`` and upper bound on ``P(max <= sqrt(2(1-d) log n))``.

    The first is ``min(c' n^-delta / sqrt(log n), 1 - 1/e)``. The second is
    ``exp(-c_l n^delta / sqrt(log n))`` with ``c_l = c / (2 sqrt(2 pi) sqrt(2 (1-delta)))``
    for ``delta < 1`` and ``2^-m`` for ``delta >= 1`` (level at or below zero).
    """
    if n < 2 or c <= 0 or delta < 0:
        raise ValueError("need n >= 2, c > 0, delta >= 0")
    if m < c * n:
        raise ValueError("the bound needs m >= c n")
    logn = math.log(n)
    upper_lb = min(max_gaussian_constant(c, delta) * n**-delta / math.sqrt(logn), 1 - 1 / math.e)
    level = math.sqrt(max(0.0, 2 * (1 - delta) * logn))
    if delta >= 1:
        lower_ub = 0.5**m
    elif level >= 1:
        c_l = c / (2 * SQRT_2PI * math.sqrt(2 * (1 - delta)))
        lower_ub = math.exp(-c_l * n**delta / math.sqrt(logn))
    else:
        # Q(t) >= Q(1) for t < 1
        lower_ub = math.exp(-m * float(ndtr(-1.0)))
    return upper_lb, lower_ub


def _truncation_point(epsilon: float, n: int) -> float:
    return math.sqrt(epsilon * math.log(math.log(n)))


def chi_tail_bound(m: int, L: float, epsilon: float, n: int) -> float:
    """Bound on ``P(sum of m conditioned Y~_i^2 >= L)`` with the derived constant ``C = 1``; clamped at 1."""
    if m < 1 or int(m) != m:
        raise ValueError("m must be a positive integer")
    if not L > m:
        raise ValueError(f"need L > m, got L={L}, m={m}")
    if n < 16:
        raise ValueError("need n >= 16")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    log_b = (
        m * math.log(CHI_TAIL_CONSTANT)
        - L / 2
        + m / 2
        + m * math.log(L / m)
        + epsilon * m * math.log(math.log(n)) / 2
    )
    return math.exp(min(0.0, log_b))


def chi_tail_power_form(a: float, b: float, epsilon: float, gamma: float, n: int) -> float:
    """``n^(-a/2 + eps b/2 + gamma)``, the large-``n`` form for ``m <= b log n / log log n + c``."""
    return min(1.0, n ** (-a / 2 + epsilon * b / 2 + gamma))


def component_tail_bound(p: ComponentBoundParams, n: int) -> float:
    """Two-term bound on ``P(lambda >= sqrt(2 alpha log n))`` for a capped component, clamped to [0, 1]."""
    if n < 16:
        raise ValueError("need n >= 16")
    th = p.theta
    first = n ** (-p.alpha / (2 * th * th) + p.epsilon * p.c2 / 2 + p.gamma)
    second = n ** (-p.k / (2 * (p.k - 1)) * (1 - th) ** 2 * p.alpha + p.c1 * p.epsilon / (2 * p.eta**2) + p.gamma)
    return float(min(1.0, max(0.0, first + second)))


def _heavy_density(n: int, d: float, epsilon: float) -> float:
    return d / n * 2 * float(ndtr(-_truncation_point(epsilon, n)))


def expected_subgraph_exact(n: int, k: int, l: int, epsilon: float, d: float) -> float:
    """``C(n,k) C(C(k,2), k+l) q^(k+l)``, the first-moment count before Stirling."""
    q = _heavy_density(n, d, epsilon)
    e = k + l
    log_val = (
        gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
        + gammaln(k * (k - 1) // 2 + 1) - gammaln(e + 1) - gammaln(k * (k - 1) // 2 - e + 1)
        + e * math.log(q)
    )
    return math.exp(log_val)


def expected_subgraph_bound(n: int, k: int, l: int, epsilon: float, d: float) -> float:
    """Upper bound on the expected number of ``k``-vertex, ``(k+l)``-edge subgraphs of the heavy graph.

    Equals ``e^-l (k/n)^l (k/(k+l))^(k+l) (e^2 D / 2)^(k+l) / sqrt(2 pi k)`` with
    ``D = n q`` and ``q`` the exact heavy-edge density. Valid for ``-1 <= l <= C(k,2) - k``
    (connected subgraphs have at least ``k - 1`` edges).
    """
    if k < 2 or k > n:
        raise ValueError("need 2 <= k <= n")
    if not -1 <= l <= k * (k - 1) // 2 - k:
        raise ValueError(f"l must lie in [-1, C(k,2) - k], got {l}")
    if n < 16:
        raise ValueError("need n >= 16")
    D = n * _heavy_density(n, d, epsilon)
    e = k + l
    log_val = (
        -0.5 * math.log(2 * math.pi * k)
        - l
        + l * math.log(k / n)
        + e * math.log(k / e)
        + e * math.log(math.e**2 * D / 2)
    )
    return math.exp(log_val)


# ----------------------------------------------------------- clique existence


def _contains_clique(batch, k: int) -> np.ndarray:
    """Per graph: does the support contain a ``k``-clique."""
    B, n = batch.batch, batch.n
    out = np.zeros(B, dtype=bool)
    if batch.rows.size == 0:
        return out
    if k == 2:
        out[np.unique(batch.gid)] = True
        return out
    deg = np.bincount(batch.gid * n + batch.rows, minlength=B * n) + np.bincount(batch.gid * n + batch.cols, minlength=B * n)
    enough = (deg.reshape(B, n) >= k - 1).sum(axis=1) >= k
    bounds = np.searchsorted(batch.gid, np.arange(B + 1))
    for g in np.flatnonzero(enough):
        lo, hi = bounds[g], bounds[g + 1]
        sub = WeightedGraph(n, batch.rows[lo:hi], batch.cols[lo:hi], np.ones(hi - lo))
        out[g] = clique_number(sub)[0] >= k
    return out


def _clique_block(rng, size, block, payload) -> BlockResult:
    n, d, k = payload
    hits = 0
    for batch in iter_chunks(n, d, size, rng):
        hits += int(_contains_clique(batch, k).sum())
    return BlockResult(block, size, hits)


def clique_count_moments(n: int, k: int, p: float) -> tuple[float, float]:
    """Exact first and second moments of the number of ``k``-cliques that are whole components."""
    s = k * (k - 1) // 2
    log_q = math.log1p(-p) if p < 1 else -math.inf
    first = comb(n, k, exact=False) * p**s * math.exp(k * (n - k) * log_q)
    # two isolated cliques are either equal or vertex-disjoint
    pairs = comb(n, k, exact=False) * comb(n - k, k, exact=False)
    second = first + pairs * p ** (2 * s) * math.exp((2 * k * (n - k) - k * k) * log_q)
    return first, second


def clique_existence_scaling(n_grid, k: int, d: float, trials: int, rng=None, threads: int = 1) -> ExponentFit:
    """Monte Carlo frequency of a ``k``-clique in ``G(n, d/n)`` per ``n`` and its log-log slope."""
    if k < 3:
        raise ValueError("k must be at least 3")
    master = _master_seed(rng)
    probs = []
    for i, n in enumerate(n_grid):
        res = run_blocks(
            _clique_block, (int(n), float(d), int(k)), master=master, task=i,
            max_trials=trials, block_size=min(trials, DEFAULT_BLOCK), threads=threads,
        )
        probs.append((int(n), sum(r.hits for r in res) / sum(r.trials for r in res)))
    if any(pr == 0 for _, pr in probs):
        ns = tuple(n for n, _ in probs)
        return ExponentFit(ns, tuple(-math.inf if pr == 0 else math.log(pr) for _, pr in probs), math.nan, (math.nan, math.nan))
    return fit_exponent(probs)


# ------------------------------------------------------------ planted bounds


def planted_exponent(delta: float, k: int) -> float:
    """``log_n`` of the planted lower bound: clique cost plus ``C(k,2)`` Gaussian tails at ``level / (k-1)``."""
    s = k * (k - 1) // 2
    return -(s - k) - s * (1 + delta) / (k - 1) ** 2


def planted_argmax(delta: float, ks=range(2, 13)) -> tuple[int, ...]:
    vals = {k: planted_exponent(delta, k) for k in ks}
    best = max(vals.values())
    return tuple(k for k, v in vals.items() if best - v <= 1e-12 * max(1.0, abs(best)))


def _master_seed(rng, default: int = 0) -> int:
    if rng is None:
        return default
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(2**63))
    return int(rng)


def _estimate(hits: int, trials: int, method: str, **details) -> TailEstimate:
    lo, hi = clopper_pearson(hits, trials)
    return TailEstimate(hits / trials, lo, hi, trials, hits, method, details)


def _level_block(rng, size, block, payload) -> BlockResult:
    n, d, level, mode = payload
    hits = 0
    for batch in iter_chunks(n, d, size, rng):
        above = exceeds_level(batch, level)
        hits += int(above.sum() if mode == "upper" else (~above).sum())
    return BlockResult(block, size, hits)


def upper_tail_naive(
    params: ModelParams,
    delta: float,
    trials: int,
    rng=None,
    *,
    min_hits: int | None = None,
    threads: int = 1,
    block_size: int = DEFAULT_BLOCK,
    task: int = 0,
) -> TailEstimate:
    """Frequency of ``lambda_1 >= sqrt(2 (1+delta) log n)`` with a Clopper-Pearson interval.

    ``trials`` caps the work; with ``min_hits`` the run stops at the first block
    boundary where the hit count reaches it.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if delta <= 0:
        raise ValueError("delta must be positive")
    level = upper_level(params.n, delta)
    res = run_blocks(
        _level_block, (params.n, params.d, level, "upper"), master=_master_seed(rng, params.seed),
        task=task, max_trials=trials, block_size=min(block_size, trials), min_hits=min_hits, threads=threads,
    )
    return _estimate(sum(r.hits for r in res), sum(r.trials for r in res), "naive", level=level, blocks=len(res))


def lower_tail_mc(
    params: ModelParams,
    delta: float,
    trials: int,
    rng=None,
    *,
    threads: int = 1,
    block_size: int = DEFAULT_BLOCK,
    task: int = 0,
) -> TailEstimate:
    """Frequency of ``lambda_1 < sqrt(2 (1-delta) log n)``; components are screened independently."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    level = lower_level(params.n, delta)
    res = run_blocks(
        _level_block, (params.n, params.d, level, "lower"), master=_master_seed(rng, params.seed),
        task=task, max_trials=trials, block_size=min(block_size, trials), threads=threads,
    )
    return _estimate(sum(r.hits for r in res), sum(r.trials for r in res), "naive", level=level, blocks=len(res))


def double_log_ratio(probability: float, n: int) -> float:
    """``log log (1/P) / log n``; the lower-tail exponent estimate."""
    if not 0 < probability < 1:
        raise ValueError("probability must lie in (0, 1)")
    return math.log(math.log(1 / probability)) / math.log(n)


def upper_tail_planted_lower(
    params: ModelParams,
    delta: float,
    k: int,
    trials: int,
    rng=None,
    *,
    threads: int = 1,
    task: int = 0,
) -> TailEstimate:
    """Certified lower bound ``P(exists k-clique) * Q_low(level/(k-1))^C(k,2)``.

    Given the edge set, the weights on a chosen ``k``-clique are independent of it,
    and all of them exceeding ``level/(k-1)`` forces ``lambda_1 >= level`` through
    the uniform test vector on the clique. ``Q_low`` is the lower Gaussian tail bound.
    For ``k = 2`` the first factor is folded in exactly: ``1 - (1 - p Q_low(level))^C(n,2)``.
    For ``k >= 3`` the clique probability is estimated by Monte Carlo; the
    Paley-Zygmund bound on isolated ``k``-cliques is reported as an analytic floor.
    """
    if int(k) != k or k < 2:
        raise ValueError("k must be an integer >= 2")
    k = int(k)
    n, p = params.n, params.p
    level = upper_level(n, delta)
    s = k * (k - 1) // 2
    q_low = gaussian_tail_bounds(level / (k - 1))[0]
    weight_factor = q_low**s
    if k == 2:
        pairs = n * (n - 1) / 2
        prob = -math.expm1(pairs * math.log1p(-p * q_low))
        return TailEstimate(prob, prob, prob, 0, 0, "planted-lower-bound", {"k": 2, "level": level, "exact": True})
    if trials < 1:
        raise ValueError("trials must be at least 1")
    res = run_blocks(
        _clique_block, (n, params.d, k), master=_master_seed(rng, params.seed), task=task,
        max_trials=trials, block_size=min(trials, DEFAULT_BLOCK), threads=threads,
    )
    hits, tot = sum(r.hits for r in res), sum(r.trials for r in res)
    lo, hi = clopper_pearson(hits, tot)
    m1, m2 = clique_count_moments(n, k, p)
    pz = m1 * m1 / m2 if m2 > 0 else 0.0
    return TailEstimate(
        hits / tot * weight_factor, lo * weight_factor, hi * weight_factor, tot, hits,
        "planted-lower-bound",
        {"k": k, "level": level, "weight_factor": weight_factor, "paley_zygmund": pz * weight_factor},
    )


def _union_terms(batch, level: float) -> np.ndarray:
    """Per graph ``min(1, sum_C P(chi^2_{m_C} >= k_C level^2 / (2 (k_C - 1))))``."""
    out = np.zeros(batch.batch)
    if batch.rows.size == 0:
        return out
    cs = _components(batch, np.arange(batch.batch))
    ncomp = cs.size.size
    m = np.bincount(cs.edge_comp, minlength=ncomp)
    k = np.full(ncomp, 2)
    order = np.argsort(cs.edge_comp, kind="stable")
    starts = np.searchsorted(cs.edge_comp[order], np.arange(ncomp + 1))
    for c in np.flatnonzero(m > cs.size - 1):
        e = order[starts[c] : starts[c + 1]]
        sub = WeightedGraph(int(cs.size[c]), np.minimum(cs.li[e], cs.lj[e]), np.maximum(cs.li[e], cs.lj[e]), np.ones(e.size))
        k[c] = clique_number(sub)[0]
    terms = chi2.sf(k * level * level / (2 * (k - 1)), m)
    np.add.at(out, cs.graph, terms)
    return np.minimum(out, 1.0)


def _union_block(rng, size, block, payload) -> BlockResult:
    n, d, level = payload
    total = 0.0
    for batch in iter_chunks(n, d, size, rng):
        total += float(_union_terms(batch, level).sum())
    return BlockResult(block, size, 0, total)


def upper_tail_union_bound(
    params: ModelParams, delta: float, trials: int, rng=None, *, threads: int = 1, task: int = 0
) -> TailEstimate:
    """Monte Carlo over edge sets of a conditional first-moment bound.

    Given the edges, ``lambda_1(C)^2 <= ((k_C - 1)/k_C) * 2 * sum_{e in C} Y_e^2`` on
    every component ``C`` with clique number ``k_C``, so
    ``P(lambda_1 >= level | X) <= min(1, sum_C P(chi^2_{m_C} >= k_C level^2 / (2(k_C - 1))))``.
    Averaging over ``X`` gives an upper bound on the tail; the interval is a normal
    interval on that average.
    """
    level = upper_level(params.n, delta)
    res = run_blocks(
        _union_block, (params.n, params.d, level), master=_master_seed(rng, params.seed), task=task,
        max_trials=trials, block_size=min(trials, 2_000), threads=threads,
    )
    tot = sum(r.trials for r in res)
    mean = sum(r.extra for r in res) / tot
    # terms lie in [0, 1]; Hoeffding gives a distribution-free 95% half-width
    half = math.sqrt(math.log(2 / 0.05) / (2 * tot))
    return TailEstimate(mean, max(0.0, mean - half), min(1.0, mean + half), tot, 0, "union-upper-bound", {"level": level})


# ------------------------------------------------------------------- fitting


def fit_exponent(samples) -> ExponentFit:
    """Least-squares slope of ``log P`` against ``log n`` with a 95% t interval."""
    samples = sorted((int(n), float(p)) for n, p in samples)
    if len(samples) < 3:
        raise ValueError("need at least three grid points")
    ns = [n for n, _ in samples]
    if len(set(ns)) != len(ns):
        raise ValueError("grid points must be distinct")
    if any(not p > 0 for _, p in samples):
        raise ValueError("probabilities must be positive; widen trials or use a bound method")
    x = np.log(ns)
    y = np.log([p for _, p in samples])
    fit = linregress(x, y)
    half = float(student_t.ppf(0.975, len(ns) - 2) * fit.stderr)
    return ExponentFit(tuple(ns), tuple(y.tolist()), float(fit.slope), (fit.slope - half, fit.slope + half), float(fit.intercept))


def rate_reference(delta: float) -> float:
    return -psi(delta).psi
