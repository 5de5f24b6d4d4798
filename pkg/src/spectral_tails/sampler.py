"""Sparse Gaussian networks: sampling, thresholding, planting and structural events."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components as _cc
from scipy.special import log_ndtr, ndtr, ndtri_exp

from .errors import InvariantError
from .graph import WeightedGraph, largest_eigenvalue

__all__ = [
    "ModelParams",
    "EdgeBatch",
    "DecompositionPlan",
    "EventThresholds",
    "ComponentDiagnostics",
    "as_generator",
    "pair_from_index",
    "pair_index",
    "sample_edge_batch",
    "sample_network",
    "sample_truncated_gaussian",
    "sample_gaussian_above",
    "plan_decomposition",
    "decompose",
    "plant_clique",
    "diagnostics",
    "upper_level",
    "lower_level",
]


def upper_level(n: int, delta: float) -> float:
    """``sqrt(2 (1 + delta) log n)``, the upper-tail threshold."""
    return math.sqrt(2.0 * (1.0 + delta) * math.log(n))


def lower_level(n: int, delta: float) -> float:
    """``sqrt(2 (1 - delta) log n)``, the lower-tail threshold (clamped at 0)."""
    return math.sqrt(max(0.0, 2.0 * (1.0 - delta) * math.log(n)))


@dataclass(frozen=True)
class ModelParams:
    n: int
    d: float
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n!r}")
        if not math.isfinite(self.d) or self.d < 0 or self.d >= self.n:
            raise ValueError(f"d must satisfy 0 <= d < n, got {self.d!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def p(self) -> float:
        return self.d / self.n


def as_generator(rng, default_seed: int = 0) -> np.random.Generator:
    if rng is None:
        return np.random.default_rng(default_seed)
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


# ------------------------------------------------------------- pair indexing


def pair_index(i, j, n: int):
    """Linear index of the pair ``i < j`` in row-major upper-triangle order."""
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    return i * n - i * (i + 1) // 2 + (j - i - 1)


def pair_from_index(idx, n: int):
    """Inverse of :func:`pair_index`."""
    idx = np.asarray(idx, dtype=np.int64)
    b = 2 * n - 1
    i = np.floor((b - np.sqrt(np.maximum(b * b - 8.0 * idx, 0.0))) / 2).astype(np.int64)
    i = np.clip(i, 0, n - 2)
    # float rounding can be off by one either way
    start = i * n - i * (i + 1) // 2
    too_far = start > idx
    i[too_far] -= 1
    nxt = (i + 1) * n - (i + 1) * (i + 2) // 2
    short = nxt <= idx
    i[short] += 1
    start = i * n - i * (i + 1) // 2
    j = idx - start + i + 1
    return i, j


@dataclass(frozen=True, eq=False)
class EdgeBatch:
    """Edges of ``batch`` independent networks on ``n`` vertices, sorted by graph."""

    n: int
    batch: int
    gid: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray

    def graph(self, b: int) -> WeightedGraph:
        lo, hi = np.searchsorted(self.gid, [b, b + 1])
        return WeightedGraph(self.n, self.rows[lo:hi], self.cols[lo:hi], self.weights[lo:hi])

    def edge_counts(self) -> np.ndarray:
        return np.bincount(self.gid, minlength=self.batch)


def _geometric_positions(total: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli(p) success positions in ``range(total)`` by geometric skipping."""
    if p <= 0 or total <= 0:
        return np.zeros(0, dtype=np.int64)
    if p >= 1:
        return np.arange(total, dtype=np.int64)
    chunks = []
    pos = -1
    mean = total * p
    size = int(mean + 6 * math.sqrt(mean) + 16)
    while True:
        gaps = rng.geometric(p, size=size)
        steps = pos + np.cumsum(gaps, dtype=np.int64)
        inside = steps < total
        if not inside.all():
            chunks.append(steps[inside])
            break
        chunks.append(steps)
        pos = int(steps[-1])
        size = max(16, int((total - pos) * p * 1.2) + 16)
    return np.concatenate(chunks)


def sample_edge_batch(n: int, d: float, batch: int, rng) -> EdgeBatch:
    """``batch`` independent copies of ``Z = X * Y`` sharing one geometric skip stream."""
    rng = as_generator(rng)
    pairs = n * (n - 1) // 2
    pos = _geometric_positions(pairs * batch, d / n, rng)
    gid, local = np.divmod(pos, pairs)
    rows, cols = pair_from_index(local, n)
    weights = rng.standard_normal(pos.size)
    return EdgeBatch(n, batch, gid, rows, cols, weights)


def sample_network(params: ModelParams, rng=None) -> WeightedGraph:
    """One network: each pair present with probability ``d/n``, N(0, 1) weight on each edge."""
    rng = as_generator(rng, params.seed)
    return sample_edge_batch(params.n, params.d, 1, rng).graph(0)


# ----------------------------------------------------- conditioned Gaussians


def sample_gaussian_above(level: float, rng, size=None):
    """N(0, 1) conditioned on ``value >= level``, by inverse CDF in log space."""
    rng = as_generator(rng)
    u = 1.0 - rng.random(size)
    return -ndtri_exp(np.log(u) + log_ndtr(-float(level)))


def sample_truncated_gaussian(t: float, rng, size=None):
    """N(0, 1) conditioned on ``|value| > t``; exact for any ``t >= 0``."""
    if t < 0 or not math.isfinite(t):
        raise ValueError(f"t must be a finite nonnegative real, got {t!r}")
    rng = as_generator(rng)
    mag = sample_gaussian_above(t, rng, size)
    sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    out = sign * mag
    return float(out) if size is None else out


def truncated_cdf(x, t: float):
    """CDF of N(0, 1) conditioned on ``|value| > t``."""
    x = np.asarray(x, dtype=float)
    tail = 2.0 * ndtr(-t)
    below = ndtr(np.minimum(x, -t))
    above = np.clip(ndtr(x) - ndtr(t), 0.0, None)
    return (below + above) / tail


# ------------------------------------------------------------- decomposition


@dataclass(frozen=True)
class DecompositionPlan:
    """Threshold split of the weights into a sparse heavy part and a light part.

    ``q_bound`` is the closed-form density bound ``d' / (n (log n)^(eps/2))`` with
    ``d' = d / sqrt(2 pi)``; it is only valid once the threshold exceeds about 2.
    ``q_exact`` is the exact heavy-edge density ``(d/n) * P(|Y| > threshold)``.
    """

    n: int
    d: float
    epsilon: float
    delta: float
    threshold: float
    delta_prime: float
    q_bound: float
    q_exact: float


def plan_decomposition(n: int, d: float, epsilon: float, delta: float) -> DecompositionPlan:
    if n < 16:
        raise ValueError("the threshold sqrt(eps log log n) needs n >= 16")
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    if delta <= 0:
        raise ValueError("delta must be positive")
    if epsilon * (1 + delta) >= 2:
        raise ValueError("need epsilon * (1 + delta) < 2 for a positive reduced level")
    loglog = math.log(math.log(n))
    threshold = math.sqrt(epsilon * loglog)
    root = math.sqrt(2 * (1 + delta)) - math.sqrt(epsilon) * (1 + delta)
    delta_prime = root * root / 2 - 1
    d_prime = d / math.sqrt(2 * math.pi)
    q_bound = d_prime / (n * math.log(n) ** (epsilon / 2))
    q_exact = d / n * 2 * float(ndtr(-threshold))
    lo = delta - math.sqrt(2 * epsilon) * (1 + delta) ** 1.5
    if not lo - 1e-12 <= delta_prime <= delta + 1e-12:
        raise InvariantError(f"delta' = {delta_prime} outside [{lo}, {delta}]")
    return DecompositionPlan(n, d, epsilon, delta, threshold, delta_prime, q_bound, q_exact)


def decompose(
    z: WeightedGraph, plan: DecompositionPlan | float, check: bool = True
) -> tuple[WeightedGraph, WeightedGraph]:
    """Split ``z`` into heavy edges ``|w| > threshold`` and the rest.

    With ``check`` the subadditivity ``lambda_1(z) <= lambda_1(heavy) + lambda_1(light)``
    is verified.
    """
    if isinstance(plan, DecompositionPlan):
        if plan.n != z.n:
            raise ValueError("plan was built for a different n")
        threshold = plan.threshold
    else:
        threshold = float(plan)
    heavy = np.abs(z.weights) > threshold
    z1 = WeightedGraph(z.n, z.rows[heavy], z.cols[heavy], z.weights[heavy], z.labels)
    z2 = WeightedGraph(z.n, z.rows[~heavy], z.cols[~heavy], z.weights[~heavy], z.labels)
    if check and z.n:
        lam = largest_eigenvalue(z)[0]
        lam1 = largest_eigenvalue(z1)[0]
        lam2 = largest_eigenvalue(z2)[0]
        if lam > lam1 + lam2 + 1e-9 * max(1.0, abs(lam)):
            raise InvariantError(f"subadditivity failed: {lam} > {lam1} + {lam2}")
    return z1, z2


# ------------------------------------------------------------------ planting


def plant_clique(params: ModelParams, k: int, delta: float, rng=None) -> tuple[WeightedGraph, tuple[int, ...]]:
    """Background network with a uniformly placed ``k``-clique of heavy positive weights.

    Every clique weight is N(0, 1) conditioned on ``>= sqrt(2 (1+delta) log n) / (k-1)``
    and replaces whatever the background had on that pair.
    """
    if int(k) != k or not 2 <= k <= params.n:
        raise ValueError(f"need 2 <= k <= n, got k={k!r}")
    k = int(k)
    rng = as_generator(rng, params.seed)
    base = sample_network(params, rng)
    clique = np.sort(rng.choice(params.n, size=k, replace=False))
    inside = np.zeros(params.n, dtype=bool)
    inside[clique] = True
    keep = ~(inside[base.rows] & inside[base.cols])
    iu = np.triu_indices(k, 1)
    level = upper_level(params.n, delta) / (k - 1)
    heavy = sample_gaussian_above(level, rng, iu[0].size)
    rows = np.concatenate([base.rows[keep], clique[iu[0]]])
    cols = np.concatenate([base.cols[keep], clique[iu[1]]])
    weights = np.concatenate([base.weights[keep], heavy])
    order = np.argsort(pair_index(rows, cols, params.n), kind="stable")
    g = WeightedGraph(params.n, rows[order], cols[order], weights[order])
    return g, tuple(int(v) for v in clique)


# ---------------------------------------------------------------- diagnostics


@dataclass(frozen=True)
class EventThresholds:
    delta1: float
    delta2: float
    delta3: float
    epsilon: float


@dataclass(frozen=True)
class ComponentDiagnostics:
    """Raw component statistics (components with at least two vertices) and event flags."""

    n: int
    thresholds: EventThresholds
    component_sizes: list[int]
    max_degree: int
    tree_excesses: list[int]
    num_non_tree: int
    degree_ok: bool
    size_ok: bool
    excess_ok: bool
    all_trees: bool
    few_cycles: bool
    caps: dict = field(default_factory=dict)

    def recompute_flags(self) -> dict[str, bool]:
        caps = _event_caps(self.n, self.thresholds)
        return {
            "degree_ok": self.max_degree <= caps["degree"],
            "size_ok": all(s <= caps["size"] for s in self.component_sizes),
            "excess_ok": all(e - 1 < caps["excess"] for e in self.tree_excesses),
            "all_trees": all(e == 0 for e in self.tree_excesses),
            "few_cycles": sum(e > 0 for e in self.tree_excesses) < caps["non_tree"],
        }

    def flags(self) -> dict[str, bool]:
        return {
            "degree_ok": self.degree_ok,
            "size_ok": self.size_ok,
            "excess_ok": self.excess_ok,
            "all_trees": self.all_trees,
            "few_cycles": self.few_cycles,
        }


def _event_caps(n: int, th: EventThresholds) -> dict[str, float]:
    ln = math.log(n)
    lnln = math.log(ln)
    return {
        "degree": (1 + th.delta1) * ln / lnln,
        "size": (2 + th.delta2) / th.epsilon * ln / lnln,
        "excess": th.delta3,
        "non_tree": ln,
    }


def diagnostics(g: WeightedGraph, thresholds: EventThresholds) -> ComponentDiagnostics:
    """Component sizes, degrees and tree excesses, with the structural events they define.

    Edges ``|E(C)| < |V(C)| + delta3`` is checked as ``excess - 1 < delta3``.
    """
    if g.n < 16:
        raise ValueError("diagnostics need n >= 16")
    if thresholds.epsilon <= 0:
        raise ValueError("epsilon must be positive")
    s = g.support()
    adj = csr_matrix((np.ones(s.m), (s.rows, s.cols)), shape=(g.n, g.n))
    count, labels = _cc(adj, directed=False)
    sizes = np.bincount(labels, minlength=count)
    edges = np.bincount(labels[s.rows], minlength=count)
    big = np.flatnonzero(sizes >= 2)
    comp_sizes = sizes[big].tolist()
    excess = (edges[big] - sizes[big] + 1).tolist()
    deg = np.bincount(np.concatenate([s.rows, s.cols]), minlength=g.n)
    dmax = int(deg.max()) if g.n else 0
    caps = _event_caps(g.n, thresholds)
    non_tree = int(sum(e > 0 for e in excess))
    return ComponentDiagnostics(
        n=g.n,
        thresholds=thresholds,
        component_sizes=comp_sizes,
        max_degree=dmax,
        tree_excesses=excess,
        num_non_tree=non_tree,
        degree_ok=dmax <= caps["degree"],
        size_ok=all(x <= caps["size"] for x in comp_sizes),
        excess_ok=all(e - 1 < caps["excess"] for e in excess),
        all_trees=non_tree == 0,
        few_cycles=non_tree < caps["non_tree"],
        caps=caps,
    )
