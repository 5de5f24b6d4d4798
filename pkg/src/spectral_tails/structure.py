"""Structure of networks conditioned on a large top eigenvalue.

Samples come either from rejection (true conditional law) or from the planted
ensemble post-selected on the same event (a proxy with a different law). The
two are never pooled.
"""

from __future__ import annotations

import statistics
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .errors import BudgetExceededError
from .graph import SpectralSummary, WeightedGraph, maximal_cliques, maximum_cliques, spectral_summary
from .montecarlo import exceeds_level, iter_chunks
from .rate import psi
from .sampler import ModelParams, as_generator, plant_clique, upper_level
from .tails import upper_tail_naive

__all__ = [
    "ConditioningSpec",
    "ConditionedSample",
    "ConditionedBatch",
    "StructureReport",
    "conditioned_samples",
    "analyze_sample",
    "clique_statistics",
    "eigenvector_report",
    "gaussian_flatness_report",
    "centered_flatness",
    "pairwise_flatness",
    "t_set_size_bound",
]

PROBABILITY_FLOOR = 1e-5
THEOREM_REGIME = 3.0


@dataclass(frozen=True)
class ConditioningSpec:
    delta: float
    method: str = "planted-proxy"
    kappa: float = 0.2
    target_samples: int = 100
    max_trials: int = 1_000_000
    pilot_trials: int = 2_000
    k: int | None = None

    def __post_init__(self):
        if self.method not in ("rejection", "planted-proxy"):
            raise ValueError(f"unknown conditioning method {self.method!r}")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if not 0 < self.kappa < 1:
            raise ValueError("kappa must lie in (0, 1)")
        if self.target_samples < 1 or self.max_trials < 1:
            raise ValueError("target_samples and max_trials must be positive")


@dataclass(frozen=True, eq=False)
class ConditionedSample:
    graph: WeightedGraph
    summary: SpectralSummary
    planted: tuple[int, ...] | None = None


@dataclass(frozen=True, eq=False)
class ConditionedBatch:
    samples: list[ConditionedSample]
    proxy: bool
    attempts: int
    level: float
    pilot: dict | None = None

    def __iter__(self):
        return iter(self.samples)

    def __len__(self):
        return len(self.samples)

    @property
    def acceptance_rate(self) -> float:
        return len(self.samples) / self.attempts if self.attempts else 0.0


@dataclass(frozen=True)
class StructureReport:
    k_X: int
    clique_vertices: tuple[int, ...]
    unique_max_clique: bool
    all_big_cliques_inside: bool
    mass_on_clique: float
    flatness: float
    T_set: tuple[int, ...]
    gaussian_l1_dev: float
    lambda1: float
    in_minimizers: bool
    a1: bool
    a2: bool
    proxy: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        d["clique_vertices"] = list(self.clique_vertices)
        d["T_set"] = list(self.T_set)
        return d


# ----------------------------------------------------------------- sampling


def conditioned_samples(params: ModelParams, spec: ConditioningSpec, rng=None) -> ConditionedBatch:
    """Networks with ``lambda_1 >= sqrt(2 (1+delta) log n)``.

    ``rejection`` first checks with a pilot run that the event frequency is at least
    ``1e-5`` and raises :class:`BudgetExceededError` when ``max_trials`` networks
    do not yield ``target_samples`` hits. ``planted-proxy`` plants a ``k``-clique
    (default ``k = h(delta)``) and keeps samples that meet the same event.
    """
    rng = as_generator(rng, params.seed)
    level = upper_level(params.n, spec.delta)
    if spec.method == "rejection":
        return _rejection(params, spec, rng, level)
    k = spec.k or psi(spec.delta).h
    out, attempts = [], 0
    while len(out) < spec.target_samples:
        if attempts >= spec.max_trials:
            raise BudgetExceededError(f"planted proxy accepted {len(out)} of {attempts} samples")
        attempts += 1
        g, planted = plant_clique(params, k, spec.delta, rng)
        summ = spectral_summary(g)
        if summ.lambda1 >= level:
            out.append(ConditionedSample(g, summ, planted))
    return ConditionedBatch(out, True, attempts, level)


def _rejection(params, spec, rng, level) -> ConditionedBatch:
    pilot = upper_tail_naive(params, spec.delta, spec.pilot_trials, int(rng.integers(2**63)))
    if pilot.ci_high < PROBABILITY_FLOOR:
        raise BudgetExceededError(
            f"event probability below {PROBABILITY_FLOOR:g} (pilot upper bound {pilot.ci_high:.3g}); use planted-proxy"
        )
    out, attempts = [], 0
    while len(out) < spec.target_samples:
        if attempts >= spec.max_trials:
            raise BudgetExceededError(f"rejection accepted {len(out)} of {attempts} trials")
        chunk = min(spec.max_trials - attempts, 5_000)
        for batch in iter_chunks(params.n, params.d, chunk, rng):
            hits = set(np.flatnonzero(exceeds_level(batch, level)).tolist())
            for b in range(batch.batch):
                attempts += 1
                if b in hits:
                    g = batch.graph(int(b))
                    out.append(ConditionedSample(g, spectral_summary(g)))
                    if len(out) == spec.target_samples:
                        return ConditionedBatch(out, False, attempts, level, pilot.to_dict())
    return ConditionedBatch(out, False, attempts, level, pilot.to_dict())


# ----------------------------------------------------------------- analysis


def centered_flatness(v, clique) -> float:
    """``sum_{i in K} (v_i^2 - S/|K|)^2`` with ``S = sum_{i in K} v_i^2``."""
    x = np.asarray(v, dtype=float)[list(clique)] ** 2
    return float(np.sum((x - x.sum() / x.size) ** 2))


def pairwise_flatness(v, clique) -> float:
    """``(1/|K|) sum_{i<j in K} (v_i^2 - v_j^2)^2``; algebraically equal to :func:`centered_flatness`."""
    x = np.asarray(v, dtype=float)[list(clique)] ** 2
    diff = x[:, None] - x[None, :]
    return float(np.sum(np.triu(diff * diff, 1)) / x.size)


def eigenvector_report(z: WeightedGraph, summary: SpectralSummary, kappa: float) -> tuple[float, float, bool, bool]:
    """``(mass, flatness, A1, A2)`` for the top eigenvector on the maximum clique ``K``.

    ``flatness = sum_{i in K} (v_i^2 - 1/k)^2``; ``A1`` is ``mass >= 1 - kappa`` and
    ``A2`` is ``flatness / k <= 40 kappa / k^2``.
    """
    k = summary.clique_number
    if k < 2:
        raise ValueError("the network has no edge")
    v = summary.top_eigenvector
    idx = list(summary.clique_vertices)
    mass = float(np.sum(v[idx] ** 2))
    flat = float(np.sum((v[idx] ** 2 - 1 / k) ** 2))
    return mass, flat, mass >= 1 - kappa, flat <= 40 * kappa / k


def gaussian_flatness_report(
    z: WeightedGraph, summary: SpectralSummary, delta: float, kappa: float
) -> tuple[tuple[int, ...], float]:
    """Near-flat set ``T`` and the normalised l1 deviation of ``|Z_ij|`` on it.

    ``T = {i in K : |v_i^2 - 1/k| < (40 kappa)^(1/4) / k}``; with ``w = level / h`` the
    statistic is ``(1/h^2) sum_{i != j in T} ||Z_ij| - w| / w``, ordered pairs.
    """
    k = summary.clique_number
    if k < 2:
        raise ValueError("the network has no edge")
    v = summary.top_eigenvector
    tol = (40 * kappa) ** 0.25 / k
    T = tuple(i for i in summary.clique_vertices if abs(v[i] ** 2 - 1 / k) < tol)
    h = psi(delta).h
    w = upper_level(z.n, delta) / h
    weights = z.edge_weight_map()
    total = 0.0
    for a in range(len(T)):
        for b in range(a + 1, len(T)):
            i, j = T[a], T[b]
            zij = weights.get((min(i, j), max(i, j)), 0.0)
            total += 2 * abs(abs(zij) - w)
    return T, total / (h * h * w)


def t_set_size_bound(k: int, kappa: float) -> float:
    """``(1 - (40 kappa)^(1/4)) k``: a floor on ``|T|`` whenever ``A2`` holds.

    Under ``A2`` at most ``sqrt(40 kappa) k`` clique vertices leave ``T`` (Markov on
    the squared deviations), which implies this weaker floor.
    """
    return (1 - (40 * kappa) ** 0.25) * k


def analyze_sample(z: WeightedGraph, summary: SpectralSummary, delta: float, kappa: float, proxy: bool = False) -> StructureReport:
    k = summary.clique_number
    K = set(summary.clique_vertices)
    maxes = maximum_cliques(z)
    big = maximal_cliques(z, min_size=4)
    mass, flat, a1, a2 = eigenvector_report(z, summary, kappa)
    T, dev = gaussian_flatness_report(z, summary, delta, kappa)
    return StructureReport(
        k_X=k,
        clique_vertices=tuple(sorted(K)),
        unique_max_clique=len(maxes) == 1,
        all_big_cliques_inside=all(set(c) <= K for c in big),
        mass_on_clique=mass,
        flatness=flat,
        T_set=T,
        gaussian_l1_dev=dev,
        lambda1=summary.lambda1,
        in_minimizers=k in psi(delta).minimizers,
        a1=a1,
        a2=a2,
        proxy=proxy,
    )


def clique_statistics(samples, delta: float, kappa: float = 0.2) -> dict:
    """Frequencies of ``k_X in M(delta)``, a unique maximum clique, and containment of all cliques of size >= 4."""
    samples = list(samples.samples if isinstance(samples, ConditionedBatch) else samples)
    if not samples:
        raise ValueError("need at least one sample")
    if delta <= THEOREM_REGIME:
        warnings.warn(
            f"delta = {delta} is outside the regime delta > 3 where clique concentration is proved",
            stacklevel=2,
        )
    reports = []
    for s in samples:
        g, summ = (s.graph, s.summary) if isinstance(s, ConditionedSample) else s
        reports.append(analyze_sample(g, summ, delta, kappa))
    n = len(reports)
    return {
        "samples": n,
        "freq_in_minimizers": sum(r.in_minimizers for r in reports) / n,
        "freq_unique": sum(r.unique_max_clique for r in reports) / n,
        "freq_contained": sum(r.all_big_cliques_inside for r in reports) / n,
        "freq_a1_a2": sum(r.a1 and r.a2 for r in reports) / n,
        "median_gaussian_dev": statistics.median(r.gaussian_l1_dev for r in reports),
        "reports": reports,
    }
