import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import comb

from spectral_tails.rate import phi, psi
from spectral_tails.sampler import ModelParams, decompose, plan_decomposition, sample_network, sample_truncated_gaussian
from spectral_tails.tails import (
    ComponentBoundParams,
    ExponentFit,
    TailEstimate,
    chi_tail_bound,
    chi_tail_power_form,
    clique_count_moments,
    clique_existence_scaling,
    component_tail_bound,
    double_log_ratio,
    expected_subgraph_bound,
    expected_subgraph_exact,
    fit_exponent,
    gaussian_tail_bounds,
    log_gaussian_tail_bounds,
    lower_tail_mc,
    max_gaussian_bounds,
    max_gaussian_constant,
    planted_argmax,
    planted_exponent,
    upper_tail_naive,
    upper_tail_planted_lower,
    upper_tail_union_bound,
)

from oracles import chi2_sf_quad, gaussian_tail_erfc, gaussian_tail_quad, log_gaussian_tail_quad


# ------------------------------------------------------------------ records


def test_tail_estimate_invariants():
    with pytest.raises(ValueError):
        TailEstimate(0.5, 0.6, 0.7, 10, 5, "naive")
    with pytest.raises(ValueError):
        TailEstimate(0.5, 0.4, 0.7, 10, 11, "naive")
    rec = TailEstimate(0.5, 0.4, 0.6, 10, 5, "naive", {"level": 1.0}).to_dict()
    assert rec["level"] == 1.0 and rec["method"] == "naive"


def test_exponent_fit_invariants():
    with pytest.raises(ValueError):
        ExponentFit((1, 2), (0.0, 0.0), 0.0, (0.0, 0.0))
    with pytest.raises(ValueError):
        ExponentFit((3, 2, 4), (0.0, 0.0, 0.0), 0.0, (0.0, 0.0))


# -------------------------------------------------------------- Gaussian tail


def test_gaussian_tail_at_two():
    lo, hi = gaussian_tail_bounds(2.0)
    assert lo == pytest.approx(0.02160, abs=1e-5)
    assert hi == pytest.approx(0.02699, abs=1e-5)
    assert lo < gaussian_tail_erfc(2.0) < hi
    assert 0.02160 < gaussian_tail_quad(2.0) < 0.02699


def test_gaussian_tail_ratios():
    lo, hi = gaussian_tail_bounds(10.0)
    assert lo / hi == pytest.approx(100 / 101, rel=1e-12)
    assert lo < gaussian_tail_quad(10.0) < hi
    llo, lhi = log_gaussian_tail_bounds(50.0)
    assert math.exp(llo - lhi) == pytest.approx(2500 / 2501, abs=1e-3)


@pytest.mark.parametrize("t", np.geomspace(0.1, 50, 50))
def test_gaussian_sandwich_log_grid(t):
    llo, lhi = log_gaussian_tail_bounds(t)
    q = log_gaussian_tail_quad(t)
    assert llo < q < lhi
    if t < 30:
        lo, hi = gaussian_tail_bounds(t)
        assert lo < gaussian_tail_quad(t) < hi


@pytest.mark.parametrize("t", [0.0, -1.0, math.inf, math.nan])
def test_gaussian_tail_domain(t):
    with pytest.raises(ValueError):
        gaussian_tail_bounds(t)


# ------------------------------------------------------------- max Gaussian


def test_max_gaussian_upper_event_mc():
    n = m = 1000
    delta = 0.3
    level = math.sqrt(2 * (1 + delta) * math.log(n))
    rng = np.random.default_rng(0)
    hits = 0
    trials = 100_000
    for _ in range(trials // 5000):
        hits += int((rng.standard_normal((5000, m)).max(axis=1) >= level).sum())
    lower, _ = max_gaussian_bounds(m, n, delta, c=1.0)
    assert hits / trials >= lower
    exact = 1 - (1 - gaussian_tail_erfc(level)) ** m
    assert exact >= lower


@pytest.mark.parametrize("n,delta", [(20, 0.5), (100, 0.3), (1000, 0.1), (50, 0.8)])
def test_max_gaussian_lower_event_exact(n, delta):
    level = math.sqrt(2 * (1 - delta) * math.log(n))
    exact = (1 - gaussian_tail_erfc(level)) ** n
    _, upper = max_gaussian_bounds(n, n, delta, c=1.0)
    assert exact <= upper


def test_max_gaussian_delta_zero_and_monotone_in_c():
    n = 500
    level = math.sqrt(2 * math.log(n))
    exact = 1 - (1 - gaussian_tail_erfc(level)) ** n
    assert 0.1 < exact < 0.9
    lo, _ = max_gaussian_bounds(n, n, 0.0, 1.0)
    assert lo <= exact
    vals = [max_gaussian_bounds(2 * n, n, 0.2, c)[0] for c in (0.5, 1.0, 2.0)]
    assert vals[0] < vals[1] < vals[2]
    assert max_gaussian_constant(2.0, 0.2) == pytest.approx(2 * max_gaussian_constant(1.0, 0.2))
    with pytest.raises(ValueError):
        max_gaussian_bounds(10, 100, 0.2, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=16, max_value=10**6), st.floats(min_value=0.0, max_value=2.0), st.floats(min_value=0.1, max_value=3.0))
def test_max_gaussian_bounds_dominate_exact(n, delta, c):
    m = math.ceil(c * n)
    up_level = math.sqrt(2 * (1 + delta) * math.log(n))
    q = gaussian_tail_erfc(up_level)
    exact_up = -math.expm1(m * math.log1p(-q))
    lo, hi = max_gaussian_bounds(m, n, delta, c)
    assert lo <= exact_up * (1 + 1e-9)
    if delta < 1:
        low_level = math.sqrt(2 * (1 - delta) * math.log(n))
        exact_low = math.exp(m * math.log1p(-gaussian_tail_erfc(low_level)))
        assert exact_low <= hi * (1 + 1e-9)


# ----------------------------------------------------------- chi-square tail


def test_chi_tail_example_mc():
    m, eps, n, L = 5, 0.1, 10**6, 20.0
    t = math.sqrt(eps * math.log(math.log(n)))
    rng = np.random.default_rng(1)
    x = sample_truncated_gaussian(t, rng, size=(1_000_000, m))
    hits = (np.sum(x * x, axis=1) >= L)
    p = hits.mean()
    assert p <= chi_tail_bound(m, L, eps, n) + 3 * math.sqrt(p * (1 - p) / hits.size)


def test_chi_tail_untruncated_limit():
    # epsilon -> 0 removes the conditioning; compare with the chi-square(1) tail
    assert chi_tail_bound(1, 10.0, 0.0, 10**6) >= chi2_sf_quad(10.0, 1)
    for m, L in [(2, 10.0), (5, 30.0), (10, 40.0)]:
        assert chi_tail_bound(m, L, 0.0, 10**6) >= chi2_sf_quad(L, m)


def test_chi_tail_clamp_and_domain():
    assert chi_tail_bound(1, 1.0001, 0.5, 1000) == 1.0
    with pytest.raises(ValueError):
        chi_tail_bound(3, 3.0, 0.1, 1000)
    with pytest.raises(ValueError):
        chi_tail_bound(3, 10.0, 0.1, 10)


def test_chi_tail_power_form():
    n = 10**8
    a, b, eps, gamma = 6.0, 2.0, 0.1, 0.05
    assert chi_tail_power_form(a, b, eps, gamma, n) == pytest.approx(n ** (-3 + 0.1 + 0.05))


# ----------------------------------------------------------- component tail


def test_component_bound_theta_and_ordering():
    p = ComponentBoundParams(c1=0.0, c2=0.0, c3=1.0, alpha=2.0, gamma=0.01, eta=0.05, epsilon=0.01, k=3)
    assert p.theta == (2 * 0.05**2 + 2 * 0.05**4 * 1.0) ** 0.25
    n = 10**6
    th = p.theta
    first = n ** (-p.alpha / (2 * th * th) + p.epsilon * p.c2 / 2 + p.gamma)
    second = n ** (-p.k / (2 * (p.k - 1)) * (1 - th) ** 2 * p.alpha + p.c1 * p.epsilon / (2 * p.eta**2) + p.gamma)
    assert first < 1e-6 * second
    assert component_tail_bound(p, n) == pytest.approx(first + second)


def test_component_bound_params_validation():
    with pytest.raises(ValueError):
        ComponentBoundParams(1, 1, 1, 1.0, 0.1, 0.6, 0.1, 3)
    with pytest.raises(ValueError):
        ComponentBoundParams(1, 1, 1, 1.0, 0.1, 0.1, 1.5, 3)


def _random_capped_component(rng, size):
    parents = [int(rng.integers(0, i)) for i in range(1, size)]
    edges = {(p, i) for i, p in zip(range(1, size), parents)}
    if rng.random() < 0.5 and size >= 3:
        i, j = sorted(rng.choice(size, 2, replace=False))
        edges.add((int(i), int(j)))
    return sorted(edges)


def test_component_bound_mc_sweep():
    n, eps = 10**6, 0.1
    t = math.sqrt(eps * math.log(math.log(n)))
    rng = np.random.default_rng(2)
    for _ in range(50):
        size = int(rng.integers(2, 9))
        edges = _random_capped_component(rng, size)
        excess = len(edges) - size + 1
        k = 3 if any(
            (a, b) in edges and (b, c) in edges and (a, c) in edges for a, b, c in itertools.combinations(range(size), 3)
        ) else 2
        p = ComponentBoundParams(c1=4.0, c2=8.0, c3=float(excess), alpha=1.5, gamma=0.05, eta=0.2, epsilon=eps, k=k)
        bound = component_tail_bound(p, n)
        trials = 20_000
        mats = np.zeros((trials, size, size))
        w = sample_truncated_gaussian(t, rng, size=(trials, len(edges)))
        for e, (i, j) in enumerate(edges):
            mats[:, i, j] = mats[:, j, i] = w[:, e]
        lam = np.linalg.eigvalsh(mats)[:, -1]
        freq = float(np.mean(lam >= math.sqrt(2 * p.alpha * math.log(n))))
        assert freq <= bound + 3 * math.sqrt(max(freq, 1 / trials) / trials)


# --------------------------------------------------------------- subgraphs


def test_expected_subgraph_mc_k4_l0():
    n, d, eps, k, l = 60, 2.0, 1.0, 4, 0
    plan = plan_decomposition(n, d, eps, 0.5)
    rng = np.random.default_rng(3)
    counts = []
    for _ in range(500):
        z1, _ = decompose(sample_network(ModelParams(n, d), rng), plan, check=False)
        edges = [(i, j) for i, j, _ in z1.edges]
        c = 0
        for combo in itertools.combinations(edges, k + l):
            if len({v for e in combo for v in e}) == k:
                c += 1
        # four edges cannot fit on three vertices, so every counted edge set spans exactly four
        counts.append(c)
    counts = np.array(counts, dtype=float)
    mean, se = counts.mean(), counts.std(ddof=1) / math.sqrt(counts.size)
    exact = expected_subgraph_exact(n, k, l, eps, d)
    assert mean <= expected_subgraph_bound(n, k, l, eps, d)
    assert exact <= expected_subgraph_bound(n, k, l, eps, d)
    assert abs(mean - exact) <= 3 * max(se, exact / math.sqrt(counts.size))


def test_expected_subgraph_edge_scale():
    n, d, eps = 1000, 2.0, 0.5
    plan = plan_decomposition(n, d, eps, 0.5)
    edge_mean = comb(n, 2) * plan.q_exact
    assert expected_subgraph_exact(n, 2, -1, eps, d) == pytest.approx(edge_mean, rel=1e-9)
    assert expected_subgraph_bound(n, 2, -1, eps, d) >= edge_mean


@settings(max_examples=300, deadline=None)
@given(st.integers(min_value=16, max_value=10**7), st.integers(min_value=2, max_value=12), st.data())
def test_expected_subgraph_bound_dominates_exact(n, k, data):
    k = min(k, n)
    l = data.draw(st.integers(min_value=-1, max_value=k * (k - 1) // 2 - k))
    eps = data.draw(st.floats(min_value=0.05, max_value=1.0))
    d = data.draw(st.floats(min_value=0.1, max_value=5.0))
    assert expected_subgraph_exact(n, k, l, eps, d) <= expected_subgraph_bound(n, k, l, eps, d) * (1 + 1e-9)


def test_expected_subgraph_domain_and_k_equals_n():
    with pytest.raises(ValueError):
        expected_subgraph_bound(100, 4, 3, 0.5, 2.0)
    with pytest.raises(ValueError):
        expected_subgraph_bound(100, 4, -2, 0.5, 2.0)
    assert math.isfinite(expected_subgraph_bound(20, 20, 0, 0.5, 2.0))


# ---------------------------------------------------------- clique existence


def test_clique_count_moments_small_exact():
    # n = 4, k = 3: enumerate all graphs on 4 vertices
    n, k, p = 4, 3, 0.3
    pairs = list(itertools.combinations(range(n), 2))
    m1 = m2 = 0.0
    for mask in range(1 << len(pairs)):
        es = {pairs[b] for b in range(len(pairs)) if mask >> b & 1}
        prob = p ** len(es) * (1 - p) ** (len(pairs) - len(es))
        iso = 0
        for S in itertools.combinations(range(n), k):
            inside = all(e in es for e in itertools.combinations(S, 2))
            out = all(not ((a in S) ^ (b in S)) for a, b in es)
            iso += inside and out
        m1 += prob * iso
        m2 += prob * iso * iso
    e1, e2 = clique_count_moments(n, k, p)
    assert e1 == pytest.approx(m1, rel=1e-12)
    assert e2 == pytest.approx(m2, rel=1e-12)


def test_clique_scaling_triangles_flat():
    fit = clique_existence_scaling([64, 128, 256, 512], 3, 2.0, 4_000, rng=1)
    assert abs(fit.slope) < 0.15


def test_clique_scaling_k4():
    fit = clique_existence_scaling([64, 128, 256], 4, 4.0, 6_000, rng=2)
    assert fit.slope == pytest.approx(-2.0, abs=0.5)


def test_clique_scaling_no_edges():
    fit = clique_existence_scaling([32, 64, 128], 3, 0.0, 100, rng=3)
    assert all(lp == -math.inf for lp in fit.log_probs) and math.isnan(fit.slope)
    with pytest.raises(ValueError):
        clique_existence_scaling([32, 64, 128], 2, 1.0, 10)


# ------------------------------------------------------------------ planted


@pytest.mark.parametrize("delta", [0.5, 1, 3, 10, 23, 50, 100])
def test_planted_exponent_is_minus_phi(delta):
    for k in range(2, 10):
        assert planted_exponent(delta, k) == pytest.approx(-phi(delta, k), abs=1e-12)
    assert planted_argmax(delta) == psi(delta).minimizers


def test_planted_k2_exact_and_above_max_gaussian():
    for n in (128, 512, 2048):
        params = ModelParams(n, 2.0)
        for delta in (0.3, 0.5, 1.0):
            est = upper_tail_planted_lower(params, delta, 2, 0)
            assert est.details["exact"]
            c = params.d / 2
            lower, _ = max_gaussian_bounds(math.ceil(c * n), n, delta, c)
            assert est.probability >= lower


def test_planted_k3_has_consistent_factors():
    est = upper_tail_planted_lower(ModelParams(256, 2.0), 0.5, 3, 2_000, rng=4)
    assert est.ci_low <= est.probability <= est.ci_high
    assert est.details["paley_zygmund"] <= est.ci_high + 1e-12
    with pytest.raises(ValueError):
        upper_tail_planted_lower(ModelParams(256, 2.0), 0.5, 1, 10)


# -------------------------------------------------------------------- naive


def test_upper_naive_edge_cases():
    params = ModelParams(128, 2.0)
    with pytest.raises(ValueError):
        upper_tail_naive(params, 0.5, 0)
    est = upper_tail_naive(params, 200.0, 500, rng=1)
    assert est.hits == 0 and est.ci_low == 0 and est.ci_high > 0


def test_upper_naive_deterministic_and_monotone():
    params = ModelParams(256, 2.0, seed=5)
    probs = [upper_tail_naive(params, d, 1_500, block_size=500).probability for d in (0.2, 0.5, 1.0, 2.0)]
    assert probs == sorted(probs, reverse=True)
    again = upper_tail_naive(params, 0.5, 1_500, block_size=500)
    assert again.probability == probs[1]


def test_upper_naive_min_hits_stops_early():
    est = upper_tail_naive(ModelParams(128, 2.0), 0.5, 50_000, rng=2, min_hits=50, block_size=500)
    assert 50 <= est.hits and est.trials < 50_000


def test_lower_mc_edge_cases():
    params = ModelParams(512, 2.0)
    est = lower_tail_mc(params, 0.99, 2_000, rng=1)
    assert est.hits == 0 and est.ci_low == 0
    a = lower_tail_mc(ModelParams(64, 1.0, seed=3), 0.3, 2_000, block_size=500)
    b = lower_tail_mc(ModelParams(64, 1.0, seed=3), 0.3, 2_000, block_size=500)
    assert a.hits == b.hits
    with pytest.raises(ValueError):
        lower_tail_mc(params, 1.0, 10)


def test_lower_mc_monotone_in_delta():
    params = ModelParams(128, 1.0, seed=6)
    probs = [lower_tail_mc(params, d, 3_000, block_size=1_000).probability for d in (0.1, 0.3, 0.6)]
    assert probs == sorted(probs, reverse=True)


def test_double_log_ratio():
    assert double_log_ratio(math.exp(-math.e), math.e) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        double_log_ratio(0.0, 100)


def test_union_bound_brackets_naive():
    params = ModelParams(256, 1.0)
    naive = upper_tail_naive(params, 1.0, 4_000, rng=7)
    union = upper_tail_union_bound(params, 1.0, 400, rng=8)
    assert 0 <= union.probability <= 1
    assert naive.ci_low <= union.ci_high


# -------------------------------------------------------------------- fitting


def test_fit_exact_power_law():
    ns = [128, 256, 512, 1024, 2048]
    fit = fit_exponent([(n, n**-1.5) for n in ns])
    assert fit.slope == pytest.approx(-1.5, abs=1e-12)


def test_fit_noisy_power_law():
    rng = np.random.default_rng(9)
    ns = [128, 256, 512, 1024, 2048]
    fit = fit_exponent([(n, 0.7 * n ** -psi(3).psi * (1 + 0.05 * rng.standard_normal())) for n in ns])
    assert fit.slope == pytest.approx(-3.0, abs=0.1)
    assert fit.slope_ci[0] <= fit.slope <= fit.slope_ci[1]


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_exponent([(128, 0.1), (256, 0.0), (512, 0.01)])
    with pytest.raises(ValueError):
        fit_exponent([(128, 0.1), (256, 0.05)])
