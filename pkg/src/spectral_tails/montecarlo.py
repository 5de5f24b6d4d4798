"""Batched Monte Carlo over many independent networks.

Trials are cut into fixed-size blocks. Block ``b`` of task ``t`` draws from
``SeedSequence(master, spawn_key=(t, b))`` so hit counts do not depend on how
blocks are spread over worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components as _cc
from scipy.sparse.linalg import eigsh
from scipy.stats import beta

from .sampler import EdgeBatch, sample_edge_batch

__all__ = [
    "clopper_pearson",
    "block_rng",
    "exceeds_level",
    "lambda1_batch",
    "BlockResult",
    "run_blocks",
]

DENSE_LIMIT = 256
MAX_EDGES_PER_CHUNK = 2_000_000
MAX_DENSE_ENTRIES = 20_000_000
POWER_STEPS = 24


def clopper_pearson(hits: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    if trials <= 0:
        raise ValueError("trials must be positive")
    a = 1 - level
    lo = 0.0 if hits == 0 else float(beta.ppf(a / 2, hits, trials - hits + 1))
    hi = 1.0 if hits == trials else float(beta.ppf(1 - a / 2, hits + 1, trials - hits))
    return lo, hi


def block_rng(master: int, task: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(master), spawn_key=(int(task), int(block))))


def _sparse_top(rows, cols, w, size) -> float:
    a = sp.coo_matrix((np.concatenate([w, w]), (np.concatenate([rows, cols]), np.concatenate([cols, rows]))), shape=(size, size)).tocsr()
    v0 = np.random.default_rng(size).standard_normal(size)
    return float(eigsh(a, k=1, which="LA", v0=v0, tol=1e-12)[0][0])


@dataclass(frozen=True, eq=False)
class _Components:
    """Components with two or more vertices of a sub-batch, with per-edge local indices."""

    graph: np.ndarray  # graph id of each component
    size: np.ndarray
    edge_comp: np.ndarray
    li: np.ndarray
    lj: np.ndarray
    w: np.ndarray
    vert_comp: np.ndarray
    vert_id: np.ndarray  # sub-batch vertex ids, grouped by component


def _components(batch: EdgeBatch, graphs: np.ndarray) -> _Components:
    sel = np.isin(batch.gid, graphs)
    gid, r, c, w = batch.gid[sel], batch.rows[sel], batch.cols[sel], batch.weights[sel]
    slot = np.searchsorted(graphs, gid)
    u = slot * batch.n + r
    v = slot * batch.n + c
    total = graphs.size * batch.n
    adj = sp.coo_matrix((np.ones(u.size), (u, v)), shape=(total, total)).tocsr()
    _, labels = _cc(adj, directed=False)
    verts = np.unique(np.concatenate([u, v]))
    # relabel so that components are numbered 0..C-1 over non-isolated vertices
    _, vcomp = np.unique(labels[verts], return_inverse=True)
    order = np.argsort(vcomp, kind="stable")
    verts, vcomp = verts[order], vcomp[order]
    size = np.bincount(vcomp)
    first = np.concatenate([[0], np.cumsum(size)[:-1]])
    local = np.zeros(total, dtype=np.int64)
    local[verts] = np.arange(verts.size) - first[vcomp]
    comp_of = np.zeros(total, dtype=np.int64)
    comp_of[verts] = vcomp
    graph = graphs[verts[first] // batch.n]
    return _Components(graph, size, comp_of[u], local[u], local[v], w, vcomp, verts)


def _exact_tops(cs: _Components, which: np.ndarray) -> np.ndarray:
    """Largest eigenvalue of the listed components."""
    tops = np.zeros(which.size)
    if which.size == 0:
        return tops
    pos = np.full(cs.size.size, -1, dtype=np.int64)
    pos[which] = np.arange(which.size)
    edge_sel = pos[cs.edge_comp] >= 0
    e_comp, e_i, e_j, e_w = cs.edge_comp[edge_sel], cs.li[edge_sel], cs.lj[edge_sel], cs.w[edge_sel]
    sizes = cs.size[which]
    for s in np.unique(sizes):
        members = which[sizes == s]
        if s > DENSE_LIMIT:
            for c in members:
                m = e_comp == c
                tops[pos[c]] = _sparse_top(e_i[m], e_j[m], e_w[m], int(s))
            continue
        step = max(1, int(MAX_DENSE_ENTRIES // (s * s)))
        for lo in range(0, members.size, step):
            chunk = members[lo : lo + step]
            rank = np.full(cs.size.size, -1, dtype=np.int64)
            rank[chunk] = np.arange(chunk.size)
            m = rank[e_comp] >= 0
            mats = np.zeros((chunk.size, s, s))
            rk = rank[e_comp[m]]
            mats[rk, e_i[m], e_j[m]] = e_w[m]
            mats[rk, e_j[m], e_i[m]] = e_w[m]
            tops[pos[chunk]] = np.linalg.eigvalsh(mats)[:, -1]
    return tops


def _power_brackets(cs: _Components, which: np.ndarray, iters: int = POWER_STEPS):
    """Collatz-Wielandt bounds on ``rho(|A_C|)`` from power iteration on ``|A_C| + I``.

    For a positive vector ``x``, ``min_i (Bx)_i / x_i <= rho(B) <= max_i (Bx)_i / x_i``
    on an irreducible nonnegative ``B``. ``lambda_1(A) <= rho(|A|)`` always, with
    equality on trees (flip signs along the tree).
    """
    sizes = cs.size[which]
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    rank = np.full(cs.size.size, -1, dtype=np.int64)
    rank[which] = np.arange(which.size)
    e = rank[cs.edge_comp] >= 0
    base = starts[rank[cs.edge_comp[e]]]
    pu = base + cs.li[e]
    pv = base + cs.lj[e]
    w = np.abs(cs.w[e])
    nv = int(sizes.sum())
    seg = np.repeat(np.arange(which.size), sizes)
    x = np.ones(nv)
    lo = hi = None
    for _ in range(iters):
        y = x + np.bincount(pu, w * x[pv], minlength=nv) + np.bincount(pv, w * x[pu], minlength=nv)
        ratio = y / x
        hi = np.maximum.reduceat(ratio, starts) - 1.0
        lo = np.minimum.reduceat(ratio, starts) - 1.0
        x = y / np.maximum.reduceat(y, starts)[seg]
    return lo, hi


def exceeds_level(batch: EdgeBatch, level: float) -> np.ndarray:
    """Boolean per graph: ``lambda_1 >= level``.

    Cheap screens decide most graphs: ``lambda_1 >= max |a_ij|`` and
    ``lambda_1^2 <= max_i sum_j |a_ij| r_j`` with ``r`` the absolute row sums.
    Undecided components are screened again one by one: on trees a star test
    vector gives ``lambda_1 >= ||a_i||_2``, and ``lambda_1^2 <= (1 - 1/|C|) ||A_C||_F^2``
    holds everywhere. Whatever is left gets an exact eigenvalue solve.
    """
    B, n = batch.batch, batch.n
    if batch.weights.size == 0:
        return np.full(B, level <= 0)
    absw = np.abs(batch.weights)
    u = batch.gid * n + batch.rows
    v = batch.gid * n + batch.cols
    sq = np.bincount(u, absw * absw, minlength=B * n) + np.bincount(v, absw * absw, minlength=B * n)
    level_sq = level * level
    out = np.zeros(B, dtype=bool)
    np.logical_or.at(out, batch.gid, absw >= level)
    r = np.bincount(u, absw, minlength=B * n) + np.bincount(v, absw, minlength=B * n)
    s = np.bincount(u, absw * r[v], minlength=B * n) + np.bincount(v, absw * r[u], minlength=B * n)
    row_bound = s.reshape(B, n).max(axis=1)
    undecided = np.flatnonzero(~out & (row_bound >= level_sq))
    if undecided.size == 0:
        return out
    cs = _components(batch, undecided)
    slot = cs.vert_id // n
    orig = undecided[slot] * n + cs.vert_id % n
    ncomp = cs.size.size
    comp_s = np.zeros(ncomp)
    np.maximum.at(comp_s, cs.vert_comp, s[orig])
    comp_sq = np.zeros(ncomp)
    np.maximum.at(comp_sq, cs.vert_comp, sq[orig])
    frob = 2.0 * np.bincount(cs.edge_comp, cs.w * cs.w, minlength=ncomp)
    tree = np.bincount(cs.edge_comp, minlength=ncomp) == cs.size - 1
    star_hit = tree & (comp_sq >= level_sq)
    out[cs.graph[star_hit]] = True
    todo = np.flatnonzero(~star_hit & (comp_s >= level_sq) & ((1 - 1 / cs.size) * frob >= level_sq))
    if todo.size:
        lo, hi = _power_brackets(cs, todo)
        certain_hit = tree[todo] & (lo >= level)
        out[cs.graph[todo[certain_hit]]] = True
        todo = todo[~certain_hit & (hi >= level)]
    tops = _exact_tops(cs, todo)
    out[cs.graph[todo[tops >= level]]] = True
    return out


def lambda1_batch(batch: EdgeBatch) -> np.ndarray:
    """Exact largest eigenvalue of every graph in the batch."""
    out = np.zeros(batch.batch)
    if batch.weights.size == 0:
        return out
    cs = _components(batch, np.arange(batch.batch))
    tops = _exact_tops(cs, np.arange(cs.size.size))
    np.maximum.at(out, cs.graph, tops)
    return out


@dataclass(frozen=True)
class BlockResult:
    block: int
    trials: int
    hits: int
    extra: float = 0.0


def iter_chunks(n: int, d: float, trials: int, rng):
    """Yield edge batches covering ``trials`` graphs with bounded memory."""
    per_graph = max(1.0, n * d / 2)
    chunk = max(1, min(trials, int(MAX_EDGES_PER_CHUNK / per_graph)))
    done = 0
    while done < trials:
        b = min(chunk, trials - done)
        yield sample_edge_batch(n, d, b, rng)
        done += b


def _run_block(args) -> BlockResult:
    fn, master, task, block, size, payload = args
    rng = block_rng(master, task, block)
    return fn(rng, size, block, payload)


def run_blocks(
    fn: Callable,
    payload,
    *,
    master: int,
    task: int,
    max_trials: int,
    block_size: int,
    min_hits: int | None = None,
    threads: int = 1,
) -> list[BlockResult]:
    """Evaluate trial blocks ``fn(rng, size, block, payload)`` until done.

    Without ``min_hits`` all ``ceil(max_trials / block_size)`` blocks run.
    With it, blocks run in waves and the result is the shortest block prefix whose
    hits reach ``min_hits``; the prefix is the same for every thread count.
    """
    if max_trials < 1:
        raise ValueError("trials must be at least 1")
    n_blocks = math.ceil(max_trials / block_size)
    sizes = [min(block_size, max_trials - b * block_size) for b in range(n_blocks)]
    results: list[BlockResult] = []
    pool = ProcessPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        b = 0
        while b < n_blocks:
            wave = range(b, min(n_blocks, b + max(1, threads)))
            jobs = [(fn, master, task, i, sizes[i], payload) for i in wave]
            results.extend(pool.map(_run_block, jobs) if pool else map(_run_block, jobs))
            b = wave.stop
            if min_hits is not None and sum(r.hits for r in results) >= min_hits:
                break
    finally:
        if pool:
            pool.shutdown()
    if min_hits is not None:
        acc = 0
        for i, r in enumerate(results):
            acc += r.hits
            if acc >= min_hits:
                return results[: i + 1]
    return results
