"""Weighted graphs and their deterministic spectral theory.

A :class:`WeightedGraph` stores the upper triangle of a symmetric, zero-diagonal
conductance matrix. Structural questions (cliques, degrees, components) look
only at edges with nonzero weight.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components as _cc
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import ConvergenceError, InvariantError

__all__ = [
    "WeightedGraph",
    "SpectralSummary",
    "MotzkinStrausResult",
    "largest_eigenvalue",
    "frobenius_sq",
    "clique_number",
    "maximum_cliques",
    "maximal_cliques",
    "motzkin_straus_optimize",
    "spectral_bound_gap",
    "tree_product_bound",
    "connected_components",
    "component_labels",
    "tree_excess",
    "max_degree",
    "spectral_summary",
    "complete_graph",
    "read_graph",
    "write_edge_list",
    "write_json",
]

DENSE_CUTOFF = 256
BOUND_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Undirected network on ``n`` vertices with edges ``(rows[e], cols[e], weights[e])``.

    ``rows < cols`` elementwise and no pair repeats. ``labels`` maps local vertex
    indices to the vertex ids of a parent graph (set on connected components).
    """

    n: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    labels: np.ndarray | None = field(default=None)

    def __post_init__(self):
        n = int(self.n)
        if n < 0:
            raise ValueError("n must be nonnegative")
        rows = np.ascontiguousarray(self.rows, dtype=np.int64)
        cols = np.ascontiguousarray(self.cols, dtype=np.int64)
        weights = np.ascontiguousarray(self.weights, dtype=float)
        if not (rows.shape == cols.shape == weights.shape) or rows.ndim != 1:
            raise ValueError("rows, cols and weights must be 1-d arrays of equal length")
        if rows.size:
            if rows.min() < 0 or cols.max() >= n:
                raise ValueError("edge endpoint out of range")
            if np.any(rows >= cols):
                raise ValueError("edges must satisfy i < j (no self-loops)")
            keys = rows * n + cols
            if np.unique(keys).size != keys.size:
                raise ValueError("duplicate edge")
            if not np.all(np.isfinite(weights)):
                raise ValueError("edge weights must be finite")
        labels = self.labels
        if labels is not None:
            labels = np.ascontiguousarray(labels, dtype=np.int64)
            if labels.shape != (n,):
                raise ValueError("labels must have one entry per vertex")
            labels.setflags(write=False)
        for arr in (rows, cols, weights):
            arr.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[float]], labels=None) -> "WeightedGraph":
        """Build from ``(i, j, weight)`` triples; endpoint order is normalised."""
        triples = [(int(i), int(j), float(w)) for i, j, w in edges]
        if any(i == j for i, j, _ in triples):
            raise ValueError("self-loops are not allowed")
        rows = np.array([min(i, j) for i, j, _ in triples], dtype=np.int64)
        cols = np.array([max(i, j) for i, j, _ in triples], dtype=np.int64)
        weights = np.array([w for _, _, w in triples], dtype=float)
        return cls(n, rows, cols, weights, labels)

    @classmethod
    def empty(cls, n: int) -> "WeightedGraph":
        z = np.zeros(0, dtype=np.int64)
        return cls(n, z, z, np.zeros(0))

    @property
    def m(self) -> int:
        return int(self.rows.size)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return [(int(i), int(j), float(w)) for i, j, w in zip(self.rows, self.cols, self.weights)]

    def support(self) -> "WeightedGraph":
        """The same graph with zero-weight edges dropped."""
        keep = self.weights != 0
        if keep.all():
            return self
        return WeightedGraph(self.n, self.rows[keep], self.cols[keep], self.weights[keep], self.labels)

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        a[self.rows, self.cols] = self.weights
        a[self.cols, self.rows] = self.weights
        return a

    def to_sparse(self) -> sp.csr_matrix:
        r = np.concatenate([self.rows, self.cols])
        c = np.concatenate([self.cols, self.rows])
        w = np.concatenate([self.weights, self.weights])
        return sp.csr_matrix((w, (r, c)), shape=(self.n, self.n))

    def induced(self, vertices: Sequence[int]) -> "WeightedGraph":
        """Induced subgraph on ``vertices`` relabelled to ``0..len-1``."""
        vertices = np.asarray(vertices, dtype=np.int64)
        local = np.full(self.n, -1, dtype=np.int64)
        local[vertices] = np.arange(vertices.size)
        keep = (local[self.rows] >= 0) & (local[self.cols] >= 0)
        a, b = local[self.rows[keep]], local[self.cols[keep]]
        parent = vertices if self.labels is None else self.labels[vertices]
        return WeightedGraph(vertices.size, np.minimum(a, b), np.maximum(a, b), self.weights[keep], parent)

    def global_labels(self) -> np.ndarray:
        return np.arange(self.n) if self.labels is None else self.labels

    def edge_weight_map(self) -> dict[tuple[int, int], float]:
        return {(int(i), int(j)): float(w) for i, j, w in zip(self.rows, self.cols, self.weights)}


@dataclass(frozen=True, eq=False)
class SpectralSummary:
    lambda1: float
    frob_sq: float
    clique_number: int
    clique_vertices: tuple[int, ...]
    top_eigenvector: np.ndarray


@dataclass(frozen=True, eq=False)
class MotzkinStrausResult:
    value: float
    weights: np.ndarray
    clique: tuple[int, ...]
    trace: tuple[float, ...]


def complete_graph(k: int, weight: float = 1.0) -> WeightedGraph:
    iu = np.triu_indices(k, 1)
    return WeightedGraph(k, iu[0], iu[1], np.full(iu[0].size, float(weight)))


# ---------------------------------------------------------------- components


def component_labels(g: WeightedGraph) -> tuple[int, np.ndarray]:
    s = g.support()
    adj = sp.csr_matrix((np.ones(s.m), (s.rows, s.cols)), shape=(g.n, g.n))
    count, labels = _cc(adj, directed=False)
    return int(count), labels


def connected_components(g: WeightedGraph) -> list[WeightedGraph]:
    """Components of the nonzero support, each carrying its original vertex labels."""
    if g.n == 0:
        return []
    count, labels = component_labels(g)
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(count + 1))
    return [g.support().induced(order[bounds[c] : bounds[c + 1]]) for c in range(count)]


def _is_connected(g: WeightedGraph) -> bool:
    return g.n <= 1 or component_labels(g)[0] == 1


def tree_excess(c: WeightedGraph) -> int:
    """``|E| - |V| + 1`` of a connected graph; zero exactly for trees."""
    if c.n == 0 or not _is_connected(c):
        raise ValueError("tree_excess requires a connected graph")
    return c.support().m - c.n + 1


def max_degree(g: WeightedGraph) -> int:
    s = g.support()
    if s.m == 0:
        return 0
    return int(np.bincount(np.concatenate([s.rows, s.cols]), minlength=g.n).max())


def frobenius_sq(g: WeightedGraph) -> float:
    """Squared Frobenius norm of the symmetric matrix, both triangles counted."""
    return float(2.0 * np.dot(g.weights, g.weights))


# ------------------------------------------------------------------ spectrum


def _component_top(a, size: int, rel_tol: float, max_iter: int | None):
    if size <= DENSE_CUTOFF:
        dense = a.toarray() if sp.issparse(a) else a
        w, v = np.linalg.eigh(dense)
        return float(w[-1]), v[:, -1]
    v0 = np.random.default_rng(size).standard_normal(size)
    try:
        w, v = eigsh(a, k=1, which="LA", tol=rel_tol * 1e-2, v0=v0, maxiter=max_iter or 20 * size)
    except ArpackNoConvergence as exc:
        if exc.eigenvalues.size:
            lam, vec = float(exc.eigenvalues[-1]), exc.eigenvectors[:, -1]
            res = float(np.linalg.norm(a @ vec - lam * vec))
        else:
            res = float("inf")
        raise ConvergenceError("Lanczos did not converge", res) from exc
    return float(w[0]), v[:, 0]


def largest_eigenvalue(
    g: WeightedGraph, rel_tol: float = 1e-10, max_iter: int | None = None
) -> tuple[float, np.ndarray]:
    """Largest eigenvalue of ``A(g)`` and a unit eigenvector of length ``g.n``.

    Solved per connected component: dense LAPACK up to ``DENSE_CUTOFF`` vertices,
    Lanczos (ARPACK) above. The returned pair is checked against
    ``||A v - lambda v|| <= rel_tol * max(1, |lambda|)``.
    """
    if g.n == 0:
        raise ValueError("graph has no vertices")
    if not 0 < rel_tol <= 1e-3:
        raise ValueError("rel_tol must lie in (0, 1e-3]")
    vec = np.zeros(g.n)
    s = g.support()
    if s.m == 0:
        vec[0] = 1.0
        return 0.0, vec
    count, labels = component_labels(s)
    sizes = np.bincount(labels, minlength=count)
    best_lam, best_vec, best_members = 0.0, None, None
    a_full = s.to_sparse()
    for c in np.flatnonzero(sizes > 1):
        members = np.flatnonzero(labels == c)
        sub = a_full[members][:, members]
        lam, v = _component_top(sub, members.size, rel_tol, max_iter)
        res = float(np.linalg.norm(sub @ v - lam * v))
        if res > rel_tol * max(1.0, abs(lam)):
            raise ConvergenceError("eigenpair residual above tolerance", res)
        if best_vec is None or lam > best_lam:
            best_lam, best_vec, best_members = lam, v, members
    vec[best_members] = best_vec / np.linalg.norm(best_vec)
    # fix the sign so the largest-magnitude entry is positive
    if vec[np.argmax(np.abs(vec))] < 0:
        vec = -vec
    return best_lam, vec


# ------------------------------------------------------------------- cliques


def _bit_adjacency(g: WeightedGraph) -> list[int]:
    adj = [0] * g.n
    s = g.support()
    for i, j in zip(s.rows.tolist(), s.cols.tolist()):
        adj[i] |= 1 << j
        adj[j] |= 1 << i
    return adj


def _bits(x: int) -> list[int]:
    out = []
    while x:
        low = x & -x
        out.append(low.bit_length() - 1)
        x ^= low
    return out


def _color_sort(adj: list[int], p: int) -> tuple[list[int], list[int]]:
    order, colors = [], []
    color, uncolored = 0, p
    while uncolored:
        color += 1
        q = uncolored
        while q:
            low = q & -q
            v = low.bit_length() - 1
            q &= ~low & ~adj[v]
            uncolored &= ~low
            order.append(v)
            colors.append(color)
    return order, colors


def _max_clique_bits(adj: list[int], candidates: int, lower: int = 0) -> tuple[int, int]:
    """Branch and bound with greedy-coloring bounds; returns ``(size, bitset)``."""
    best_size, best_set = lower, 0

    def expand(size: int, current: int, p: int) -> None:
        nonlocal best_size, best_set
        order, colors = _color_sort(adj, p)
        for idx in range(len(order) - 1, -1, -1):
            if size + colors[idx] <= best_size:
                return
            v = order[idx]
            new_p = p & adj[v]
            if new_p:
                expand(size + 1, current | (1 << v), new_p)
            elif size + 1 > best_size:
                best_size, best_set = size + 1, current | (1 << v)
            p &= ~(1 << v)

    if candidates:
        expand(0, 0, candidates)
    return best_size, best_set


def clique_number(g: WeightedGraph) -> tuple[int, tuple[int, ...]]:
    """Exact clique number of the nonzero support and one maximum clique."""
    if g.n == 0:
        return 0, ()
    adj = _bit_adjacency(g)
    best, witness = 1, 1
    if any(adj):
        count, labels = component_labels(g)
        sizes = np.bincount(labels, minlength=count)
        for c in np.argsort(-sizes, kind="stable"):
            if sizes[c] <= best:
                break
            members = np.flatnonzero(labels == c).tolist()
            cand = sum(1 << v for v in members)
            size, bits = _max_clique_bits(adj, cand, lower=best)
            if size > best:
                best, witness = size, bits
    return best, tuple(_bits(witness))


def maximal_cliques(g: WeightedGraph, min_size: int = 1) -> list[tuple[int, ...]]:
    """All maximal cliques with at least ``min_size`` vertices (Bron-Kerbosch with pivot)."""
    adj = _bit_adjacency(g)
    out: list[tuple[int, ...]] = []

    def bk(r: int, rsize: int, p: int, x: int) -> None:
        if not p and not x:
            if rsize >= min_size:
                out.append(tuple(_bits(r)))
            return
        if rsize + bin(p).count("1") < min_size:
            return
        pivot = max(_bits(p | x), key=lambda u: bin(p & adj[u]).count("1"))
        for v in _bits(p & ~adj[pivot]):
            bk(r | (1 << v), rsize + 1, p & adj[v], x & adj[v])
            p &= ~(1 << v)
            x |= 1 << v

    if g.n:
        # isolated vertices are maximal cliques of size one
        bk(0, 0, (1 << g.n) - 1, 0)
    return sorted(out)


def maximum_cliques(g: WeightedGraph) -> list[tuple[int, ...]]:
    k, _ = clique_number(g)
    if k == 0:
        return []
    return [c for c in maximal_cliques(g, min_size=k) if len(c) == k]


# ------------------------------------------------------------ Motzkin-Straus


def _transport(a: np.ndarray, f: np.ndarray) -> tuple[np.ndarray, list[float]]:
    """Move mass between non-adjacent support vertices until the support is a clique.

    Each step moves all of ``f[b]`` onto a non-neighbour ``a_`` whose neighbourhood
    sum is at least that of ``b``; the objective changes by
    ``f[b] * (s[a_] - s[b]) >= 0``. Ties send mass to the lower index.
    """
    f = f.copy()
    trace = [0.5 * float(f @ a @ f)]
    while True:
        supp = f > 0
        idx = np.flatnonzero(supp)
        sub = a[np.ix_(idx, idx)]
        nonadj = sub == 0
        np.fill_diagonal(nonadj, False)
        has_partner = nonadj.any(axis=1)
        if not has_partner.any():
            break
        s = a[idx] @ f
        cand = np.flatnonzero(has_partner)
        smin = s[cand].min()
        loser_local = cand[s[cand] == smin].max()
        partners = np.flatnonzero(nonadj[loser_local])
        pmax = s[partners].max()
        winner_local = partners[s[partners] == pmax].min()
        loser, winner = idx[loser_local], idx[winner_local]
        f[winner] += f[loser]
        f[loser] = 0.0
        trace.append(0.5 * float(f @ a @ f))
    return f, trace


def motzkin_straus_optimize(g: WeightedGraph) -> MotzkinStrausResult:
    """Maximise ``sum_{i~j, i<j} f_i f_j`` over the probability simplex by mass transport.

    Transport runs from the barycenter of the non-isolated vertices and from the
    barycenter of every closed neighbourhood; the best terminal clique ``m`` gives
    the value ``(m - 1) / (2m)`` attained by the uniform vector on it. The result is
    checked against the exact clique number.
    """
    s = g.support()
    if s.m == 0:
        raise ValueError("Motzkin-Straus optimisation needs at least one edge")
    a = s.to_dense() != 0
    active = np.flatnonzero(a.any(axis=1))
    starts = []
    f0 = np.zeros(g.n)
    f0[active] = 1.0 / active.size
    starts.append(f0)
    for v in active:
        nb = np.flatnonzero(a[v])
        f = np.zeros(g.n)
        f[v] = 1.0
        f[nb] = 1.0
        starts.append(f / f.sum())
    af = a.astype(float)
    best = None
    for f in starts:
        terminal, trace = _transport(af, f)
        clique = tuple(int(i) for i in np.flatnonzero(terminal > 0))
        if best is None or len(clique) > len(best[1]):
            best = (terminal, clique, trace)
    _, clique, trace = best
    m = len(clique)
    uniform = np.zeros(g.n)
    uniform[list(clique)] = 1.0 / m
    value = (m - 1) / (2 * m)
    trace = trace + [value]
    k, _ = clique_number(g)
    if abs(value - (k - 1) / (2 * k)) > 1e-12:
        raise InvariantError(
            f"transport ended on a {m}-clique but the clique number is {k}"
        )
    return MotzkinStrausResult(value=value, weights=uniform, clique=clique, trace=tuple(trace))


# ------------------------------------------------------------- spectral bound


def spectral_bound_gap(g: WeightedGraph) -> float:
    """``((k-1)/k) * ||A||_F^2 - lambda_1^2``; nonnegative up to ``1e-9 ||A||_F^2``."""
    s = g.support()
    if s.m == 0:
        return 0.0
    k, _ = clique_number(s)
    frob = frobenius_sq(s)
    lam, _ = largest_eigenvalue(s)
    return (k - 1) / k * frob - lam * lam


def tree_product_bound(tree: WeightedGraph, values, eta: float) -> tuple[float, float]:
    """Compare ``sum_{i~j} v_i v_j`` on a tree with ``s^2/4`` or ``eta (s - eta)``."""
    values = np.asarray(values, dtype=float)
    if values.shape != (tree.n,):
        raise ValueError("need one value per vertex")
    if eta <= 0:
        raise ValueError("eta must be positive")
    if np.any(values < 0) or np.any(values > eta):
        raise ValueError("values must lie in [0, eta]")
    if tree.n == 0 or tree.m != tree.n - 1 or not _is_connected(tree):
        raise ValueError("input is not a tree")
    lhs = float(np.sum(values[tree.rows] * values[tree.cols]))
    total = float(values.sum())
    rhs = total * total / 4 if total < 2 * eta else eta * (total - eta)
    if lhs > rhs + 1e-12:
        raise InvariantError(f"tree product bound violated: {lhs} > {rhs}")
    return lhs, rhs


def spectral_summary(g: WeightedGraph, rel_tol: float = 1e-10) -> SpectralSummary:
    """Top eigenpair, Frobenius norm and a maximum clique of ``g``.

    When several maximum cliques exist, the one carrying the most eigenvector
    mass is reported.
    """
    lam, vec = largest_eigenvalue(g, rel_tol)
    k, witness = clique_number(g)
    cliques = maximum_cliques(g) if k >= 2 else [witness]
    if len(cliques) > 1:
        mass = [float(np.sum(vec[list(c)] ** 2)) for c in cliques]
        witness = cliques[int(np.argmax(mass))]
    return SpectralSummary(
        lambda1=lam,
        frob_sq=frobenius_sq(g),
        clique_number=k,
        clique_vertices=tuple(witness),
        top_eigenvector=vec,
    )


# ------------------------------------------------------------------------ IO


def write_edge_list(g: WeightedGraph, path: str | Path) -> None:
    lines = [f"{g.n} {g.m}"]
    lines += [f"{i} {j} {w!r}" for i, j, w in g.edges]
    Path(path).write_text("\n".join(lines) + "\n")


def write_json(g: WeightedGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps({"n": g.n, "m": g.m, "edges": [list(e) for e in g.edges]}))


def read_graph(path: str | Path) -> WeightedGraph:
    """Read the ``n m`` + ``i j weight`` edge-list format or its JSON twin."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        g = WeightedGraph.from_edges(int(data["n"]), data["edges"])
        declared = data.get("m", g.m)
    else:
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not rows or len(rows[0]) != 2:
            raise ValueError(f"{path}: missing 'n m' header")
        n, declared = int(rows[0][0]), int(rows[0][1])
        if any(len(r) != 3 for r in rows[1:]):
            raise ValueError(f"{path}: edge lines must read 'i j weight'")
        g = WeightedGraph.from_edges(n, [(r[0], r[1], r[2]) for r in rows[1:]])
    if g.m != int(declared):
        raise ValueError(f"{path}: header declares {declared} edges, found {g.m}")
    return g


def _unit(v: np.ndarray) -> np.ndarray:
    nrm = float(np.linalg.norm(v))
    return v / nrm if nrm > 0 else v


def rayleigh_quotient(g: WeightedGraph, v: np.ndarray) -> float:
    v = _unit(np.asarray(v, dtype=float))
    return float(2.0 * np.sum(g.weights * v[g.rows] * v[g.cols]))


def _isclose(a: float, b: float, tol: float) -> bool:
    return math.isclose(a, b, rel_tol=0.0, abs_tol=tol)
