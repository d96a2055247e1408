"""Exact cluster-expansion objects on small configurations.

Everything here works from the matrix of pair energies of the points
involved, so each pair potential is evaluated once per call.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np

from .configurations import Configuration, MarkedPoint
from .potentials import PathPairPotential

__all__ = [
    "LabeledTree",
    "LabeledGraph",
    "ClusterValue",
    "enumerate_trees",
    "enumerate_connected_graphs",
    "tree_edge_array",
    "tree_weight_sum",
    "k_eta",
    "ursell_function",
    "ursell_kernel",
    "q_single",
    "q_full",
    "energy_matrix",
]

MAX_TREE_N = 9
MAX_GRAPH_N = 6
MAX_KERNEL_N = 8


@dataclass(frozen=True)
class LabeledTree:
    n: int
    edges: frozenset

    def __post_init__(self):
        if len(self.edges) != self.n - 1 or not _connected(self.n, self.edges):
            raise ValueError("not a spanning tree")


@dataclass(frozen=True)
class LabeledGraph:
    n: int
    edges: frozenset

    @property
    def is_connected(self) -> bool:
        return _connected(self.n, self.edges)


@dataclass(frozen=True)
class ClusterValue:
    value: float
    terms_evaluated: int

    def __float__(self):
        return self.value


def _connected(n, edges) -> bool:
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    comps = n
    for u, v in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
            comps -= 1
    return comps == 1


@lru_cache(maxsize=None)
def tree_edge_array(n: int) -> np.ndarray:
    """All n**(n-2) labeled trees on {0..n-1} as an int array (n_trees, n-1, 2).

    Prufer sequences are decoded in parallel: at each step every row removes
    its smallest current leaf.
    """
    if not 2 <= n <= MAX_TREE_N:
        raise ValueError(f"tree enumeration supports 2 <= n <= {MAX_TREE_N}")
    if n == 2:
        return np.array([[[0, 1]]])
    seqs = np.array(list(itertools.product(range(n), repeat=n - 2)), dtype=np.int64)
    S = seqs.shape[0]
    rows = np.arange(S)
    deg = np.ones((S, n), dtype=np.int64)
    np.add.at(deg, (np.repeat(rows, n - 2), seqs.ravel()), 1)
    cols = np.arange(n)
    edges = np.empty((S, n - 1, 2), dtype=np.int64)
    for i in range(n - 2):
        leaf = np.where(deg == 1, cols, n).argmin(axis=1)
        edges[:, i, 0] = leaf
        edges[:, i, 1] = seqs[:, i]
        deg[rows, leaf] = 0
        deg[rows, seqs[:, i]] -= 1
    last = np.sort(np.where(deg == 1, cols, n), axis=1)[:, :2]
    edges[:, n - 2] = last
    edges.sort(axis=2)
    edges.setflags(write=False)
    return edges


def enumerate_trees(n: int) -> Iterator[LabeledTree]:
    for row in tree_edge_array(n):
        yield LabeledTree(n, frozenset(map(tuple, row.tolist())))


@lru_cache(maxsize=None)
def _connected_edge_sets(n: int) -> tuple:
    if not 2 <= n <= MAX_GRAPH_N:
        raise ValueError(f"graph enumeration supports 2 <= n <= {MAX_GRAPH_N}")
    pairs = list(itertools.combinations(range(n), 2))
    out = []
    for mask in range(1 << len(pairs)):
        es = tuple(pairs[j] for j in range(len(pairs)) if mask >> j & 1)
        if len(es) >= n - 1 and _connected(n, es):
            out.append(es)
    return tuple(out)


def enumerate_connected_graphs(n: int) -> Iterator[LabeledGraph]:
    for es in _connected_edge_sets(n):
        yield LabeledGraph(n, frozenset(es))


def energy_matrix(points, phi: PathPairPotential) -> np.ndarray:
    """Symmetric matrix of pair energies with zero diagonal."""
    pts = list(points)
    n = len(pts)
    E = np.zeros((n, n))
    if n < 2:
        return E
    gamma = Configuration(pts)
    for i in range(n - 1):
        p = pts[i]
        e = phi.energies(p.x, p.m.values, p.m.sup_norm,
                         gamma.positions[i + 1:], gamma.marks[i + 1:], gamma.norms[i + 1:])
        E[i, i + 1:] = e
        E[i + 1:, i] = e
    return E


def _mayer_matrix(E: np.ndarray, beta: float) -> np.ndarray:
    if beta <= 0:
        raise ValueError("beta must be positive")
    F = np.expm1(-beta * E)
    np.fill_diagonal(F, 0.0)
    return F


def tree_weight_sum(W: np.ndarray) -> tuple[float, int]:
    """Sum over spanning trees of the product of edge weights ``W``, and the tree count."""
    n = W.shape[0]
    if n == 1:
        return 1.0, 1
    T = tree_edge_array(n)
    prods = W[T[:, :, 0], T[:, :, 1]].prod(axis=1)
    return float(prods.sum()), T.shape[0]


def k_eta(x: MarkedPoint, eta: Configuration, phi: PathPairPotential, beta: float) -> float:
    """prod over y in eta of (exp(-beta Phi(x, y)) - 1)."""
    if x in eta:
        raise ValueError("x must not belong to eta")
    if beta <= 0:
        raise ValueError("beta must be positive")
    return float(np.prod(np.expm1(-beta * eta.energies_to(x, phi))))


def ursell_function(gamma: Configuration, phi: PathPairPotential, beta: float) -> ClusterValue:
    """Sum over connected graphs on gamma of the product of Mayer edge factors."""
    n = len(gamma)
    if n == 0:
        return ClusterValue(0.0, 0)
    if n == 1:
        return ClusterValue(1.0, 1)
    if n > MAX_GRAPH_N:
        raise ValueError(f"ursell_function supports at most {MAX_GRAPH_N} points")
    F = _mayer_matrix(energy_matrix(gamma, phi), beta)
    graphs = _connected_edge_sets(n)
    total = 0.0
    for es in graphs:
        prod = 1.0
        for u, v in es:
            prod *= F[u, v]
            if prod == 0.0:
                break
        total += prod
    return ClusterValue(total, len(graphs))


def _submasks(mask: int):
    s = mask
    while True:
        yield s
        if s == 0:
            return
        s = (s - 1) & mask


def _kernel_from_matrix(E: np.ndarray, beta: float, gmask: int, xmask: int) -> tuple[float, int]:
    F = _mayer_matrix(E, beta)
    n = E.shape[0]
    memo: dict = {}
    count = [0]

    def rec(g, x):
        if g == 0:
            return 1.0 if x == 0 else 0.0
        key = (g, x)
        if key in memo:
            return memo[key]
        a = (g & -g).bit_length() - 1
        rest = g & ~(1 << a)
        e_cond = sum(E[a, j] for j in range(n) if rest >> j & 1)
        pref = math.exp(-beta * e_cond)
        total = 0.0
        if pref != 0.0:
            for eta in _submasks(x):
                count[0] += 1
                k = 1.0
                for j in range(n):
                    if eta >> j & 1:
                        k *= F[a, j]
                        if k == 0.0:
                            break
                if k != 0.0:
                    total += k * rec(rest | eta, x & ~eta)
            total *= pref
        memo[key] = total
        return total

    return rec(gmask, xmask), count[0]


def ursell_kernel(gamma: Configuration, xi: Configuration, phi: PathPairPotential, beta: float,
                  anchor_order=None) -> ClusterValue:
    """Ursell kernel by the non-integrated Kirkwood-Salsburg recursion.

        kbar(gamma, xi) = exp(-beta E(x | gamma - x)) sum_{eta in xi} k_eta(x) kbar((gamma - x) eta, xi - eta)

    with kbar(empty, xi) = 1{xi empty}. The anchor x is the first point of
    gamma; ``anchor_order`` optionally permutes gamma first.
    ``terms_evaluated`` counts the subset terms visited.
    """
    if any(p in xi for p in gamma):
        raise ValueError("gamma and xi must be disjoint")
    n_g, n_x = len(gamma), len(xi)
    if n_g + n_x > MAX_KERNEL_N:
        raise ValueError(f"ursell_kernel supports at most {MAX_KERNEL_N} points in total")
    if n_g == 0:
        return ClusterValue(1.0 if n_x == 0 else 0.0, 0)
    g_pts = list(gamma)
    if anchor_order is not None:
        g_pts = [g_pts[i] for i in anchor_order]
    E = energy_matrix(g_pts + list(xi), phi)
    gmask = (1 << n_g) - 1
    xmask = ((1 << n_x) - 1) << n_g
    val, cnt = _kernel_from_matrix(E, beta, gmask, xmask)
    return ClusterValue(val, cnt)


def _q_single_matrix(absF: np.ndarray, idx: list[int], beta: float, B_Phi: float) -> tuple[float, int]:
    sub = absF[np.ix_(idx, idx)]
    s, cnt = tree_weight_sum(sub)
    return math.exp(2 * beta * B_Phi * len(idx)) * s, cnt


def q_single(x: MarkedPoint, xi: Configuration, phi: PathPairPotential, beta: float, B_Phi: float) -> ClusterValue:
    """exp(2 beta B (|xi| + 1)) * sum over trees on {x} u xi of prod |exp(-beta Phi) - 1|."""
    if len(xi) > MAX_TREE_N - 1:
        raise ValueError(f"q_single supports |xi| <= {MAX_TREE_N - 1}")
    if x in xi:
        raise ValueError("x must not belong to xi")
    E = energy_matrix([x] + list(xi), phi)
    absF = np.abs(_mayer_matrix(E, beta))
    v, cnt = _q_single_matrix(absF, list(range(len(xi) + 1)), beta, B_Phi)
    return ClusterValue(v, cnt)


def q_full(gamma: Configuration, xi: Configuration, phi: PathPairPotential, beta: float, B_Phi: float,
           covering: bool = False, max_terms: int = 2_000_000) -> ClusterValue:
    """Sum over ordered disjoint (xi_1..xi_N) in xi of prod_i Q({x_i}, xi_i).

    The blocks need not cover xi unless ``covering`` is set.
    """
    n_g, n_x = len(gamma), len(xi)
    if n_g == 0:
        return ClusterValue(1.0 if (n_x == 0 or not covering) else 0.0, 0)
    if n_g * (3 ** n_x) > max_terms:
        raise ValueError("q_full input exceeds the term budget")
    if n_x > MAX_TREE_N - 1:
        raise ValueError(f"q_full supports |xi| <= {MAX_TREE_N - 1}")
    if any(p in xi for p in gamma):
        raise ValueError("gamma and xi must be disjoint")
    pts = list(gamma) + list(xi)
    absF = np.abs(_mayer_matrix(energy_matrix(pts, phi), beta))
    xi_idx = list(range(n_g, n_g + n_x))
    single: dict = {}
    count = [0]

    def qs(i, mask):
        key = (i, mask)
        if key not in single:
            idx = [i] + [xi_idx[j] for j in range(n_x) if mask >> j & 1]
            single[key], c = _q_single_matrix(absF, idx, beta, B_Phi)
            count[0] += c
        return single[key]

    memo: dict = {}

    def rec(i, avail):
        if i == n_g:
            return 1.0 if (avail == 0 or not covering) else 0.0
        key = (i, avail)
        if key in memo:
            return memo[key]
        total = 0.0
        for s in _submasks(avail):
            total += qs(i, s) * rec(i + 1, avail & ~s)
        memo[key] = total
        return total

    return ClusterValue(rec(0, (1 << n_x) - 1), count[0])
