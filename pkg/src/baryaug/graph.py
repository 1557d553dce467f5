"""Neighborhood graphs over a distance matrix and their maximal cliques."""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import InputError, ResourceError
from .ot import DistanceMatrix

CLIQUE_LIMIT = 10**6


def _as_array(m) -> np.ndarray:
    return m.values if isinstance(m, DistanceMatrix) else np.asarray(m, dtype=float)


@dataclass(frozen=True)
class NeighborhoodGraph:
    n: int
    edges: frozenset  # of (i, j) with i < j
    rule: str = "custom"

    def __post_init__(self):
        norm = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise InputError(f"self-loop at vertex {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise InputError(f"edge ({i}, {j}) out of range for n={self.n}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))

    def neighbors(self) -> list[set[int]]:
        adj = [set() for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        return adj

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def to_text(self) -> str:
        lines = ["# baryaug graph v1", f"n {self.n}", f"rule {self.rule}"]
        lines += [f"edge {i} {j}" for i, j in self.sorted_edges()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "NeighborhoodGraph":
        n, rule, edges = None, "custom", []
        for lineno, line in enumerate(text.splitlines(), 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "n":
                    n = int(parts[1])
                elif parts[0] == "rule":
                    rule = " ".join(parts[1:])
                elif parts[0] == "edge" and len(parts) == 3:
                    edges.append((int(parts[1]), int(parts[2])))
                else:
                    raise ValueError(line)
            except (ValueError, IndexError) as e:
                raise InputError(f"line {lineno}: cannot parse {line!r}") from e
        if n is None:
            raise InputError("graph text has no 'n' line")
        return cls(n, frozenset(edges), rule)


def _neighbor_order(M: np.ndarray, i: int) -> np.ndarray:
    """Other vertices sorted by distance from ``i``, ties by index."""
    others = np.delete(np.arange(M.shape[0]), i)
    return others[np.argsort(M[i, others], kind="stable")]


def _check_k(M: np.ndarray, k: int) -> None:
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError("distance matrix must be square")
    n = M.shape[0]
    if not 1 <= k < n:
        raise InputError(f"k must satisfy 1 <= k < N (k={k}, N={n})")


def knn_graph(m, k: int, mutual: bool = False) -> NeighborhoodGraph:
    """Symmetrized k-nearest-neighbor graph.

    By default an edge joins ``i`` and ``j`` when either is among the other's
    ``k`` nearest neighbors; ``mutual=True`` requires both.
    """
    M = _as_array(m)
    _check_k(M, k)
    directed = set()
    for i in range(M.shape[0]):
        for j in _neighbor_order(M, i)[:k]:
            directed.add((i, int(j)))
    if mutual:
        edges = {(i, j) for i, j in directed if i < j and (j, i) in directed}
    else:
        edges = {(min(i, j), max(i, j)) for i, j in directed}
    rule = f"{'mutual-' if mutual else ''}knn(k={k})"
    return NeighborhoodGraph(M.shape[0], frozenset(edges), rule)


def kth_neighbor_distance(m, k: int) -> np.ndarray:
    M = _as_array(m)
    _check_k(M, k)
    return np.array([M[i, _neighbor_order(M, i)[k - 1]] for i in range(M.shape[0])])


def cknn_graph(m, k: int, delta: float) -> NeighborhoodGraph:
    """Continuous kNN graph: ``d(i, j) < delta * sqrt(d(i, i_k) * d(j, j_k))``.

    A vertex whose k-th neighbor sits at distance zero gets a zero radius and
    is isolated.
    """
    M = _as_array(m)
    if not delta > 0:
        raise InputError("delta must be positive")
    dk = kth_neighbor_distance(M, k)
    radius = np.sqrt(np.outer(dk, dk))
    with np.errstate(invalid="ignore"):
        rhs = np.where(radius > 0, delta * radius, 0.0)
        adj = M < rhs
    n = M.shape[0]
    edges = {(i, j) for i in range(n) for j in range(i + 1, n) if adj[i, j]}
    return NeighborhoodGraph(n, frozenset(edges), f"cknn(k={k},delta={delta!r})")


@dataclass(frozen=True)
class CliqueComplex:
    n: int
    cliques: tuple[tuple[int, ...], ...]
    vertex_weights: np.ndarray
    membership: tuple[tuple[int, ...], ...]

    @classmethod
    def from_cliques(cls, n: int, cliques) -> "CliqueComplex":
        cliques = tuple(sorted(tuple(sorted(int(v) for v in c)) for c in cliques))
        members = [[] for _ in range(n)]
        for cid, c in enumerate(cliques):
            for v in c:
                members[v].append(cid)
        counts = np.array([len(x) for x in members], dtype=float)
        if np.any(counts == 0):
            missing = np.flatnonzero(counts == 0).tolist()
            raise InputError(f"vertices {missing} belong to no clique")
        w = 1.0 / counts
        w.setflags(write=False)
        return cls(n, cliques, w, tuple(tuple(x) for x in members))

    def __len__(self) -> int:
        return len(self.cliques)

    def to_text(self) -> str:
        lines = ["# baryaug cliques v1", f"n {self.n}"]
        lines += ["clique " + " ".join(map(str, c)) for c in self.cliques]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CliqueComplex":
        n, cliques = None, []
        for lineno, line in enumerate(text.splitlines(), 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "n":
                    n = int(parts[1])
                elif parts[0] == "clique" and len(parts) > 1:
                    cliques.append(tuple(int(p) for p in parts[1:]))
                else:
                    raise ValueError(line)
            except (ValueError, IndexError) as e:
                raise InputError(f"line {lineno}: cannot parse {line!r}") from e
        if n is None:
            raise InputError("clique text has no 'n' line")
        return cls.from_cliques(n, cliques)


def _bron_kerbosch(adj: list[int], n: int, limit: int) -> list[int]:
    """Maximal cliques as bitmasks (Bron-Kerbosch with Tomita pivoting)."""
    found: list[int] = []
    # explicit stack of (R, P, X) frames; avoids deep recursion
    stack = [(0, (1 << n) - 1, 0)]
    while stack:
        R, P, X = stack.pop()
        if not P:
            if not X:
                found.append(R)
                if len(found) > limit:
                    raise ResourceError(f"more than {limit} maximal cliques")
            continue
        PX = P | X
        pivot, best = -1, -1
        while PX:
            low = PX & -PX
            u = low.bit_length() - 1
            c = (P & adj[u]).bit_count()
            if c > best:
                pivot, best = u, c
            PX ^= low
        cand = P & ~adj[pivot]
        frames = []
        while cand:
            low = cand & -cand
            v = low.bit_length() - 1
            frames.append((R | low, P & adj[v], X & adj[v]))
            P &= ~low
            X |= low
            cand ^= low
        stack.extend(reversed(frames))
    return found


def _bits(mask: int) -> tuple[int, ...]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return tuple(out)


def maximal_cliques(g: NeighborhoodGraph, max_clique_size: int | None = None,
                    limit: int = CLIQUE_LIMIT) -> CliqueComplex:
    """Clique complex of ``g``: every maximal clique, sorted lexicographically.

    With ``max_clique_size`` set, each larger maximal clique is replaced by
    all of its subsets of exactly that size. Isolated vertices become
    singleton cliques.
    """
    adj = [0] * g.n
    for i, j in g.edges:
        adj[i] |= 1 << j
        adj[j] |= 1 << i
    cliques = [_bits(m) for m in _bron_kerbosch(adj, g.n, limit)]
    if max_clique_size is not None:
        if max_clique_size < 1:
            raise InputError("max_clique_size must be at least 1")
        extra = sum(math.comb(len(c), max_clique_size)
                    for c in cliques if len(c) > max_clique_size)
        if extra + len(cliques) > limit:
            raise ResourceError(f"clique cap would produce more than {limit} cliques")
        capped = set()
        for c in cliques:
            if len(c) > max_clique_size:
                capped.update(combinations(c, max_clique_size))
            else:
                capped.add(c)
        cliques = list(capped)
    return CliqueComplex.from_cliques(g.n, cliques)
