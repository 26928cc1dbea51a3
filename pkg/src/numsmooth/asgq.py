"""Dimension-adaptive sparse-grid quadrature against the standard Gaussian measure.

Multi-indices are stored base-1: ``beta_i = 1`` selects the one-point rule on
axis ``i``.  The integrand is vectorized: it maps an array of nodes of shape
``(P, dim)`` to values of shape ``(P,)``.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .quadrules import MAX_NODES, gauss_hermite

Integrand = Callable[[np.ndarray], np.ndarray]
MultiIndex = tuple  # tuple[int, ...], base-1


class EvaluationError(FloatingPointError):
    """The integrand returned a non-finite value."""

    def __init__(self, node: np.ndarray, value: float):
        super().__init__(f"integrand returned {value} at node {np.array2string(node, precision=6)}")
        self.node = node
        self.value = value


def doubling_growth(k: int) -> int:
    """Point count of the level-``k`` rule: 1, 3, 5, 9, 17, ..."""
    if k < 1:
        raise ValueError(f"levels are base-1, got {k}")
    return 1 if k == 1 else 2 ** (k - 1) + 1


class NodeCache:
    """Integrand values keyed by node coordinates; counts distinct evaluations."""

    def __init__(self, f: Integrand, dim: int):
        self.f = f
        self.dim = dim
        self.values: dict[bytes, float] = {}

    @property
    def evals(self) -> int:
        return len(self.values)

    def lookup(self, Z: np.ndarray) -> np.ndarray:
        keys = [row.tobytes() for row in Z]
        missing = [i for i, k in enumerate(keys) if k not in self.values]
        if missing:
            # deduplicate inside the batch while keeping first-seen order
            seen: dict[bytes, int] = {}
            for i in missing:
                seen.setdefault(keys[i], i)
            rows = list(seen.values())
            vals = np.asarray(self.f(Z[rows]), dtype=float).reshape(-1)
            if vals.size != len(rows):
                raise ValueError(f"integrand returned {vals.size} values for {len(rows)} nodes")
            bad = np.flatnonzero(~np.isfinite(vals))
            if bad.size:
                raise EvaluationError(Z[rows[bad[0]]], vals[bad[0]])
            for r, v in zip(rows, vals):
                self.values[keys[r]] = float(v)
        return np.array([self.values[k] for k in keys])


def tensor_rule(beta: MultiIndex, growth: Callable[[int], int] = doubling_growth):
    """Nodes ``(T, dim)`` and weights ``(T,)`` of the Hermite tensor rule for ``beta``."""
    dim = len(beta)
    axes = [i for i, b in enumerate(beta) if b > 1]
    rules = [gauss_hermite(growth(beta[i])) for i in axes]
    if not axes:
        return np.zeros((1, dim)), np.ones(1)
    grids = np.meshgrid(*[r.nodes for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r.weights for r in rules], indexing="ij")
    T = grids[0].size
    Z = np.zeros((T, dim))
    w = np.ones(T)
    for ax, g, wg in zip(axes, grids, wgrids):
        Z[:, ax] = g.reshape(-1)
        w *= wg.reshape(-1)
    return Z, w


def tensor_quadrature(beta: MultiIndex, cache: NodeCache, growth=doubling_growth) -> float:
    Z, w = tensor_rule(beta, growth)
    return float(np.dot(w, cache.lookup(Z)))


def delta_quadrature(beta: MultiIndex, f: Integrand | NodeCache, growth=doubling_growth) -> float:
    """Mixed first difference ``prod_i (Q_beta - Q_{beta - e_i})`` by inclusion-exclusion."""
    beta = tuple(int(b) for b in beta)
    if any(b < 1 for b in beta):
        raise ValueError(f"multi-index entries are base-1, got {beta}")
    cache = f if isinstance(f, NodeCache) else NodeCache(f, len(beta))
    up = [i for i, b in enumerate(beta) if b > 1]
    total = 0.0
    for r in range(len(up) + 1):
        for S in itertools.combinations(up, r):
            corner = list(beta)
            for i in S:
                corner[i] -= 1
            total += (-1) ** r * tensor_quadrature(tuple(corner), cache, growth)
    return total


@dataclass(frozen=True)
class DeltaInfo:
    dQ: float
    dE: float
    dWork: float

    @property
    def profit(self) -> float:
        return self.dE / self.dWork


@dataclass
class IndexSet:
    accepted: list = field(default_factory=list)  # acceptance order
    active: set = field(default_factory=set)
    deltaValues: dict = field(default_factory=dict)

    def is_downward_closed(self) -> bool:
        acc = set(self.accepted)
        for beta in acc:
            for i, b in enumerate(beta):
                if b > 1:
                    back = beta[:i] + (b - 1,) + beta[i + 1 :]
                    if back not in acc:
                        return False
        return True


@dataclass(frozen=True)
class ASGQConfig:
    dim: int
    tol: float = 1e-4
    maxEvals: int = 100_000
    growth: Callable[[int], int] = doubling_growth

    def __post_init__(self):
        if self.dim < 0:
            raise ValueError("dim must be non-negative")
        if not self.tol >= 0:
            raise ValueError("tol must be non-negative")
        if self.growth(1) != 1:
            raise ValueError("growth rule must satisfy m(1) = 1")


@dataclass(frozen=True)
class ASGQResult:
    estimate: float
    indexSet: IndexSet
    errorIndicator: float
    evals: int
    converged: bool

    def __iter__(self) -> Iterator:
        return iter((self.estimate, self.indexSet, self.errorIndicator, self.evals))


def adapt(config: ASGQConfig, f: Integrand) -> ASGQResult:
    """Greedy profit-driven construction of the index set."""
    dim = config.dim
    cache = NodeCache(f, dim)
    iset = IndexSet()
    accepted: set = set()
    heap: list = []

    def push(beta):
        dQ = delta_quadrature(beta, cache, config.growth)
        work = float(np.prod([config.growth(b) for b in beta]))
        info = DeltaInfo(dQ, abs(dQ), work)
        iset.deltaValues[beta] = info
        iset.active.add(beta)
        heapq.heappush(heap, (-info.profit, beta))

    push((1,) * dim)
    active_err = iset.deltaValues[(1,) * dim].dE
    converged = False
    while True:
        if iset.accepted and active_err <= config.tol:
            converged = True
            break
        if cache.evals >= config.maxEvals or not heap:
            break
        _, beta = heapq.heappop(heap)
        iset.active.discard(beta)
        active_err -= iset.deltaValues[beta].dE
        accepted.add(beta)
        iset.accepted.append(beta)
        for i in range(dim):
            fwd = beta[:i] + (beta[i] + 1,) + beta[i + 1 :]
            if fwd in iset.deltaValues or config.growth(fwd[i]) > MAX_NODES:
                continue
            admissible = all(
                fwd[:j] + (fwd[j] - 1,) + fwd[j + 1 :] in accepted for j in range(dim) if fwd[j] > 1
            )
            if admissible:
                push(fwd)
                active_err += iset.deltaValues[fwd].dE
        # re-sum to avoid drift from incremental updates
        active_err = sum(iset.deltaValues[b].dE for b in sorted(iset.active))
    estimate = float(sum(iset.deltaValues[b].dQ for b in iset.accepted))
    return ASGQResult(estimate, iset, float(active_err), cache.evals, converged)
