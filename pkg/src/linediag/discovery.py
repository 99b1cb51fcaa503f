"""Knowledge-constrained causal structure learning.

Two routines over preprocessed numeric tables, both restricted to the
admissible edge space defined by the catalog and rule set:

  - PC: skeleton search with Fisher-z conditional-independence tests,
    v-structure orientation, forced orientations from the rules, and Meek
    rules 1-3.
  - GES-style search: two-phase greedy DAG search (forward additions,
    backward deletions) scored by a Gaussian BIC. Because the admissible
    space under the default rules is acyclic by construction, the search
    works directly on DAGs instead of equivalence classes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.special import ndtri

from .catalog import VariableCatalog
from .errors import InsufficientData, SingularCondSet, UnknownVariable
from .graphs import GES, PC, CausalGraph, Edge
from .rules import EdgeQuery, RuleSet, is_admissible, stage_order
from .table import DataTable

ALGO_AUTO = "Auto"

# Minimum score improvement accepted by the greedy search; guards against
# floating-point noise flipping tie decisions.
GAIN_EPS = 1e-9


# ---------------------------------------------------------------------------
# Conditional-independence testing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CITestResult:
    pair: tuple[str, str]
    cond_set: tuple[str, ...]
    r: float
    statistic: float
    independent: bool


class CorrelationCache:
    """Correlation matrix computed once; partial correlations come from
    inversions of small submatrices."""

    def __init__(self, table: DataTable, columns: list[str] | None = None):
        self.columns = columns if columns is not None else table.columns
        X = table.numeric_matrix(self.columns)
        self.n = X.shape[0]
        with np.errstate(invalid="ignore"):
            self.corr = np.corrcoef(X, rowvar=False)
        if self.corr.ndim == 0:  # single column
            self.corr = np.array([[1.0]])
        self.index = {c: i for i, c in enumerate(self.columns)}

    def partial_correlation(self, u: str, v: str, S: list[str]) -> float:
        iu, iv = self.index[u], self.index[v]
        if not S:
            r = self.corr[iu, iv]
        else:
            idx = [iu, iv] + [self.index[s] for s in S]
            sub = self.corr[np.ix_(idx, idx)]
            try:
                P = np.linalg.inv(sub)
            except np.linalg.LinAlgError:
                raise SingularCondSet(f"singular correlation submatrix for ({u},{v}|{S})") from None
            denom = P[0, 0] * P[1, 1]
            if denom <= 0:
                raise SingularCondSet(f"degenerate inverse for ({u},{v}|{S})")
            r = -P[0, 1] / math.sqrt(denom)
        if np.isnan(r):
            raise SingularCondSet(f"undefined correlation for ({u},{v}|{S})")
        return float(min(1.0, max(-1.0, r)))


def partial_correlation(table: DataTable, u: str, v: str, S: list[str]) -> float:
    """Partial correlation of u and v given S, from the inverse correlation matrix."""
    n = len(table)
    if n <= len(S) + 3:
        raise InsufficientData(f"need n > |S| + 3, got n={n}, |S|={len(S)}")
    return CorrelationCache(table, sorted({u, v, *S}, key=table.columns.index)).partial_correlation(u, v, list(S))


def z_critical(alpha: float) -> float:
    return float(ndtri(1.0 - alpha / 2.0))


def fisher_z_test(
    r: float,
    n: int,
    cond_size: int,
    alpha: float = 0.05,
    pair: tuple[str, str] = ("", ""),
    cond_set: tuple[str, ...] = (),
) -> CITestResult:
    """Gaussian CI test on the arctanh-transformed partial correlation."""
    dof = n - cond_size - 3
    if dof < 1:
        raise InsufficientData(f"need n - |S| - 3 >= 1, got {dof}")
    if abs(r) >= 1.0:
        return CITestResult(pair, cond_set, float(np.sign(r)), float("inf"), False)
    stat = math.sqrt(dof) * abs(0.5 * math.log((1.0 + r) / (1.0 - r)))
    return CITestResult(pair, cond_set, r, stat, stat <= z_critical(alpha))


# ---------------------------------------------------------------------------
# Admissibility plumbing
# ---------------------------------------------------------------------------


def _check_columns(columns: list[str], catalog: VariableCatalog) -> None:
    for c in columns:
        if c not in catalog:
            raise UnknownVariable(f"column {c!r} is not in the catalog")


def _admissible_arcs(
    columns: list[str],
    catalog: VariableCatalog,
    rules: RuleSet,
    allowed_edges: set[tuple[str, str]] | None,
) -> set[tuple[str, str]]:
    if allowed_edges is not None:
        return {(u, v) for (u, v) in allowed_edges if u in columns and v in columns and u != v}
    return {
        (u, v)
        for u in columns
        for v in columns
        if u != v and is_admissible(EdgeQuery(u, v), catalog, rules)
    }


def _ordering(columns: list[str], catalog: VariableCatalog) -> dict[str, int]:
    order = [c for c in stage_order(catalog) if c in set(columns)]
    return {c: i for i, c in enumerate(order)}


# ---------------------------------------------------------------------------
# PC
# ---------------------------------------------------------------------------


@dataclass
class _Skeleton:
    adj: dict[str, set[str]]
    sepsets: dict[frozenset, tuple[str, ...]] = field(default_factory=dict)
    min_stat: dict[frozenset, float] = field(default_factory=dict)


def _pc_skeleton(
    cache: CorrelationCache,
    pairs: list[tuple[str, str]],
    order: dict[str, int],
    alpha: float,
    max_cond: int,
) -> _Skeleton:
    adj: dict[str, set[str]] = {c: set() for c in cache.columns}
    for u, v in pairs:
        adj[u].add(v)
        adj[v].add(u)
    sk = _Skeleton(adj)
    n = cache.n

    def test(u, v, S) -> CITestResult:
        try:
            r = cache.partial_correlation(u, v, list(S))
        except SingularCondSet:
            # Conservative: unresolvable tests keep the edge.
            return CITestResult((u, v), tuple(S), 1.0, float("inf"), False)
        return fisher_z_test(r, n, len(S), alpha, pair=(u, v), cond_set=tuple(S))

    for ell in range(0, max_cond + 1):
        if n - ell - 3 < 1:
            break
        snapshot = {k: set(v) for k, v in sk.adj.items()}
        removals: list[tuple[str, str, tuple[str, ...]]] = []
        ordered_pairs = sorted(
            ((u, v) for u in snapshot for v in snapshot[u]),
            key=lambda p: (order[p[0]], order[p[1]]),
        )
        tested_any = False
        removed_pairs: set[frozenset] = set()
        for u, v in ordered_pairs:
            key = frozenset((u, v))
            if key in removed_pairs:
                continue
            neighbors = sorted(snapshot[u] - {v}, key=order.get)
            if len(neighbors) < ell:
                continue
            for S in combinations(neighbors, ell):
                tested_any = True
                res = test(u, v, S)
                if math.isfinite(res.statistic):
                    cur = sk.min_stat.get(key)
                    if cur is None or res.statistic < cur:
                        sk.min_stat[key] = res.statistic
                if res.independent:
                    removals.append((u, v, S))
                    removed_pairs.add(key)
                    break
        for u, v, S in removals:
            sk.adj[u].discard(v)
            sk.adj[v].discard(u)
            sk.sepsets[frozenset((u, v))] = S
        if ell > 0 and not tested_any:
            break
    return sk


def _orient_v_structures(sk: _Skeleton, arrows: set[tuple[str, str]], order: dict[str, int]) -> None:
    nodes = sorted(sk.adj, key=order.get)
    for w in nodes:
        for u, v in combinations(sorted(sk.adj[w], key=order.get), 2):
            if v in sk.adj[u]:
                continue
            sep = sk.sepsets.get(frozenset((u, v)))
            if sep is None or w in sep:
                continue
            for a in (u, v):
                if (w, a) not in arrows:
                    arrows.add((a, w))


def _apply_meek(sk: _Skeleton, arrows: set[tuple[str, str]], order: dict[str, int]) -> None:
    nodes = sorted(sk.adj, key=order.get)

    def undirected(a, b):
        return b in sk.adj[a] and (a, b) not in arrows and (b, a) not in arrows

    changed = True
    while changed:
        changed = False
        for a in nodes:
            for b in sorted(sk.adj[a], key=order.get):
                if not undirected(a, b):
                    continue
                # R1: c -> a, a - b, c and b nonadjacent  =>  a -> b
                r1 = any((c, a) in arrows and b not in sk.adj[c] and c != b for c in nodes)
                # R2: a -> c -> b with a - b  =>  a -> b
                r2 = any((a, c) in arrows and (c, b) in arrows for c in nodes)
                # R3: a - c, a - d, c -> b, d -> b, c and d nonadjacent  =>  a -> b
                r3 = False
                into_b = [c for c in sk.adj[a] if (c, b) in arrows and undirected(a, c)]
                for c, d in combinations(sorted(into_b, key=order.get), 2):
                    if d not in sk.adj[c]:
                        r3 = True
                        break
                if r1 or r2 or r3:
                    arrows.add((a, b))
                    changed = True


def pc_learn(
    table: DataTable,
    catalog: VariableCatalog,
    rules: RuleSet,
    alpha: float = 0.05,
    max_cond: int = 3,
    allowed_edges: set[tuple[str, str]] | None = None,
) -> CausalGraph:
    """PC restricted to the admissible edge space.

    The initial graph only connects pairs with at least one admissible
    direction; after skeleton and orientation phases, undirected edges with a
    single admissible direction are forced that way and any directed edge
    that remains inadmissible is dropped.
    """
    columns = table.columns
    _check_columns(columns, catalog)
    if len(table) < 4:
        raise InsufficientData("PC needs at least 4 rows for the unconditional test")
    arcs = _admissible_arcs(columns, catalog, rules, allowed_edges)
    order = _ordering(columns, catalog)
    cache = CorrelationCache(table, columns)

    pairs = sorted(
        {tuple(sorted((u, v), key=order.get)) for (u, v) in arcs},
        key=lambda p: (order[p[0]], order[p[1]]),
    )
    sk = _pc_skeleton(cache, pairs, order, alpha, max_cond)

    arrows: set[tuple[str, str]] = set()
    _orient_v_structures(sk, arrows, order)
    # Forced orientations: edges admissible in exactly one direction.
    for u in sorted(sk.adj, key=order.get):
        for v in sorted(sk.adj[u], key=order.get):
            if (u, v) in arrows or (v, u) in arrows:
                continue
            fwd, back = (u, v) in arcs, (v, u) in arcs
            if fwd and not back:
                arrows.add((u, v))
            elif back and not fwd:
                arrows.add((v, u))
    _apply_meek(sk, arrows, order)

    edges: list[Edge] = []
    seen: set[frozenset] = set()
    for u in sorted(sk.adj, key=order.get):
        for v in sorted(sk.adj[u], key=order.get):
            key = frozenset((u, v))
            if key in seen:
                continue
            seen.add(key)
            stat = sk.min_stat.get(key, float("inf"))
            stat = stat if math.isfinite(stat) else 0.0
            if (u, v) in arrows:
                if (u, v) in arcs:
                    edges.append(Edge(u, v, True, stat))
            elif (v, u) in arrows:
                if (v, u) in arcs:
                    edges.append(Edge(v, u, True, stat))
            else:
                a, b = sorted((u, v), key=order.get)
                edges.append(Edge(a, b, False, stat))
    return CausalGraph(columns, edges, algorithm=PC, constrained=True)


# ---------------------------------------------------------------------------
# BIC-scored greedy search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LocalScore:
    value: float
    pseudo_inverse: bool = False


class CovarianceCache:
    """Centered scatter matrix; local regressions reduce to small solves."""

    def __init__(self, table: DataTable, columns: list[str] | None = None):
        self.columns = columns if columns is not None else table.columns
        X = table.numeric_matrix(self.columns)
        self.n = X.shape[0]
        Xc = X - X.mean(axis=0)
        self.scatter = Xc.T @ Xc
        self.index = {c: i for i, c in enumerate(self.columns)}

    def rss(self, node: str, parents: list[str]) -> tuple[float, bool]:
        iy = self.index[node]
        syy = self.scatter[iy, iy]
        if not parents:
            return float(syy), False
        ip = [self.index[p] for p in parents]
        Spp = self.scatter[np.ix_(ip, ip)]
        Spy = self.scatter[ip, iy]
        flagged = False
        try:
            beta = np.linalg.solve(Spp, Spy)
        except np.linalg.LinAlgError:
            beta = np.linalg.pinv(Spp) @ Spy
            flagged = True
        rss = float(syy - Spy @ beta)
        return max(rss, 0.0), flagged


def bic_local(table_or_cache: DataTable | CovarianceCache, node: str, parents: list[str]) -> LocalScore:
    """Gaussian BIC of regressing node on parents plus an intercept.

    score = -(n/2) ln(RSS/n) - ((|parents| + 2)/2) ln(n); the parameter count
    covers the coefficients, the intercept, and the noise variance.
    """
    cache = table_or_cache if isinstance(table_or_cache, CovarianceCache) else CovarianceCache(table_or_cache)
    n = cache.n
    if len(parents) >= n - 2:
        raise InsufficientData(f"need |parents| < n - 2, got {len(parents)} with n={n}")
    rss, flagged = cache.rss(node, list(parents))
    rss = max(rss, 1e-12 * n)
    value = -(n / 2.0) * math.log(rss / n) - ((len(parents) + 2) / 2.0) * math.log(n)
    return LocalScore(value, flagged)


def ges_learn(
    table: DataTable,
    catalog: VariableCatalog,
    rules: RuleSet,
    allowed_edges: set[tuple[str, str]] | None = None,
) -> CausalGraph:
    """Two-phase greedy DAG search over the admissible edge space.

    Forward phase repeatedly adds the admissible arc with the largest
    positive BIC gain; backward phase repeatedly deletes the arc with the
    largest positive gain; the search stops when no move improves the score.
    """
    columns = table.columns
    _check_columns(columns, catalog)
    if len(table) < 4:
        raise InsufficientData("greedy search needs at least 4 rows")
    arcs_space = _admissible_arcs(columns, catalog, rules, allowed_edges)
    order = _ordering(columns, catalog)
    cache = CovarianceCache(table, columns)
    n = cache.n

    candidates = sorted(arcs_space, key=lambda p: (order[p[0]], order[p[1]]))
    parents: dict[str, list[str]] = {c: [] for c in columns}
    gains: dict[tuple[str, str], float] = {}
    score_cache: dict[tuple[str, frozenset], float] = {}

    def local(node: str, ps: list[str]) -> float:
        key = (node, frozenset(ps))
        if key not in score_cache:
            score_cache[key] = bic_local(cache, node, ps).value
        return score_cache[key]

    def reachable(src: str, dst: str) -> bool:
        children: dict[str, list[str]] = {c: [] for c in columns}
        for v, ps in parents.items():
            for p in ps:
                children[p].append(v)
        frontier, seen = [src], {src}
        while frontier:
            cur = frontier.pop()
            if cur == dst:
                return True
            for nxt in children[cur]:
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        return False

    # Forward phase.
    current = set()
    while True:
        best, best_gain = None, GAIN_EPS
        for u, v in candidates:
            if (u, v) in current or len(parents[v]) + 3 >= n:
                continue
            gain = local(v, parents[v] + [u]) - local(v, parents[v])
            if gain > best_gain and not reachable(v, u):
                best, best_gain = (u, v), gain
        if best is None:
            break
        u, v = best
        parents[v].append(u)
        current.add(best)
        gains[best] = best_gain

    # Backward phase.
    while True:
        best, best_gain = None, GAIN_EPS
        for u, v in sorted(current, key=lambda p: (order[p[0]], order[p[1]])):
            reduced = [p for p in parents[v] if p != u]
            gain = local(v, reduced) - local(v, parents[v])
            if gain > best_gain:
                best, best_gain = (u, v), gain
        if best is None:
            break
        u, v = best
        parents[v].remove(u)
        current.discard(best)
        gains.pop(best, None)

    edges = [
        Edge(u, v, True, gains.get((u, v), 0.0))
        for u, v in sorted(current, key=lambda p: (order[p[0]], order[p[1]]))
    ]
    return CausalGraph(columns, edges, algorithm=GES, constrained=True)


# ---------------------------------------------------------------------------
# Facade and estimator wrappers
# ---------------------------------------------------------------------------


def discover(
    table: DataTable,
    catalog: VariableCatalog,
    rules: RuleSet,
    algorithm: str = ALGO_AUTO,
    alpha: float = 0.05,
    max_cond: int = 3,
) -> CausalGraph:
    """Pick and run a discovery routine.

    Auto selects the BIC search for fully staged (process-variable) catalogs
    and PC otherwise; an explicit algorithm always wins.
    """
    if algorithm == ALGO_AUTO:
        staged = all(catalog.info(c).stage > 0 for c in table.columns if c in catalog)
        algorithm = GES if staged else PC
    if algorithm == GES:
        return ges_learn(table, catalog, rules)
    if algorithm == PC:
        return pc_learn(table, catalog, rules, alpha=alpha, max_cond=max_cond)
    raise UnknownVariable(f"unknown algorithm {algorithm!r}")


class _BaseDiscovery:
    """Minimal estimator-style wrapper: fit(table) learns and stores graph_."""

    def get_params(self) -> dict:
        return {k: v for k, v in vars(self).items() if not k.endswith("_")}

    def set_params(self, **params):
        known = self.get_params()
        for k, v in params.items():
            if k not in known:
                raise UnknownVariable(f"unknown parameter {k!r}")
            setattr(self, k, v)
        return self


class PCDiscovery(_BaseDiscovery):
    def __init__(self, catalog: VariableCatalog, rules: RuleSet, alpha: float = 0.05, max_cond: int = 3):
        self.catalog = catalog
        self.rules = rules
        self.alpha = alpha
        self.max_cond = max_cond
        self.graph_: CausalGraph | None = None

    def fit(self, table: DataTable) -> "PCDiscovery":
        self.graph_ = pc_learn(table, self.catalog, self.rules, self.alpha, self.max_cond)
        return self


class GESDiscovery(_BaseDiscovery):
    def __init__(self, catalog: VariableCatalog, rules: RuleSet):
        self.catalog = catalog
        self.rules = rules
        self.graph_: CausalGraph | None = None

    def fit(self, table: DataTable) -> "GESDiscovery":
        self.graph_ = ges_learn(table, self.catalog, self.rules)
        return self
