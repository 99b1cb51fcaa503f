"""Path-based root-cause attribution over a fitted linear-Gaussian SCM.

Each node is modeled as a linear function of its graph parents plus Gaussian
noise, fitted on a reference window of normal rows. For an anomalous row,
per-node noise deviations are combined with path-attenuated structural
weights to rank candidate causes and enumerate propagation paths into the
anomalous target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .anomaly import violation_mask
from .catalog import VariableCatalog
from .errors import (
    GraphUnavailable,
    InsufficientData,
    MissingColumn,
    UndirectedGraphError,
    UnknownVariable,
    ValidationError,
)
from .graphs import CausalGraph
from .reports import RankedCause, RcaReport
from .table import DataTable

SIGMA_FLOOR = 1e-9
DEFAULT_MAX_PATH_LEN = 6


@dataclass
class NodeMechanism:
    parents: list[str]
    coefficients: dict[str, float]
    intercept: float
    residual_sigma: float

    def predict(self, row: dict[str, float]) -> float:
        return self.intercept + sum(c * float(row[p]) for p, c in self.coefficients.items())

    def to_dict(self) -> dict:
        return {
            "parents": list(self.parents),
            "coefficients": dict(self.coefficients),
            "intercept": self.intercept,
            "residual_sigma": self.residual_sigma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NodeMechanism":
        return cls(list(d["parents"]), dict(d["coefficients"]), float(d["intercept"]), float(d["residual_sigma"]))


@dataclass
class LinearScm:
    nodes: dict[str, NodeMechanism]
    marginal_std: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "nodes": {k: v.to_dict() for k, v in self.nodes.items()},
            "marginal_std": dict(self.marginal_std),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearScm":
        return cls(
            {k: NodeMechanism.from_dict(v) for k, v in d["nodes"].items()},
            dict(d.get("marginal_std", {})),
        )


def fit_scm(graph: CausalGraph, normal_table: DataTable) -> LinearScm:
    """Per-node least squares of each child on its parents over a normal window."""
    for e in graph.edges:
        if not e.directed:
            raise UndirectedGraphError(f"undirected edge {e.src} -- {e.dst}; orient or drop it before fitting")
    for node in graph.nodes:
        if node not in normal_table.columns:
            raise MissingColumn(f"graph node {node!r} is missing from the table")
    n = len(normal_table)
    if n < 3:
        raise InsufficientData(f"need at least 3 reference rows, got {n}")

    X = normal_table.numeric_matrix(graph.nodes)
    col = {c: i for i, c in enumerate(graph.nodes)}
    mechanisms: dict[str, NodeMechanism] = {}
    for node in graph.nodes:
        parents = sorted(graph.parents(node))
        y = X[:, col[node]]
        if parents:
            A = np.column_stack([X[:, [col[p] for p in parents]], np.ones(n)])
            beta, *_ = np.linalg.lstsq(A, y, rcond=None)
            coef = {p: float(b) for p, b in zip(parents, beta[:-1])}
            intercept = float(beta[-1])
            residuals = y - A @ beta
        else:
            coef = {}
            intercept = float(y.mean())
            residuals = y - intercept
        ddof = len(parents) + 1
        sigma = float(np.sqrt((residuals @ residuals) / max(n - ddof, 1)))
        mechanisms[node] = NodeMechanism(parents, coef, intercept, max(sigma, SIGMA_FLOOR))
    marginal = {c: max(float(X[:, col[c]].std(ddof=1)), SIGMA_FLOOR) for c in graph.nodes}
    return LinearScm(mechanisms, marginal)


def node_deviation(scm: LinearScm, row: dict[str, float]) -> dict[str, float]:
    """Absolute standardized residual of every node under its fitted mechanism."""
    missing = [k for k in scm.nodes if k not in row]
    if missing:
        raise MissingColumn(f"row is missing node values: {missing}")
    out = {}
    for name, mech in scm.nodes.items():
        out[name] = abs(float(row[name]) - mech.predict(row)) / mech.residual_sigma
    return out


def enumerate_paths(
    graph: CausalGraph,
    target: str,
    max_len: int = DEFAULT_MAX_PATH_LEN,
    order: dict[str, int] | None = None,
) -> list[list[str]]:
    """All directed paths (at most max_len edges) from any ancestor to target.

    Ordered shortest-first, then by the node order along the path (stage
    order when supplied, lexicographic otherwise).
    """
    if target not in graph.nodes:
        raise UnknownVariable(f"target {target!r} is not in the graph")
    parents: dict[str, list[str]] = {n: [] for n in graph.nodes}
    for e in graph.edges:
        if e.directed:
            parents[e.dst].append(e.src)

    paths: list[list[str]] = []

    def walk(suffix: list[str]) -> None:
        head = suffix[0]
        if len(suffix) > 1:
            paths.append(list(suffix))
        if len(suffix) - 1 >= max_len:
            return
        for p in parents[head]:
            if p not in suffix:  # acyclic anyway; cheap guard for undirected leftovers
                walk([p] + suffix)

    walk([target])
    if order:
        rank = lambda n: (order.get(n, -1), n)
    else:
        rank = lambda n: (0, n)
    paths.sort(key=lambda p: (len(p), [rank(n) for n in p]))
    return paths


def score_causes(
    scm: LinearScm,
    graph: CausalGraph,
    row: dict[str, float],
    target: str,
    catalog: VariableCatalog | None = None,
    max_len: int = DEFAULT_MAX_PATH_LEN,
) -> RcaReport:
    """Rank ancestors of the anomalous target (and the target itself).

    structural(c) attenuates along each path from c to the target by the
    product of absolute standardized coefficients and takes the best path;
    noise(c) is the node's standardized residual; combined = structural * noise.
    """
    if target not in graph.nodes:
        raise UnknownVariable(f"target {target!r} is not in the graph")
    z = node_deviation(scm, row)
    candidates = graph.ancestors(target) | {target}

    order = None
    if catalog is not None:
        from .rules import stage_order

        order = {n: i for i, n in enumerate(stage_order(catalog))}
    paths = enumerate_paths(graph, target, max_len=max_len, order=order)

    def edge_weight(p: str, c: str) -> float:
        mech = scm.nodes.get(c)
        if mech is None or p not in mech.coefficients:
            return 0.0
        sp = scm.marginal_std.get(p, 1.0)
        sc = scm.marginal_std.get(c, 1.0)
        return abs(mech.coefficients[p]) * sp / sc

    structural: dict[str, float] = {c: 0.0 for c in candidates}
    structural[target] = 1.0
    for path in paths:
        w = 1.0
        for a, b in zip(path, path[1:]):
            w *= edge_weight(a, b)
        head = path[0]
        if head in structural and w > structural[head]:
            structural[head] = w

    def stage_of(name: str) -> int:
        if catalog is not None and name in catalog:
            return catalog.info(name).stage
        return 0

    descriptions = (
        catalog.describe(sorted(candidates)) if catalog is not None else {c: "" for c in candidates}
    )
    ranked = [
        RankedCause(
            variable=c,
            combined_score=structural[c] * z.get(c, 0.0),
            noise_score=z.get(c, 0.0),
            structural_score=structural[c],
            description=descriptions.get(c, ""),
        )
        for c in candidates
    ]
    ranked.sort(key=lambda r: (-r.combined_score, stage_of(r.variable), r.variable))
    for r in ranked:
        if not (math.isfinite(r.combined_score) and r.combined_score >= 0):
            raise ValidationError(f"non-finite combined score for {r.variable}")
    report = RcaReport(target=target, ranked_causes=ranked, paths=[[target]] + paths)
    report.validate()
    return report


class RcaRunner:
    """Event-level attribution with per-(event, graph) result caching."""

    def __init__(self, catalog: VariableCatalog, max_len: int = DEFAULT_MAX_PATH_LEN):
        self.catalog = catalog
        self.max_len = max_len
        self.cache: dict[tuple[str, str], dict] = {}

    def run(self, payload: dict) -> tuple[RcaReport, dict]:
        """Resolve the payload's inputs, fit or reuse, and return (report, meta).

        meta carries {cache_hit, warnings}. A payload with both a row and a
        data_ref uses the data_ref and warns.
        """
        warnings: list[str] = []
        graph = self._resolve_graph(payload)
        event_ref = str(payload.get("event_ref", ""))
        key = (event_ref, graph.content_hash())
        if key in self.cache:
            return RcaReport.from_dict(self.cache[key]), {"cache_hit": True, "warnings": warnings}

        row, reference = self._resolve_data(payload, graph, warnings)
        target = self._resolve_target(payload, graph, row, reference)
        scm = fit_scm(graph, reference)
        report = score_causes(scm, graph, row, target, catalog=self.catalog, max_len=self.max_len)
        self.cache[key] = report.to_dict()
        return report, {"cache_hit": False, "warnings": warnings}

    def _resolve_graph(self, payload: dict) -> CausalGraph:
        g = payload.get("graph")
        if g is None:
            raise GraphUnavailable("payload has no causal graph and none is derivable")
        graph = CausalGraph.from_dict(g) if isinstance(g, dict) else g
        undirected = {(e.src, e.dst) for e in graph.edges if not e.directed}
        if undirected:
            graph = graph.without_edges(undirected)
        return graph

    def _resolve_data(self, payload: dict, graph: CausalGraph, warnings: list[str]):
        data_ref = payload.get("data_ref")
        row = payload.get("row")
        if data_ref and row:
            warnings.append("payload carries both row and data_ref; using data_ref")
            row = None
        if data_ref:
            table = DataTable.from_csv(data_ref)
            event_row = self._event_row(payload, table)
            reference = self._reference_window(table, event_row_index=self._event_index(payload, table))
            return event_row, reference
        if row:
            raise GraphUnavailable("row-only payloads need an accompanying reference dataset (data_ref)")
        raise GraphUnavailable("payload carries neither row nor data_ref")

    @staticmethod
    def _event_index(payload: dict, table: DataTable) -> int:
        ref = str(payload.get("event_ref", ""))
        if ref.startswith("row:"):
            i = int(ref.split(":", 1)[1])
            if 0 <= i < len(table):
                return i
        return len(table) - 1

    def _event_row(self, payload: dict, table: DataTable) -> dict:
        return table.row(self._event_index(payload, table))

    def _reference_window(self, table: DataTable, event_row_index: int) -> DataTable:
        """Rows that pass the tolerance rules, excluding the event row itself;
        falls back to all-but-event when too few rows remain."""
        import pandas as pd

        keep_mask = ~violation_mask(table, self.catalog)
        keep_mask[event_row_index] = False
        if keep_mask.sum() < 3:
            keep_mask = np.ones(len(table), dtype=bool)
            keep_mask[event_row_index] = False
        return DataTable(pd.DataFrame(table.df[keep_mask]).reset_index(drop=True), table.encoders)

    def _resolve_target(self, payload: dict, graph: CausalGraph, row: dict, reference: DataTable) -> str:
        targets = payload.get("targets") or ([payload["target"]] if payload.get("target") else [])
        for t in targets:
            if t in graph.nodes:
                return t
        if targets:
            raise UnknownVariable(f"no payload target is present in the graph: {targets}")
        # No explicit target: pick the graph node deviating most from the reference.
        X = reference.numeric_matrix(graph.nodes)
        mu, sd = X.mean(axis=0), np.maximum(X.std(axis=0), SIGMA_FLOOR)
        zs = [abs(float(row[n]) - m) / s for n, m, s in zip(graph.nodes, mu, sd)]
        return graph.nodes[int(np.argmax(zs))]
