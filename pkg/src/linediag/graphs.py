"""Directed causal graph with per-edge statistics."""

from __future__ import annotations

from dataclasses import dataclass

from .catalog import VariableCatalog
from .errors import UnknownVariable, ValidationError
from .rules import EdgeQuery, RuleSet, is_admissible

PC = "PC"
GES = "GES"


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    directed: bool = True
    stat: float = 0.0

    def to_dict(self) -> dict:
        return {"src": self.src, "dst": self.dst, "directed": self.directed, "stat": self.stat}

    @classmethod
    def from_dict(cls, d: dict) -> "Edge":
        return cls(d["src"], d["dst"], bool(d.get("directed", True)), float(d.get("stat", 0.0)))


def has_directed_cycle(nodes: list[str], arcs: list[tuple[str, str]]) -> bool:
    """Iterative three-color DFS over the directed arcs."""
    adj: dict[str, list[str]] = {n: [] for n in nodes}
    for u, v in arcs:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, [])
    color = {n: 0 for n in adj}  # 0 white, 1 on stack, 2 done
    for start in adj:
        if color[start]:
            continue
        stack = [(start, iter(adj[start]))]
        color[start] = 1
        while stack:
            node, it = stack[-1]
            child = next(it, None)
            if child is None:
                color[node] = 2
                stack.pop()
            elif color[child] == 1:
                return True
            elif color[child] == 0:
                color[child] = 1
                stack.append((child, iter(adj[child])))
    return False


class CausalGraph:
    """Nodes plus directed/undirected edges; the directed part must be acyclic."""

    def __init__(
        self,
        nodes: list[str],
        edges: list[Edge],
        algorithm: str = PC,
        constrained: bool = True,
    ):
        node_set = set(nodes)
        for e in edges:
            if e.src not in node_set or e.dst not in node_set:
                raise UnknownVariable(f"edge {e.src}->{e.dst} references a node not in the graph")
        arcs = [(e.src, e.dst) for e in edges if e.directed]
        if has_directed_cycle(list(nodes), arcs):
            raise ValidationError("directed subgraph contains a cycle")
        self.nodes = list(nodes)
        self.edges = list(edges)
        self.algorithm = algorithm
        self.constrained = constrained

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, CausalGraph)
            and self.nodes == other.nodes
            and set(self.edges) == set(other.edges)
            and self.algorithm == other.algorithm
            and self.constrained == other.constrained
        )

    def directed_edges(self) -> list[Edge]:
        return [e for e in self.edges if e.directed]

    def arc_set(self) -> set[tuple[str, str]]:
        return {(e.src, e.dst) for e in self.edges if e.directed}

    def parents(self, node: str) -> list[str]:
        return [e.src for e in self.edges if e.directed and e.dst == node]

    def ancestors(self, node: str) -> set[str]:
        parents: dict[str, list[str]] = {n: [] for n in self.nodes}
        for e in self.edges:
            if e.directed:
                parents[e.dst].append(e.src)
        seen: set[str] = set()
        frontier = [node]
        while frontier:
            cur = frontier.pop()
            for p in parents.get(cur, []):
                if p not in seen:
                    seen.add(p)
                    frontier.append(p)
        return seen

    def without_edges(self, removed: set[tuple[str, str]]) -> "CausalGraph":
        kept = [e for e in self.edges if (e.src, e.dst) not in removed]
        return CausalGraph(list(self.nodes), kept, self.algorithm, self.constrained)

    def check_admissible(self, catalog: VariableCatalog, rules: RuleSet) -> None:
        if not self.constrained:
            return
        for e in self.directed_edges():
            if not is_admissible(EdgeQuery(e.src, e.dst), catalog, rules):
                raise ValidationError(f"inadmissible directed edge {e.src}->{e.dst} in constrained graph")

    def content_hash(self) -> str:
        import hashlib
        import json

        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()

    def to_edge_list_text(self) -> str:
        """Line-based rendering, one "src -> dst [stat]" per edge."""
        lines = []
        for e in sorted(self.edges, key=lambda e: (e.src, e.dst)):
            arrow = "->" if e.directed else "--"
            lines.append(f"{e.src} {arrow} {e.dst} [{e.stat:.4g}]")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "nodes": self.nodes,
            "edges": [e.to_dict() for e in self.edges],
            "algorithm": self.algorithm,
            "constrained": self.constrained,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CausalGraph":
        return cls(
            nodes=list(d["nodes"]),
            edges=[Edge.from_dict(e) for e in d.get("edges", [])],
            algorithm=d.get("algorithm", PC),
            constrained=bool(d.get("constrained", True)),
        )
