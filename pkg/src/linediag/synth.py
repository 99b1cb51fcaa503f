"""Synthetic grinding-line generator with a known ground-truth SCM.

Each stage contributes set-angle and grind-depth controls plus measurement
observations. Observations are linear combinations of admissible same- or
earlier-stage parents with unit Gaussian noise; controls are exogenous.
Interventions replace the noise term of the named node with the requested
shift (in noise-sigma units) on the designated rows, so an intervened node
deviates from its mechanism by exactly the shift up to estimation error.
Tolerances are set to mean +/- 3 sigma of the un-intervened marginal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .catalog import CONTROL, OBSERVATION, Tolerance, VariableCatalog, VariableInfo
from .errors import InsufficientData, UnknownVariable
from .graphs import GES, CausalGraph, Edge
from .table import DataTable

COEF_RANGE = (0.5, 1.5)


@dataclass(frozen=True)
class Intervention:
    node: str
    shift: float  # multiples of the noise sigma
    affected_rows: tuple[int, ...]

    @classmethod
    def make(cls, node: str, shift: float, affected_rows) -> "Intervention":
        return cls(node, float(shift), tuple(int(r) for r in affected_rows))


@dataclass
class SyntheticSpec:
    stages: int = 4
    n_variables: int | None = None  # default: 3 per stage (2 controls + 1 observation)
    max_parents: int = 3
    noise_sigma: float = 1.0
    interventions: list[Intervention] = field(default_factory=list)


@dataclass
class GeneratedData:
    table: DataTable
    catalog: VariableCatalog
    graph: CausalGraph
    labels: list[dict]  # one entry per anomalous row: {row, cause, shift}


def variable_roster(spec: SyntheticSpec) -> list[tuple[str, str, int]]:
    """(name, var_type, stage) triples; per-stage order keeps at least one
    observation in play even when the variable budget is tight."""
    K = spec.stages
    M = spec.n_variables if spec.n_variables is not None else 3 * K
    if M < K:
        raise InsufficientData(f"need at least one variable per stage: M={M}, stages={K}")
    base, extra = divmod(M, K)
    sizes = [base + (1 if s < extra else 0) for s in range(K)]
    roster = []
    for s, size in enumerate(sizes, start=1):
        per_stage = [
            (f"SetAngle_{s}", CONTROL),
            (f"Meas_{s}_1", OBSERVATION),
            (f"GrindDepth_{s}", CONTROL),
        ]
        j = 2
        while len(per_stage) < size:
            per_stage.append((f"Meas_{s}_{j}", OBSERVATION))
            j += 1
        for name, var_type in per_stage[:size]:
            roster.append((name, var_type, s))
    return roster


def generate(spec: SyntheticSpec, n_rows: int, seed: int) -> GeneratedData:
    """Deterministic per seed; returns the table, catalog, true graph, and labels."""
    if n_rows < 100:
        raise InsufficientData(f"need n_rows >= 100, got {n_rows}")
    roster = variable_roster(spec)
    names = [name for name, _, _ in roster]
    by_name = {name: (var_type, stage) for name, var_type, stage in roster}
    for iv in spec.interventions:
        if iv.node not in by_name:
            raise UnknownVariable(f"intervention node {iv.node!r} is not in the generated roster")
        for r in iv.affected_rows:
            if not 0 <= r < n_rows:
                raise InsufficientData(f"intervention row {r} outside 0..{n_rows - 1}")

    rng = np.random.default_rng(seed)

    # Choose parents and coefficients for every observation, in roster order.
    parents: dict[str, list[str]] = {}
    coefs: dict[str, dict[str, float]] = {}
    for name, var_type, stage in roster:
        if var_type == CONTROL:
            parents[name] = []
            coefs[name] = {}
            continue
        candidates = [
            cand
            for cand, (ct, cs) in by_name.items()
            if cand != name
            and ((ct == CONTROL and cs <= stage) or (ct == OBSERVATION and cs < stage))
        ]
        if candidates:
            k = int(rng.integers(1, spec.max_parents + 1))
            k = min(k, len(candidates))
            chosen = sorted(rng.choice(len(candidates), size=k, replace=False).tolist())
            ps = [candidates[j] for j in chosen]
        else:
            ps = []
        parents[name] = ps
        magnitudes = rng.uniform(*COEF_RANGE, size=len(ps))
        signs = rng.choice([-1.0, 1.0], size=len(ps))
        coefs[name] = {p: float(m * s) for p, m, s in zip(ps, magnitudes, signs)}

    noise = rng.normal(0.0, spec.noise_sigma, size=(n_rows, len(names)))
    col = {n: i for i, n in enumerate(names)}
    # Controls are exogenous and observations only depend on same- or
    # earlier-stage variables, so controls-first-then-stage order is topological.
    synth_order = [r for r in roster if r[1] == CONTROL] + sorted(
        (r for r in roster if r[1] == OBSERVATION), key=lambda r: r[2]
    )

    def synthesize(noise_matrix: np.ndarray) -> np.ndarray:
        X = np.zeros_like(noise_matrix)
        for name, _, _ in synth_order:
            j = col[name]
            X[:, j] = noise_matrix[:, j]
            for p, c in coefs[name].items():
                X[:, j] += c * X[:, col[p]]
        return X

    clean = synthesize(noise)
    mu = clean.mean(axis=0)
    sd = clean.std(axis=0)

    intervened_noise = noise.copy()
    labels: list[dict] = []
    for iv in spec.interventions:
        j = col[iv.node]
        rows = list(iv.affected_rows)
        intervened_noise[rows, j] = iv.shift * spec.noise_sigma
        for r in rows:
            labels.append({"row": int(r), "cause": iv.node, "shift": iv.shift})
    final = synthesize(intervened_noise) if spec.interventions else clean

    entries = {}
    for name, var_type, stage in roster:
        j = col[name]
        kind = "set angle" if name.startswith("SetAngle") else (
            "grind depth" if name.startswith("GrindDepth") else "surface measurement"
        )
        entries[name] = VariableInfo(
            description=f"{kind} at grinding stage {stage}",
            unit="deg" if name.startswith("SetAngle") else "mm",
            location=f"station_{stage}",
            subsystem="grinder",
            var_type=var_type,
            stage=stage,
            tolerance=Tolerance(float(mu[j] - 3 * sd[j]), float(mu[j] + 3 * sd[j])),
        )
    catalog = VariableCatalog(entries)

    edges = [
        Edge(p, child, True, coefs[child][p])
        for child, _, _ in roster
        for p in parents[child]
    ]
    graph = CausalGraph(names, edges, algorithm=GES, constrained=True)

    table = DataTable(pd.DataFrame(final, columns=names))
    labels.sort(key=lambda d: (d["row"], d["cause"]))
    return GeneratedData(table, catalog, graph, labels)
