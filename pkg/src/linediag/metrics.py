"""Attribution and orchestration metrics: hits@k, set precision/recall/F1,
criterion success rates, and runtime-scaling fits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


def hits_at_k(ranked: list[str], truth: set[str], k: int) -> int:
    """1 iff any true cause appears within the top-k ranked positions."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    return int(bool(set(ranked[:k]) & set(truth)))


def set_prf(pred: set[str], truth: set[str]) -> tuple[float, float, float]:
    pred, truth = set(pred), set(truth)
    inter = len(pred & truth)
    p = inter / len(pred) if pred else 0.0
    r = inter / len(truth) if truth else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def criterion_success(queries: int, successes: int) -> float:
    """Success percentage, reported to one decimal."""
    if queries <= 0:
        raise ValidationError("queries must be > 0")
    if not 0 <= successes <= queries:
        raise ValidationError(f"successes must be within 0..{queries}, got {successes}")
    return round(100.0 * successes / queries, 1)


@dataclass
class MetricReport:
    hits: dict[int, float] = field(default_factory=dict)
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    details: list[dict] = field(default_factory=list)

    def validate(self) -> None:
        ks = sorted(self.hits)
        for a, b in zip(ks, ks[1:]):
            if self.hits[a] > self.hits[b] + 1e-12:
                raise ValidationError(f"hits@k must be non-decreasing in k: {self.hits}")
        if self.precision + self.recall > 0:
            expected = 2 * self.precision * self.recall / (self.precision + self.recall)
            if abs(self.f1 - expected) > 1e-9:
                raise ValidationError("f1 is not the harmonic mean of precision and recall")

    def to_dict(self) -> dict:
        return {
            "hits": {str(k): v for k, v in self.hits.items()},
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "details": list(self.details),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(
            hits={int(k): float(v) for k, v in d.get("hits", {}).items()},
            precision=float(d.get("precision", 0.0)),
            recall=float(d.get("recall", 0.0)),
            f1=float(d.get("f1", 0.0)),
            details=list(d.get("details", [])),
        )


def aggregate_events(events: list[dict], ks: tuple[int, ...] = (1, 2, 3, 5)) -> MetricReport:
    """Average hits@k and PRF over per-event dicts {ranked, truth, pred}."""
    if not events:
        return MetricReport(hits={k: 0.0 for k in ks})
    hit_sums = {k: 0 for k in ks}
    ps, rs, f1s = [], [], []
    details = []
    for ev in events:
        ranked = list(ev["ranked"])
        truth = set(ev["truth"])
        pred = set(ev.get("pred", ranked))
        row = {"ranked": ranked, "truth": sorted(truth)}
        for k in ks:
            h = hits_at_k(ranked, truth, k)
            hit_sums[k] += h
            row[f"hits@{k}"] = h
        p, r, f1 = set_prf(pred, truth)
        ps.append(p)
        rs.append(r)
        f1s.append(f1)
        row.update({"precision": p, "recall": r, "f1": f1})
        details.append(row)
    n = len(events)
    p_mean, r_mean = float(np.mean(ps)), float(np.mean(rs))
    report = MetricReport(
        hits={k: hit_sums[k] / n for k in ks},
        precision=p_mean,
        recall=r_mean,
        f1=float(np.mean(f1s)),
        details=details,
    )
    return report


@dataclass
class ScalingReport:
    points: list[dict] = field(default_factory=list)  # {"M": int, "runtime_ms": {stage: ms}}
    slope: float = 0.0
    intercept: float = 0.0
    r_squared: float = 0.0
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "points": list(self.points),
            "linear_fit": {"slope": self.slope, "intercept": self.intercept, "r_squared": self.r_squared},
            "degenerate": self.degenerate,
        }


def fit_scaling(points: list[dict]) -> ScalingReport:
    """Least-squares line of total runtime against M; degenerate fits report r2=0."""
    report = ScalingReport(points=list(points))
    ms = np.array([p["M"] for p in points], dtype=float)
    ys = np.array([sum(p["runtime_ms"].values()) for p in points], dtype=float)
    if len(points) < 2 or np.all(ms == ms[0]):
        report.degenerate = True
        return report
    slope, intercept = np.polyfit(ms, ys, 1)
    pred = slope * ms + intercept
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    report.slope = float(slope)
    report.intercept = float(intercept)
    report.r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    if ss_tot == 0:
        report.degenerate = True
    report.r_squared = min(max(report.r_squared, 0.0), 1.0)
    return report
