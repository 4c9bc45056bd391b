"""Per-feature comparison of a synthetic table against the real one."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptySample, SchemaMismatch
from .trace_model import GEN_FIELDS, NUMERICAL_FIELDS, GenRecord

OVERLAY_BINS = 50
LOG_WIDTH_FEATURES = ("input_file_bytes", "workload")


@dataclass(frozen=True)
class FidelityReport:
    per_feature: dict  # name -> {"kind", "statistic", "score"}
    overall: float
    n_real: int
    n_synth: int
    overlays: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> dict:
        return {
            "n_real": self.n_real,
            "n_synth": self.n_synth,
            "overall": self.overall,
            "per_feature": self.per_feature,
        }


def ks_statistic(real: Sequence[float], synth: Sequence[float]) -> float:
    """Two-sample Kolmogorov-Smirnov statistic, sup |F_real - F_synth|.

    Both empirical CDFs are evaluated at every observed value; the counts are
    compared in integer arithmetic so the result is exact up to the final
    division.
    """
    a = np.sort(np.asarray(real, dtype=float))
    b = np.sort(np.asarray(synth, dtype=float))
    if a.size == 0 or b.size == 0:
        raise EmptySample("KS statistic needs two nonempty samples")
    grid = np.concatenate([a, b])
    ca = np.searchsorted(a, grid, side="right").astype(np.int64)
    cb = np.searchsorted(b, grid, side="right").astype(np.int64)
    gap = np.abs(ca * b.size - cb * a.size).max()
    return float(gap) / (a.size * b.size)


def total_variation(real: Sequence, synth: Sequence) -> float:
    """Half the L1 distance between the two category frequency tables."""
    if len(real) == 0 or len(synth) == 0:
        raise EmptySample("total variation needs two nonempty samples")
    fa, fb = Counter(real), Counter(synth)
    na, nb = len(real), len(synth)
    diff = sum(abs(fa[c] * nb - fb[c] * na) for c in fa.keys() | fb.keys())
    return diff / (2 * na * nb)


def _edges(real: np.ndarray, synth: np.ndarray, log_width: bool) -> np.ndarray:
    lo = min(real.min(), synth.min())
    hi = max(real.max(), synth.max())
    if hi == lo:
        hi = lo + 1.0
    if log_width and lo >= 0:
        return np.expm1(np.linspace(np.log1p(lo), np.log1p(hi), OVERLAY_BINS + 1))
    return np.linspace(lo, hi, OVERLAY_BINS + 1)


def _columns(records: Sequence[GenRecord], what: str) -> dict:
    if not records:
        raise EmptySample(f"{what} table is empty")
    if not all(isinstance(r, GenRecord) for r in records):
        raise SchemaMismatch(f"{what} table must hold GenRecord rows")
    return {name: [getattr(r, name) for r in records] for name in GEN_FIELDS}


def compare(real: Sequence[GenRecord], synth: Sequence[GenRecord]) -> FidelityReport:
    """Score each of the nine features: KS for numerical, total variation for categorical.

    ``overlays`` carries plot data per feature: histogram bins over the union
    range for numerical features, category frequencies otherwise.
    """
    rc, sc = _columns(real, "real"), _columns(synth, "synthetic")
    per_feature, overlays = {}, {}
    for name in GEN_FIELDS:
        if name in NUMERICAL_FIELDS:
            a = np.asarray(rc[name], dtype=float)
            b = np.asarray(sc[name], dtype=float)
            per_feature[name] = {"kind": "numerical", "statistic": "ks", "score": ks_statistic(a, b)}
            edges = _edges(a, b, name in LOG_WIDTH_FEATURES)
            overlays[name] = {
                "edges": edges.tolist(),
                "real": (np.histogram(a, edges)[0] / a.size).tolist(),
                "synth": (np.histogram(b, edges)[0] / b.size).tolist(),
            }
        else:
            per_feature[name] = {
                "kind": "categorical",
                "statistic": "total_variation",
                "score": total_variation(rc[name], sc[name]),
            }
            fa, fb = Counter(rc[name]), Counter(sc[name])
            cats = sorted(fa.keys() | fb.keys(), key=str)
            overlays[name] = {
                "categories": cats,
                "real": [fa[c] / len(real) for c in cats],
                "synth": [fb[c] / len(synth) for c in cats],
            }
    overall = float(np.mean([v["score"] for v in per_feature.values()]))
    return FidelityReport(per_feature, overall, len(real), len(synth), overlays)
