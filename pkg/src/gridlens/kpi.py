"""Performance indicators over job traces.

Queue times, status and error distributions, wasted core-hours per error
combination, and per-site shares with small sites folded into "Others".
"""

from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import EmptyInput, InvalidBins, NotStarted
from .trace_model import JobRecord, JobStatus

OTHERS = "Others"
DEFAULT_OTHERS_THRESHOLD = 0.019


class ShareWeight(enum.Enum):
    JOB_COUNT = "jobs"
    INPUT_BYTES = "bytes"


class WastedTimeMode(enum.Enum):
    WALL = "wall"  # cores x (end - start)
    CPU = "cpu"  # cores x cpu_time


@dataclass(frozen=True)
class Histogram:
    bin_edges: tuple
    counts: tuple
    underflow: int = 0
    overflow: int = 0
    excluded: int = 0  # jobs that never started


@dataclass(frozen=True)
class ErrorBreakdown:
    per_code: dict
    total_failed: int
    multi_reason_failed: int
    percent_sum: float
    # jobs carrying codes whose status is not Failed; not part of the breakdown
    non_failed_with_codes: int = 0


@dataclass(frozen=True)
class SiteShare:
    shares: dict
    others_bucket: float
    threshold: float
    folded_sites: tuple = field(default_factory=tuple)


def queue_time(job: JobRecord) -> int:
    """Seconds between submission and execution start."""
    if job.start_time is None:
        raise NotStarted(f"job {job.job_id} never started")
    return job.start_time - job.creation_time


def default_queue_bins(n_bins: int = 50) -> np.ndarray:
    """Logarithmic edges from one minute to thirty days."""
    return np.geomspace(60.0, 30 * 86400.0, n_bins + 1)


def _check_edges(edges) -> np.ndarray:
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2:
        raise InvalidBins("need at least two bin edges")
    if not np.all(np.isfinite(edges)) or np.any(np.diff(edges) <= 0):
        raise InvalidBins("bin edges must be finite and strictly ascending")
    return edges


def histogram(values: Sequence[float], edges) -> Histogram:
    """Bin values into [e0, e1), [e1, e2), ..., [e_{B-1}, e_B]."""
    edges = _check_edges(edges)
    values = np.asarray(values, dtype=float)
    under = int(np.count_nonzero(values < edges[0]))
    over = int(np.count_nonzero(values > edges[-1]))
    inside = values[(values >= edges[0]) & (values <= edges[-1])]
    idx = np.searchsorted(edges, inside, side="right") - 1
    idx[idx == edges.size - 1] = edges.size - 2
    counts = np.bincount(idx, minlength=edges.size - 1)
    return Histogram(tuple(edges.tolist()), tuple(int(c) for c in counts), under, over)


def queue_time_histogram(jobs: Iterable[JobRecord], edges=None) -> Histogram:
    """Histogram of queue times; unstarted jobs are counted in ``excluded``."""
    edges = default_queue_bins() if edges is None else edges
    waits, excluded = [], 0
    for job in jobs:
        if job.start_time is None:
            excluded += 1
        else:
            waits.append(job.start_time - job.creation_time)
    h = histogram(waits, edges)
    return Histogram(h.bin_edges, h.counts, h.underflow, h.overflow, excluded)


def status_distribution(jobs: Iterable[JobRecord]) -> dict:
    counts = {status: 0 for status in JobStatus}
    for job in jobs:
        counts[job.job_status] += 1
    return counts


def error_breakdown(jobs: Iterable[JobRecord]) -> ErrorBreakdown:
    """Per-code failure counts.

    A failed job with several distinct codes counts once under each, so
    ``percent_sum`` exceeds 1 as soon as any job fails for multiple reasons.
    """
    per_code = defaultdict(int)
    failed = multi = stray = 0
    for job in jobs:
        if job.job_status is not JobStatus.FAILED:
            if job.error_codes:
                stray += 1
            continue
        failed += 1
        if len(job.error_codes) >= 2:
            multi += 1
        for code in job.error_codes:
            per_code[code] += 1
    percent = sum(per_code.values()) / failed if failed else 0.0
    return ErrorBreakdown(dict(sorted(per_code.items())), failed, multi, percent, stray)


def combination_key(codes: Iterable[int]) -> tuple:
    return tuple(sorted(set(codes)))


def wasted_core_hours(jobs: Iterable[JobRecord], mode: WastedTimeMode = WastedTimeMode.WALL) -> dict:
    """Core-hours consumed by failed jobs, keyed by their sorted error-code tuple.

    Each key maps to the per-job values (in input order) rather than a total,
    so the distribution per combination can be plotted.
    """
    mode = WastedTimeMode(mode)
    out = defaultdict(list)
    for job in jobs:
        if job.job_status is not JobStatus.FAILED:
            continue
        if mode is WastedTimeMode.WALL:
            if job.start_time is None or job.end_time is None:
                continue
            seconds = job.end_time - job.start_time
        else:
            if job.cpu_time is None:
                continue
            seconds = job.cpu_time
        out[combination_key(job.error_codes)].append(job.cores * seconds / 3600.0)
    return dict(sorted(out.items()))


def total_core_hours(wasted: Mapping[tuple, Sequence[float]]) -> dict:
    return {key: math.fsum(values) for key, values in wasted.items()}


def fold_shares(weights: Mapping[str, float], threshold: float = DEFAULT_OTHERS_THRESHOLD) -> SiteShare:
    """Normalize ``weights`` and fold entries below ``threshold`` into Others."""
    if not 0 <= threshold < 1:
        raise ValueError("threshold must lie in [0, 1)")
    if not weights:
        raise EmptyInput("no sites to share")
    total = math.fsum(weights.values())
    if not total > 0:
        raise EmptyInput("total weight is zero")
    shares, folded = {}, []
    for site, w in sorted(weights.items(), key=lambda kv: (-kv[1], kv[0])):
        frac = w / total
        if frac >= threshold:
            shares[site] = frac
        else:
            folded.append(site)
    others = math.fsum(weights[s] for s in folded) / total
    return SiteShare(shares, others, threshold, tuple(sorted(folded)))


def site_share(
    jobs: Iterable[JobRecord],
    weight: ShareWeight = ShareWeight.JOB_COUNT,
    threshold: float = DEFAULT_OTHERS_THRESHOLD,
) -> SiteShare:
    weight = ShareWeight(weight)
    totals = defaultdict(int)
    for job in jobs:
        totals[job.computing_site] += 1 if weight is ShareWeight.JOB_COUNT else job.input_file_bytes
    if not totals:
        raise EmptyInput("no jobs")
    return fold_shares(totals, threshold)


def queue_times(jobs: Iterable[JobRecord]) -> dict:
    """job_id -> queue time for every started job."""
    return {j.job_id: j.start_time - j.creation_time for j in jobs if j.start_time is not None}


def describe(values: Sequence[float]) -> Optional[dict]:
    if not len(values):
        return None
    arr = np.asarray(values, dtype=float)
    return {
        "count": int(arr.size),
        "mean": float(arr.mean()),
        "median": float(np.median(arr)),
        "p90": float(np.quantile(arr, 0.9)),
        "max": float(arr.max()),
    }
