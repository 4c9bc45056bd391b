"""Report files: KPI JSON/CSV plot data, fidelity overlays and run manifests.

All writers produce byte-identical output for identical inputs; nothing here
looks at the clock.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__, kpi
from .errors import EmptyInput
from .fidelity import FidelityReport

logger = logging.getLogger(__name__)

KPI_FILES = (
    "status_distribution.json",
    "error_breakdown.json",
    "queue_time_histogram.csv",
    "wasted_core_hours.csv",
    "site_share_jobs.csv",
    "site_share_bytes.csv",
)
MANIFEST = "manifest.json"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _csv_writer(path: Path):
    fh = open(path, "w", encoding="utf-8", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


@dataclass
class RunManifest:
    command: str
    inputs: dict  # file name -> sha256 of its bytes
    params: dict
    seed: int | None
    version: str = __version__
    outputs: dict = field(default_factory=dict)  # file name -> sha256

    def write(self, out_dir: Path) -> Path:
        path = Path(out_dir) / MANIFEST
        _dump_json(asdict(self), path)
        return path

    def record_outputs(self, out_dir: Path, names: Sequence[str]) -> None:
        self.outputs = {name: sha256_file(Path(out_dir) / name) for name in sorted(names)}


def input_digests(*paths) -> dict:
    return {Path(p).name: sha256_file(p) for p in paths if p is not None}


def error_breakdown_json(eb: kpi.ErrorBreakdown) -> dict:
    return {
        "per_code": {str(code): n for code, n in eb.per_code.items()},
        "total_failed": eb.total_failed,
        "multi_reason_failed": eb.multi_reason_failed,
        "percent_sum": eb.percent_sum,
        "percent_total": round(100.0 * eb.percent_sum, 9),
        "non_failed_with_codes": eb.non_failed_with_codes,
    }


def _write_histogram(h: kpi.Histogram, path: Path) -> None:
    fh, w = _csv_writer(path)
    with fh:
        w.writerow(["label", "bin_lo", "bin_hi", "count"])
        w.writerow(["underflow", "-inf", h.bin_edges[0], h.underflow])
        for lo, hi, c in zip(h.bin_edges, h.bin_edges[1:], h.counts):
            w.writerow(["bin", repr(lo), repr(hi), c])
        w.writerow(["overflow", h.bin_edges[-1], "inf", h.overflow])
        w.writerow(["not_started", "", "", h.excluded])


def read_histogram(path) -> kpi.Histogram:
    """Inverse of the histogram CSV writer."""
    edges, counts = [], []
    under = over = excluded = 0
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            label = row["label"]
            if label == "bin":
                if not edges:
                    edges.append(float(row["bin_lo"]))
                edges.append(float(row["bin_hi"]))
                counts.append(int(row["count"]))
            elif label == "underflow":
                under = int(row["count"])
            elif label == "overflow":
                over = int(row["count"])
            elif label == "not_started":
                excluded = int(row["count"])
    return kpi.Histogram(tuple(edges), tuple(counts), under, over, excluded)


def _write_shares(jobs, weight: kpi.ShareWeight, threshold: float, path: Path) -> None:
    fh, w = _csv_writer(path)
    with fh:
        w.writerow(["site", "share"])
        try:
            share = kpi.site_share(jobs, weight, threshold)
        except EmptyInput as exc:
            logger.warning("site share by %s skipped: %s", weight.value, exc)
            return
        for site, frac in share.shares.items():
            w.writerow([site, repr(frac)])
        w.writerow([kpi.OTHERS, repr(share.others_bucket)])


def write_kpi_reports(
    jobs: Sequence,
    out_dir,
    *,
    threshold: float = kpi.DEFAULT_OTHERS_THRESHOLD,
    edges=None,
    wasted_mode: kpi.WastedTimeMode = kpi.WastedTimeMode.WALL,
) -> list:
    """Compute every KPI over ``jobs`` and write the six report files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    status = kpi.status_distribution(jobs)
    doc = {s.value: n for s, n in status.items()}
    doc["total"] = sum(status.values())
    _dump_json(doc, out / "status_distribution.json")

    _dump_json(error_breakdown_json(kpi.error_breakdown(jobs)), out / "error_breakdown.json")
    _write_histogram(kpi.queue_time_histogram(jobs, edges), out / "queue_time_histogram.csv")

    fh, w = _csv_writer(out / "wasted_core_hours.csv")
    with fh:
        w.writerow(["combination", "core_hours"])
        for key, values in kpi.wasted_core_hours(jobs, wasted_mode).items():
            label = ";".join(str(c) for c in key)
            for v in values:
                w.writerow([label, repr(v)])

    _write_shares(jobs, kpi.ShareWeight.JOB_COUNT, threshold, out / "site_share_jobs.csv")
    _write_shares(jobs, kpi.ShareWeight.INPUT_BYTES, threshold, out / "site_share_bytes.csv")
    return list(KPI_FILES)


def write_fidelity(report: FidelityReport, out_dir, stem: str = "fidelity") -> list:
    out = Path(out_dir)
    _dump_json(report.to_json(), out / f"{stem}.json")
    fh, w = _csv_writer(out / f"{stem}_overlay.csv")
    with fh:
        w.writerow(["feature", "bin_lo", "bin_hi", "category", "real", "synth"])
        for name, data in report.overlays.items():
            if "edges" in data:
                e = data["edges"]
                for i, (r, s) in enumerate(zip(data["real"], data["synth"])):
                    w.writerow([name, repr(e[i]), repr(e[i + 1]), "", repr(r), repr(s)])
            else:
                for c, r, s in zip(data["categories"], data["real"], data["synth"]):
                    w.writerow([name, "", "", c, repr(r), repr(s)])
    return [f"{stem}.json", f"{stem}_overlay.csv"]
