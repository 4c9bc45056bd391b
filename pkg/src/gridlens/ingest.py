"""Delimited-file ingestion and serialization.

Job traces are parsed with a reject-and-continue policy: a malformed row is
recorded in ``TraceBundle.rejects`` together with its line number and never
aborts the parse.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Mapping, Optional, TextIO

from .errors import (
    DuplicateSite,
    EmptyInput,
    HeaderMissing,
    InvalidRecord,
    MalformedInput,
    MissingField,
    SchemaMismatch,
)
from .trace_model import (
    GEN_FIELDS,
    UNKNOWN,
    GenRecord,
    HiddenFeatures,
    JobRecord,
    JobStatus,
    SiteProfile,
    VisibleFeatures,
    to_gen_record,
)

logger = logging.getLogger(__name__)

# logical field -> CSV header
DEFAULT_JOB_COLUMNS = {
    "job_id": "job_id",
    "creation_time": "creationtime",
    "start_time": "starttime",
    "end_time": "endtime",
    "computing_site": "computingsite",
    "job_status": "jobstatus",
    "error_codes": "errorcodes",
    "cores": "cores",
    "cpu_time": "cputime",
    "n_input_files": "ninputdatafiles",
    "input_file_bytes": "inputfilebytes",
    "project": "project",
    "prod_step": "prodstep",
    "data_type": "datatype",
    "submitting_group": "group",
}
REQUIRED_JOB_FIELDS = ("job_id", "creation_time", "computing_site", "job_status")

GEN_COLUMNS = {
    "creation_time": "creationtime",
    "computing_site": "computingsite",
    "project": "project",
    "prod_step": "prodstep",
    "data_type": "datatype",
    "n_input_files": "ninputdatafiles",
    "input_file_bytes": "inputfilebytes",
    "job_status": "jobstatus",
    "workload": "workload",
}

SITE_HEADER_ALIASES = {
    "site": ("site", "site_name"),
    "cores": ("cores", "core_count"),
    "gflops_per_core": ("gflops_per_core",),
}

EVENT_COLUMNS = ("time", "kind", "job_id", "site", "cores")
# error code attached to jobs that failed inside the simulator
SIM_FAILURE_CODE = -1


@dataclass
class TraceBundle:
    jobs: list = field(default_factory=list)
    sites: dict = field(default_factory=dict)
    rejects: list = field(default_factory=list)  # (line number, reason)


def parse_timestamp(text: str) -> int:
    """Integer/float epoch seconds or ISO-8601 to integer epoch seconds.

    Naive ISO timestamps are taken to be UTC. Sub-second parts are truncated.
    """
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return int(float(text) // 1)
    except ValueError:
        pass
    iso = text[:-1] + "+00:00" if text.endswith(("Z", "z")) else text
    try:
        stamp = datetime.fromisoformat(iso)
    except ValueError:
        raise InvalidRecord("bad timestamp") from None
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    delta = stamp - datetime(1970, 1, 1, tzinfo=timezone.utc)
    return delta.days * 86400 + delta.seconds


def _parse_int(text: str, what: str) -> int:
    try:
        value = float(text)
    except ValueError:
        raise InvalidRecord(f"bad {what}") from None
    if not value.is_integer():
        raise InvalidRecord(f"bad {what}")
    return int(value)


def _parse_codes(text: str) -> frozenset:
    codes = set()
    for part in text.split(";"):
        part = part.strip()
        if part:
            codes.add(_parse_int(part, "error code"))
    return frozenset(codes)


def _label(text: Optional[str]) -> str:
    text = (text or "").strip()
    return text if text else UNKNOWN


def _row_to_job(row: Mapping[str, str], cols: Mapping[str, Optional[str]]) -> JobRecord:
    def get(name: str) -> str:
        header = cols.get(name)
        if header is None:
            return ""
        return (row.get(header) or "").strip()

    job_id = get("job_id")
    if not job_id:
        raise InvalidRecord("missing job_id")
    created = get("creation_time")
    if not created:
        raise InvalidRecord("missing creation time")
    status = get("job_status")
    if not status:
        raise InvalidRecord("missing status")
    start, end = get("start_time"), get("end_time")
    cores, cpu = get("cores"), get("cpu_time")
    try:
        cpu_time = float(cpu) if cpu else None
    except ValueError:
        raise InvalidRecord("bad cpu_time") from None
    group = get("submitting_group")
    return JobRecord(
        job_id=job_id,
        creation_time=parse_timestamp(created),
        start_time=parse_timestamp(start) if start else None,
        end_time=parse_timestamp(end) if end else None,
        computing_site=_label(get("computing_site")),
        job_status=JobStatus.parse(status),
        error_codes=_parse_codes(get("error_codes")),
        cores=_parse_int(cores, "cores") if cores else 1,
        cpu_time=cpu_time,
        n_input_files=_parse_int(get("n_input_files") or "0", "n_input_files"),
        input_file_bytes=_parse_int(get("input_file_bytes") or "0", "input_file_bytes"),
        project=_label(get("project")),
        prod_step=_label(get("prod_step")),
        data_type=_label(get("data_type")),
        submitting_group=group or None,
    )


def parse_jobs(stream: TextIO, schema: Optional[Mapping[str, str]] = None) -> TraceBundle:
    """Parse a jobs CSV into a :class:`TraceBundle`.

    ``schema`` maps logical field names (``creation_time``, ``job_status``...)
    to header names and overrides :data:`DEFAULT_JOB_COLUMNS` entry by entry.
    Columns absent from the header read as empty fields.
    """
    mapping = dict(DEFAULT_JOB_COLUMNS)
    if schema:
        unknown = set(schema) - set(mapping)
        if unknown:
            raise SchemaMismatch(f"unknown job fields in schema: {sorted(unknown)}")
        mapping.update(schema)

    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise HeaderMissing("input is empty") from None
    missing = [mapping[f] for f in REQUIRED_JOB_FIELDS if mapping[f] not in header]
    if missing:
        raise HeaderMissing(f"header lacks required columns {missing}")
    cols = {name: (h if h in header else None) for name, h in mapping.items()}

    bundle = TraceBundle()
    seen = set()
    n_rows = 0
    for values in reader:
        if not values or all(not v.strip() for v in values):
            continue
        n_rows += 1
        line = reader.line_num
        if len(values) != len(header):
            bundle.rejects.append((line, "column count"))
            continue
        try:
            job = _row_to_job(dict(zip(header, values)), cols)
        except InvalidRecord as exc:
            bundle.rejects.append((line, exc.reason))
            continue
        if job.job_id in seen:
            bundle.rejects.append((line, "duplicate job_id"))
            continue
        seen.add(job.job_id)
        bundle.jobs.append(job)

    if not bundle.jobs:
        raise EmptyInput(f"no valid job rows ({n_rows} rows, {len(bundle.rejects)} rejected)")
    if bundle.rejects:
        logger.warning("rejected %d of %d job rows", len(bundle.rejects), n_rows)
    return bundle


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return str(int(value)) if value.is_integer() and abs(value) < 2**53 else repr(value)
    return str(value)


def write_jobs(jobs: Iterable[JobRecord], stream: TextIO) -> None:
    """Write jobs with the default column names; ``parse_jobs`` reads it back identically."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(DEFAULT_JOB_COLUMNS.values())
    for job in jobs:
        writer.writerow([
            job.job_id,
            job.creation_time,
            _fmt(job.start_time),
            _fmt(job.end_time),
            job.computing_site,
            job.job_status.value,
            ";".join(str(c) for c in sorted(job.error_codes)),
            job.cores,
            "" if job.cpu_time is None else repr(float(job.cpu_time)),
            job.n_input_files,
            job.input_file_bytes,
            job.project,
            job.prod_step,
            job.data_type,
            job.submitting_group or "",
        ])


def _site_column(header: list, name: str) -> int:
    for alias in SITE_HEADER_ALIASES[name]:
        if alias in header:
            return header.index(alias)
    raise HeaderMissing(f"sites header lacks {name!r}")


def parse_sites(stream: TextIO) -> dict:
    """Parse a site-capability CSV (``site,cores,gflops_per_core``)."""
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise HeaderMissing("sites input is empty") from None
    i_site, i_cores, i_gflops = (_site_column(header, n) for n in ("site", "cores", "gflops_per_core"))

    sites = {}
    for values in reader:
        if not values or all(not v.strip() for v in values):
            continue
        try:
            name = values[i_site].strip()
            cores = float(values[i_cores])
            gflops = float(values[i_gflops])
        except (IndexError, ValueError):
            raise MalformedInput(f"bad site row at line {reader.line_num}") from None
        if not name:
            raise MalformedInput(f"empty site name at line {reader.line_num}")
        if name in sites:
            raise DuplicateSite(f"site {name!r} listed twice")
        if not cores.is_integer():
            raise MalformedInput(f"non-integer core count for site {name!r}")
        sites[name] = SiteProfile(name, int(cores), gflops)
    if not sites:
        raise EmptyInput("no site rows")
    return sites


def write_sites(sites: Iterable[SiteProfile], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["site", "cores", "gflops_per_core"])
    for s in sites:
        writer.writerow([s.site_name, s.core_count, repr(float(s.gflops_per_core))])


def split_features(record: GenRecord) -> tuple:
    """Split a record into its pre-execution (7 fields) and post-execution (2 fields) views."""
    visible = VisibleFeatures(
        creation_time=record.creation_time,
        computing_site=record.computing_site,
        project=record.project,
        prod_step=record.prod_step,
        data_type=record.data_type,
        n_input_files=record.n_input_files,
        input_file_bytes=record.input_file_bytes,
    )
    return visible, HiddenFeatures(job_status=record.job_status, workload=record.workload)


def merge_features(visible: VisibleFeatures, hidden: HiddenFeatures) -> GenRecord:
    return GenRecord(**vars(visible), **vars(hidden))


def gen_records_from_trace(bundle: TraceBundle, sites: Mapping[str, SiteProfile]) -> tuple:
    """Convert parsed jobs to GenRecords, skipping jobs whose site or cpu_time is unknown.

    Returns ``(records, skipped)`` where ``skipped`` is a list of (job_id, reason).
    """
    records, skipped = [], []
    for job in bundle.jobs:
        site = sites.get(job.computing_site)
        if site is None:
            skipped.append((job.job_id, "unknown site"))
            continue
        try:
            records.append(to_gen_record(job, site))
        except MissingField:
            skipped.append((job.job_id, "missing cpu_time"))
    return records, skipped


def write_gen_records(records: Iterable[GenRecord], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(GEN_COLUMNS.values())
    for r in records:
        writer.writerow([_fmt(getattr(r, name)) for name in GEN_FIELDS])


def read_gen_records(stream: TextIO) -> list:
    """Read a GenRecord CSV. Unlike job traces, any malformed row is an error."""
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        raise HeaderMissing("input is empty")
    missing = [h for h in GEN_COLUMNS.values() if h not in reader.fieldnames]
    if missing:
        raise HeaderMissing(f"header lacks required columns {missing}")
    out = []
    for row in reader:
        try:
            out.append(GenRecord(
                creation_time=parse_timestamp(row["creationtime"]),
                computing_site=_label(row["computingsite"]),
                project=_label(row["project"]),
                prod_step=_label(row["prodstep"]),
                data_type=_label(row["datatype"]),
                n_input_files=float(row["ninputdatafiles"]),
                input_file_bytes=float(row["inputfilebytes"]),
                job_status=_label(row["jobstatus"]).lower(),
                workload=float(row["workload"]),
            ))
        except (InvalidRecord, ValueError, TypeError) as exc:
            raise MalformedInput(f"bad record at line {reader.line_num}: {exc}") from None
    if not out:
        raise EmptyInput("no records")
    return out


def jobs_from_event_log(stream: TextIO) -> list:
    """Rebuild one JobRecord per job from a simulator event log.

    Arrival becomes the creation time, Start the start time and Finish/Fail
    the end time. Failed jobs carry :data:`SIM_FAILURE_CODE`; jobs that never
    started are reported as Closed.
    """
    reader = csv.DictReader(stream)
    if reader.fieldnames is None or any(c not in reader.fieldnames for c in EVENT_COLUMNS):
        raise HeaderMissing(f"event log header must contain {list(EVENT_COLUMNS)}")
    jobs = {}
    for row in reader:
        try:
            jid = row["job_id"]
            info = jobs.setdefault(jid, {"cores": int(row["cores"])})
            kind = row["kind"].strip().lower()
            t = parse_timestamp(row["time"])
        except (ValueError, InvalidRecord):
            raise MalformedInput(f"bad event at line {reader.line_num}") from None
        info["site"] = row["site"]
        if kind in ("arrival", "start"):
            info[kind] = t
        elif kind in ("finish", "fail"):
            info["end"], info["outcome"] = t, kind
        else:
            raise MalformedInput(f"unknown event kind {kind!r} at line {reader.line_num}")
    out = []
    for jid, info in jobs.items():
        outcome = info.get("outcome")
        status = {"finish": JobStatus.FINISHED, "fail": JobStatus.FAILED}.get(outcome, JobStatus.CLOSED)
        out.append(JobRecord(
            job_id=jid,
            creation_time=info["arrival"],
            start_time=info.get("start"),
            end_time=info.get("end"),
            computing_site=_label(info["site"]),
            job_status=status,
            error_codes=frozenset({SIM_FAILURE_CODE}) if outcome == "fail" else frozenset(),
            cores=info["cores"],
        ))
    return out
