"""Record types shared by ingestion, KPIs, generation and simulation."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields
from typing import Optional

from .errors import InvalidRecord, MissingField, NonPositiveCapacity, SiteMismatch

UNKNOWN = "UNKNOWN"


class JobStatus(enum.Enum):
    FINISHED = "finished"
    FAILED = "failed"
    CLOSED = "closed"
    CANCELLED = "cancelled"

    @classmethod
    def parse(cls, text: str) -> "JobStatus":
        key = text.strip().lower()
        if key == "canceled":
            key = "cancelled"
        try:
            return cls(key)
        except ValueError:
            raise InvalidRecord("unknown status") from None

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class JobRecord:
    """One executed job as recorded by the workload management system.

    Timestamps are integer epoch seconds (UTC). ``cpu_time`` is optional
    because many dumps omit it for jobs that never ran.
    """

    job_id: str
    creation_time: int
    computing_site: str
    job_status: JobStatus
    start_time: Optional[int] = None
    end_time: Optional[int] = None
    error_codes: frozenset = field(default_factory=frozenset)
    cores: int = 1
    cpu_time: Optional[float] = None
    n_input_files: int = 0
    input_file_bytes: int = 0
    project: str = UNKNOWN
    prod_step: str = UNKNOWN
    data_type: str = UNKNOWN
    submitting_group: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.error_codes, frozenset):
            object.__setattr__(self, "error_codes", frozenset(self.error_codes))
        if self.start_time is not None and self.start_time < self.creation_time:
            raise InvalidRecord("timestamp order")
        if self.end_time is not None:
            if self.start_time is None or self.end_time < self.start_time:
                raise InvalidRecord("timestamp order")
        if self.job_status is JobStatus.FAILED and not self.error_codes:
            raise InvalidRecord("failed without error code")
        if self.job_status is JobStatus.FINISHED and self.error_codes:
            raise InvalidRecord("finished with error code")
        if self.cores < 1:
            raise InvalidRecord("non-positive cores")
        if self.cpu_time is not None and not self.cpu_time >= 0:
            raise InvalidRecord("negative cpu_time")
        if self.n_input_files < 0 or self.input_file_bytes < 0:
            raise InvalidRecord("negative input size")


@dataclass(frozen=True)
class SiteProfile:
    site_name: str
    core_count: int
    gflops_per_core: float

    def __post_init__(self):
        if self.core_count < 1 or not self.gflops_per_core > 0:
            raise NonPositiveCapacity(f"site {self.site_name!r} has non-positive capacity")

    @property
    def total_gflops(self) -> float:
        return self.core_count * self.gflops_per_core


@dataclass(frozen=True)
class GenRecord:
    """The nine-variable row used for generative modeling.

    The first seven fields are known before a job runs; ``job_status`` and
    ``workload`` (total GFLOP) only afterwards.
    """

    creation_time: int
    computing_site: str
    project: str
    prod_step: str
    data_type: str
    n_input_files: float
    input_file_bytes: float
    job_status: str
    workload: float

    def __post_init__(self):
        for name in ("n_input_files", "input_file_bytes", "workload"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise InvalidRecord(f"invalid {name}")


GEN_FIELDS = tuple(f.name for f in fields(GenRecord))
VISIBLE_FIELDS = GEN_FIELDS[:7]
HIDDEN_FIELDS = GEN_FIELDS[7:]
NUMERICAL_FIELDS = ("creation_time", "n_input_files", "input_file_bytes", "workload")


@dataclass(frozen=True)
class VisibleFeatures:
    """Pre-execution view of a job. Allocation policies only ever see this."""

    creation_time: int
    computing_site: str
    project: str
    prod_step: str
    data_type: str
    n_input_files: float
    input_file_bytes: float


@dataclass(frozen=True)
class HiddenFeatures:
    job_status: str
    workload: float


def to_gen_record(job: JobRecord, site: SiteProfile) -> GenRecord:
    """Project a job onto the nine generative variables.

    ``workload`` is cores x GFLOP/s per core x CPU seconds, i.e. total GFLOP.
    """
    if job.computing_site != site.site_name:
        raise SiteMismatch(f"job {job.job_id} ran at {job.computing_site!r}, not {site.site_name!r}")
    if job.cpu_time is None:
        raise MissingField(f"job {job.job_id} has no cpu_time")
    return GenRecord(
        creation_time=job.creation_time,
        computing_site=job.computing_site,
        project=job.project,
        prod_step=job.prod_step,
        data_type=job.data_type,
        n_input_files=float(job.n_input_files),
        input_file_bytes=float(job.input_file_bytes),
        job_status=job.job_status.value,
        workload=job.cores * site.gflops_per_core * job.cpu_time,
    )
