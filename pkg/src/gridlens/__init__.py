"""Workload-trace introspection: KPIs, SMOTE workload synthesis and what-if grid simulation."""

__version__ = "0.1.0"

from .trace_model import GenRecord, JobRecord, JobStatus, SiteProfile, to_gen_record  # noqa: E402

__all__ = ["GenRecord", "JobRecord", "JobStatus", "SiteProfile", "to_gen_record", "__version__"]
