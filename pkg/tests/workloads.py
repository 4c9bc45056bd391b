"""Random trace and table generators shared by the test modules."""

from __future__ import annotations

import numpy as np

from gridlens.simulator import PolicySpec, Scenario
from gridlens.trace_model import GenRecord, JobRecord, JobStatus, SiteProfile

T0 = 1_700_000_000

MIX_SITES = ("BNL", "CERN", "TRIUMF", "IN2P3", "RAL")
MIX_SITE_P = (0.40, 0.25, 0.15, 0.12, 0.08)
MIX_SITE_MU = (18.0, 19.0, 20.0, 18.5, 19.5)  # log-workload mean per site
MIX_CATS = {
    "project": (("data24", "mc23", "user"), (0.6, 0.3, 0.1)),
    "prod_step": (("evgen", "simul", "recon"), (0.5, 0.3, 0.2)),
    "data_type": (("AOD", "DAOD", "HITS", "EVNT"), (0.4, 0.3, 0.2, 0.1)),
    "job_status": (("finished", "failed", "closed", "cancelled"), (0.7, 0.2, 0.06, 0.04)),
}


def mixture_records(n: int, seed: int) -> list:
    """Table from a known generator: log-normal bytes, geometric file counts,
    five sites with fixed frequencies and site-dependent log-normal workload."""
    rng = np.random.default_rng(seed)
    site = rng.choice(len(MIX_SITES), n, p=MIX_SITE_P)
    cats = {}
    for name, (values, p) in MIX_CATS.items():
        cats[name] = np.array(values, dtype=object)[rng.choice(len(values), n, p=p)]
    created = np.sort(rng.integers(T0, T0 + 150 * 86400, n))
    nfiles = rng.geometric(0.3, n)
    nbytes = np.round(rng.lognormal(21.0, 1.2, n))
    workload = rng.lognormal(np.array(MIX_SITE_MU)[site], 1.0)
    return [
        GenRecord(
            creation_time=int(created[i]),
            computing_site=MIX_SITES[site[i]],
            project=cats["project"][i],
            prod_step=cats["prod_step"][i],
            data_type=cats["data_type"][i],
            n_input_files=float(nfiles[i]),
            input_file_bytes=float(nbytes[i]),
            job_status=cats["job_status"][i],
            workload=float(workload[i]),
        )
        for i in range(n)
    ]


def random_table(n: int, rng: np.random.Generator, vocab: int = 3) -> list:
    """Small random GenRecord table with continuous numerics and few categories."""
    letters = "ABCDEFGH"[:vocab]
    out = []
    for _ in range(n):
        out.append(GenRecord(
            creation_time=int(T0 + rng.integers(0, 10**7)),
            computing_site=str(rng.choice(list(letters))),
            project=str(rng.choice(list(letters))),
            prod_step=str(rng.choice(list(letters))),
            data_type=str(rng.choice(list(letters))),
            n_input_files=float(rng.integers(0, 50)),
            input_file_bytes=float(rng.uniform(0, 1e10)),
            job_status=str(rng.choice(["finished", "failed"])),
            workload=float(rng.exponential(1e6)),
        ))
    return out


def random_job(rng: np.random.Generator, i: int, sites=("S1", "S2", "S3", "S4")) -> JobRecord:
    status = list(JobStatus)[rng.integers(0, 4)]
    created = int(T0 + rng.integers(0, 10**6))
    start = end = None
    if rng.random() < 0.9:
        start = created + int(rng.integers(0, 5 * 86400)) if rng.random() < 0.97 else created
        if rng.random() < 0.9:
            end = start + int(rng.integers(0, 2 * 86400))
    codes = frozenset()
    if status is JobStatus.FAILED:
        codes = frozenset(int(c) for c in rng.choice([1305, 1361, 1099, 1150, 1201], rng.integers(1, 4)))
    elif status is not JobStatus.FINISHED and rng.random() < 0.2:
        codes = frozenset({int(rng.choice([1305, 9000]))})
    return JobRecord(
        job_id=f"j{i}",
        creation_time=created,
        start_time=start,
        end_time=end,
        computing_site=str(rng.choice(list(sites))),
        job_status=status,
        error_codes=codes,
        cores=int(rng.choice([1, 1, 4, 8])),
        cpu_time=float(rng.integers(0, 100000)) if rng.random() < 0.9 else None,
        n_input_files=int(rng.integers(0, 20)),
        input_file_bytes=int(rng.integers(0, 10**10)),
        project="mc23",
        prod_step="simul",
        data_type="HITS",
    )


def random_trace(rng: np.random.Generator, n: int) -> list:
    return [random_job(rng, i) for i in range(n)]


def random_sites(rng: np.random.Generator, n: int) -> list:
    return [
        SiteProfile(f"S{i}", int(rng.integers(1, 64)), float(rng.choice([5.0, 10.0, 12.5, 20.0])))
        for i in range(n)
    ]


def gen(t=T0, workload=100.0, status="finished", step="simul", **kw):
    base = dict(creation_time=t, computing_site="X", project="p", prod_step=step, data_type="d",
                n_input_files=1.0, input_file_bytes=1.0, job_status=status, workload=workload)
    base.update(kw)
    return GenRecord(**base)


def random_scenario(rng, max_sites=5, max_jobs=500, policy=None):
    n_sites = int(rng.integers(1, max_sites + 1))
    sites = [SiteProfile(f"S{i}", int(rng.integers(4, 65)), float(rng.choice([1.0, 2.5, 10.0])))
             for i in range(n_sites)]
    n = int(rng.integers(1, max_jobs + 1))
    times = np.sort(T0 + rng.integers(0, 20000, n))
    steps = ("evgen", "simul", "recon")
    workload = [gen(int(t), float(rng.exponential(5e3)) * float(rng.random() > 0.05),
                    str(rng.choice(["finished", "failed"], p=[0.8, 0.2])), str(rng.choice(steps)))
                for t in times]
    smallest = min(s.core_count for s in sites)
    cores = {s: int(rng.integers(1, smallest + 1)) for s in steps}
    name = policy or str(rng.choice(["RoundRobin", "LeastQueued", "FastestService", "Random"]))
    failure = {s.site_name: float(rng.random() * 0.3) for s in sites} if rng.random() < 0.5 else None
    return Scenario(sites, workload, PolicySpec(name), seed=int(rng.integers(0, 2**32)),
                    failure_model=failure, cores_by_prod_step=cores,
                    cutoff=int(T0 + 15000) if rng.random() < 0.3 else None)
