"""Deterministic discrete-event replay of a workload on a grid of sites.

Each site runs a FIFO queue without backfilling. A job arrives at its
creation time, the allocation policy picks a site from the job's visible
features only, and the job starts once the head of that site's queue fits
into the free cores. Service time is ``workload / (cores * gflops_per_core)``
rounded up to whole seconds; the clock is integer epoch seconds.

Simultaneous events are handled in ``(time, terminal-before-arrival, job_id)``
order, so cores freed at time t are reusable by jobs starting at t.
"""

from __future__ import annotations

import configparser
import csv
import enum
import heapq
import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, TextIO

import numpy as np

from .errors import ConfigError, InfeasibleJob, InputError, InvalidPolicyParams, NoFeasibleSite
from .ingest import EVENT_COLUMNS, parse_sites, read_gen_records, split_features
from .trace_model import GenRecord, SiteProfile, VisibleFeatures


class EventKind(enum.Enum):
    ARRIVAL = "arrival"
    START = "start"
    FINISH = "finish"
    FAIL = "fail"


class Outcome(enum.Enum):
    FINISHED = "finished"
    FAILED = "failed"
    QUEUED = "queued"  # still waiting when the run ended


_PRIORITY = {EventKind.FINISH: 0, EventKind.FAIL: 0, EventKind.ARRIVAL: 1}


@dataclass(frozen=True)
class SimEvent:
    time: int
    kind: EventKind
    job_id: int
    site: str
    cores: int


@dataclass(frozen=True)
class SiteState:
    """What a policy may know about a site when a job arrives."""

    name: str
    core_count: int
    gflops_per_core: float
    free_cores: int
    queued: int
    running: int


# -- policies ----------------------------------------------------------------


class Policy:
    name = ""
    params: dict = {}  # parameter -> validator

    def select(self, job: VisibleFeatures, cores: int, sites: Sequence[SiteState]) -> str:
        raise NotImplementedError

    @staticmethod
    def feasible(cores: int, sites: Sequence[SiteState]) -> list:
        return [i for i, s in enumerate(sites) if s.core_count >= cores]


def _non_negative_int(value):
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise InvalidPolicyParams(f"expected a non-negative integer, got {value!r}")
    return value


def _weight_table(value):
    if not isinstance(value, Mapping):
        raise InvalidPolicyParams("weights must map site names to numbers")
    out = {}
    for site, w in value.items():
        if isinstance(w, bool) or not isinstance(w, (int, float)) or not w >= 0 or not math.isfinite(w):
            raise InvalidPolicyParams(f"weight for {site!r} must be a finite number >= 0")
        out[str(site)] = float(w)
    return out


class RoundRobin(Policy):
    name = "RoundRobin"
    params = {"start": _non_negative_int}

    def __init__(self, start: int = 0, **_):
        self._next = start

    def select(self, job, cores, sites):
        n = len(sites)
        for step in range(n):
            i = (self._next + step) % n
            if sites[i].core_count >= cores:
                self._next = (i + 1) % n
                return sites[i].name
        raise NoFeasibleSite(f"no site has {cores} cores")


class LeastQueued(Policy):
    name = "LeastQueued"

    def select(self, job, cores, sites):
        i = min(self.feasible(cores, sites), key=lambda i: (sites[i].queued, i))
        return sites[i].name


class FastestService(Policy):
    name = "FastestService"

    def select(self, job, cores, sites):
        i = min(self.feasible(cores, sites), key=lambda i: (-sites[i].gflops_per_core, i))
        return sites[i].name


class RandomPolicy(Policy):
    name = "Random"
    params = {"weights": _weight_table}

    def __init__(self, rng: np.random.Generator, weights: Optional[Mapping[str, float]] = None, **_):
        self._rng = rng
        self._weights = weights

    def select(self, job, cores, sites):
        options = self.feasible(cores, sites)
        if self._weights is not None:
            w = np.array([self._weights.get(sites[i].name, 0.0) for i in options])
            if w.sum() > 0:
                return sites[options[self._rng.choice(len(options), p=w / w.sum())]].name
        return sites[options[self._rng.integers(len(options))]].name


POLICIES = {cls.name.lower(): cls for cls in (RoundRobin, LeastQueued, FastestService, RandomPolicy)}


@dataclass(frozen=True)
class PolicySpec:
    name: str = "RoundRobin"
    params: Mapping = field(default_factory=dict)


def make_policy(spec: PolicySpec, seed: int = 0) -> Policy:
    cls = POLICIES.get(spec.name.lower())
    if cls is None:
        raise InvalidPolicyParams(f"unknown policy {spec.name!r}; choose from {sorted(c.name for c in POLICIES.values())}")
    unknown = set(spec.params) - set(cls.params)
    if unknown:
        raise InvalidPolicyParams(f"{cls.name} does not take parameters {sorted(unknown)}")
    params = {key: cls.params[key](value) for key, value in spec.params.items()}
    if cls is RandomPolicy:
        return RandomPolicy(np.random.default_rng([seed, 1]), **params)
    return cls(**params)


def policy_select(policy: Policy, job: VisibleFeatures, cores: int, state: Sequence[SiteState]) -> str:
    """Ask ``policy`` for a site and check that the answer can host the job."""
    if not isinstance(job, VisibleFeatures):
        raise TypeError("policies only receive the visible features of a job")
    if not Policy.feasible(cores, state):
        raise NoFeasibleSite(f"no site has {cores} cores")
    choice = policy.select(job, cores, state)
    if not any(s.name == choice and s.core_count >= cores for s in state):
        raise NoFeasibleSite(f"policy {policy.name} chose infeasible site {choice!r}")
    return choice


# -- scenario / result -----------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    sites: tuple
    workload: tuple
    policy: PolicySpec = field(default_factory=PolicySpec)
    seed: int = 0
    failure_model: Optional[Mapping[str, float]] = None  # site -> failure probability
    replay_failures: bool = True  # jobs recorded as failed fail again
    cores_by_prod_step: Mapping[str, int] = field(default_factory=dict)
    default_cores: int = 1
    cutoff: Optional[int] = None  # no job starts after this time

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        object.__setattr__(self, "workload", tuple(self.workload))
        if not self.sites:
            raise InputError("scenario has no sites")
        names = [s.site_name for s in self.sites]
        if len(set(names)) != len(names):
            raise InputError("duplicate site names in scenario")
        times = [r.creation_time for r in self.workload]
        if any(b < a for a, b in zip(times, times[1:])):
            raise InputError("workload must be sorted by creation_time")
        for site, p in (self.failure_model or {}).items():
            if site not in names:
                raise InputError(f"failure model names unknown site {site!r}")
            if not 0 <= p <= 1:
                raise InputError(f"failure probability for {site!r} outside [0, 1]")
        for step, c in self.cores_by_prod_step.items():
            if c < 1:
                raise InputError(f"cores for prod_step {step!r} must be >= 1")
        if self.default_cores < 1:
            raise InputError("default_cores must be >= 1")
        if self.seed < 0:
            raise InputError("seed must be non-negative")
        make_policy(self.policy, self.seed)

    def cores_for(self, record: GenRecord) -> int:
        return self.cores_by_prod_step.get(record.prod_step, self.default_cores)


@dataclass(frozen=True)
class JobOutcome:
    site: str
    outcome: Outcome
    cores: int
    arrival: int
    start: Optional[int]
    end: Optional[int]

    @property
    def queue_time(self) -> Optional[int]:
        return None if self.start is None else self.start - self.arrival


@dataclass(frozen=True)
class SiteUsage:
    busy_core_seconds: int
    utilization: float
    jobs: int


@dataclass(frozen=True)
class SimResult:
    per_job: dict  # job_id -> JobOutcome
    per_site: dict  # site -> SiteUsage
    event_log: tuple
    horizon: tuple  # (first arrival, last event)
    policy: str

    def summary(self) -> dict:
        waits = [o.queue_time for o in self.per_job.values() if o.queue_time is not None]
        counts = {o.value: 0 for o in Outcome}
        for o in self.per_job.values():
            counts[o.outcome.value] += 1
        return {
            "policy": self.policy,
            "jobs": len(self.per_job),
            "outcomes": counts,
            "horizon": list(self.horizon),
            "queue_time": {
                "mean": float(np.mean(waits)) if waits else None,
                "max": max(waits) if waits else None,
            },
            "per_site": {
                name: {"busy_core_seconds": u.busy_core_seconds, "utilization": u.utilization, "jobs": u.jobs}
                for name, u in self.per_site.items()
            },
            "per_job": {
                str(jid): {"site": o.site, "outcome": o.outcome.value, "queue_time": o.queue_time}
                for jid, o in self.per_job.items()
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=1) + "\n"


def service_seconds(workload: float, cores: int, site: SiteProfile) -> int:
    """Whole seconds needed to execute ``workload`` GFLOP on ``cores`` cores of ``site``."""
    exact = workload / (cores * site.gflops_per_core)
    return max(0, math.ceil(exact - 1e-9))


def run(scenario: Scenario) -> SimResult:
    sites = {s.site_name: s for s in scenario.sites}
    order = [s.site_name for s in scenario.sites]
    jobs = scenario.workload
    cores = [scenario.cores_for(r) for r in jobs]
    biggest = max(s.core_count for s in scenario.sites)
    for jid, c in enumerate(cores):
        if c > biggest:
            raise InfeasibleJob(f"job {jid} needs {c} cores; largest site has {biggest}")

    policy = make_policy(scenario.policy, scenario.seed)
    # per-job draws up front so they do not depend on the schedule
    draws = np.random.default_rng([scenario.seed, 2]).random((len(jobs), 2))
    fail_draw, fail_fraction = draws[:, 0], 1.0 - draws[:, 1]
    fail_prob = scenario.failure_model or {}

    free = {name: sites[name].core_count for name in order}
    queues = {name: deque() for name in order}
    running = dict.fromkeys(order, 0)
    placed, start, end, failed = {}, {}, {}, set()
    log = []
    heap = [(r.creation_time, _PRIORITY[EventKind.ARRIVAL], jid, EventKind.ARRIVAL) for jid, r in enumerate(jobs)]
    heapq.heapify(heap)

    def dispatch(name: str, now: int) -> None:
        if scenario.cutoff is not None and now > scenario.cutoff:
            return
        queue = queues[name]
        while queue and cores[queue[0]] <= free[name]:
            jid = queue.popleft()
            free[name] -= cores[jid]
            running[name] += 1
            start[jid] = now
            log.append(SimEvent(now, EventKind.START, jid, name, cores[jid]))
            record = jobs[jid]
            duration = service_seconds(record.workload, cores[jid], sites[name])
            fails = scenario.replay_failures and record.job_status == "failed"
            fails = fails or fail_draw[jid] < fail_prob.get(name, 0.0)
            kind = EventKind.FINISH
            if fails:
                kind = EventKind.FAIL
                failed.add(jid)
                duration = math.ceil(fail_fraction[jid] * duration)
            heapq.heappush(heap, (now + duration, _PRIORITY[kind], jid, kind))

    while heap:
        now, _, jid, kind = heapq.heappop(heap)
        if kind is EventKind.ARRIVAL:
            state = tuple(
                SiteState(n, sites[n].core_count, sites[n].gflops_per_core, free[n], len(queues[n]), running[n])
                for n in order
            )
            visible, _hidden = split_features(jobs[jid])
            name = policy_select(policy, visible, cores[jid], state)
            placed[jid] = name
            log.append(SimEvent(now, kind, jid, name, cores[jid]))
            queues[name].append(jid)
        else:
            name = placed[jid]
            end[jid] = now
            free[name] += cores[jid]
            running[name] -= 1
            log.append(SimEvent(now, kind, jid, name, cores[jid]))
        dispatch(name, now)

    per_job = {}
    busy = dict.fromkeys(order, 0)
    count = dict.fromkeys(order, 0)
    for jid, record in enumerate(jobs):
        name = placed[jid]
        count[name] += 1
        if jid in start:
            outcome = Outcome.FAILED if jid in failed else Outcome.FINISHED
            busy[name] += cores[jid] * (end[jid] - start[jid])
        else:
            outcome = Outcome.QUEUED
        per_job[jid] = JobOutcome(name, outcome, cores[jid], record.creation_time, start.get(jid), end.get(jid))

    t0 = jobs[0].creation_time if jobs else 0
    t1 = log[-1].time if log else t0
    span = t1 - t0
    per_site = {
        n: SiteUsage(busy[n], busy[n] / (sites[n].core_count * span) if span > 0 else 0.0, count[n])
        for n in order
    }
    return SimResult(per_job, per_site, tuple(log), (t0, t1), policy.name)


def write_event_log(events: Sequence[SimEvent], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(EVENT_COLUMNS)
    for e in events:
        writer.writerow([e.time, e.kind.value, e.job_id, e.site, e.cores])


def write_queue_times(result: SimResult, stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["job_id", "site", "outcome", "queue_time"])
    for jid, o in result.per_job.items():
        writer.writerow([jid, o.site, o.outcome.value, "" if o.queue_time is None else o.queue_time])


def replay_allocation(events: Sequence[SimEvent]) -> dict:
    """Peak allocated cores per site obtained by replaying an event log in order."""
    used, peak = {}, {}
    for e in events:
        if e.kind is EventKind.START:
            used[e.site] = used.get(e.site, 0) + e.cores
            peak[e.site] = max(peak.get(e.site, 0), used[e.site])
        elif e.kind in (EventKind.FINISH, EventKind.FAIL):
            used[e.site] -= e.cores
    return peak


# -- configuration file -----------------------------------------------------------


def _config_value(text: str):
    try:
        return json.loads(text)
    except ValueError:
        return text


def scenario_inputs(path) -> list:
    """The config file plus the sites and workload files it references."""
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    parser.read(path, encoding="utf-8")
    refs = [parser.get("scenario", key, fallback="").strip() for key in ("sites", "workload")]
    return [path] + [path.parent / ref for ref in refs if ref]


def load_scenario(path, *, policy: Optional[str] = None, seed: Optional[int] = None) -> Scenario:
    """Build a Scenario from an INI file.

    ``[scenario]`` holds ``sites``, ``workload`` (paths relative to the file),
    ``policy``, ``seed``, ``cutoff``, ``replay_failures`` and ``default_cores``;
    ``[policy]`` holds policy parameters, ``[cores]`` maps prod_step to cores
    and ``[failure]`` maps site to failure probability.
    """
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError("scenario", f"cannot read {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError("scenario", f"cannot parse {path}: {exc}") from None
    if not parser.has_section("scenario"):
        raise ConfigError("scenario", "missing [scenario] section")
    main = parser["scenario"]
    known = {"sites", "workload", "policy", "seed", "cutoff", "replay_failures", "default_cores"}
    for key in main:
        if key not in known:
            raise ConfigError(f"scenario.{key}", "unknown key")

    def integer(key: str, default):
        text = main.get(key, "").strip()
        if not text:
            return default
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"scenario.{key}", f"expected an integer, got {text!r}") from None

    def open_ref(key: str):
        ref = main.get(key, "").strip()
        if not ref:
            raise ConfigError(f"scenario.{key}", "missing")
        target = path.parent / ref
        if not target.is_file():
            raise ConfigError(f"scenario.{key}", f"file not found: {target}")
        return open(target, encoding="utf-8", newline="")

    with open_ref("sites") as fh:
        try:
            sites = parse_sites(fh)
        except InputError as exc:
            raise ConfigError("scenario.sites", str(exc)) from None
    with open_ref("workload") as fh:
        try:
            workload = read_gen_records(fh)
        except InputError as exc:
            raise ConfigError("scenario.workload", str(exc)) from None
    workload.sort(key=lambda r: r.creation_time)

    try:
        replay = main.getboolean("replay_failures", fallback=True)
    except ValueError:
        raise ConfigError("scenario.replay_failures", "expected a boolean") from None
    params = {k: _config_value(v) for k, v in parser["policy"].items()} if parser.has_section("policy") else {}
    cores = {}
    if parser.has_section("cores"):
        for step, text in parser["cores"].items():
            try:
                cores[step] = int(text)
            except ValueError:
                raise ConfigError(f"cores.{step}", f"expected an integer, got {text!r}") from None
            if cores[step] < 1:
                raise ConfigError(f"cores.{step}", "must be at least 1")
    failure = None
    if parser.has_section("failure"):
        failure = {}
        for site, text in parser["failure"].items():
            try:
                failure[site] = float(text)
            except ValueError:
                raise ConfigError(f"failure.{site}", f"expected a probability, got {text!r}") from None
            if site not in sites:
                raise ConfigError(f"failure.{site}", "unknown site")
            if not 0 <= failure[site] <= 1:
                raise ConfigError(f"failure.{site}", "probability outside [0, 1]")

    name = main.get("policy", "RoundRobin").strip()
    if policy is not None and policy.lower() != name.lower():
        # parameters in the file belong to the file's policy
        name, params = policy, {}
    spec = PolicySpec(name, params)
    seed = integer("seed", 0) if seed is None else seed
    default_cores = integer("default_cores", 1)
    cutoff = integer("cutoff", None)
    try:
        return Scenario(
            sites=tuple(sites.values()),
            workload=tuple(workload),
            policy=spec,
            seed=seed,
            failure_model=failure,
            replay_failures=replay,
            cores_by_prod_step=cores,
            default_cores=default_cores,
            cutoff=cutoff,
        )
    except InvalidPolicyParams as exc:
        raise ConfigError("policy", str(exc)) from None
    except InputError as exc:
        raise ConfigError("scenario", str(exc)) from None
