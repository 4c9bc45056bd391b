import io
import math
from dataclasses import replace

import numpy as np
import pytest

from gridlens import simulator as sim
from gridlens.errors import ConfigError, InfeasibleJob, InputError, InvalidPolicyParams, NoFeasibleSite
from gridlens.ingest import write_gen_records, write_sites
from gridlens.simulator import EventKind, Outcome, PolicySpec, Scenario, SiteState
from gridlens.trace_model import SiteProfile, VisibleFeatures

from workloads import T0, gen, random_scenario


# -- hand-computed schedules ---------------------------------------------------------


def test_single_job_idle_site():
    r = sim.run(Scenario([SiteProfile("A", 4, 10.0)], [gen(workload=1000.0)]))
    o = r.per_job[0]
    assert o.queue_time == 0 and o.outcome is Outcome.FINISHED and o.end - o.start == 100


def test_two_jobs_contending_for_all_cores():
    C, gflops, T = 8, 2.5, 360
    w = C * gflops * T
    sc = Scenario([SiteProfile("A", C, gflops)], [gen(workload=w), gen(workload=w)], default_cores=C)
    r = sim.run(sc)
    assert r.per_job[0].queue_time == 0
    assert r.per_job[1].queue_time == T
    assert [(e.time - T0, e.kind, e.job_id) for e in r.event_log] == [
        (0, EventKind.ARRIVAL, 0), (0, EventKind.START, 0), (0, EventKind.ARRIVAL, 1),
        (T, EventKind.FINISH, 0), (T, EventKind.START, 1), (2 * T, EventKind.FINISH, 1)]


def test_zero_workload_finishes_at_start():
    r = sim.run(Scenario([SiteProfile("A", 1, 1.0)], [gen(workload=0.0)]))
    o = r.per_job[0]
    assert o.start == o.end == T0


def test_freed_cores_reused_at_same_instant():
    sc = Scenario([SiteProfile("A", 1, 1.0)], [gen(workload=10.0), gen(T0 + 10, workload=5.0)])
    r = sim.run(sc)
    assert r.per_job[1].queue_time == 0 and r.per_job[1].start == T0 + 10


def test_fifo_without_backfill():
    # head of queue needs 4 cores; a later 1-core job must wait behind it
    sc = Scenario([SiteProfile("A", 4, 1.0)],
                  [gen(workload=100.0, step="a"), gen(T0 + 1, workload=400.0, step="b"), gen(T0 + 2, workload=1.0, step="a")],
                  cores_by_prod_step={"a": 1, "b": 4})
    r = sim.run(sc)
    assert r.per_job[1].start == T0 + 100
    assert r.per_job[2].start == T0 + 200


def test_service_seconds_rounds_up():
    s = SiteProfile("A", 4, 3.0)
    assert sim.service_seconds(0.0, 1, s) == 0
    assert sim.service_seconds(3.0, 1, s) == 1
    assert sim.service_seconds(3.1, 1, s) == 2
    assert sim.service_seconds(0.1 * 3 * 30, 1, s) == 3  # float noise does not add a second


# -- policies --------------------------------------------------------------------------------


def state(*queued, cores=(8, 8), gflops=(1.0, 1.0)):
    names = "ABCDEFG"
    return tuple(SiteState(names[i], cores[i], gflops[i], cores[i], queued[i] if queued else 0, 0)
                 for i in range(len(cores)))


VIS = VisibleFeatures(T0, "X", "p", "s", "d", 1.0, 1.0)


def test_round_robin_rotation():
    p = sim.make_policy(PolicySpec("RoundRobin"))
    assert [sim.policy_select(p, VIS, 1, state()) for _ in range(4)] == ["A", "B", "A", "B"]
    p = sim.make_policy(PolicySpec("roundrobin", {"start": 1}))
    assert sim.policy_select(p, VIS, 1, state()) == "B"


def test_round_robin_skips_infeasible():
    p = sim.make_policy(PolicySpec("RoundRobin"))
    s = state(cores=(2, 8, 4), gflops=(1, 1, 1))
    assert [sim.policy_select(p, VIS, 4, s) for _ in range(3)] == ["B", "C", "B"]


def test_least_queued():
    p = sim.make_policy(PolicySpec("LeastQueued"))
    assert sim.policy_select(p, VIS, 1, state(5, 0)) == "B"
    assert sim.policy_select(p, VIS, 1, state(0, 0)) == "A"


def test_fastest_service():
    p = sim.make_policy(PolicySpec("FastestService"))
    assert sim.policy_select(p, VIS, 1, state(gflops=(1.0, 12.5))) == "B"
    assert sim.policy_select(p, VIS, 16, state(cores=(16, 8), gflops=(1.0, 12.5))) == "A"


def test_random_policy_deterministic():
    s = state(cores=(8,) * 5, gflops=(1,) * 5)
    p1, p2 = (sim.make_policy(PolicySpec("Random"), seed=7) for _ in range(2))
    a = [sim.policy_select(p1, VIS, 1, s) for _ in range(50)]
    b = [sim.policy_select(p2, VIS, 1, s) for _ in range(50)]
    assert a == b and len(set(a)) > 1
    weighted = sim.make_policy(PolicySpec("Random", {"weights": {"C": 1.0}}), seed=7)
    assert {sim.policy_select(weighted, VIS, 1, s) for _ in range(20)} == {"C"}


def test_no_feasible_site():
    with pytest.raises(NoFeasibleSite):
        sim.policy_select(sim.make_policy(PolicySpec("LeastQueued")), VIS, 64, state())


@pytest.mark.parametrize("spec", [PolicySpec("Greedy"), PolicySpec("RoundRobin", {"start": -1}),
                                  PolicySpec("RoundRobin", {"speed": 1}), PolicySpec("Random", {"weights": [1, 2]})])
def test_invalid_policy_params(spec):
    with pytest.raises(InvalidPolicyParams):
        sim.make_policy(spec)
    with pytest.raises(InvalidPolicyParams):
        Scenario([SiteProfile("A", 1, 1.0)], [gen()], spec)


def test_policy_sees_only_visible_features(monkeypatch):
    seen = []

    class Spy(sim.Policy):
        name = "Spy"

        def select(self, job, cores, sites):
            seen.append(job)
            return sites[0].name

    monkeypatch.setitem(sim.POLICIES, "spy", Spy)
    sim.run(Scenario([SiteProfile("A", 4, 1.0)], [gen(), gen(status="failed", workload=7.0)], PolicySpec("Spy")))
    assert len(seen) == 2
    for job in seen:
        assert isinstance(job, VisibleFeatures)
        assert not hasattr(job, "workload") and not hasattr(job, "job_status")
    with pytest.raises(TypeError):
        sim.policy_select(Spy(), gen(), 1, state())


# -- invariants over random scenarios -------------------------------------------------


def check_conservation_and_capacity(sc, r):
    assert set(r.per_job) == set(range(len(sc.workload)))
    arrivals = [e.job_id for e in r.event_log if e.kind is EventKind.ARRIVAL]
    terminal = [e.job_id for e in r.event_log if e.kind in (EventKind.FINISH, EventKind.FAIL)]
    assert sorted(arrivals) == list(range(len(sc.workload)))
    assert len(terminal) == len(set(terminal))
    for jid, o in r.per_job.items():
        assert o.outcome in set(Outcome)
        assert (o.outcome is Outcome.QUEUED) == (jid not in terminal)
    times = [e.time for e in r.event_log]
    assert times == sorted(times)
    caps = {s.site_name: s.core_count for s in sc.sites}
    for site, peak in sim.replay_allocation(r.event_log).items():
        assert peak <= caps[site]
    span = r.horizon[1] - r.horizon[0]
    for site, u in r.per_site.items():
        assert 0.0 <= u.utilization <= 1.0
        assert u.busy_core_seconds <= caps[site] * span


@pytest.mark.parametrize("seed", range(20))
def test_conservation_and_capacity(seed):
    sc = random_scenario(np.random.default_rng(seed), max_jobs=200)
    check_conservation_and_capacity(sc, sim.run(sc))


def test_work_conservation_single_site():
    rng = np.random.default_rng(1)
    sc = random_scenario(rng, max_sites=1, policy="FastestService")
    sc = replace(sc, failure_model=None, replay_failures=False, cutoff=None)
    r = sim.run(sc)
    site = sc.sites[0]
    expected = sum(sc.cores_for(rec) * sim.service_seconds(rec.workload, sc.cores_for(rec), site)
                   for rec in sc.workload)
    assert all(o.outcome is Outcome.FINISHED for o in r.per_job.values())
    assert r.per_site[site.site_name].busy_core_seconds == expected


@pytest.mark.parametrize("seed", range(5))
def test_determinism(seed):
    sc = random_scenario(np.random.default_rng(100 + seed), policy="Random")
    outs = [sim.run(sc) for _ in range(3)]
    assert outs[0].to_json() == outs[1].to_json() == outs[2].to_json()
    assert outs[0].event_log == outs[2].event_log


@pytest.mark.parametrize("seed", range(10))
def test_doubling_cores_never_increases_queue_time(seed):
    sc = random_scenario(np.random.default_rng(200 + seed), policy="RoundRobin")
    sc = replace(sc, cutoff=None)
    doubled = replace(sc, sites=tuple(replace(s, core_count=2 * s.core_count) for s in sc.sites))
    a, b = sim.run(sc), sim.run(doubled)
    for jid in a.per_job:
        assert a.per_job[jid].site == b.per_job[jid].site
        assert b.per_job[jid].queue_time <= a.per_job[jid].queue_time


# -- failures, cutoff, errors ---------------------------------------------------------


def test_infeasible_job():
    with pytest.raises(InfeasibleJob):
        sim.run(Scenario([SiteProfile("A", 4, 1.0)], [gen()], default_cores=8))


def test_failure_replay():
    wl = [gen(workload=1000.0, status="failed"), gen(workload=1000.0)]
    r = sim.run(Scenario([SiteProfile("A", 4, 1.0)], wl, default_cores=2))
    assert r.per_job[0].outcome is Outcome.FAILED and r.per_job[1].outcome is Outcome.FINISHED
    assert 0 < r.per_job[0].end - r.per_job[0].start <= 500
    off = sim.run(Scenario([SiteProfile("A", 4, 1.0)], wl, default_cores=2, replay_failures=False))
    assert off.per_job[0].outcome is Outcome.FINISHED


def test_failure_model():
    wl = [gen(T0 + i, workload=10.0) for i in range(200)]
    sites = [SiteProfile("A", 4, 1.0), SiteProfile("B", 4, 1.0)]
    r = sim.run(Scenario(sites, wl, failure_model={"A": 1.0, "B": 0.0}))
    for o in r.per_job.values():
        assert o.outcome is (Outcome.FAILED if o.site == "A" else Outcome.FINISHED)
    with pytest.raises(InputError):
        Scenario(sites, wl, failure_model={"A": 1.5})
    with pytest.raises(InputError):
        Scenario(sites, wl, failure_model={"Z": 0.5})


def test_cutoff_reports_queued_jobs():
    wl = [gen(T0 + 100 * i, workload=1000.0) for i in range(5)]
    r = sim.run(Scenario([SiteProfile("A", 1, 1.0)], wl, cutoff=T0 + 2500))
    outcomes = [r.per_job[i].outcome for i in range(5)]
    assert outcomes == [Outcome.FINISHED] * 3 + [Outcome.QUEUED] * 2
    assert r.summary()["outcomes"] == {"finished": 3, "failed": 0, "queued": 2}


def test_scenario_validation():
    with pytest.raises(InputError):
        Scenario([SiteProfile("A", 1, 1.0)], [gen(T0 + 5), gen(T0)])
    with pytest.raises(InputError):
        Scenario([], [gen()])
    with pytest.raises(InputError):
        Scenario([SiteProfile("A", 1, 1.0), SiteProfile("A", 2, 1.0)], [gen()])


def test_event_log_csv():
    sc = Scenario([SiteProfile("A", 1, 1.0)], [gen(workload=3.0)])
    buf = io.StringIO()
    sim.write_event_log(sim.run(sc).event_log, buf)
    assert buf.getvalue().splitlines() == [
        "time,kind,job_id,site,cores", f"{T0},arrival,0,A,1", f"{T0},start,0,A,1", f"{T0 + 3},finish,0,A,1"]


# -- scenario files ------------------------------------------------------------------------


@pytest.fixture
def scenario_dir(tmp_path):
    with open(tmp_path / "sites.csv", "w", newline="") as fh:
        write_sites([SiteProfile("A", 4, 2.0), SiteProfile("B", 8, 1.0)], fh)
    with open(tmp_path / "workload.csv", "w", newline="") as fh:
        write_gen_records([gen(T0 + 5), gen(T0, step="evgen")], fh)
    return tmp_path


def write_cfg(path, text):
    (path / "s.ini").write_text(text)
    return path / "s.ini"


def test_load_scenario(scenario_dir):
    cfg = write_cfg(scenario_dir, "[scenario]\nsites = sites.csv\nworkload = workload.csv\npolicy = Random\nseed = 9\n"
                                  "cutoff = 1700000100\n[policy]\nweights = {\"A\": 1}\n[cores]\nevgen = 4\n"
                                  "[failure]\nB = 0.25\n")
    sc = sim.load_scenario(cfg)
    assert [s.site_name for s in sc.sites] == ["A", "B"]
    assert [r.creation_time for r in sc.workload] == [T0, T0 + 5]
    assert sc.policy == PolicySpec("Random", {"weights": {"A": 1}})
    assert (sc.seed, sc.cutoff, sc.cores_by_prod_step, sc.failure_model) == (9, T0 + 100, {"evgen": 4}, {"B": 0.25})
    assert sim.load_scenario(cfg, policy="LeastQueued", seed=3).policy.name == "LeastQueued"


@pytest.mark.parametrize("text, key", [
    ("[scenario]\nworkload = workload.csv\n", "scenario.sites"),
    ("[scenario]\nsites = nope.csv\nworkload = workload.csv\n", "scenario.sites"),
    ("[scenario]\nsites = sites.csv\nworkload = workload.csv\nseed = abc\n", "scenario.seed"),
    ("[scenario]\nsites = sites.csv\nworkload = workload.csv\ncolour = red\n", "scenario.colour"),
    ("[scenario]\nsites = sites.csv\nworkload = workload.csv\n[cores]\nevgen = many\n", "cores.evgen"),
    ("[scenario]\nsites = sites.csv\nworkload = workload.csv\n[failure]\nA = often\n", "failure.A"),
    ("[scenario]\nsites = sites.csv\nworkload = workload.csv\npolicy = Greedy\n", "policy"),
    ("[scenario]\nsites = sites.csv\nworkload = workload.csv\n[failure]\nA = 1.5\n", "failure.A"),
    ("[scenario]\nsites = sites.csv\nworkload = workload.csv\n[failure]\nZ = 0.5\n", "failure.Z"),
    ("[scenario]\nsites = sites.csv\nworkload = workload.csv\n[cores]\nevgen = 0\n", "cores.evgen"),
    ("[scenario]\nsites = sites.csv\nworkload = workload.csv\ndefault_cores = 0\n", "scenario"),
    ("[other]\nx = 1\n", "scenario"),
])
def test_load_scenario_errors_name_the_key(scenario_dir, text, key):
    with pytest.raises(ConfigError) as err:
        sim.load_scenario(write_cfg(scenario_dir, text))
    assert err.value.key == key
    assert key in str(err.value)


def test_queue_times_csv():
    sc = Scenario([SiteProfile("A", 1, 1.0)], [gen(workload=3.0), gen(workload=3.0)], cutoff=T0)
    buf = io.StringIO()
    sim.write_queue_times(sim.run(sc), buf)
    assert buf.getvalue().splitlines() == ["job_id,site,outcome,queue_time", "0,A,finished,0", "1,A,queued,"]
    assert math.isclose(sim.run(sc).per_site["A"].utilization, 1.0)


def test_load_scenario_inline_comments(scenario_dir):
    cfg = write_cfg(scenario_dir, "[scenario]\nsites = sites.csv  ; site table\nworkload = workload.csv\n"
                                  "policy = LeastQueued  ; fewest waiting jobs\n")
    assert sim.load_scenario(cfg).policy == PolicySpec("LeastQueued")
