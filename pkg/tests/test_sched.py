import pytest
from hypothesis import given, settings, strategies as st

from framekernel.errors import AlreadyRegistered, GuardViolation, NotRegistered, TooLate
from framekernel.sched import (
    DoubleBookingPolicy, Event, Exit, ForgingPolicy, RoundRobin, Run, Sched, Sleep, Task, Vruntime, Yield,
)
from framekernel.sched.drive import run_exhaustive, run_random, run_threads


class Counting(RoundRobin):
    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self.enqueued = []

    def enqueue(self, task):
        self.enqueued.append(task.id)
        super().enqueue(task)


def system(policy=None, ncpus=1, **kw):
    s = Sched(ncpus, **kw)
    s.register_scheduler(policy if policy is not None else RoundRobin(ncpus))
    return s


class TestRegistration:
    def test_once(self):
        s = system()
        with pytest.raises(AlreadyRegistered):
            s.register_scheduler(RoundRobin())

    def test_after_spawn(self):
        s = Sched(1)
        p = RoundRobin()
        s.register_scheduler(p)
        s.spawn([Run(1)])
        s.policy = None  # pretend nothing was registered yet, with tasks present
        with pytest.raises(TooLate):
            s.register_scheduler(RoundRobin())

    def test_spawn_needs_policy(self):
        with pytest.raises(NotRegistered):
            Sched(1).spawn([])


class TestSpawn:
    def test_one(self):
        p = RoundRobin(1)
        s = system(p)
        s.spawn([Run(1)])
        assert p.rqs[0].load() == 1

    def test_many(self):
        p = Counting(2)
        s = system(p, 2)
        ids = [s.spawn([Run(1)]) for _ in range(10)]
        assert p.enqueued == ids and len(set(ids)) == 10

    def test_from_threads(self):
        import threading

        p = Counting(2)
        s = system(p, 2)
        ts = [threading.Thread(target=lambda: [s.spawn([Run(1)]) for _ in range(200)]) for _ in range(4)]
        for t in ts:
            t.start()
        for t in ts:
            t.join()
        assert len(p.enqueued) == len(set(p.enqueued)) == 800


class TestSchedule:
    def test_single_task_runs(self):
        s = system()
        tid = s.spawn([Run(5)])
        s.tick(0)
        assert s.current(0) == tid and s.tasks[tid].is_running

    def test_double_booking_is_refused(self):
        s = system(DoubleBookingPolicy(2), 2)
        a = s.spawn([Run(100)], attrs={"cpu": 0})
        s.spawn([Run(100)], attrs={"cpu": 1})
        s.tick(0)
        assert s.current(0) == a
        report = s.tick(1)
        assert report.kind == "guard_violation" and report.next == a
        assert s.current(1) is None and s.current(0) == a
        assert s.check_invariants() == []

    def test_strict_mode_raises(self):
        s = system(DoubleBookingPolicy(2), 2, strict_guard=True)
        s.spawn([Run(100)], attrs={"cpu": 0})
        s.tick(0)
        with pytest.raises(GuardViolation):
            s.tick(1)
        assert s.check_invariants() == []

    def test_forged_task_is_rejected(self):
        s = system(ForgingPolicy(1))
        s.spawn([Run(3)])
        report = s.tick(0)
        assert report.kind == "unknown_task" and s.current(0) is None

    def test_flag_is_read_only(self):
        t = Task(1, [])
        with pytest.raises(AttributeError):
            t.is_running = True

    def test_yield_alternates(self):
        s = system(RoundRobin(1, time_slice=None))
        a = s.spawn([Yield()] * 6)
        b = s.spawn([Yield()] * 6)
        s.tick(0)
        for _ in range(10):
            s.tick(0)
        switches = [r.next for r in s.reports if r.kind == "switch"]
        assert switches[:10] == [a, b] * 5

    def test_sleep_then_wake(self):
        s = system()
        a = s.spawn([Run(1), Sleep(), Run(1), Exit()])
        for _ in range(3):
            s.tick(0)
        assert not s.tasks[a].runnable and s.current(0) is None
        assert s.wake(a)
        assert not s.wake(a)  # already runnable: ignored with a log line
        assert "ignored" in s.log[-1]
        for _ in range(5):
            s.tick(0)
        assert s.tasks[a].exited

    def test_exited_task_never_repicked(self):
        s = system()
        a = s.spawn([Exit()])
        b = s.spawn([Run(50)])
        for _ in range(20):
            s.tick(0)
        assert s.tasks[a].exited
        assert [r.next for r in s.reports if r.kind == "switch"].count(a) == 1
        assert s.current(0) == b


def vruntime_split(weights, ticks=1000):
    s = system(Vruntime(1))
    ids = [s.spawn([Run(10**6)], attrs={"weight": w}) for w in weights]
    for _ in range(ticks):
        s.tick(0)
    return [s.tasks[i].ticks_run for i in ids]


class TestVruntime:
    def test_equal_weights(self):
        a, b = vruntime_split([1024, 1024])
        assert abs(a - 500) <= 25 and abs(b - 500) <= 25

    def test_two_to_one(self):
        a, b = vruntime_split([2048, 1024])
        assert abs(a - 667) <= 34 and abs(b - 333) <= 17

    def test_single_task_gets_everything(self):
        # the first tick finds the CPU idle and dispatches; every later tick is the task's
        assert vruntime_split([1024]) == [999]

    def test_sleeper_does_not_hoard_credit(self):
        s = system(Vruntime(1))
        a = s.spawn([Run(10**6)])
        b = s.spawn([Sleep(), Run(10**6)])
        for _ in range(200):
            s.tick(0)
        s.wake(b)
        for _ in range(100):
            s.tick(0)
        # b starts from the queue's minimum, so it cannot monopolise the CPU
        assert s.tasks[a].ticks_run > 200


def small_system():
    s = system(RoundRobin(2, time_slice=2), 2)
    s.spawn([Run(2), Sleep(), Run(1)])
    s.spawn([Run(1), Yield(), Run(2)])
    return s


def big_system(policy_cls=RoundRobin):
    s = system(policy_cls(4), 4)
    for i in range(8):
        s.spawn([Run(1 + i % 3), Yield(), Run(2), Sleep(), Run(1), Yield(), Run(2)])
    return s


class TestInvariant:
    def test_exhaustive_small(self):
        res = run_exhaustive(small_system, 8)
        assert res.ok, res.problems[:3]
        assert res.states_checked > 1000

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32))
    def test_random_round_robin(self, seed):
        res = run_random(big_system(), 40, seed)
        assert res.ok, res.problems

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32))
    def test_random_vruntime(self, seed):
        res = run_random(big_system(Vruntime), 40, seed)
        assert res.ok, res.problems

    def test_adversary_is_contained(self):
        s = system(DoubleBookingPolicy(4), 4)
        for _ in range(6):
            s.spawn([Run(10**6)])
        res = run_random(s, 300, seed=4)
        assert res.ok
        assert s.guard_violations()

    def test_real_threads(self):
        s = big_system()
        res = run_threads(s, 200)
        assert res.ok, res.problems

    def test_tick_reports(self):
        s = system()
        s.spawn([Run(100)])
        assert s.tick(0).kind == "switch"
        assert s.tick(0) is None  # no preemption, nothing else runnable
        assert s.cpu_schedule(0, Event.YIELD).kind == "continue"
