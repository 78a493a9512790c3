"""Deterministic discrete-event simulator for task scheduling.

The engine advances a virtual clock over a fixed set of worker threads,
executes task actions, consults the configured policy at every task
scheduling point and emits a schedule trace.  Everything is integer
arithmetic over a fixed processing order, so a (graph, config) pair maps
to exactly one trace on any platform.

Execution model
---------------
Threads hold a stack of task frames.  A compute action occupies the
thread for its full duration (no preemption); spawns, polls and waits
are task scheduling points.  An undeferred spawn suspends the parent
frame and runs the child on top of it.  A thread whose top frame is
suspended in a wait (or between poll retries) acts as a helper and may
pick other ready work; a latency wait restricts helping to the wait's
own synchronization set.  At every timestamp the engine processes, in
ascending thread order: due segment completions and zero-time
transitions first, then picks by idle threads, then picks by helpers.

Poll cadence: a completion check that succeeds is free.  A failed check
spins for up to ``poll_cost`` ticks (the spin ends early if the target
completes), re-checks, and then yields per policy.  A poller with
nothing else to run sleeps until the next global event instead of
spinning tick by tick.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from . import policies as pol
from .policies import ConfigError, PolicyConfig, PolicyKind, WaitDecision
from .task_graph import (
    Compute,
    PollOutcome,
    Spawn,
    TaskGraph,
    TaskgroupEnd,
    TaskwaitChildren,
    validate,
)

DEFAULT_MAX_VIRTUAL_TIME = 2**62


class EngineError(Exception):
    pass


class InvalidGraphError(EngineError):
    def __init__(self, violations):
        super().__init__(f"graph fails validation: {violations[:5]}")
        self.violations = violations


class UndeferredDepthError(EngineError):
    pass


class BatchError(EngineError):
    """Wraps a per-run failure inside simulate_batch, tagged by index."""

    def __init__(self, index: int, cause: Exception):
        super().__init__(f"run {index} failed: {cause}")
        self.index = index
        self.cause = cause


class Outcome(str, Enum):
    COMPLETED = "completed"
    STARVATION_DETECTED = "starvation_detected"
    TIME_LIMIT_EXCEEDED = "time_limit_exceeded"


class SegmentKind(str, Enum):
    COMPUTE = "compute"
    POLL_SPIN = "poll_spin"
    UNDEFERRED = "undeferred_nested"


class EventKind(str, Enum):
    SPAWNED = "spawned"
    STOLEN = "stolen"
    SCATTERED = "scattered"
    THROTTLED = "throttled"
    YIELDED = "yielded"
    WAIT_ENTERED = "wait_entered"
    WAIT_EXITED = "wait_exited"
    COMPLETED = "completed"


@dataclass(frozen=True)
class Segment:
    thread: int
    task: int
    start: int
    end: int
    kind: SegmentKind


@dataclass(frozen=True)
class TraceEvent:
    time: int
    kind: EventKind
    task: int
    thread: int


@dataclass(frozen=True)
class SimConfig:
    thread_count: int
    policy: PolicyConfig
    spawn_overhead: int = 0
    steal_overhead: int = 0
    max_virtual_time: int = DEFAULT_MAX_VIRTUAL_TIME
    max_poll_retries_without_progress: int = 32
    max_undeferred_depth: Optional[int] = None

    def __post_init__(self):
        if self.thread_count < 1:
            raise ConfigError("thread_count must be >= 1")
        if self.max_virtual_time <= 0:
            raise ConfigError("max_virtual_time must be positive")
        if self.spawn_overhead < 0 or self.steal_overhead < 0:
            raise ConfigError("overheads must be >= 0")
        if self.max_poll_retries_without_progress < 1:
            raise ConfigError("max_poll_retries_without_progress must be >= 1")


@dataclass(frozen=True)
class ScheduleTrace:
    thread_count: int
    segments: tuple
    events: tuple
    makespan: int
    outcome: Outcome

    def to_dict(self, meta: dict | None = None) -> dict:
        out = {}
        if meta:
            out["meta"] = dict(meta)
        out.update(
            {
                "thread_count": self.thread_count,
                "makespan": self.makespan,
                "outcome": self.outcome.value,
                "segments": [
                    {
                        "thread": s.thread,
                        "task": s.task,
                        "start": s.start,
                        "end": s.end,
                        "kind": s.kind.value,
                    }
                    for s in self.segments
                ],
                "events": [
                    {
                        "time": e.time,
                        "kind": e.kind.value,
                        "task": e.task,
                        "thread": e.thread,
                    }
                    for e in self.events
                ],
            }
        )
        return out

    @staticmethod
    def from_dict(data: dict) -> "ScheduleTrace":
        return ScheduleTrace(
            thread_count=int(data["thread_count"]),
            segments=tuple(
                Segment(
                    thread=int(s["thread"]),
                    task=int(s["task"]),
                    start=int(s["start"]),
                    end=int(s["end"]),
                    kind=SegmentKind(s["kind"]),
                )
                for s in data["segments"]
            ),
            events=tuple(
                TraceEvent(
                    time=int(e["time"]),
                    kind=EventKind(e["kind"]),
                    task=int(e["task"]),
                    thread=int(e["thread"]),
                )
                for e in data["events"]
            ),
            makespan=int(data["makespan"]),
            outcome=Outcome(data["outcome"]),
        )

    def to_json(self, meta: dict | None = None) -> str:
        return json.dumps(self.to_dict(meta=meta), indent=2)

    @staticmethod
    def from_json(text: str) -> "ScheduleTrace":
        return ScheduleTrace.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["thread", "task", "start", "end", "kind"])
        for s in self.segments:
            writer.writerow([s.thread, s.task, s.start, s.end, s.kind.value])
        return buf.getvalue()


class _WaitState:
    __slots__ = ("kind", "members", "mode", "decision", "entered")

    def __init__(self, kind, members, mode, decision, entered):
        self.kind = kind  # "children" | "group"
        self.members = members
        self.mode = mode
        self.decision = decision
        self.entered = entered


class _Run:
    __slots__ = (
        "spec",
        "pc",
        "started",
        "completed",
        "home",
        "priority",
        "children",
        "group_mark",
        "chunk_scatters",
        "blocked_child",
        "wait",
        "poll_spun",
        "poll_token",
        "poll_stale",
        "poll_last_progress",
    )

    def __init__(self, spec):
        self.spec = spec
        self.pc = 0
        self.started = False
        self.completed = False
        self.home = None
        self.priority = spec.priority
        self.children = []
        self.group_mark = 0
        self.chunk_scatters = 0
        self.blocked_child = None
        self.wait = None
        self.poll_spun = False
        self.poll_token = None
        self.poll_stale = 0
        self.poll_last_progress = -1


class _Frame:
    __slots__ = ("run", "nested")

    def __init__(self, run, nested):
        self.run = run
        self.nested = nested


class _Thread:
    __slots__ = ("idx", "stack", "seg_task", "seg_start", "seg_end", "seg_kind", "seg_target", "gap_until")

    def __init__(self, idx):
        self.idx = idx
        self.stack = []
        self.seg_task = None
        self.seg_start = 0
        self.seg_end = 0
        self.seg_kind = None
        self.seg_target = None  # poll target while spinning
        self.gap_until = None

    def busy_at(self, now: int) -> bool:
        if self.seg_task is not None:
            return True
        return self.gap_until is not None and self.gap_until > now


class _Engine:
    def __init__(self, graph: TaskGraph, cfg: SimConfig):
        self.graph = graph
        self.cfg = cfg
        self.policy = cfg.policy
        self.fcfs = cfg.policy.kind is PolicyKind.GLOBAL_FCFS
        self.runs = [_Run(spec) for spec in graph.tasks]
        self.threads = [_Thread(i) for i in range(cfg.thread_count)]
        queue_count = 1 if self.fcfs else cfg.thread_count
        self.queues = [[] for _ in range(queue_count)]  # entries (seq, task)
        self.seq = 0
        self.segments = []
        self.events = []
        self.progress = 0
        self.completed_count = 0
        self.last_time = 0
        self.outcome = None
        self.spin_watch = {}  # target id -> list of thread idx

    # -- small helpers ---------------------------------------------------

    def _queue_of(self, thread_idx: int) -> int:
        return 0 if self.fcfs else thread_idx

    def _emit(self, time, kind, task, thread):
        self.events.append(TraceEvent(time, kind, task, thread))
        if time > self.last_time:
            self.last_time = time

    def _record_segment(self, thread, task, start, end, kind):
        if end > start:
            self.segments.append(Segment(thread, task, start, end, kind))
            if end > self.last_time:
                self.last_time = end

    def _next_seq(self) -> int:
        self.seq += 1
        return self.seq

    def _enqueue_spawned(self, queue_idx, task_id):
        self.queues[queue_idx].append((self._next_seq(), task_id))

    def _requeue_front(self, queue_idx, task_id):
        # Front of the pickup order: FCFS picks the head, deques pop the tail.
        entry = (self._next_seq(), task_id)
        if self.fcfs:
            self.queues[queue_idx].insert(0, entry)
        else:
            self.queues[queue_idx].append(entry)

    def _requeue_back(self, queue_idx, task_id):
        entry = (self._next_seq(), task_id)
        if self.fcfs:
            self.queues[queue_idx].append(entry)
        else:
            self.queues[queue_idx].insert(0, entry)

    def _seed_roots(self):
        for pos, root in enumerate(self.graph.roots):
            entry = (self._next_seq(), root)
            if self.fcfs:
                self.queues[0].append(entry)
            else:
                # Insert at the steal end so the owner's pop order follows
                # the root submission order.
                self.queues[pos % self.cfg.thread_count].insert(0, entry)

    def _max_queue_priority(self):
        """Highest priority pending in any queue, loop chunks excluded
        (chunks of one burst must not escalate each other)."""
        best = None
        for queue in self.queues:
            for _, task_id in queue:
                run = self.runs[task_id]
                if run.spec.label == pol.LOOP_CHUNK_LABEL:
                    continue
                if best is None or run.priority > best:
                    best = run.priority
        return best

    def _queue_lengths(self):
        if self.fcfs:
            return [len(self.queues[0])] * self.cfg.thread_count
        return [len(q) for q in self.queues]

    # -- wait bookkeeping ------------------------------------------------

    def _subtree_done(self, task_id) -> bool:
        run = self.runs[task_id]
        if not run.completed:
            return False
        return all(self._subtree_done(child) for child in run.children)

    def _wait_satisfied(self, wait: _WaitState) -> bool:
        if wait.kind == "children":
            return all(self.runs[c].completed for c in wait.members)
        return all(self._subtree_done(c) for c in wait.members)

    def _wait_allowed_tasks(self, wait: _WaitState) -> set:
        if wait.kind == "children":
            return set(wait.members)
        allowed = set()
        stack = list(wait.members)
        while stack:
            cur = stack.pop()
            if cur in allowed:
                continue
            allowed.add(cur)
            stack.extend(self.runs[cur].children)
        return allowed

    def _pick_filter(self, th: _Thread):
        """Intersection of latency-wait sync sets on this thread's stack,
        or None when unrestricted."""
        allowed = None
        for frame in th.stack:
            wait = frame.run.wait
            if wait is not None and wait.decision is WaitDecision.IDLE_UNTIL_COMPLETE:
                tasks = self._wait_allowed_tasks(wait)
                allowed = tasks if allowed is None else (allowed & tasks)
        return allowed

    # -- starvation accounting ---------------------------------------------

    def _poll_blocked(self, run: _Run) -> bool:
        return (
            run.poll_token is not None
            and run.poll_stale >= 1
            and run.poll_last_progress == self.progress
        )

    def _entry_pickable(self, thread_idx, task_id, allowed) -> bool:
        run = self.runs[task_id]
        if allowed is not None and task_id not in allowed:
            return False
        if run.started and run.spec.tied and run.home != thread_idx:
            return False
        return True

    def _starved_round(self) -> bool:
        """True when every thread is stuck in a poll loop (or idle with
        nothing pickable) and no poller has seen progress since its last
        retry."""
        saw_poller = False
        for th in self.threads:
            if th.seg_task is not None:
                if th.seg_kind is not SegmentKind.POLL_SPIN:
                    return False
                saw_poller = True
                continue
            if not th.stack:
                allowed = None
                for queue in self.queues:
                    if any(self._entry_pickable(th.idx, t, allowed) for _, t in queue):
                        return False
                continue
            top = th.stack[-1].run
            if self._poll_blocked(top):
                saw_poller = True
                continue
            return False
        return saw_poller

    def _note_failed_poll(self, run: _Run):
        if run.poll_last_progress == self.progress:
            run.poll_stale += 1
        else:
            run.poll_last_progress = self.progress
            run.poll_stale = 1
        if run.poll_stale > self.cfg.max_poll_retries_without_progress:
            self.outcome = Outcome.STARVATION_DETECTED
            return
        # A poller that failed twice with no progress in between has seen a
        # full round; if every other thread is likewise stuck polling (or
        # idle with nothing pickable), nothing can make progress anymore.
        if run.poll_stale >= 2 and self._starved_round():
            self.outcome = Outcome.STARVATION_DETECTED

    # -- task completion ---------------------------------------------------

    def _complete_task(self, th: _Thread, run: _Run, now: int):
        th.stack.pop()
        run.completed = True
        self.completed_count += 1
        self.progress += 1
        self._emit(now, EventKind.COMPLETED, run.spec.id, th.idx)
        # Truncate spins waiting on this task: the spin loop notices the
        # completion at its next iteration, i.e. immediately in sim time.
        for waiter_idx in self.spin_watch.pop(run.spec.id, []):
            waiter = self.threads[waiter_idx]
            if (
                waiter.seg_task is not None
                and waiter.seg_kind is SegmentKind.POLL_SPIN
                and waiter.seg_target == run.spec.id
                and waiter.seg_end > now
            ):
                waiter.seg_end = now

    # -- segment lifecycle ---------------------------------------------------

    def _start_compute(self, th: _Thread, run: _Run, nested: bool, duration: int, now: int):
        th.seg_task = run.spec.id
        th.seg_start = now
        th.seg_end = now + duration
        th.seg_kind = SegmentKind.UNDEFERRED if nested else SegmentKind.COMPUTE
        th.seg_target = None

    def _start_spin(self, th: _Thread, run: _Run, target: int, cost: int, now: int):
        th.seg_task = run.spec.id
        th.seg_start = now
        th.seg_end = now + cost
        th.seg_kind = SegmentKind.POLL_SPIN
        th.seg_target = target
        self.spin_watch.setdefault(target, []).append(th.idx)

    def _finish_segment(self, th: _Thread, now: int):
        run = self.runs[th.seg_task]
        kind = th.seg_kind
        self._record_segment(th.idx, th.seg_task, th.seg_start, now, kind)
        if kind is SegmentKind.POLL_SPIN:
            watchers = self.spin_watch.get(th.seg_target)
            if watchers and th.idx in watchers:
                watchers.remove(th.idx)
        else:
            run.pc += 1
            self.progress += 1
        th.seg_task = None
        th.seg_kind = None
        th.seg_target = None

    # -- the per-thread state machine ----------------------------------------

    def _run_thread(self, th: _Thread, now: int) -> bool:
        """Advance the thread through zero-time transitions.  Returns True
        if any state changed."""
        progressed = False
        while self.outcome is None and th.seg_task is None and th.stack:
            if th.gap_until is not None:
                if th.gap_until > now:
                    break
                th.gap_until = None
            frame = th.stack[-1]
            run = frame.run

            if run.blocked_child is not None:
                if self.runs[run.blocked_child].completed:
                    run.blocked_child = None
                    run.pc += 1
                    progressed = True
                    continue
                break

            if run.wait is not None:
                if self._wait_satisfied(run.wait):
                    self._emit(now, EventKind.WAIT_EXITED, run.spec.id, th.idx)
                    run.wait = None
                    run.pc += 1
                    progressed = True
                    continue
                break

            if run.pc >= len(run.spec.actions):
                self._complete_task(th, run, now)
                progressed = True
                continue

            action = run.spec.actions[run.pc]

            if isinstance(action, Compute):
                self._start_compute(th, run, frame.nested, action.duration, now)
                progressed = True
                break

            if isinstance(action, Spawn):
                progressed = True
                self._do_spawn(th, run, action, now)
                continue

            if isinstance(action, PollOutcome):
                target = self.runs[action.target]
                if target.completed:
                    run.poll_spun = False
                    run.poll_token = None
                    run.pc += 1
                    progressed = True
                    continue
                token = (self.progress, now)
                if run.poll_token == token:
                    break  # nothing changed since the last failed check
                run.poll_token = token
                if action.poll_cost > 0 and not run.poll_spun:
                    run.poll_spun = True
                    self._start_spin(th, run, action.target, action.poll_cost, now)
                    progressed = True
                    break
                run.poll_spun = False
                self._note_failed_poll(run)
                if self.outcome is not None:
                    break
                local_idx = self._queue_of(th.idx)
                local_view = [
                    pol.QueueEntryView(pos, seq, tid, self.runs[tid].priority)
                    for pos, (seq, tid) in enumerate(self.queues[local_idx])
                ]
                decision = pol.on_yield(
                    self.policy, run.priority, action.yield_mode, local_view
                )
                self._emit(now, EventKind.YIELDED, run.spec.id, th.idx)
                progressed = True
                if isinstance(decision, pol.ResumeImmediately):
                    break  # stay resident; retry after at most one pick
                th.stack.pop()
                queue_idx = self._queue_of(th.idx)
                if isinstance(decision, pol.RequeueBack):
                    run.priority = decision.priority
                    self._requeue_back(queue_idx, run.spec.id)
                else:
                    self._requeue_front(queue_idx, run.spec.id)
                continue

            if isinstance(action, (TaskwaitChildren, TaskgroupEnd)):
                if isinstance(action, TaskwaitChildren):
                    members = tuple(run.children)
                    kind = "children"
                else:
                    members = tuple(run.children[run.group_mark :])
                    run.group_mark = len(run.children)
                    kind = "group"
                self._emit(now, EventKind.WAIT_ENTERED, run.spec.id, th.idx)
                decision = pol.on_wait(self.policy, action.mode)
                wait = _WaitState(kind, members, action.mode, decision, now)
                if self._wait_satisfied(wait):
                    self._emit(now, EventKind.WAIT_EXITED, run.spec.id, th.idx)
                    run.pc += 1
                    progressed = True
                    continue
                run.wait = wait
                progressed = True
                break

            raise EngineError(f"unknown action {action!r}")
        return progressed

    def _do_spawn(self, th: _Thread, run: _Run, action: Spawn, now: int):
        child = self.runs[action.child]
        child_spec = child.spec
        max_prio = None
        if self.policy.kind is PolicyKind.EXTENDED:
            max_prio = self._max_queue_priority()
        decision = pol.on_spawn(
            self.policy,
            th.idx,
            child_spec,
            self._queue_lengths(),
            defer=action.defer,
            scatter_cursor=run.chunk_scatters,
            max_queue_priority=max_prio,
        )
        self._emit(now, EventKind.SPAWNED, child_spec.id, th.idx)
        run.children.append(child_spec.id)

        if isinstance(decision, pol.ExecuteUndeferred):
            if decision.forced:
                self._emit(now, EventKind.THROTTLED, child_spec.id, th.idx)
            depth = sum(1 for f in th.stack if f.nested)
            if (
                self.cfg.max_undeferred_depth is not None
                and depth >= self.cfg.max_undeferred_depth
            ):
                raise UndeferredDepthError(
                    f"undeferred nesting exceeded {self.cfg.max_undeferred_depth}"
                )
            run.blocked_child = child_spec.id
            child.started = True
            child.home = th.idx
            self.progress += 1
            th.stack.append(_Frame(child, nested=True))
            return

        if isinstance(decision, pol.ScatterTo):
            child.priority = decision.priority
            self._enqueue_spawned(decision.thread if not self.fcfs else 0, child_spec.id)
            self._emit(now, EventKind.SCATTERED, child_spec.id, decision.thread)
            if child_spec.label == pol.LOOP_CHUNK_LABEL:
                run.chunk_scatters += 1
        else:
            if decision.priority is not None:
                child.priority = decision.priority
            self._enqueue_spawned(self._queue_of(th.idx), child_spec.id)

        run.pc += 1
        if self.cfg.spawn_overhead:
            th.gap_until = now + self.cfg.spawn_overhead

    # -- picking ---------------------------------------------------------------

    def _queue_views(self, thread_idx: int, allowed):
        views = []
        for queue in self.queues:
            entries = []
            for pos, (seq, task_id) in enumerate(queue):
                if self._entry_pickable(thread_idx, task_id, allowed):
                    entries.append(
                        pol.QueueEntryView(pos, seq, task_id, self.runs[task_id].priority)
                    )
            views.append(entries)
        return views

    def _try_pick(self, th: _Thread, now: int) -> bool:
        if th.busy_at(now) or self.outcome is not None:
            return False
        allowed = self._pick_filter(th)
        views = self._queue_views(th.idx, allowed)
        pick = pol.on_idle(
            self.policy,
            th.idx,
            views,
            local_queue=0 if self.fcfs else None,
        )
        if pick is None:
            return False
        _, task_id = self.queues[pick.queue].pop(pick.pos)
        run = self.runs[task_id]
        foreign = (not self.fcfs) and pick.queue != th.idx
        if foreign:
            self._emit(now, EventKind.STOLEN, task_id, th.idx)
            if self.cfg.steal_overhead:
                th.gap_until = now + self.cfg.steal_overhead
        if not run.started:
            run.started = True
            run.home = th.idx
            self.progress += 1
        th.stack.append(_Frame(run, nested=False))
        self._run_thread(th, now)
        return True

    # -- main loop ----------------------------------------------------------------

    def _process(self, now: int):
        while self.outcome is None:
            # Settle all due completions and zero-time transitions before
            # anyone picks: wait exits and the spawns they trigger must be
            # visible to every pick decision at this timestamp.
            stepping = True
            while stepping and self.outcome is None:
                stepping = False
                for th in self.threads:
                    if th.seg_task is not None and th.seg_end <= now:
                        self._finish_segment(th, now)
                        stepping = True
                    if th.gap_until is not None and th.gap_until <= now and th.seg_task is None:
                        th.gap_until = None
                        stepping = True
                    if th.seg_task is None and th.stack:
                        if self._run_thread(th, now):
                            stepping = True
            if self.outcome is not None:
                break
            picked = False
            for th in self.threads:  # idle threads pick first
                if not th.stack and not th.busy_at(now):
                    if self._try_pick(th, now):
                        picked = True
            for th in self.threads:  # then wait/poll helpers
                if th.stack and not th.busy_at(now):
                    if self._try_pick(th, now):
                        picked = True
            if not picked:
                break

    def _next_time(self, now: int):
        nxt = None
        for th in self.threads:
            for t in (th.seg_end if th.seg_task is not None else None, th.gap_until):
                if t is not None and t > now and (nxt is None or t < nxt):
                    nxt = t
        return nxt

    def run(self) -> ScheduleTrace:
        self._seed_roots()
        now = 0
        while self.outcome is None:
            self._process(now)
            if self.outcome is not None:
                break
            if self.completed_count == len(self.graph.tasks):
                self.outcome = Outcome.COMPLETED
                break
            nxt = self._next_time(now)
            if nxt is None:
                # No future event can unblock anything: pollers (or waiters
                # behind them) are starved.
                self.outcome = Outcome.STARVATION_DETECTED
                break
            if nxt > self.cfg.max_virtual_time:
                self.outcome = Outcome.TIME_LIMIT_EXCEEDED
                break
            now = nxt
        return ScheduleTrace(
            thread_count=self.cfg.thread_count,
            segments=tuple(self.segments),
            events=tuple(self.events),
            makespan=self.last_time,
            outcome=self.outcome,
        )


def simulate(graph: TaskGraph, cfg: SimConfig) -> ScheduleTrace:
    """Run one deterministic simulation of `graph` under `cfg`."""
    violations = validate(graph)
    if violations:
        raise InvalidGraphError(violations)
    return _Engine(graph, cfg).run()


def simulate_batch(graph: TaskGraph, cfgs) -> list:
    """Independent simulate() calls, order preserved; failures are tagged
    with their index."""
    traces = []
    for index, cfg in enumerate(cfgs):
        try:
            traces.append(simulate(graph, cfg))
        except Exception as exc:
            raise BatchError(index, exc) from exc
    return traces
