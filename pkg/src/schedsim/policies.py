"""Scheduling policies as pure decision procedures.

The engine consults a policy at every task scheduling point: task
creation (on_spawn), an idle or helping thread looking for work
(on_idle), a failed completion poll (on_yield) and a wait construct
(on_wait).  Three policy families are provided:

* ``reference`` - a mainstream runtime: per-thread double-ended queues,
  LIFO pop, FIFO steal, a hard queue bound with fallback to undeferred
  execution (task throttling), priorities ignored.
* ``fcfs`` - the idealized baseline: one unbounded queue serving all
  threads first-come first-served.
* ``extended`` - the reference mechanics plus the prescriptive
  extensions: honored defer requests with scatter-on-overflow,
  priority-aware pop and steal, fair yields, and latency waits.

All decisions are pure functions of their inputs, so identical inputs
always produce identical decisions.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple, Optional, Sequence

from .task_graph import DeferMode, TaskSpec, YieldMode, WaitMode

#: Priority assigned to overflow-scattered tasks so they are never
#: brought forward on the target thread.  Priorities are plain Python
#: ints, so fair yields can always go one lower without saturating.
MIN_PRIORITY = -(2**63)

#: Label that marks loop-chunk tasks; the extended policy scatters them
#: one per victim queue with a priority above everything pending.
LOOP_CHUNK_LABEL = "loop-chunk"


class PolicyKind(str, Enum):
    REFERENCE_DEQUE = "reference"
    GLOBAL_FCFS = "fcfs"
    EXTENDED = "extended"


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class PolicyConfig:
    """Tunable policy switches.

    ``queue_bound`` of ``None`` means unbounded.  Constructing a
    reference or fcfs config normalizes the extension switches to the
    values those policies imply.
    """

    kind: PolicyKind
    queue_bound: Optional[int] = 256
    honor_defer: bool = False
    priority_aware: bool = False
    scatter_on_overflow: bool = False
    scattered_priority: int = MIN_PRIORITY
    fair_yield: bool = False
    honor_latency_wait: bool = False
    steal_victim_order: str = "round_robin"

    def __post_init__(self):
        if self.queue_bound is not None and self.queue_bound <= 0:
            raise ConfigError("queue_bound must be positive or None")
        if self.steal_victim_order != "round_robin":
            raise ConfigError("only round_robin steal order is supported")
        if self.kind is PolicyKind.REFERENCE_DEQUE:
            for flag in ("honor_defer", "priority_aware", "fair_yield", "honor_latency_wait", "scatter_on_overflow"):
                object.__setattr__(self, flag, False)
        elif self.kind is PolicyKind.GLOBAL_FCFS:
            object.__setattr__(self, "queue_bound", None)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "queue_bound": self.queue_bound,
            "honor_defer": self.honor_defer,
            "priority_aware": self.priority_aware,
            "scatter_on_overflow": self.scatter_on_overflow,
            "scattered_priority": self.scattered_priority,
            "fair_yield": self.fair_yield,
            "honor_latency_wait": self.honor_latency_wait,
            "steal_victim_order": self.steal_victim_order,
        }

    @staticmethod
    def from_dict(data: dict) -> "PolicyConfig":
        return PolicyConfig(
            kind=PolicyKind(data["kind"]),
            queue_bound=data.get("queue_bound"),
            honor_defer=bool(data.get("honor_defer", False)),
            priority_aware=bool(data.get("priority_aware", False)),
            scatter_on_overflow=bool(data.get("scatter_on_overflow", False)),
            scattered_priority=int(data.get("scattered_priority", MIN_PRIORITY)),
            fair_yield=bool(data.get("fair_yield", False)),
            honor_latency_wait=bool(data.get("honor_latency_wait", False)),
            steal_victim_order=data.get("steal_victim_order", "round_robin"),
        )


def reference(queue_bound: Optional[int] = 256) -> PolicyConfig:
    return PolicyConfig(kind=PolicyKind.REFERENCE_DEQUE, queue_bound=queue_bound)


def fcfs() -> PolicyConfig:
    return PolicyConfig(kind=PolicyKind.GLOBAL_FCFS, queue_bound=None)


def extended(
    queue_bound: Optional[int] = 256,
    honor_defer: bool = True,
    priority_aware: bool = True,
    scatter_on_overflow: bool = True,
    fair_yield: bool = True,
    honor_latency_wait: bool = True,
    scattered_priority: int = MIN_PRIORITY,
) -> PolicyConfig:
    return PolicyConfig(
        kind=PolicyKind.EXTENDED,
        queue_bound=queue_bound,
        honor_defer=honor_defer,
        priority_aware=priority_aware,
        scatter_on_overflow=scatter_on_overflow,
        fair_yield=fair_yield,
        honor_latency_wait=honor_latency_wait,
        scattered_priority=scattered_priority,
    )


# --- spawn decisions -----------------------------------------------------


@dataclass(frozen=True)
class EnqueueLocal:
    #: Optional priority override for the enqueued task (used for the
    #: local share of a loop-chunk burst so it ranks with its siblings).
    priority: Optional[int] = None


@dataclass(frozen=True)
class ScatterTo:
    thread: int
    priority: int


@dataclass(frozen=True)
class ExecuteUndeferred:
    #: True when the runtime forced in-situ execution (throttling or a
    #: failed scatter), False when the spawn itself requested it.
    forced: bool = False


SpawnDecision = (EnqueueLocal, ScatterTo, ExecuteUndeferred)


def _victims(spawning_thread: int, thread_count: int) -> list:
    return [
        (spawning_thread + off) % thread_count for off in range(1, thread_count)
    ]


def _has_space(cfg: PolicyConfig, length: int) -> bool:
    return cfg.queue_bound is None or length < cfg.queue_bound


def on_spawn(
    cfg: PolicyConfig,
    spawning_thread: int,
    task: TaskSpec,
    queue_lengths: Sequence[int],
    defer: DeferMode = DeferMode.RUNTIME_CHOICE,
    scatter_cursor: int = 0,
    max_queue_priority: Optional[int] = None,
):
    """Decide placement for a newly created task.

    ``queue_lengths`` has one entry per thread (a single shared entry for
    fcfs).  ``scatter_cursor`` counts earlier scatters by the same parent
    so loop chunks land one per victim before falling back to the local
    queue.  ``max_queue_priority`` is the highest priority pending in any
    queue among non-chunk tasks, or None if nothing qualifies; chunks of
    the same burst must not escalate each other.
    """
    if defer is DeferMode.UNDEFERRED:
        return ExecuteUndeferred(forced=False)

    if cfg.kind is PolicyKind.GLOBAL_FCFS:
        return EnqueueLocal()

    local_len = queue_lengths[spawning_thread]

    if cfg.kind is PolicyKind.REFERENCE_DEQUE:
        if _has_space(cfg, local_len):
            return EnqueueLocal()
        return ExecuteUndeferred(forced=True)

    # Extended.
    if cfg.scatter_on_overflow and task.label == LOOP_CHUNK_LABEL:
        # Every chunk of the burst outranks the pending non-chunk work so
        # neither the issuing thread nor a thief prefers anything else.
        if max_queue_priority is None:
            priority = task.priority
        else:
            priority = max_queue_priority + 1
        victims = _victims(spawning_thread, len(queue_lengths))
        spacious = [v for v in victims if _has_space(cfg, queue_lengths[v])]
        if scatter_cursor < len(spacious):
            return ScatterTo(spacious[scatter_cursor], priority)
        if _has_space(cfg, local_len):
            return EnqueueLocal(priority=priority)
        return ExecuteUndeferred(forced=True)

    if cfg.honor_defer and defer is DeferMode.MUST_DEFER:
        if _has_space(cfg, local_len):
            return EnqueueLocal()
        if cfg.scatter_on_overflow:
            for victim in _victims(spawning_thread, len(queue_lengths)):
                if _has_space(cfg, queue_lengths[victim]):
                    return ScatterTo(victim, cfg.scattered_priority)
        return ExecuteUndeferred(forced=True)

    if _has_space(cfg, local_len):
        return EnqueueLocal()
    return ExecuteUndeferred(forced=True)


# --- idle pick -----------------------------------------------------------


class QueueEntryView(NamedTuple):
    """One pickable queue entry as the policy sees it.

    ``pos`` is the physical index in the owning queue, ``seq`` the global
    enqueue stamp (lower = older).
    """

    pos: int
    seq: int
    task: int
    priority: int


class Pick(NamedTuple):
    queue: int
    pos: int


def on_idle(
    cfg: PolicyConfig,
    thread: int,
    queues: Sequence[Sequence[QueueEntryView]],
    local_queue: Optional[int] = None,
):
    """Pick a task for a free thread, or None.

    ``queues`` holds the pickable entries of every queue in physical
    order (head first).  ``local_queue`` names this thread's own queue
    and defaults to ``thread``; fcfs callers pass 0.

    Reference semantics pop the own tail (newest) and steal the head
    (oldest) from round-robin victims.  Priority-aware semantics pick
    the highest priority across all queues, preferring the own queue on
    priority ties, then oldest entry, then lowest task id.
    """
    own = thread if local_queue is None else local_queue

    if cfg.kind is PolicyKind.GLOBAL_FCFS:
        entries = queues[own]
        return Pick(own, entries[0].pos) if entries else None

    if cfg.kind is PolicyKind.EXTENDED and cfg.priority_aware:
        def rank(entry):
            return (-entry.priority, entry.seq, entry.task)

        own_entries = queues[own]
        own_best = min(own_entries, key=rank) if own_entries else None
        steal_best, steal_queue = None, None
        for victim in _victims(thread, len(queues)):
            for entry in queues[victim]:
                if steal_best is None or rank(entry) < rank(steal_best):
                    steal_best, steal_queue = entry, victim
        if own_best is not None and (
            steal_best is None or own_best.priority >= steal_best.priority
        ):
            return Pick(own, own_best.pos)
        if steal_best is not None:
            return Pick(steal_queue, steal_best.pos)
        return None

    # Reference mechanics (also extended without priority awareness).
    own_entries = queues[own]
    if own_entries:
        return Pick(own, own_entries[-1].pos)
    for victim in _victims(thread, len(queues)):
        if queues[victim]:
            return Pick(victim, queues[victim][0].pos)
    return None


# --- yield decisions -----------------------------------------------------


@dataclass(frozen=True)
class ResumeImmediately:
    pass


@dataclass(frozen=True)
class RequeueBack:
    priority: int


@dataclass(frozen=True)
class RequeueFront:
    pass


def on_yield(
    cfg: PolicyConfig,
    task_priority: int,
    mode: YieldMode,
    local_queue: Sequence[QueueEntryView],
):
    """Decide where a poller goes after a failed completion check.

    The reference runtime ignores the proposed yield clauses: every
    yield requeues the continuation at the front of the pickup order, so
    the owning thread takes the newest task again and consumers churn.
    A fair yield goes to the back with priority one below the lowest
    pending priority, guaranteeing every queued task starts first.
    """
    if cfg.kind is PolicyKind.REFERENCE_DEQUE:
        return RequeueFront()

    if cfg.kind is PolicyKind.GLOBAL_FCFS:
        if mode is YieldMode.LATENCY:
            return ResumeImmediately()
        return RequeueBack(task_priority)

    # Extended.
    if mode is YieldMode.LATENCY:
        return ResumeImmediately()
    fair = cfg.fair_yield and mode in (YieldMode.DEFAULT, YieldMode.THROUGHPUT)
    if fair:
        if local_queue:
            lowest = min(entry.priority for entry in local_queue)
            return RequeueBack(lowest - 1)
        return RequeueBack(task_priority)
    if mode is YieldMode.THROUGHPUT:
        return RequeueBack(task_priority)
    return RequeueFront()


# --- wait decisions ------------------------------------------------------


class WaitDecision(str, Enum):
    EXECUTE_OTHER_TASKS = "execute_other_tasks"
    IDLE_UNTIL_COMPLETE = "idle_until_complete"


def on_wait(cfg: PolicyConfig, mode: WaitMode) -> WaitDecision:
    if mode is WaitMode.LATENCY and cfg.honor_latency_wait:
        return WaitDecision.IDLE_UNTIL_COMPLETE
    return WaitDecision.EXECUTE_OTHER_TASKS


def with_queue_bound(cfg: PolicyConfig, queue_bound: Optional[int]) -> PolicyConfig:
    if cfg.kind is PolicyKind.GLOBAL_FCFS and queue_bound is not None:
        raise ConfigError("fcfs queues are unbounded")
    return replace(cfg, queue_bound=queue_bound)
