"""Trace metrics, flaw detection, policy comparison and rendering.

All ratios are exact fractions over integer tick counts, so reports are
reproducible bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

from .engine import EventKind, Outcome, ScheduleTrace, SegmentKind
from .task_graph import (
    Compute,
    TaskGraph,
    Violation,
    critical_path,
    spawn_parents,
    total_work,
)

#: Labels the two-timestep generator puts on its tasks; group start
#: latency is only defined for graphs carrying them.
DRIVER_LABEL = "driver"
SECOND_GROUP_LABEL = "traversal-g2"


class TraceMismatchError(Exception):
    """The trace references tasks that are not part of the graph."""


@dataclass(frozen=True)
class AnalysisReport:
    makespan: int
    critical_path_length: int
    occupancy: Fraction
    per_thread_busy: tuple
    throttled_spawns: int
    undeferred_on_critical_path: int
    group_start_latency: int
    starvation: bool
    poll_spin_ticks: int

    def to_dict(self) -> dict:
        return {
            "makespan": self.makespan,
            "critical_path_length": self.critical_path_length,
            "occupancy": str(self.occupancy),
            "per_thread_busy": [str(f) for f in self.per_thread_busy],
            "throttled_spawns": self.throttled_spawns,
            "undeferred_on_critical_path": self.undeferred_on_critical_path,
            "group_start_latency": self.group_start_latency,
            "starvation": self.starvation,
            "poll_spin_ticks": self.poll_spin_ticks,
        }

    def to_text(self) -> str:
        rows = [
            ("makespan", self.makespan),
            ("critical path", self.critical_path_length),
            ("occupancy", self.occupancy),
            ("throttled spawns", self.throttled_spawns),
            ("undeferred on critical path", self.undeferred_on_critical_path),
            ("group start latency", self.group_start_latency),
            ("poll spin ticks", self.poll_spin_ticks),
            ("starvation", self.starvation),
        ]
        width = max(len(name) for name, _ in rows)
        lines = [f"{name:<{width}}  {value}" for name, value in rows]
        for idx, busy in enumerate(self.per_thread_busy):
            lines.append(f"{f'thread {idx} busy':<{width}}  {busy}")
        return "\n".join(lines)


@dataclass(frozen=True)
class ComparisonReport:
    baseline_makespan: int
    variant_makespan: int
    reduction_percent: Fraction
    flaw_deltas: dict

    def to_dict(self) -> dict:
        return {
            "baseline_makespan": self.baseline_makespan,
            "variant_makespan": self.variant_makespan,
            "reduction_percent": str(self.reduction_percent),
            "flaw_deltas": {k: v for k, v in self.flaw_deltas.items()},
        }


def _check_trace_tasks(graph: TaskGraph, trace: ScheduleTrace):
    n = len(graph.tasks)
    for seg in trace.segments:
        if not 0 <= seg.task < n:
            raise TraceMismatchError(f"segment references unknown task {seg.task}")
    for event in trace.events:
        if not 0 <= event.task < n:
            raise TraceMismatchError(f"event references unknown task {event.task}")


def analyze(graph: TaskGraph, trace: ScheduleTrace) -> AnalysisReport:
    """Compute the full metric set for one trace of `graph`."""
    _check_trace_tasks(graph, trace)
    cp_length, cp_tasks = critical_path(graph)
    cp_set = set(cp_tasks)
    parents = spawn_parents(graph)

    compute_ticks = 0
    spin_ticks = 0
    busy = [0] * trace.thread_count
    undeferred_on_cp = 0
    for seg in trace.segments:
        length = seg.end - seg.start
        busy[seg.thread] += length
        if seg.kind is SegmentKind.POLL_SPIN:
            spin_ticks += length
            continue
        compute_ticks += length
        if seg.kind is SegmentKind.UNDEFERRED:
            parent = parents.get(seg.task)
            if parent is not None and parent[0] in cp_set:
                undeferred_on_cp += 1

    makespan = trace.makespan
    if makespan > 0:
        occupancy = Fraction(compute_ticks, makespan * trace.thread_count)
        per_thread = tuple(Fraction(b, makespan) for b in busy)
    else:
        occupancy = Fraction(0)
        per_thread = tuple(Fraction(0) for _ in busy)

    throttled = sum(1 for e in trace.events if e.kind is EventKind.THROTTLED)

    return AnalysisReport(
        makespan=makespan,
        critical_path_length=cp_length,
        occupancy=occupancy,
        per_thread_busy=per_thread,
        throttled_spawns=throttled,
        undeferred_on_critical_path=undeferred_on_cp,
        group_start_latency=_group_start_latency(graph, trace),
        starvation=trace.outcome is Outcome.STARVATION_DETECTED,
        poll_spin_ticks=spin_ticks,
    )


def _group_start_latency(graph: TaskGraph, trace: ScheduleTrace) -> int:
    driver_ids = {t.id for t in graph.tasks if t.label == DRIVER_LABEL}
    group2_ids = {t.id for t in graph.tasks if t.label == SECOND_GROUP_LABEL}
    if not driver_ids or not group2_ids:
        return 0
    gate = None
    for event in trace.events:
        if event.kind is EventKind.WAIT_EXITED and event.task in driver_ids:
            gate = event.time
            break
    if gate is None:
        return 0
    first_start = {}
    for seg in trace.segments:
        if seg.task in group2_ids and seg.task not in first_start:
            first_start[seg.task] = seg.start
    if set(first_start) != group2_ids:
        return 0
    return max(first_start.values()) - gate


def compare(graph: TaskGraph, baseline: ScheduleTrace, variant: ScheduleTrace) -> ComparisonReport:
    """Relative makespan reduction of `variant` over `baseline`; positive
    when the variant is faster."""
    base_report = analyze(graph, baseline)
    var_report = analyze(graph, variant)
    if base_report.makespan == 0:
        reduction = Fraction(0)
    else:
        reduction = (
            100
            * Fraction(base_report.makespan - var_report.makespan, base_report.makespan)
        )
    deltas = {
        "throttled_spawns": var_report.throttled_spawns - base_report.throttled_spawns,
        "undeferred_on_critical_path": (
            var_report.undeferred_on_critical_path
            - base_report.undeferred_on_critical_path
        ),
        "group_start_latency": (
            var_report.group_start_latency - base_report.group_start_latency
        ),
        "poll_spin_ticks": var_report.poll_spin_ticks - base_report.poll_spin_ticks,
        "starvation": int(var_report.starvation) - int(base_report.starvation),
    }
    return ComparisonReport(
        baseline_makespan=base_report.makespan,
        variant_makespan=var_report.makespan,
        reduction_percent=reduction,
        flaw_deltas=deltas,
    )


def validate_trace(graph: TaskGraph, trace: ScheduleTrace) -> list:
    """Engine self-check: structural invariants any trace must satisfy.

    Violations are returned as data; an empty list means the trace is
    consistent with the graph.
    """
    violations = []
    n = len(graph.tasks)

    for seg in trace.segments:
        if not 0 <= seg.task < n:
            violations.append(Violation("UnknownTask", seg.task))
    for event in trace.events:
        if not 0 <= event.task < n:
            violations.append(Violation("UnknownTask", event.task))
    if violations:
        return violations

    # Non-overlap, per thread.
    per_thread = {}
    for seg in trace.segments:
        per_thread.setdefault(seg.thread, []).append(seg)
        if seg.end <= seg.start:
            violations.append(Violation("EmptySegment", seg.task))
    for thread, segs in sorted(per_thread.items()):
        segs = sorted(segs, key=lambda s: (s.start, s.end))
        for prev, cur in zip(segs, segs[1:]):
            if cur.start < prev.end:
                violations.append(Violation("OverlappingSegments", thread))
                break

    completions = {}
    for event in trace.events:
        if event.kind is EventKind.COMPLETED:
            completions[event.task] = completions.get(event.task, 0) + 1
    for task, count in sorted(completions.items()):
        if count > 1:
            violations.append(Violation("DuplicateCompletion", task))

    # Work conservation and single execution only hold for complete runs.
    if trace.outcome is Outcome.COMPLETED:
        expected = {}
        for spec in graph.tasks:
            expected[spec.id] = sum(
                a.duration for a in spec.actions if isinstance(a, Compute)
            )
        executed = {task_id: 0 for task_id in expected}
        for seg in trace.segments:
            if seg.kind is not SegmentKind.POLL_SPIN:
                executed[seg.task] += seg.end - seg.start
        for task_id in sorted(expected):
            if executed[task_id] != expected[task_id]:
                violations.append(Violation("WorkNotConserved", task_id))
        for task_id in sorted(expected):
            if completions.get(task_id, 0) != 1:
                violations.append(Violation("MissingCompletion", task_id))

        cp_length, _ = critical_path(graph)
        if trace.makespan < cp_length:
            violations.append(Violation("MakespanBelowCriticalPath", -1))
        threads_used = {seg.thread for seg in trace.segments}
        if threads_used:
            bound = -(-total_work(graph) // max(len(threads_used), 1))
            if trace.makespan < bound:
                violations.append(Violation("MakespanBelowWorkBound", -1))

    # Tied residency holds regardless of outcome.
    tied_thread = {}
    for seg in trace.segments:
        if graph.task(seg.task).tied:
            home = tied_thread.setdefault(seg.task, seg.thread)
            if home != seg.thread:
                violations.append(Violation("TiedTaskMigrated", seg.task))

    return violations


# --- SVG Gantt rendering --------------------------------------------------

_PALETTE = [
    "#4878cf", "#6acc65", "#d65f5f", "#b47cc7",
    "#c4ad66", "#77bedb", "#e49444", "#8d9fa6",
]


def render_gantt_svg(graph: TaskGraph, trace: ScheduleTrace, width: int = 960) -> str:
    """One row per thread, a rectangle per executed segment colored by
    task label, and a black tick at every spawn event."""
    row_height = 28
    margin_left = 70
    margin_top = 24
    axis_height = 22
    threads = trace.thread_count
    span = max(trace.makespan, 1)
    scale = (width - margin_left - 10) / span
    height = margin_top + threads * row_height + axis_height

    labels = sorted({spec.label for spec in graph.tasks})
    color_of = {label: _PALETTE[i % len(_PALETTE)] for i, label in enumerate(labels)}

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="monospace" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for t in range(threads):
        y = margin_top + t * row_height
        parts.append(
            f'<text x="4" y="{y + row_height * 0.65:.1f}">thread {t}</text>'
        )
        parts.append(
            f'<line x1="{margin_left}" y1="{y + row_height - 4}" '
            f'x2="{width - 10}" y2="{y + row_height - 4}" stroke="#ddd"/>'
        )
    for seg in trace.segments:
        x = margin_left + seg.start * scale
        w = max((seg.end - seg.start) * scale, 0.5)
        y = margin_top + seg.thread * row_height + 3
        label = graph.task(seg.task).label
        fill = color_of.get(label, "#999999")
        opacity = "0.45" if seg.kind is SegmentKind.POLL_SPIN else "1.0"
        parts.append(
            f'<rect class="seg" x="{x:.2f}" y="{y}" width="{w:.2f}" '
            f'height="{row_height - 10}" fill="{fill}" fill-opacity="{opacity}">'
            f"<title>task {seg.task} [{seg.start},{seg.end}) {seg.kind.value}</title></rect>"
        )
    for event in trace.events:
        if event.kind is EventKind.SPAWNED:
            x = margin_left + event.time * scale
            y = margin_top + event.thread * row_height
            parts.append(
                f'<line x1="{x:.2f}" y1="{y}" x2="{x:.2f}" '
                f'y2="{y + row_height - 6}" stroke="black" stroke-width="1"/>'
            )
    axis_y = margin_top + threads * row_height + 12
    parts.append(
        f'<text x="{margin_left}" y="{axis_y}">0</text>'
        f'<text x="{width - 60}" y="{axis_y}">{trace.makespan}</text>'
    )
    legend_x = margin_left
    for label in labels:
        parts.append(
            f'<rect x="{legend_x}" y="{height - 10}" width="8" height="8" '
            f'fill="{color_of[label]}"/>'
            f'<text x="{legend_x + 12}" y="{height - 2}">{label or "(none)"}</text>'
        )
        legend_x += 12 + 8 * max(len(label), 6)
    parts.append("</svg>")
    return "\n".join(parts)


def report_to_json(report: AnalysisReport, meta: dict | None = None) -> str:
    data = {}
    if meta:
        data["meta"] = dict(meta)
    data.update(report.to_dict())
    return json.dumps(data, indent=2)
