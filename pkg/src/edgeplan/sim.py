"""Event-driven replay of autoregressive inference over a placement plan.

One query, n rounds. Each round pushes a single token through the layer
chain: a compute event per layer, a transfer event per consecutive layer
pair. The autoregressive dependency serializes everything, so the trace is
a single timeline and its completion time must reproduce the closed-form
objective (the central cross-check of the delay model).

Per-round durations are the n-round totals cp and cm divided by n, since
the delay table is defined over all n rounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import ProblemInstance
from .delay import DelayTable


class InfeasiblePlan(ValueError):
    pass


@dataclass(frozen=True)
class SimEvent:
    start: float
    end: float
    kind: str  # "compute" or "transfer"
    round: int  # 1-based
    layer: int
    resource: str  # "server:<i>" or "link:<i>-><j>"


@dataclass(frozen=True)
class SimTrace:
    events: tuple[SimEvent, ...]
    completion_time: float


def simulate(assignments, instance: ProblemInstance, table: DelayTable) -> SimTrace:
    """Replay the plan; raises InfeasiblePlan on missing links or bad bits."""
    L = instance.model.num_layers
    n = instance.tokens
    if len(assignments) != L:
        raise InfeasiblePlan(f"{len(assignments)} assignments for {L} layers")
    for l, (i, b) in enumerate(assignments):
        if (i, l, b) not in table.cp:
            raise InfeasiblePlan(f"layer {l}: no delay entry for server {i} at {b} bits")
    events: list[SimEvent] = []
    t = 0.0
    for r in range(1, n + 1):
        for l, (i, b) in enumerate(assignments):
            dur = table.cp[(i, l, b)] / n
            events.append(SimEvent(t, t + dur, "compute", r, l, f"server:{i}"))
            t += dur
            if l + 1 < L:
                j = assignments[l + 1][0]
                cm = table.cm[(l, i, j, b)]
                if math.isinf(cm):
                    raise InfeasiblePlan(f"no link {i}->{j} for layers {l}->{l + 1}")
                dur = cm / n
                events.append(SimEvent(t, t + dur, "transfer", r, l, f"link:{i}->{j}"))
                t += dur
    return SimTrace(events=tuple(events), completion_time=t)


def trace_to_timeline(trace: SimTrace) -> list[str]:
    """CSV rows (header included), one per event, in time order."""
    rows = ["round,kind,resource,start_s,end_s"]
    for e in trace.events:
        rows.append(f"{e.round},{e.kind},{e.resource},{e.start!r},{e.end!r}")
    return rows
