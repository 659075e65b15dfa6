"""Exact solvers for the single-model placement problem.

Three routes over the same delay table:
  - brute force: every injective server assignment times every feasible
    bit choice; the verification oracle.
  - relaxed DP: shortest path through the layered graph whose stage-l
    nodes are (server, bits), dropping the one-layer-per-server rule;
    an admissible lower bound.
  - branch and bound: depth-first over layers with the DP suffix bound,
    guaranteed to reproduce the brute-force optimum and tie-broken plan.

Ties are broken by the lexicographically smallest (server, bits) sequence
so plans, not just objectives, are comparable across solvers.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Optional

from .core import PlacementPlan, ProblemInstance
from .delay import DelayTable, InfeasibleEdge, evaluate_plan

DEFAULT_NODE_BUDGET = 10_000_000

# solve_brute_force refuses anything past this; exact enumeration of
# M-permutations times bit products explodes quickly.
BRUTE_FORCE_MAX_LAYERS = 6
BRUTE_FORCE_MAX_SERVERS = 9


class SizeLimit(ValueError):
    """Instance too large for the brute-force guard."""


@dataclass(frozen=True)
class SolveResult:
    status: str  # "optimal", "infeasible", "budget_exceeded"
    plan: Optional[PlacementPlan]
    objective: float  # math.inf when infeasible
    nodes_explored: int  # complete candidate plans evaluated
    lower_bound_at_root: float
    wall_time: float

    @property
    def feasible(self) -> bool:
        return self.plan is not None


def _make_plan(assignments, table: DelayTable) -> PlacementPlan:
    total, cp, cm = evaluate_plan(assignments, table)
    return PlacementPlan(assignments=tuple(assignments), total_delay=total,
                        compute_delay=cp, comm_delay=cm)


def solve_brute_force(instance: ProblemInstance, table: DelayTable) -> SolveResult:
    """Enumerate every feasible plan; exact by construction."""
    L = instance.model.num_layers
    M = instance.cluster.num_servers
    if L > BRUTE_FORCE_MAX_LAYERS or M > BRUTE_FORCE_MAX_SERVERS:
        raise SizeLimit(f"L={L}, M={M} beyond brute-force guard "
                        f"({BRUTE_FORCE_MAX_LAYERS}, {BRUTE_FORCE_MAX_SERVERS})")
    t0 = time.perf_counter()
    if L > M or any(not fb for fb in instance.feasible_bits):
        return SolveResult("infeasible", None, math.inf, 0, math.inf,
                           time.perf_counter() - t0)

    best_key: Optional[tuple[float, tuple[tuple[int, int], ...]]] = None
    leaves = 0
    server_ids = sorted(s.id for s in instance.cluster.servers)
    for perm in itertools.permutations(server_ids, L):
        for bits in itertools.product(*(instance.feasible_bits[l] for l in range(L))):
            assignments = tuple(zip(perm, bits))
            leaves += 1
            try:
                total, _, _ = evaluate_plan(assignments, table)
            except InfeasibleEdge:
                continue
            key = (total, assignments)
            if best_key is None or key < best_key:
                best_key = key
    wall = time.perf_counter() - t0
    if best_key is None:
        return SolveResult("infeasible", None, math.inf, leaves, math.inf, wall)
    plan = _make_plan(best_key[1], table)
    return SolveResult("optimal", plan, plan.total_delay, leaves,
                       plan.total_delay, wall)


# ---------------------------------------------------------------------------
# Layered-graph relaxation
# ---------------------------------------------------------------------------

def _suffix_bounds(instance: ProblemInstance, table: DelayTable
                   ) -> list[dict[tuple[int, int], float]]:
    """H[l][(i, b)] = cheapest completion of layers l..L-1 starting with
    layer l on server i at b bits, allowing non-consecutive server reuse.

    Consecutive layers still need distinct, linked servers (any feasible
    plan satisfies that), so the bound stays admissible while excluding
    free self-edges."""
    L = instance.model.num_layers
    M = instance.cluster.num_servers
    H: list[dict[tuple[int, int], float]] = [dict() for _ in range(L)]
    for l in range(L - 1, -1, -1):
        for i in range(M):
            for b in instance.feasible_bits[l]:
                cost = table.cp[(i, l, b)]
                if l == L - 1:
                    H[l][(i, b)] = cost
                    continue
                best = math.inf
                for (j, b2), tail in H[l + 1].items():
                    if j == i:
                        continue
                    edge = table.cm[(l, i, j, b)]
                    if math.isfinite(edge):
                        best = min(best, edge + tail)
                H[l][(i, b)] = cost + best
    return H


def solve_relaxed_dp(instance: ProblemInstance, table: DelayTable
                     ) -> tuple[float, Optional[tuple[tuple[int, int], ...]]]:
    """Shortest layered path; returns (lower_bound, path). The path may
    reuse servers, so it is a bound witness, not a plan."""
    L = instance.model.num_layers
    if L == 0:
        return 0.0, ()
    H = _suffix_bounds(instance, table)
    if not H[0]:
        return math.inf, None
    start = min(H[0], key=lambda k: (H[0][k], k))
    bound = H[0][start]
    if math.isinf(bound):
        return math.inf, None
    path = [start]
    for l in range(L - 1):
        i, b = path[-1]
        best_node, best_cost = None, math.inf
        for (j, b2), tail in H[l + 1].items():
            if j == i:
                continue
            edge = table.cm[(l, i, j, b)]
            if math.isfinite(edge) and edge + tail < best_cost:
                best_node, best_cost = (j, b2), edge + tail
        path.append(best_node)
    return bound, tuple(path)


def solve_branch_and_bound(instance: ProblemInstance, table: DelayTable,
                           budget: int = DEFAULT_NODE_BUDGET) -> SolveResult:
    """Exact search with DP suffix pruning.

    Pruning is strict (bound > incumbent) so objective ties survive and the
    lexicographic tie-break matches brute force exactly. Deterministic:
    layers expanded in order, children sorted by (bound, server, bits).
    """
    t0 = time.perf_counter()
    L = instance.model.num_layers
    M = instance.cluster.num_servers
    if L > M or any(not fb for fb in instance.feasible_bits):
        return SolveResult("infeasible", None, math.inf, 0, math.inf,
                           time.perf_counter() - t0)
    if L == 0:
        plan = PlacementPlan((), 0.0, 0.0, 0.0)
        return SolveResult("optimal", plan, 0.0, 0, 0.0,
                           time.perf_counter() - t0)

    H = _suffix_bounds(instance, table)
    root_bound = min(H[0].values(), default=math.inf)
    if math.isinf(root_bound):
        return SolveResult("infeasible", None, math.inf, 0, math.inf,
                           time.perf_counter() - t0)

    incumbent: Optional[tuple[float, tuple[tuple[int, int], ...]]] = None
    leaves = 0
    expansions = 0
    exhausted = False

    def children(l: int, last: Optional[tuple[int, int]], used: int):
        out = []
        for i in range(M):
            if used >> i & 1:
                continue
            for b in instance.feasible_bits[l]:
                edge = 0.0
                if last is not None:
                    edge = table.cm[(l - 1, last[0], i, last[1])]
                    if math.isinf(edge):
                        continue
                out.append((edge + H[l][(i, b)], i, b, edge))
        out.sort()
        return out

    def dfs(l: int, used: int, cost: float,
            prefix: tuple[tuple[int, int], ...]) -> None:
        nonlocal incumbent, leaves, expansions, exhausted
        if exhausted:
            return
        last = prefix[-1] if prefix else None
        for bound_tail, i, b, edge in children(l, last, used):
            expansions += 1
            if expansions > budget:
                exhausted = True
                return
            if incumbent is not None and cost + bound_tail > incumbent[0]:
                continue
            child_cost = cost + edge + table.cp[(i, l, b)]
            child_prefix = prefix + ((i, b),)
            if l == L - 1:
                leaves += 1
                key = (child_cost, child_prefix)
                if incumbent is None or key < incumbent:
                    incumbent = key
            else:
                dfs(l + 1, used | 1 << i, child_cost, child_prefix)

    dfs(0, 0, 0.0, ())
    wall = time.perf_counter() - t0
    if incumbent is None:
        status = "budget_exceeded" if exhausted else "infeasible"
        return SolveResult(status, None, math.inf, leaves, root_bound, wall)
    plan = _make_plan(incumbent[1], table)
    status = "budget_exceeded" if exhausted else "optimal"
    return SolveResult(status, plan, plan.total_delay, leaves, root_bound, wall)
