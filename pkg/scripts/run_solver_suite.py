#!/usr/bin/env python3
"""Compare the three solver routes over a seeded random suite.

Reports, per instance: optimum, root lower bound, bound gap, and how much
of the brute-force leaf space the branch-and-bound search actually visited.
"""

import argparse
import random
import statistics

from edgeplan.delay import build_delay_table
from edgeplan.gen import random_test_instance
from edgeplan.solver import (solve_branch_and_bound, solve_brute_force,
                             solve_relaxed_dp)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--instances", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-layers", type=int, default=4)
    ap.add_argument("--max-servers", type=int, default=6)
    args = ap.parse_args()

    gaps, visit_ratios = [], []
    infeasible = 0
    print(f"{'seed':>6} {'L':>2} {'M':>2} {'optimum_s':>12} {'bound_s':>12} "
          f"{'gap%':>6} {'visited%':>9}")
    for k in range(args.instances):
        rng = random.Random(args.seed * 1_000_003 + k)
        inst = random_test_instance(rng, max_layers=args.max_layers,
                                    max_servers=args.max_servers)
        table = build_delay_table(inst)
        exact = solve_brute_force(inst, table)
        if exact.plan is None:
            infeasible += 1
            continue
        bnb = solve_branch_and_bound(inst, table)
        assert bnb.plan.assignments == exact.plan.assignments
        bound, _ = solve_relaxed_dp(inst, table)
        gap = 100 * (exact.objective - bound) / exact.objective
        visited = 100 * bnb.nodes_explored / max(exact.nodes_explored, 1)
        gaps.append(gap)
        visit_ratios.append(visited)
        print(f"{k:>6} {inst.model.num_layers:>2} {inst.cluster.num_servers:>2} "
              f"{exact.objective:>12.6f} {bound:>12.6f} {gap:>6.2f} {visited:>9.2f}")

    print(f"\n{len(gaps)} feasible / {infeasible} infeasible")
    if gaps:
        print(f"bound gap: mean {statistics.mean(gaps):.2f}% "
              f"max {max(gaps):.2f}%")
        print(f"leaves visited by branch-and-bound: "
              f"mean {statistics.mean(visit_ratios):.2f}% of brute force")


if __name__ == "__main__":
    main()
