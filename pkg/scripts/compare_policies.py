"""Train a patrol policy, then compare it against the baselines across sight radii.

Prints a TSV coverage table (one row per policy, sight radius and start mode).

    python3 scripts/compare_policies.py --map city20 --updates 300 --runs 100
"""

import argparse
import time

from patrolroute.baselines import greedy_policy, random_policy
from patrolroute.cli import read_map
from patrolroute.config import EnvConfig, LearnerConfig, StartMode
from patrolroute.learner import TrainedPolicy, train
from patrolroute.metrics import DEFAULT_PSI, batch_evaluate, format_table, table_row
from patrolroute.runs import run_batch, run_seeds
from patrolroute.terrain import skeletonize


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--map", default="city20")
    ap.add_argument("--agents", type=int, default=5)
    ap.add_argument("--updates", type=int, default=300)
    ap.add_argument("--runs", type=int, default=100)
    ap.add_argument("--sight", type=int, nargs="+", default=[1, 3, 5])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    graph = skeletonize(read_map(args.map))
    rows = []
    for sight in args.sight:
        env = EnvConfig(num_agents=args.agents, line_of_sight=sight)
        t0 = time.perf_counter()
        params = train(graph, env, LearnerConfig(total_updates=args.updates, seed=args.seed)).params
        print(f"# trained L={sight} in {time.perf_counter() - t0:.0f}s")
        policies = {"trained": TrainedPolicy(params), "greedy": greedy_policy(graph), "random": random_policy()}
        for start in StartMode:
            cfg = EnvConfig(num_agents=args.agents, line_of_sight=sight, start_mode=start)
            for name, policy in policies.items():
                results = run_batch(graph, cfg, policy, run_seeds(args.seed, args.runs), jobs=args.jobs)
                report = batch_evaluate(graph, [r.log for r in results], DEFAULT_PSI)
                rows.append(table_row(name, sight, start.value, args.agents, report))
    print(format_table(rows), end="")


if __name__ == "__main__":
    main()
