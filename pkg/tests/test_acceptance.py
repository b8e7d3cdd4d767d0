"""Exit criteria. Each test records one PASS/FAIL line, printed in the terminal summary."""

import itertools
import math
import time
import warnings

import numpy as np

from patrolroute.baselines import greedy_policy, random_policy
from patrolroute.cli import main
from patrolroute.config import EnvConfig, LearnerConfig, RewardParams, StartMode, SyntheticSpec
from patrolroute.env import EpisodeLog, MoveTo, legal_actions, reset, step
from patrolroute.learner import PARAM_NAMES, PolicyParams, build_batch, collect_episode, evaluate_policy, surrogate, train
from patrolroute.metrics import coverage_index, route_entropy
from patrolroute.runs import run_batch, run_seeds
from patrolroute.terrain import DisconnectedMonitoredSet, generate_synthetic_map, shortest_distance, skeletonize
from tests.conftest import bfs_oracle, lattice
from tests.test_metrics import oracle_coverage

RESULTS = []
PSI = (3, 5, 10, 20)


def record(name, ok, detail):
    RESULTS.append((name, bool(ok), detail))
    assert ok, f"{name}: {detail}"


def quiet_skeleton(grid):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DisconnectedMonitoredSet)
        return skeletonize(grid)


def test_c01_distance_oracle():
    rng = np.random.default_rng(2001)
    start = time.perf_counter()
    graphs = pairs = mismatches = 0
    while graphs < 50:
        spec = SyntheticSpec(
            int(rng.integers(2, 15)), int(rng.integers(2, 15)), hotspots=0,
            road_density=float(rng.uniform(0.3, 1.0)),
        )
        grid = generate_synthetic_map(spec, int(rng.integers(2**31)))
        g = quiet_skeleton(grid)
        if g.num_nodes > 200:
            continue
        graphs += 1
        oracle = bfs_oracle(grid)
        for a, b in itertools.product(range(g.num_nodes), repeat=2):
            pairs += 1
            mismatches += shortest_distance(g, a, b) != oracle[a, b]
    elapsed = time.perf_counter() - start
    record("C1 distance oracle", mismatches == 0 and elapsed < 10,
           f"{graphs} graphs, {pairs} pairs, {mismatches} mismatches, {elapsed:.1f}s (limit 10s)")


STANDARD_REWARD = RewardParams(eta=10, phi=10, nu=-25, alpha_minus=5, alpha_plus=50)


def test_c02_reward_arithmetic():
    g = quiet_skeleton(lattice(1, 3, crime=[10, 10, 10], zone=np.array([[0, 1, 1]], bool)))
    cfg = EnvConfig(num_agents=1, start_mode=StartMode.BEST, reward=STANDARD_REWARD)
    state, _ = reset(g, cfg, 0)
    got = []
    for target in (2, 1, 0):
        state, res = step(g, state, cfg, [MoveTo(target)])
        got.append(float(res.individual_rewards[0]))
    hand = got == [51.0, -12.0, -25.0]

    rng = np.random.default_rng(2002)
    episodes = steps = bad = 0
    while episodes < 1000:
        grid = generate_synthetic_map(
            SyntheticSpec(int(rng.integers(2, 8)), int(rng.integers(2, 8)), hotspots=int(rng.integers(0, 2)),
                          peak_min=5, peak_max=40, decay_radius=1, road_density=0.7, padding=0),
            int(rng.integers(2**31)),
        )
        g = quiet_skeleton(grid)
        n = int(rng.integers(1, 4))
        if len(g.monitored) < n:
            continue
        cfg = EnvConfig(num_agents=n, horizon=int(rng.integers(1, 30)), start_mode=StartMode.RANDOM, reward=STANDARD_REWARD)
        state, _ = reset(g, cfg, rng)
        done = False
        while not done:
            acts = [legal_actions(g, state, i) for i in range(n)]
            state, res = step(g, state, cfg, [a[rng.integers(len(a))] for a in acts])
            total = math.fsum(res.individual_rewards)
            bad += sum(res.joint_rewards[i] != res.individual_rewards[i] + total for i in range(n))
            steps += 1
            done = res.done
        episodes += 1
    record("C2 reward arithmetic", hand and bad == 0,
           f"hand cases {got} (want [51.0, -12.0, -25.0]); {episodes} fuzzed episodes, {steps} steps, {bad} identity failures")


def test_c03_visit_conservation():
    rng = np.random.default_rng(2003)
    checked = bad = 0
    while checked < 300:
        g = quiet_skeleton(generate_synthetic_map(
            SyntheticSpec(int(rng.integers(2, 9)), int(rng.integers(2, 9)), hotspots=0, road_density=0.8),
            int(rng.integers(2**31))))
        n = int(rng.integers(1, 5))
        if len(g.monitored) < n:
            continue
        cfg = EnvConfig(num_agents=n, horizon=int(rng.integers(1, 60)), start_mode=StartMode(rng.choice(["random", "best"])))
        res = run_batch(g, cfg, random_policy(), [int(rng.integers(2**31))])[0]
        bad += int(res.final_state.visits.sum()) != n * (cfg.horizon + 1)
        checked += 1
    record("C3 visit conservation", bad == 0, f"{checked} fuzzed rollouts, {bad} violations of sum(visits) = N(T+1)")


def test_c04_coverage_oracle():
    rng = np.random.default_rng(2004)
    instances = bad = 0
    while instances < 100:
        rows, cols = int(rng.integers(1, 23)), int(rng.integers(1, 23))
        road = rng.random((rows, cols)) < 0.9
        if not road.any():
            continue
        zone = rng.random((rows, cols)) < 0.85
        crime = rng.integers(0, 8, (rows, cols))
        g = quiet_skeleton(lattice(rows, cols, crime=crime, road=road, zone=zone))
        if g.num_nodes > 500 or not g.monitored:
            continue
        n = int(rng.integers(1, 6))
        log = EpisodeLog(tuple(tuple(int(v) for v in rng.integers(0, g.num_nodes, 51)) for _ in range(n)))
        for psi in PSI:
            bad += coverage_index(g, log, psi) != oracle_coverage(g.sigma, g.monitored, log.visited(), psi)
        instances += 1
    record("C4 coverage-index oracle", bad == 0, f"{instances} instances x psi {PSI}, {bad} mismatches")


def test_c05_greedy_determinism(city20):
    cfg = EnvConfig(num_agents=5, start_mode=StartMode.BEST)
    logs = [r.log for r in run_batch(city20, cfg, greedy_policy(city20), run_seeds(2005, 100))]
    h = route_entropy(logs)
    distinct = len({log.routes for log in logs})
    record("C5 greedy best-start determinism", h == 0.0 and distinct == 1,
           f"entropy {h} over 100 runs, {distinct} distinct route set(s)")


def _mean_w3(graph, cfg, policy, seed):
    logs = [r.log for r in run_batch(graph, cfg, policy, run_seeds(seed, 100))]
    return float(np.mean([coverage_index(graph, log, 3) for log in logs]))


def test_c06_greedy_beats_random(city20):
    cfg = EnvConfig(num_agents=5, start_mode=StartMode.RANDOM)
    start = time.perf_counter()
    greedy = _mean_w3(city20, cfg, greedy_policy(city20), 2006)
    rand = _mean_w3(city20, cfg, random_policy(), 2006)
    elapsed = time.perf_counter() - start
    record("C6 greedy dominance over random", greedy - rand >= 0.15 and elapsed < 60,
           f"|W_3| greedy {greedy:.3f} vs random {rand:.3f} (margin {greedy - rand:.3f} >= 0.15), {elapsed:.1f}s")


def test_c07_learning_sanity(city10):
    env = EnvConfig(num_agents=2)
    start = time.perf_counter()
    result = train(city10, env, LearnerConfig(total_updates=300, seed=7))
    _, _, trained = evaluate_policy(city10, env, result.params, 100, 2007)
    rand = float(np.mean([r.joint_return.sum() for r in run_batch(city10, env, random_policy(), run_seeds(2007, 100))]))
    elapsed = time.perf_counter() - start
    record("C7 learning sanity", trained >= 2 * rand and elapsed < 600,
           f"mean joint reward trained {trained:.1f} vs random {rand:.1f} (need >= {2 * rand:.1f}), {elapsed:.0f}s")


def test_c08_trained_vs_greedy(city20):
    env = EnvConfig(num_agents=5, start_mode=StartMode.RANDOM)
    result = train(city20, env, LearnerConfig(total_updates=300, seed=8))
    report, _, _ = evaluate_policy(city20, env, result.params, 100, 2008, psi_values=(3,))
    greedy = _mean_w3(city20, env, greedy_policy(city20), 2008)
    trained = report.coverage[3]
    record("C8 trained vs greedy (soft)", trained >= greedy, f"|W_3| trained {trained:.3f} vs greedy random-start {greedy:.3f}")


def test_c09_gradient_check():
    rng = np.random.default_rng(2009)
    worst = 0.0
    for draw in range(20):
        grid = generate_synthetic_map(SyntheticSpec(6, 6, hotspots=1, decay_radius=2, road_density=0.8), draw)
        g = quiet_skeleton(grid)
        n = int(rng.integers(1, 4))
        env = EnvConfig(num_agents=n, line_of_sight=int(rng.integers(1, 4)), horizon=int(rng.integers(3, 9)))
        cfg = LearnerConfig(hidden=6, clip_epsilon=float(rng.uniform(0.1, 0.3)))
        behaviour = PolicyParams.initial(6, rng.integers(2**31))
        batch = build_batch([collect_episode(g, env, behaviour, rng) for _ in range(2)], behaviour, cfg)
        params = behaviour.with_flat(behaviour.flat() + rng.normal(0, 0.2, behaviour.flat().size))
        _, grads = surrogate(params, batch, cfg)
        analytic = np.concatenate([grads[k].ravel() for k in PARAM_NAMES])
        flat, h = params.flat(), 1e-6
        numeric = np.empty_like(flat)
        for i in range(flat.size):
            e = np.zeros_like(flat)
            e[i] = h
            numeric[i] = (surrogate(params.with_flat(flat + e), batch, cfg, False)[0]
                          - surrogate(params.with_flat(flat - e), batch, cfg, False)[0]) / (2 * h)
        rel = np.abs(analytic - numeric).max() / max(np.abs(analytic).max(), np.abs(numeric).max())
        worst = max(worst, rel)
    record("C9 gradient check", worst <= 1e-4, f"worst relative error {worst:.2e} over 20 draws (limit 1e-4)")


def _tree(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


def test_c10_cli_reproducibility(tmp_path, capsys):
    def both(*argv):
        trees = []
        for name in ("a", "b"):
            out = tmp_path / name / argv[0]
            flag = ["--out", str(out / "map.json")] if argv[0] == "gen-map" else ["--out", str(out)]
            assert main([*map(str, argv), *flag]) == 0
            trees.append(_tree(out))
        capsys.readouterr()
        return trees[0] == trees[1] and trees[0]

    checks = {
        "gen-map": both("gen-map", "--rows", 20, "--cols", 20, "--hotspots", 3, "--seed", 7),
        "simulate": both("simulate", "--policy", "random", "--num-runs", 10, "--seed", 3),
        "train": both("train", "--map", "city10", "--num-agents", 2, "--total-updates", 3, "--seed", 3),
    }
    policy = tmp_path / "a" / "train" / "policy.json"
    checks["simulate trained"] = both("simulate", "--policy", f"trained:{policy}", "--num-runs", 5, "--sampled")
    checks["evaluate"] = both("evaluate", "--policies", "greedy", "random", f"trained:{policy}", "--starts", "random", "best", "--num-runs", 5)
    failed = [k for k, ok in checks.items() if not ok]
    record("C10 CLI reproducibility", not failed, f"byte-identical reruns: {sorted(checks)}; failed: {failed}")
