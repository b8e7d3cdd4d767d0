"""Command-line front end: gen-map, simulate, train, evaluate.

Exit codes: 0 success, 2 configuration error, 3 data error.
Precedence: flags > ``--config`` file (YAML or JSON) > defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from patrolroute.baselines import greedy_policy, random_policy
from patrolroute.config import EnvConfig, LearnerConfig, REWARD_PRESETS, RewardParams, StartMode, SyntheticSpec
from patrolroute.errors import ConfigError, DataError, InvalidConfig
from patrolroute.learner import PolicyParams, TrainedPolicy, dumps_curve, train
from patrolroute.metrics import DEFAULT_PSI, batch_evaluate, format_table, table_row
from patrolroute.runs import run_batch, run_seeds
from patrolroute.terrain import dumps_map, generate_synthetic_map, load_map, skeletonize

OUT_ENV = "PATROLROUTE_OUT"
BUNDLED_MAPS = ("city20", "city10")


@dataclass
class RunConfig:
    map: str = "city20"
    seed: int = 0
    policy: str = "greedy"
    num_runs: int = 100
    psi: tuple = DEFAULT_PSI
    pooled: bool = False
    sampled: bool = False
    jobs: int = 1
    # environment
    num_agents: int = 5
    line_of_sight: int = 3
    start_mode: str = "random"
    horizon: int = 50
    discount: float = 0.99
    # reward
    reward_preset: str = "standard"
    eta: float | None = None
    phi: float | None = None
    nu: float | None = None
    alpha_minus: float | None = None
    alpha_plus: float | None = None
    # learner
    learning_rate: float = 0.0005
    gae_lambda: float = 0.95
    entropy_coeff: float = 0.01
    kl_coeff: float = 0.3
    use_gae: bool = True
    clip_epsilon: float = 0.2
    episodes_per_update: int = 8
    total_updates: int = 300
    sgd_epochs: int = 10
    minibatches: int = 4
    hidden: int = 16
    value_coeff: float = 0.5
    reward_scale: float = 0.01

    def reward(self):
        if self.reward_preset not in REWARD_PRESETS:
            raise InvalidConfig(f"unknown reward preset {self.reward_preset!r}")
        base = asdict(REWARD_PRESETS[self.reward_preset])
        for k in base:
            if getattr(self, k) is not None:
                base[k] = float(getattr(self, k))
        return RewardParams(**base)

    def env_config(self, num_agents=None, start_mode=None):
        try:
            mode = StartMode(start_mode or self.start_mode)
        except ValueError:
            raise InvalidConfig(f"start mode must be 'random' or 'best', got {start_mode or self.start_mode!r}") from None
        return EnvConfig(
            num_agents=num_agents or self.num_agents,
            line_of_sight=self.line_of_sight,
            start_mode=mode,
            horizon=self.horizon,
            reward=self.reward(),
            discount=self.discount,
        )

    def learner_config(self):
        return LearnerConfig(
            learning_rate=self.learning_rate,
            gae_lambda=self.gae_lambda,
            entropy_coeff=self.entropy_coeff,
            kl_coeff=self.kl_coeff,
            use_gae=self.use_gae,
            clip_epsilon=self.clip_epsilon,
            discount=self.discount,
            episodes_per_update=self.episodes_per_update,
            total_updates=self.total_updates,
            seed=self.seed,
            sgd_epochs=self.sgd_epochs,
            minibatches=self.minibatches,
            hidden=self.hidden,
            value_coeff=self.value_coeff,
            reward_scale=self.reward_scale,
        )

    def to_dict(self):
        d = asdict(self)
        d["psi"] = list(self.psi)
        return d


def _psi(text):
    v = float(text)
    return int(v) if v.is_integer() else v


def _add_run_flags(p):
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name == "psi":
            p.add_argument(flag, nargs="+", type=_psi, default=None)
        elif f.type in ("bool",):
            p.add_argument(flag, action=argparse.BooleanOptionalAction, default=None)
        else:
            kind = {"int": int, "float": float, "float | None": float}.get(f.type, str)
            p.add_argument(flag, type=kind, default=None, dest=f.name)
    p.add_argument("--config", help="YAML/JSON file of RunConfig fields")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./runs/<command>)")


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    names = {f.name for f in fields(RunConfig)}
    if args.config:
        try:
            doc = yaml.safe_load(Path(args.config).read_text()) or {}
        except OSError as e:
            raise InvalidConfig(f"cannot read config file: {e}") from None
        except yaml.YAMLError as e:
            raise InvalidConfig(f"malformed config file: {e}") from None
        if not isinstance(doc, dict):
            raise InvalidConfig("config file must be a mapping")
        unknown = set(doc) - names
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        cfg = replace(cfg, **doc)
    flags = {k: v for k, v in vars(args).items() if k in names and v is not None}
    cfg = replace(cfg, **flags)
    cfg.psi = tuple(cfg.psi)
    return cfg


def out_dir(args, command):
    base = args.out or os.environ.get(OUT_ENV)
    path = Path(base) if base else Path("runs") / command
    path.mkdir(parents=True, exist_ok=True)
    return path


def read_map(name):
    if name in BUNDLED_MAPS:
        with resources.as_file(resources.files("patrolroute") / "data" / f"{name}.json") as p:
            return load_map(p)
    try:
        return load_map(name)
    except OSError as e:
        raise DataError(f"cannot read map {name!r}: {e.strerror}") from None


def make_policy(selector, graph, cfg: RunConfig):
    if selector == "greedy":
        return greedy_policy(graph)
    if selector == "greedy-raw":
        return greedy_policy(graph, discount_visits=False)
    if selector == "random":
        return random_policy()
    if selector.startswith("trained:"):
        path = selector.split(":", 1)[1]
        try:
            params = PolicyParams.load(path)
        except OSError as e:
            raise DataError(f"cannot read policy {path!r}: {e.strerror}") from None
        return TrainedPolicy(params, greedy=not cfg.sampled)
    raise InvalidConfig(f"unknown policy selector {selector!r}")


def _write(path: Path, text: str):
    path.write_text(text)


def _echo_config(out: Path, cfg: RunConfig, **extra):
    _write(out / "config.json", json.dumps({**cfg.to_dict(), **extra}, sort_keys=True, indent=1) + "\n")


def _simulate(graph, cfg, selector, num_agents=None, start_mode=None):
    env_cfg = cfg.env_config(num_agents, start_mode)
    policy = make_policy(selector, graph, cfg)
    results = run_batch(graph, env_cfg, policy, run_seeds(cfg.seed, cfg.num_runs), cfg.jobs)
    logs = [r.log for r in results]
    report = batch_evaluate(graph, logs, cfg.psi, cfg.pooled, env_cfg.config_hash())
    return env_cfg, results, report


def heatmap_text(graph, logs):
    grid = np.zeros((graph.rows, graph.cols), dtype=np.int64)
    for log in logs:
        counts = log.visit_counts(graph.num_nodes)
        for nd in graph.nodes:
            grid[nd.grid_pos] += counts[nd.id]
    return "".join("\t".join(str(v) for v in row) + "\n" for row in grid)


# ---------------------------------------------------------------------------
# commands


def cmd_gen_map(args):
    spec = SyntheticSpec(
        rows=args.rows,
        cols=args.cols,
        hotspots=args.hotspots,
        peak_min=args.peak_min,
        peak_max=args.peak_max,
        road_density=args.density,
        decay_radius=args.decay_radius,
        padding=args.padding,
        cell_side_m=args.cell_side,
    )
    grid = generate_synthetic_map(spec, args.seed)
    graph = skeletonize(grid)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write(out, dumps_map(grid))
    dims = f"{grid.rows}x{grid.cols}"
    print(f"{'grid':>8}  {'# nodes':>8}  {'# edges':>8}  {'# monitored':>11}")
    print(f"{dims:>8}  {graph.num_nodes:>8}  {graph.num_edges:>8}  {len(graph.monitored):>11}")
    return 0


def cmd_simulate(args):
    cfg = resolve_config(args)
    graph = skeletonize(read_map(cfg.map))
    env_cfg, results, report = _simulate(graph, cfg, cfg.policy)
    out = out_dir(args, "simulate")
    ep_dir = out / "episodes"
    ep_dir.mkdir(exist_ok=True)
    width = max(3, len(str(cfg.num_runs - 1)))
    for k, r in enumerate(results):
        r.log.save(ep_dir / f"run_{k:0{width}d}.json")
    report.save(out / "report.json")
    rows = [table_row(cfg.policy, env_cfg.line_of_sight, env_cfg.start_mode.value, env_cfg.num_agents, report)]
    table = format_table(rows, cfg.psi)
    _write(out / "table.tsv", table)
    _write(out / "heatmap.tsv", heatmap_text(graph, [r.log for r in results]))
    _echo_config(out, cfg)
    sys.stdout.write(table)
    return 0


def cmd_train(args):
    cfg = resolve_config(args)
    graph = skeletonize(read_map(cfg.map))
    env_cfg = cfg.env_config()
    result = train(graph, env_cfg, cfg.learner_config())
    out = out_dir(args, "train")
    result.params.save(out / "policy.json")
    _write(out / "curve.jsonl", dumps_curve(result.curve))
    _echo_config(out, cfg)
    final = result.curve[-1][1] if result.curve else float("nan")
    print(f"updates: {len(result.curve)}  final mean joint reward: {final:.2f}")
    return 0


def cmd_evaluate(args):
    cfg = resolve_config(args)
    policies = [cfg.policy] if args.policies is None else args.policies
    if not policies:
        raise InvalidConfig("no policies to evaluate")
    starts = args.starts or [cfg.start_mode]
    agent_counts = args.agent_counts or [cfg.num_agents]
    graph = skeletonize(read_map(cfg.map))
    rows = []
    for selector in policies:
        for start in starts:
            for n in agent_counts:
                env_cfg, _, report = _simulate(graph, cfg, selector, n, start)
                rows.append(table_row(selector, env_cfg.line_of_sight, env_cfg.start_mode.value, n, report))
    table = format_table(rows, cfg.psi)
    out = out_dir(args, "evaluate")
    _write(out / "comparison.tsv", table)
    _echo_config(out, cfg, policies=policies, starts=starts, agent_counts=agent_counts)
    sys.stdout.write(table)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="patrolroute", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-map", help="generate a synthetic hotspot map")
    g.add_argument("--rows", type=int, default=20)
    g.add_argument("--cols", type=int, default=20)
    g.add_argument("--hotspots", type=int, default=3)
    g.add_argument("--peak-min", type=int, default=40)
    g.add_argument("--peak-max", type=int, default=80)
    g.add_argument("--density", type=float, default=0.85)
    g.add_argument("--decay-radius", type=int, default=4)
    g.add_argument("--padding", type=int, default=0)
    g.add_argument("--cell-side", type=float, default=50.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="map.json")
    g.set_defaults(func=cmd_gen_map)

    s = sub.add_parser("simulate", help="roll out one policy and score its routes")
    _add_run_flags(s)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="train the shared patrol policy")
    _add_run_flags(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="compare policies in one table")
    _add_run_flags(e)
    e.add_argument("--policies", nargs="*", default=None, help="greedy, greedy-raw, random or trained:<path>")
    e.add_argument("--starts", nargs="+", choices=[m.value for m in StartMode], default=None)
    e.add_argument("--agent-counts", nargs="+", type=int, default=None)
    e.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
