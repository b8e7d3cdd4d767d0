"""Patrol simulation: simultaneous moves, visit counts, masked observations, rewards."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np

from patrolroute.config import EnvConfig, StartMode
from patrolroute.errors import EpisodeFinished, IllegalAction, ParseError, TooManyAgents
from patrolroute.terrain import PatrolGraph

MASKED = -1


@dataclass(frozen=True)
class Stay:
    def __repr__(self):
        return "Stay"


@dataclass(frozen=True)
class MoveTo:
    node: int


STAY = Stay()
Action = Union[Stay, MoveTo]


def destination(action: Action, here: int) -> int:
    return here if isinstance(action, Stay) else action.node


@dataclass
class EnvState:
    t: int
    positions: tuple[int, ...]
    visits: np.ndarray
    rng: np.random.Generator


@dataclass(frozen=True)
class Observation:
    agent: int
    agent_positions: tuple[int, ...]
    visible_visits: np.ndarray
    target_values: np.ndarray


class StepResult(NamedTuple):
    individual_rewards: np.ndarray
    joint_rewards: np.ndarray
    observations: tuple[Observation, ...]
    done: bool


def start_positions(graph: PatrolGraph, config: EnvConfig, rng: np.random.Generator):
    monitored = sorted(graph.monitored)
    n = config.num_agents
    if len(monitored) < n:
        raise TooManyAgents(f"{n} agents but only {len(monitored)} monitored nodes")
    if config.start_mode is StartMode.BEST:
        ranked = sorted(monitored, key=lambda v: (-graph.sigma[v], v))
        return tuple(ranked[:n])
    picks = rng.choice(len(monitored), size=n, replace=False)
    return tuple(monitored[i] for i in picks)


def reset(graph: PatrolGraph, config: EnvConfig, seed=None):
    """Start an episode. ``seed`` may be an int or an existing Generator."""
    rng = np.random.default_rng(seed)
    positions = start_positions(graph, config, rng)
    visits = np.zeros(graph.num_nodes, dtype=np.int64)
    for v in positions:
        visits[v] += 1
    state = EnvState(0, positions, visits, rng)
    return state, tuple(observe(graph, state, config, i) for i in range(config.num_agents))


def legal_actions(graph: PatrolGraph, state: EnvState, agent: int):
    """Stay first, then moves to each neighbor in ascending id order."""
    here = state.positions[agent]
    return (STAY,) + tuple(MoveTo(u) for u in graph.adjacency[here])


def sight_mask(graph: PatrolGraph, node: int, line_of_sight: int) -> np.ndarray:
    """Nodes whose grid cell lies within Chebyshev distance ``line_of_sight``."""
    d = np.abs(graph.positions - graph.positions[node]).max(axis=1)
    return d <= line_of_sight


def observe(graph: PatrolGraph, state: EnvState, config: EnvConfig, agent: int) -> Observation:
    here = state.positions[agent]
    visible = np.where(sight_mask(graph, here, config.line_of_sight), state.visits, MASKED)
    return Observation(agent, tuple(state.positions), visible, graph.sigma)


def exploration_bonus(sigma: float, visits_after: int, config: EnvConfig) -> float:
    if visits_after != 1:
        return 0.0
    rp = config.reward
    return rp.alpha_plus if sigma >= rp.phi else rp.alpha_minus


def individual_reward(graph: PatrolGraph, node: int, visits_after: int, config: EnvConfig) -> float:
    rp = config.reward
    if not graph.monitored_mask[node]:
        return rp.nu
    sigma = graph.sigma[node]
    value = sigma / (rp.eta * visits_after)
    tau = exploration_bonus(sigma, visits_after, config)
    if value >= 1:
        return value + tau
    return value + tau + rp.nu / 2


def joint_rewards(individual) -> np.ndarray:
    individual = np.asarray(individual, dtype=float)
    return individual + math.fsum(individual)


def step(graph: PatrolGraph, state: EnvState, config: EnvConfig, actions):
    if state.t >= config.horizon:
        raise EpisodeFinished(f"episode already at t={state.t}")
    if len(actions) != config.num_agents:
        raise ValueError(f"expected {config.num_agents} actions, got {len(actions)}")
    targets = []
    for i, action in enumerate(actions):
        here = state.positions[i]
        if isinstance(action, Stay):
            targets.append(here)
        elif isinstance(action, MoveTo) and action.node in graph.adjacency[here]:
            targets.append(action.node)
        else:
            raise IllegalAction(i, getattr(action, "node", action))

    visits = state.visits.copy()
    rewards = np.empty(config.num_agents)
    for i, v in enumerate(targets):
        visits[v] += 1
        rewards[i] = individual_reward(graph, v, int(visits[v]), config)

    new_state = EnvState(state.t + 1, tuple(targets), visits, state.rng)
    obs = tuple(observe(graph, new_state, config, i) for i in range(config.num_agents))
    return new_state, StepResult(rewards, joint_rewards(rewards), obs, new_state.t == config.horizon)


# ---------------------------------------------------------------------------
# episodes


@dataclass(frozen=True)
class EpisodeLog:
    routes: tuple[tuple[int, ...], ...]
    seed: int | None = None
    config_hash: str = ""
    num_nodes: int | None = None

    @property
    def num_agents(self):
        return len(self.routes)

    @property
    def horizon(self):
        return len(self.routes[0]) - 1

    def visited(self) -> set[int]:
        return {v for route in self.routes for v in route}

    def visit_counts(self, num_nodes) -> np.ndarray:
        counts = np.zeros(num_nodes, dtype=np.int64)
        for route in self.routes:
            np.add.at(counts, list(route), 1)
        return counts

    def to_dict(self):
        return {
            "format": "patrolroute-episode",
            "version": 1,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "num_nodes": self.num_nodes,
            "routes": [list(r) for r in self.routes],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "patrolroute-episode":
            raise ParseError("not an episode log", field="format")
        try:
            routes = tuple(tuple(int(v) for v in r) for r in d["routes"])
        except (KeyError, TypeError, ValueError):
            raise ParseError("bad routes", field="routes") from None
        return cls(routes, d.get("seed"), d.get("config_hash", ""), d.get("num_nodes"))

    @classmethod
    def loads(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise ParseError(e.msg, line=e.lineno) from None

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path):
        return cls.loads(Path(path).read_text())


class RolloutResult(NamedTuple):
    log: EpisodeLog
    individual_return: np.ndarray
    joint_return: np.ndarray
    final_state: EnvState


def rollout(graph: PatrolGraph, config: EnvConfig, policy, seed=None) -> RolloutResult:
    """Run one full shift. Starts and policy randomness share one seeded stream.

    ``policy`` needs ``act(obs, legal, rng, *, state, agent, graph, config)``
    and may define ``begin_episode(graph, config)``.
    """
    state, obs = reset(graph, config, seed)
    if hasattr(policy, "begin_episode"):
        policy.begin_episode(graph, config)
    routes = [[v] for v in state.positions]
    ind = np.zeros(config.num_agents)
    joint = np.zeros(config.num_agents)
    done = False
    while not done:
        actions = [
            policy.act(
                obs[i], legal_actions(graph, state, i), state.rng, state=state, agent=i, graph=graph, config=config
            )
            for i in range(config.num_agents)
        ]
        state, res = step(graph, state, config, actions)
        obs, done = res.observations, res.done
        ind += res.individual_rewards
        joint += res.joint_rewards
        for i, v in enumerate(state.positions):
            routes[i].append(v)
    seed_val = seed if isinstance(seed, (int, np.integer)) else None
    log = EpisodeLog(
        tuple(tuple(r) for r in routes),
        None if seed_val is None else int(seed_val),
        config.config_hash(),
        graph.num_nodes,
    )
    return RolloutResult(log, ind, joint, state)
