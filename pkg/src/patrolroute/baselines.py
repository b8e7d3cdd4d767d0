"""Reference policies that do not learn."""

from __future__ import annotations

import numpy as np

from patrolroute.env import Stay, destination


class Policy:
    """Shared policy contract: pick one legal action per agent per step.

    ``act`` receives the agent's observation, its legal actions and the
    episode rng stream. The pre-move ``state`` and ``agent`` index are passed
    as keywords for policies that need them. Policies may keep per-episode
    state, reset in ``begin_episode``.
    """

    def begin_episode(self, graph, config):
        pass

    def act(self, obs, legal, rng, **context):
        raise NotImplementedError


class GreedyPolicy(Policy):
    """Each agent moves to the reachable node with the best momentary score.

    Default score is the visit-discounted target ``sigma / (eta * (visits + 1))``,
    i.e. the value the reward would pay on arrival. ``discount_visits=False``
    scores by raw ``sigma``. Reads true visit counts, not the masked view.
    Ties go to the lowest node id.
    """

    def __init__(self, graph=None, discount_visits=True):
        self.graph = graph
        self.discount_visits = discount_visits

    def score(self, node, visits, graph, eta):
        if not self.discount_visits:
            return graph.sigma[node]
        return graph.sigma[node] / (eta * (visits[node] + 1))

    def act(self, obs, legal, rng, *, state, agent, graph=None, config=None, **_):
        graph = graph if graph is not None else self.graph
        eta = config.reward.eta if config is not None else 10.0
        here = state.positions[agent]
        best, best_key = None, None
        for action in legal:
            v = destination(action, here)
            key = (-self.score(v, state.visits, graph, eta), v)
            if best_key is None or key < best_key:
                best, best_key = action, key
        return best


def greedy_policy(graph, discount_visits=True) -> GreedyPolicy:
    return GreedyPolicy(graph, discount_visits)


class RandomPolicy(Policy):
    """Uniform over legal actions.

    With a ``seed`` the policy owns its stream; otherwise it draws from the
    episode rng handed to ``act``.
    """

    def __init__(self, seed=None):
        self.rng = None if seed is None else np.random.default_rng(seed)

    def act(self, obs, legal, rng, **_):
        gen = self.rng if self.rng is not None else rng
        return legal[int(gen.integers(len(legal)))]


def random_policy(seed=None) -> RandomPolicy:
    return RandomPolicy(seed)


class StayPolicy(Policy):
    def act(self, obs, legal, rng, **_):
        return next(a for a in legal if isinstance(a, Stay))
