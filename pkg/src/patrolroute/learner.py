"""Shared-policy clipped-surrogate learner with a summed (decomposed) joint value.

The policy scores each of five movement slots (stay, up, down, left, right)
with a one-hidden-layer tanh network shared across slots and agents; absent
neighbors are masked out of the softmax. Each agent's value comes from a
second small network and the joint value is their sum. Everything is plain
numpy with hand-written gradients so it can be checked by finite differences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from patrolroute.config import EnvConfig, LearnerConfig, stable_hash
from patrolroute.env import STAY, MoveTo, Observation, reset, step
from patrolroute.errors import DivergedTraining, ParseError, SchemaMismatch
from patrolroute.metrics import DEFAULT_PSI, batch_evaluate

NUM_SLOTS = 5
SLOT_FEATURES = ("present", "sigma", "discounted_sigma", "monitored", "target_dist", "agent_dist")
GLOBAL_FEATURES = ("unvisited_fraction", "remaining_time")
FEATURE_DIM = NUM_SLOTS * len(SLOT_FEATURES) + len(GLOBAL_FEATURES)
# candidate input: own slot block, current-node block, globals, is_stay flag
CANDIDATE_DIM = 2 * len(SLOT_FEATURES) + len(GLOBAL_FEATURES) + 1
SCHEMA_HASH = stable_hash(
    {"slots": NUM_SLOTS, "slot": SLOT_FEATURES, "global": GLOBAL_FEATURES, "candidate": "own|current|global|stay"}
)
PARAM_NAMES = ("pi_w1", "pi_b1", "pi_w2", "v_w1", "v_b1", "v_w2", "v_b2")


# ---------------------------------------------------------------------------
# features


class GraphTables:
    """Per-graph lookups used by ``featurize``; build once per graph."""

    def __init__(self, graph):
        self.graph = graph
        slots = np.full((graph.num_nodes, NUM_SLOTS), -1, dtype=np.int64)
        slots[:, 0] = np.arange(graph.num_nodes)
        for v in range(graph.num_nodes):
            for k in range(4):
                u = graph.neighbor_in_direction(v, k)
                if u is not None:
                    slots[v, k + 1] = u
        self.slots = slots
        top = graph.sigma.max() if graph.num_nodes else 0.0
        self.sigma_scale = top if top > 0 else 1.0
        self.dist_scale = max(max(graph.rows, graph.cols) - 1, 1)


def _tables(graph, tables):
    return tables if tables is not None else GraphTables(graph)


def featurize(graph, observation: Observation, agent: int, t: int, config: EnvConfig, tables=None) -> np.ndarray:
    """Fixed-length feature vector for one agent.

    Layout: five slot blocks (current node, then up/down/left/right
    neighbors; absent neighbors are all-zero) of ``SLOT_FEATURES``, then
    ``GLOBAL_FEATURES``. Masked visit counts count as unvisited for the
    unvisited fraction (taken over all nodes) and are never chosen as the
    target, which is the highest-sigma monitored node seen with zero visits.
    """
    tb = _tables(graph, tables)
    vis = observation.visible_visits
    known = np.where(vis < 0, 0, vis)
    pos = graph.positions
    here = observation.agent_positions[agent]

    seen_unvisited = np.flatnonzero((vis == 0) & graph.monitored_mask)
    if seen_unvisited.size:
        target = seen_unvisited[np.argmax(graph.sigma[seen_unvisited])]  # argmax keeps the lowest id on ties
    else:
        target = None
    others = [p for j, p in enumerate(observation.agent_positions) if j != agent]

    out = np.zeros(FEATURE_DIM)
    width = len(SLOT_FEATURES)
    for k, u in enumerate(tb.slots[here]):
        if u < 0:
            continue
        block = out[k * width : (k + 1) * width]
        block[0] = 1.0
        block[1] = graph.sigma[u] / tb.sigma_scale
        block[2] = graph.sigma[u] / (tb.sigma_scale * (known[u] + 1))
        block[3] = float(graph.monitored_mask[u])
        if target is None:
            block[4] = 1.0
        else:
            block[4] = min(np.abs(pos[u] - pos[target]).max() / tb.dist_scale, 1.0)
        if others:
            d = np.abs(pos[others] - pos[u]).max(axis=1).min()
            block[5] = min(d / tb.dist_scale, 1.0)
        else:
            block[5] = 1.0
    out[NUM_SLOTS * width] = np.count_nonzero(vis <= 0) / len(vis)
    out[NUM_SLOTS * width + 1] = (config.horizon - t) / config.horizon
    return out


def candidate_inputs(features: np.ndarray) -> np.ndarray:
    """(..., FEATURE_DIM) -> (..., NUM_SLOTS, CANDIDATE_DIM)."""
    width = len(SLOT_FEATURES)
    lead = features.shape[:-1]
    blocks = features[..., : NUM_SLOTS * width].reshape(*lead, NUM_SLOTS, width)
    current = np.broadcast_to(blocks[..., :1, :], blocks.shape)
    glob = np.broadcast_to(features[..., None, NUM_SLOTS * width :], (*lead, NUM_SLOTS, len(GLOBAL_FEATURES)))
    stay = np.zeros((*lead, NUM_SLOTS, 1))
    stay[..., 0, 0] = 1.0
    return np.concatenate([blocks, current, glob, stay], axis=-1)


def legal_mask(features: np.ndarray) -> np.ndarray:
    width = len(SLOT_FEATURES)
    return features[..., 0 : NUM_SLOTS * width : width] > 0.5


def slot_action(graph, here, slot, tables=None):
    if slot == 0:
        return STAY
    return MoveTo(int(_tables(graph, tables).slots[here, slot]))


# ---------------------------------------------------------------------------
# parameters and forward passes


@dataclass
class PolicyParams:
    arrays: dict = field(default_factory=dict)
    schema_hash: str = SCHEMA_HASH

    @classmethod
    def initial(cls, hidden=16, seed=0):
        rng = np.random.default_rng(seed)
        return cls(
            {
                "pi_w1": rng.normal(0, 1 / math.sqrt(CANDIDATE_DIM), (hidden, CANDIDATE_DIM)),
                "pi_b1": np.zeros(hidden),
                "pi_w2": rng.normal(0, 0.1, hidden),
                "v_w1": rng.normal(0, 1 / math.sqrt(FEATURE_DIM), (hidden, FEATURE_DIM)),
                "v_b1": np.zeros(hidden),
                "v_w2": rng.normal(0, 0.1, hidden),
                "v_b2": np.zeros(1),
            }
        )

    @property
    def hidden(self):
        return self.arrays["pi_b1"].shape[0]

    def flat(self):
        return np.concatenate([self.arrays[k].ravel() for k in PARAM_NAMES])

    def with_flat(self, vec):
        out, i = {}, 0
        for k in PARAM_NAMES:
            a = self.arrays[k]
            out[k] = np.asarray(vec[i : i + a.size], dtype=float).reshape(a.shape)
            i += a.size
        return PolicyParams(out, self.schema_hash)

    def copy(self):
        return PolicyParams({k: v.copy() for k, v in self.arrays.items()}, self.schema_hash)

    def to_dict(self):
        return {
            "format": "patrolroute-policy",
            "version": 1,
            "schema_hash": self.schema_hash,
            "hidden": self.hidden,
            "params": {k: self.arrays[k].tolist() for k in PARAM_NAMES},
        }

    def dumps(self):
        return json.dumps(self.to_dict(), sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(e.msg, line=e.lineno) from None
        if not isinstance(d, dict) or d.get("format") != "patrolroute-policy":
            raise ParseError("not a policy file", field="format")
        if d.get("version") != 1:
            raise ParseError(f"unsupported policy version {d.get('version')!r}", field="version")
        if d.get("schema_hash") != SCHEMA_HASH:
            raise SchemaMismatch(f"feature schema {d.get('schema_hash')!r} != {SCHEMA_HASH!r}")
        try:
            arrays = {k: np.asarray(d["params"][k], dtype=float) for k in PARAM_NAMES}
        except (KeyError, TypeError, ValueError):
            raise ParseError("bad parameter arrays", field="params") from None
        return cls(arrays, SCHEMA_HASH)

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path):
        return cls.loads(Path(path).read_text())


def policy_logits(params: PolicyParams, features, mask=None):
    """Masked slot logits (illegal slots are -inf) and the hidden activations."""
    p = params.arrays
    x = candidate_inputs(features)
    h = np.tanh(x @ p["pi_w1"].T + p["pi_b1"])
    z = h @ p["pi_w2"]
    mask = legal_mask(features) if mask is None else mask
    return np.where(mask, z, -np.inf), (x, h)


def masked_softmax(z):
    zmax = z.max(axis=-1, keepdims=True)
    e = np.exp(z - zmax)
    p = e / e.sum(axis=-1, keepdims=True)
    logp = np.where(np.isfinite(z), z - zmax - np.log(e.sum(axis=-1, keepdims=True)), -np.inf)
    return p, logp


def action_probs(params, features):
    z, _ = policy_logits(params, features)
    return masked_softmax(z)[0]


def agent_values(params: PolicyParams, features):
    """Per-agent values (..., N) for features of shape (..., N, FEATURE_DIM)."""
    p = params.arrays
    h = np.tanh(features @ p["v_w1"].T + p["v_b1"])
    return h @ p["v_w2"] + p["v_b2"][0]


def joint_value(params, features):
    """Decomposed joint value: sum of per-agent values over the agent axis."""
    return agent_values(params, features).sum(axis=-1)


# ---------------------------------------------------------------------------
# advantages


def gae(rewards, values, last_value=0.0, gamma=0.99, lam=0.95):
    """Generalized advantage estimates for one trajectory."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    nxt = np.append(values[1:], last_value)
    deltas = rewards + gamma * nxt - values
    adv = np.zeros_like(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = deltas[t] + gamma * lam * acc
        adv[t] = acc
    return adv


def discounted_returns(rewards, gamma, last_value=0.0):
    out = np.zeros(len(rewards))
    acc = last_value
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


# ---------------------------------------------------------------------------
# surrogate objective


@dataclass
class Batch:
    features: np.ndarray  # (S, N, FEATURE_DIM) one row per decision step
    actions: np.ndarray  # (S, N) slot indices
    old_logp: np.ndarray  # (S, N)
    old_probs: np.ndarray  # (S, N, NUM_SLOTS)
    advantages: np.ndarray  # (S,)
    returns: np.ndarray  # (S,)

    def subset(self, idx):
        return Batch(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))

    def __len__(self):
        return len(self.advantages)


def surrogate(params: PolicyParams, batch: Batch, cfg: LearnerConfig, with_grad=True):
    """Objective to maximize and its gradient (dict keyed like ``params``).

    objective = mean clipped surrogate + entropy_coeff * mean entropy
                - kl_coeff * mean KL(old || new) - value_coeff * mean squared value error
    Policy terms average over (step, agent) samples, the value term over steps.
    """
    P = params.arrays
    S, N = batch.actions.shape
    n = S * N
    mask = legal_mask(batch.features)
    z, (x, h) = policy_logits(params, batch.features, mask)
    prob, logp = masked_softmax(z)
    onehot = np.eye(NUM_SLOTS)[batch.actions]
    logp_a = np.take_along_axis(logp, batch.actions[..., None], axis=-1)[..., 0]
    ratio = np.exp(logp_a - batch.old_logp)
    adv = np.broadcast_to(batch.advantages[:, None], (S, N))
    eps = cfg.clip_epsilon
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1 - eps, 1 + eps) * adv
    surr = np.minimum(unclipped, clipped)

    safe_logp = np.where(mask, logp, 0.0)
    entropy = -(prob * safe_logp).sum(axis=-1)
    old_logp_all = np.log(np.where(mask, batch.old_probs, 1.0))
    kl = (batch.old_probs * (old_logp_all - safe_logp)).sum(axis=-1)

    values = agent_values(params, batch.features)
    vjoint = values.sum(axis=-1)
    verr = vjoint - batch.returns

    obj = (
        surr.mean()
        + cfg.entropy_coeff * entropy.mean()
        - cfg.kl_coeff * kl.mean()
        - cfg.value_coeff * np.mean(verr**2)
    )
    if not with_grad:
        return obj, None

    # d obj / d logits
    g_surr = np.where(unclipped <= clipped, unclipped, 0.0)  # d surr / d logp_a
    dz = g_surr[..., None] * (onehot - prob) / n
    dz += cfg.entropy_coeff * np.where(mask, -prob * (safe_logp + entropy[..., None]), 0.0) / n
    dz -= cfg.kl_coeff * np.where(mask, prob - batch.old_probs, 0.0) / n

    grads = {}
    grads["pi_w2"] = np.einsum("snk,snkh->h", dz, h)
    dpre = dz[..., None] * P["pi_w2"] * (1 - h**2)
    grads["pi_w1"] = np.einsum("snkh,snkd->hd", dpre, x)
    grads["pi_b1"] = dpre.sum(axis=(0, 1, 2))

    dv = (-2 * cfg.value_coeff * verr / S)[:, None] * np.ones(N)
    vh = np.tanh(batch.features @ P["v_w1"].T + P["v_b1"])
    grads["v_w2"] = np.einsum("sn,snh->h", dv, vh)
    grads["v_b2"] = np.array([dv.sum()])
    dvpre = dv[..., None] * P["v_w2"] * (1 - vh**2)
    grads["v_w1"] = np.einsum("snh,snd->hd", dvpre, batch.features)
    grads["v_b1"] = dvpre.sum(axis=(0, 1))
    return obj, grads


class Adam:
    def __init__(self, params: PolicyParams, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.t = 0

    def ascend(self, params: PolicyParams, grads):
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params.arrays[k] = params.arrays[k] + self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


# ---------------------------------------------------------------------------
# rollouts with the learned policy


class TrainedPolicy:
    """Adapter exposing learned parameters through the shared policy contract."""

    def __init__(self, params: PolicyParams, greedy=True):
        self.params = params
        self.greedy = greedy
        self._tables = None

    def begin_episode(self, graph, config):
        if self._tables is None or self._tables.graph is not graph:
            self._tables = GraphTables(graph)

    def act(self, obs, legal, rng, *, state, agent, graph, config, **_):
        f = featurize(graph, obs, agent, state.t, config, self._tables)
        prob = action_probs(self.params, f)
        slot = int(np.argmax(prob)) if self.greedy else int(rng.choice(NUM_SLOTS, p=prob))
        return slot_action(graph, state.positions[agent], slot, self._tables)


def collect_episode(graph, env_config: EnvConfig, params: PolicyParams, rng, tables=None):
    """Sample one episode; returns per-step arrays and the episode's joint return."""
    tb = _tables(graph, tables)
    N, T = env_config.num_agents, env_config.horizon
    state, obs = reset(graph, env_config, rng)
    feats = np.zeros((T, N, FEATURE_DIM))
    acts = np.zeros((T, N), dtype=np.int64)
    logps = np.zeros((T, N))
    probs = np.zeros((T, N, NUM_SLOTS))
    team = np.zeros(T)
    for t in range(T):
        for i in range(N):
            feats[t, i] = featurize(graph, obs[i], i, t, env_config, tb)
        z, _ = policy_logits(params, feats[t])
        p, lp = masked_softmax(z)
        actions = []
        for i in range(N):
            slot = int(rng.choice(NUM_SLOTS, p=p[i]))
            acts[t, i] = slot
            logps[t, i] = lp[i, slot]
            actions.append(slot_action(graph, state.positions[i], slot, tb))
        probs[t] = p
        state, res = step(graph, state, env_config, actions)
        obs = res.observations
        team[t] = math.fsum(res.joint_rewards)
    return feats, acts, logps, probs, team


def build_batch(episodes, params, cfg: LearnerConfig):
    feats, acts, logps, probs, advs, rets = [], [], [], [], [], []
    for f, a, lp, p, team in episodes:
        r = cfg.reward_scale * team
        v = joint_value(params, f)
        if cfg.use_gae:
            adv = gae(r, v, 0.0, cfg.discount, cfg.gae_lambda)
        else:
            adv = discounted_returns(r, cfg.discount) - v
        feats.append(f)
        acts.append(a)
        logps.append(lp)
        probs.append(p)
        advs.append(adv)
        rets.append(adv + v)
    adv = np.concatenate(advs)
    if cfg.normalize_advantages and adv.size > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return Batch(
        np.concatenate(feats), np.concatenate(acts), np.concatenate(logps), np.concatenate(probs), adv,
        np.concatenate(rets),
    )


@dataclass
class TrainingResult:
    params: PolicyParams
    curve: list  # (update index, mean episode joint reward)


def train(graph, env_config: EnvConfig, cfg: LearnerConfig, progress=None) -> TrainingResult:
    """Alternate sampling ``episodes_per_update`` episodes and clipped-surrogate ascent.

    The reported reward per update is the mean over sampled episodes of the
    joint reward summed over steps and agents.
    """
    root = np.random.SeedSequence(cfg.seed)
    init_seq, loop_seq = root.spawn(2)
    params = PolicyParams.initial(cfg.hidden, init_seq)
    opt = Adam(params, cfg.learning_rate)
    tables = GraphTables(graph)
    curve = []
    for update, seq in enumerate(loop_seq.spawn(cfg.total_updates)):
        rng = np.random.default_rng(seq)
        episodes = [collect_episode(graph, env_config, params, rng, tables) for _ in range(cfg.episodes_per_update)]
        mean_reward = float(np.mean([ep[-1].sum() for ep in episodes]))
        if not math.isfinite(mean_reward):
            raise DivergedTraining(f"mean reward {mean_reward} at update {update}")
        curve.append((update, mean_reward))
        batch = build_batch(episodes, params, cfg)
        steps = np.arange(len(batch))
        for _ in range(cfg.sgd_epochs):
            rng.shuffle(steps)
            for idx in np.array_split(steps, min(cfg.minibatches, len(steps))):
                _, grads = surrogate(params, batch.subset(idx), cfg)
                opt.ascend(params, grads)
        if not np.all(np.isfinite(params.flat())):
            raise DivergedTraining(f"non-finite parameters after update {update}")
        if progress is not None:
            progress(update, mean_reward)
    return TrainingResult(params, curve)


def dumps_curve(curve) -> str:
    return "".join(json.dumps({"update": u, "mean_joint_reward": r}) + "\n" for u, r in curve)


def evaluate_policy(graph, env_config, params, num_runs, seed, greedy=True, psi_values=DEFAULT_PSI, pooled=False):
    """Roll out ``num_runs`` shifts; returns (CoverageReport, mean individual, mean joint return)."""
    from patrolroute.runs import run_batch, run_seeds

    results = run_batch(graph, env_config, TrainedPolicy(params, greedy), run_seeds(seed, num_runs))
    report = batch_evaluate(graph, [r.log for r in results], psi_values, pooled, env_config.config_hash())
    ind = float(np.mean([r.individual_return.sum() for r in results]))
    joint = float(np.mean([r.joint_return.sum() for r in results]))
    return report, ind, joint
