"""Configuration dataclasses for maps, environment, reward and learner."""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace

from patrolroute.errors import InvalidConfig, InvalidSpec


class StartMode(str, enum.Enum):
    RANDOM = "random"
    BEST = "best"


@dataclass(frozen=True)
class RewardParams:
    """Reward constants; defaults are the values used for the dense zones."""

    eta: float = 10.0
    phi: float = 10.0
    nu: float = -25.0
    alpha_minus: float = 5.0
    alpha_plus: float = 50.0

    def __post_init__(self):
        if not self.eta > 0:
            raise InvalidConfig(f"eta must be > 0, got {self.eta}")
        if not self.nu < 0:
            raise InvalidConfig(f"nu must be < 0, got {self.nu}")
        if self.alpha_plus < self.alpha_minus:
            raise InvalidConfig("alpha_plus must be >= alpha_minus")


REWARD_PRESETS = {
    "standard": RewardParams(),
    # sparse, large zones: milder coverage penalty and doubled exploration rewards
    "sparse": RewardParams(nu=-10.0, alpha_minus=10.0, alpha_plus=100.0),
}


@dataclass(frozen=True)
class EnvConfig:
    num_agents: int = 5
    line_of_sight: int = 3
    start_mode: StartMode = StartMode.RANDOM
    horizon: int = 50
    reward: RewardParams = field(default_factory=RewardParams)
    discount: float = 0.99

    def __post_init__(self):
        if self.num_agents < 1:
            raise InvalidConfig("num_agents must be >= 1")
        if self.horizon < 1:
            raise InvalidConfig("horizon must be >= 1")
        if self.line_of_sight < 1:
            raise InvalidConfig("line_of_sight must be >= 1")
        if not 0 < self.discount <= 1:
            raise InvalidConfig("discount must lie in (0, 1]")
        if not isinstance(self.start_mode, StartMode):
            object.__setattr__(self, "start_mode", StartMode(self.start_mode))

    def to_dict(self):
        d = asdict(self)
        d["start_mode"] = self.start_mode.value
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "reward" in d and not isinstance(d["reward"], RewardParams):
            d["reward"] = RewardParams(**d["reward"])
        return cls(**d)

    def config_hash(self):
        return stable_hash(self.to_dict())


@dataclass(frozen=True)
class LearnerConfig:
    learning_rate: float = 0.0005
    gae_lambda: float = 0.95
    entropy_coeff: float = 0.01
    kl_coeff: float = 0.3
    use_gae: bool = True
    clip_epsilon: float = 0.2
    discount: float = 0.99
    episodes_per_update: int = 8
    total_updates: int = 300
    seed: int = 0
    # artifact-level knobs
    sgd_epochs: int = 10
    minibatches: int = 4
    hidden: int = 16
    value_coeff: float = 0.5
    reward_scale: float = 0.01
    normalize_advantages: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidConfig("learning_rate must be > 0")
        if not 0 <= self.gae_lambda <= 1:
            raise InvalidConfig("gae_lambda must lie in [0, 1]")
        if self.entropy_coeff < 0 or self.kl_coeff < 0:
            raise InvalidConfig("entropy_coeff and kl_coeff must be >= 0")
        if not self.clip_epsilon > 0:
            raise InvalidConfig("clip_epsilon must be > 0")
        if not 0 < self.discount <= 1:
            raise InvalidConfig("discount must lie in (0, 1]")
        if self.episodes_per_update < 1 or self.total_updates < 0:
            raise InvalidConfig("episodes_per_update must be >= 1 and total_updates >= 0")
        if self.sgd_epochs < 1 or self.minibatches < 1 or self.hidden < 1:
            raise InvalidConfig("sgd_epochs, minibatches and hidden must be >= 1")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic hotspot map generator.

    ``padding`` is the width of the auxiliary (out-of-zone) border.
    Peaks are placed at least ``2 * decay_radius + 2`` cells apart (Chebyshev)
    so every hotspot stays a strict local maximum.
    """

    rows: int
    cols: int
    hotspots: int = 3
    peak_min: int = 40
    peak_max: int = 80
    road_density: float = 0.85
    decay_radius: int = 4
    padding: int = 0
    cell_side_m: float = 50.0

    def validate(self):
        if self.rows < 1 or self.cols < 1:
            raise InvalidSpec(f"grid dimensions must be positive, got {self.rows}x{self.cols}")
        if self.hotspots < 0:
            raise InvalidSpec("hotspots must be >= 0")
        if self.peak_min > self.peak_max or self.peak_max < 1:
            raise InvalidSpec(f"empty peak range [{self.peak_min}, {self.peak_max}]")
        if self.peak_min < self.decay_radius + 1:
            raise InvalidSpec("peak_min must exceed decay_radius so crime decays strictly")
        if not 0 < self.road_density <= 1:
            raise InvalidSpec("road_density must lie in (0, 1]")
        if self.decay_radius < 0 or self.padding < 0:
            raise InvalidSpec("decay_radius and padding must be >= 0")
        if not self.cell_side_m > 0:
            raise InvalidSpec("cell_side_m must be > 0")
        if 2 * self.padding >= min(self.rows, self.cols):
            raise InvalidSpec("padding leaves no in-zone cells")


def stable_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def field_names(cls):
    return [f.name for f in fields(cls)]


__all__ = [
    "EnvConfig",
    "LearnerConfig",
    "REWARD_PRESETS",
    "RewardParams",
    "StartMode",
    "SyntheticSpec",
    "field_names",
    "replace",
    "stable_hash",
]
