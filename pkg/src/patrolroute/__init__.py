"""Cooperative multi-agent patrol routing on urban grid graphs."""

from patrolroute.config import EnvConfig, LearnerConfig, RewardParams, StartMode, SyntheticSpec
from patrolroute.terrain import GridMap, PatrolGraph, load_map, save_map, skeletonize
from patrolroute.env import EpisodeLog, MoveTo, Stay, STAY, reset, rollout, step

__all__ = [
    "EnvConfig",
    "EpisodeLog",
    "GridMap",
    "LearnerConfig",
    "MoveTo",
    "PatrolGraph",
    "RewardParams",
    "STAY",
    "Stay",
    "StartMode",
    "SyntheticSpec",
    "load_map",
    "reset",
    "rollout",
    "save_map",
    "skeletonize",
    "step",
]

__version__ = "0.1.0"
