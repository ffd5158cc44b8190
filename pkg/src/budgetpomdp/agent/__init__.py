from .network import PolicyParameters, ppo_loss
from .policies import (
    AgentChoice,
    AgentObservation,
    GuidedPPOPolicy,
    HeuristicPolicy,
    OracleComparator,
    RewardConfig,
    VanillaPPOPolicy,
    act,
    compose_action,
    heuristic_policy,
    observe,
    reward,
)
from .ppo import PPOConfig, TrainingResult, train_meta_ppo

__all__ = [
    "AgentChoice",
    "AgentObservation",
    "GuidedPPOPolicy",
    "HeuristicPolicy",
    "OracleComparator",
    "PPOConfig",
    "PolicyParameters",
    "RewardConfig",
    "TrainingResult",
    "VanillaPPOPolicy",
    "act",
    "compose_action",
    "heuristic_policy",
    "observe",
    "ppo_loss",
    "reward",
    "train_meta_ppo",
]
