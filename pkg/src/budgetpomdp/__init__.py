"""Budget-constrained maintenance of deteriorating components.

Per-component POMDP simulation, an exact budget-indexed oracle, PPO meta
policies, survival-vs-budget curves with a forest regressor for their decay
rate, fleet budget allocation, and a benchmark harness.
"""

from .model import ActionKind, AllocationResult, ComponentSpec, DecayKernel, Fleet, generate_fleet
from .oracle import OracleCache, OraclePolicy, build_oracle, oracle_action
from .sim import EpisodeRecord, run_episode

__version__ = "0.1.0"

__all__ = [
    "ActionKind",
    "AllocationResult",
    "ComponentSpec",
    "DecayKernel",
    "EpisodeRecord",
    "Fleet",
    "OracleCache",
    "OraclePolicy",
    "build_oracle",
    "generate_fleet",
    "oracle_action",
    "run_episode",
]
