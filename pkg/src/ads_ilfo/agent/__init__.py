"""Off-policy actor-critic learner."""

from .mlp import Adam, Mlp, soft_update
from .replay import Batch, ReplayBuffer, Transition, episode_transitions
from .td3 import AgentConfig, Td3Agent

__all__ = [
    "Adam", "AgentConfig", "Batch", "Mlp", "ReplayBuffer", "Td3Agent", "Transition",
    "episode_transitions", "soft_update",
]
