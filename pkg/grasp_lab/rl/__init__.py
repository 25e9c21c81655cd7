"""Learners: networks, Adam, replay, SAC/G-PAYN/OERLD updates and the training loop."""

from .networks import Mlp, QCritic, TanhGaussianActor, mlp_forward, mlp_gradients, policy_sample
from .optim import AdamState, adam_step
from .replay import ReplayBuffer, Transition, TransitionBatch, buffer_from_demo_file, gpayn_init
from .sac import (
    Checkpoint,
    SacState,
    TrainingRng,
    UpdateLosses,
    critic_targets,
    load_checkpoint,
    oerld_update,
    polyak_update,
    sac_update,
    save_checkpoint,
    temperature_loss,
)
from .trainer import EvalStats, TrainResult, evaluate_policy, train

__all__ = [
    "AdamState",
    "Checkpoint",
    "EvalStats",
    "Mlp",
    "QCritic",
    "ReplayBuffer",
    "SacState",
    "TanhGaussianActor",
    "TrainResult",
    "TrainingRng",
    "Transition",
    "TransitionBatch",
    "UpdateLosses",
    "adam_step",
    "buffer_from_demo_file",
    "critic_targets",
    "evaluate_policy",
    "gpayn_init",
    "load_checkpoint",
    "mlp_forward",
    "mlp_gradients",
    "oerld_update",
    "policy_sample",
    "polyak_update",
    "sac_update",
    "save_checkpoint",
    "temperature_loss",
    "train",
]
