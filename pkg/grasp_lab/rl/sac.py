"""Soft actor-critic with twin critics, learned temperature and a BC-augmented variant.

Update order per gradient pass (``sac_update``):

1. sample a minibatch uniformly from the replay buffer;
2. sample reparameterized actions for the batch observations;
3. step the temperature toward the entropy target (using the pre-update alpha for the
   rest of the pass);
4. regress both critics onto ``r + gamma (1 - done) (min Q_target(s', a') - alpha log pi(a'|s'))``;
5. step the actor on ``alpha log pi(a|s) - min Q(s, a)``;
6. trail the target critics every ``target_update_interval`` passes.

``oerld_update`` additionally draws a demonstration minibatch after every other random
draw of the pass and adds ``bc_weight * MSE(tanh(mean(s_demo)), a_demo)`` to the actor
loss only.
"""

from __future__ import annotations

import io
import json
import logging
import math
import zipfile
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from ..config import SacConfig, build_dataclass
from ..errors import BufferTooSmall, SchemaMismatch
from .networks import QCritic, TanhGaussianActor, deterministic_action, policy_sample
from .optim import AdamState, adam_step
from .replay import ReplayBuffer, TransitionBatch

logger = logging.getLogger(__name__)

CHECKPOINT_SCHEMA_VERSION = 1
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


@dataclass
class UpdateLosses:
    critic_loss: float
    actor_loss: float
    alpha_loss: float
    alpha: float
    mean_log_prob: float
    bc_loss: float = 0.0

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in asdict(self).values())

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


class TrainingRng:
    """Independent seeded streams for buffer sampling, episode seeds and policy noise."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        sample_seq, env_seq, torch_seq = np.random.SeedSequence(self.seed % 2**64).spawn(3)
        self.sample = np.random.default_rng(sample_seq)
        self.env = np.random.default_rng(env_seq)
        self.torch = torch.Generator()
        self.torch.manual_seed(int(torch_seq.generate_state(1, np.uint64)[0] % 2**63))

    def episode_seed(self) -> int:
        return int(self.env.integers(0, 2**63 - 1))

    def export_arrays(self) -> dict[str, np.ndarray]:
        state = {"sample": self.sample.bit_generator.state, "env": self.env.bit_generator.state}
        text = json.dumps(state, sort_keys=True).encode("utf-8")
        return {
            "rng/numpy": np.frombuffer(text, dtype=np.uint8).copy(),
            "rng/torch": self.torch.get_state().numpy().copy(),
        }

    def restore_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        state = json.loads(arrays["rng/numpy"].tobytes().decode("utf-8"))
        self.sample.bit_generator.state = state["sample"]
        self.env.bit_generator.state = state["env"]
        self.torch.set_state(torch.from_numpy(arrays["rng/torch"].copy()))


@dataclass
class SacState:
    """Networks, temperature, optimizers and pass counters of one learner."""

    config: SacConfig
    obs_dim: int
    action_dim: int
    actor: TanhGaussianActor
    critic1: QCritic
    critic2: QCritic
    target1: QCritic
    target2: QCritic
    log_alpha: torch.Tensor
    actor_opt: AdamState
    critic_opt: AdamState
    alpha_opt: AdamState
    gradient_passes: int = 0
    target_updates: int = 0
    demo_samples_drawn: int = 0

    @classmethod
    def create(cls, obs_dim: int, action_dim: int, config: SacConfig | None = None, seed: int = 0) -> SacState:
        """Fresh learner; parameter initialization depends only on ``seed``."""
        cfg = config or SacConfig()
        hidden = cfg.hidden_sizes
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(int(seed) % 2**63)
            actor = TanhGaussianActor(obs_dim, action_dim, hidden)
            critic1 = QCritic(obs_dim, action_dim, hidden)
            critic2 = QCritic(obs_dim, action_dim, hidden)
            target1 = QCritic(obs_dim, action_dim, hidden)
            target2 = QCritic(obs_dim, action_dim, hidden)
        target1.load_state_dict(critic1.state_dict())
        target2.load_state_dict(critic2.state_dict())
        for p in (*target1.parameters(), *target2.parameters()):
            p.requires_grad_(False)
        log_alpha = torch.tensor(math.log(cfg.init_alpha), dtype=torch.float64, requires_grad=True)
        lr = cfg.learning_rate
        return cls(
            config=cfg,
            obs_dim=obs_dim,
            action_dim=action_dim,
            actor=actor,
            critic1=critic1,
            critic2=critic2,
            target1=target1,
            target2=target2,
            log_alpha=log_alpha,
            actor_opt=AdamState(actor.parameters(), lr),
            critic_opt=AdamState([*critic1.parameters(), *critic2.parameters()], lr),
            alpha_opt=AdamState([log_alpha], lr),
        )

    @property
    def alpha(self) -> float:
        return float(self.log_alpha.detach().exp())

    @property
    def entropy_target(self) -> float:
        return self.config.resolved_entropy_target(self.action_dim)

    def critic_parameters(self) -> list[torch.Tensor]:
        return [*self.critic1.parameters(), *self.critic2.parameters()]

    def act(
        self, obs: np.ndarray, generator: torch.Generator | None = None, deterministic: bool = False
    ) -> np.ndarray:
        """Policy-space action for a single observation."""
        with torch.no_grad():
            action, _ = policy_sample(
                self.actor, torch.as_tensor(np.asarray(obs, dtype=np.float64))[None], generator, deterministic
            )
        return action[0].numpy()


def temperature_loss(log_alpha: torch.Tensor, log_prob: torch.Tensor, entropy_target: float) -> torch.Tensor:
    """``-log_alpha * mean(log_prob + target)``; its gradient vanishes when ``log_prob == -target``."""
    return -(log_alpha * (log_prob.detach() + entropy_target)).mean()


def critic_targets(
    rewards: torch.Tensor,
    dones: torch.Tensor,
    next_q1: torch.Tensor,
    next_q2: torch.Tensor,
    next_log_prob: torch.Tensor,
    alpha: float,
    gamma: float,
) -> torch.Tensor:
    """Soft Bellman targets; terminal transitions reduce to the reward."""
    soft_value = torch.minimum(next_q1, next_q2) - alpha * next_log_prob
    return rewards + gamma * (1.0 - dones) * soft_value


def polyak_update(online: torch.nn.Module, target: torch.nn.Module, tau: float) -> None:
    """``target <- tau * online + (1 - tau) * target``."""
    with torch.no_grad():
        for p, t in zip(online.parameters(), target.parameters()):
            t.mul_(1.0 - tau).add_(p, alpha=tau)


def _gradient_pass(
    state: SacState,
    batch: TransitionBatch,
    rng: TrainingRng,
    *,
    demo_source: ReplayBuffer | None = None,
    demo_batch_size: int = 0,
    bc_weight: float = 0.0,
) -> UpdateLosses:
    cfg = state.config
    actions_pi, log_prob_pi = policy_sample(state.actor, batch.obs, rng.torch)

    alpha = state.alpha
    alpha_loss_value = 0.0
    if cfg.learn_alpha:
        alpha_loss = temperature_loss(state.log_alpha, log_prob_pi, state.entropy_target)
        (grad,) = torch.autograd.grad(alpha_loss, [state.log_alpha])
        adam_step(state.alpha_opt, [state.log_alpha], [grad])
        alpha_loss_value = float(alpha_loss.detach())

    with torch.no_grad():
        next_actions, next_log_prob = policy_sample(state.actor, batch.next_obs, rng.torch)
        targets = critic_targets(
            batch.rewards,
            batch.dones,
            state.target1(batch.next_obs, next_actions),
            state.target2(batch.next_obs, next_actions),
            next_log_prob,
            alpha,
            cfg.gamma,
        )
    q1 = state.critic1(batch.obs, batch.actions)
    q2 = state.critic2(batch.obs, batch.actions)
    critic_loss = 0.5 * (F.mse_loss(q1, targets) + F.mse_loss(q2, targets))
    critic_params = state.critic_parameters()
    adam_step(state.critic_opt, critic_params, torch.autograd.grad(critic_loss, critic_params))

    q_pi = torch.minimum(state.critic1(batch.obs, actions_pi), state.critic2(batch.obs, actions_pi))
    actor_loss = (alpha * log_prob_pi - q_pi).mean()

    bc_value = 0.0
    if demo_source is not None:
        demo = demo_source.sample(demo_batch_size, rng.sample)
        state.demo_samples_drawn += len(demo)
        bc_loss = F.mse_loss(deterministic_action(state.actor, demo.obs), demo.actions)
        bc_value = float(bc_loss.detach())
        if bc_weight > 0.0:
            actor_loss = actor_loss + bc_weight * bc_loss
    actor_params = list(state.actor.parameters())
    adam_step(state.actor_opt, actor_params, torch.autograd.grad(actor_loss, actor_params))

    state.gradient_passes += 1
    if state.gradient_passes % cfg.target_update_interval == 0:
        polyak_update(state.critic1, state.target1, cfg.tau)
        polyak_update(state.critic2, state.target2, cfg.tau)
        state.target_updates += 1

    losses = UpdateLosses(
        critic_loss=float(critic_loss.detach()),
        actor_loss=float(actor_loss.detach()),
        alpha_loss=alpha_loss_value,
        alpha=alpha,
        mean_log_prob=float(log_prob_pi.detach().mean()),
        bc_loss=bc_value,
    )
    logger.debug("Gradient pass %d: %s", state.gradient_passes, losses)
    return losses


def sac_update(state: SacState, buffer: ReplayBuffer, rng: TrainingRng) -> UpdateLosses:
    """One SAC gradient pass on a uniform minibatch of ``state.config.batch_size``.

    Raises
    ------
    BufferTooSmall
        If the buffer holds fewer transitions than the batch.
    """
    return _gradient_pass(state, buffer.sample(state.config.batch_size, rng.sample), rng)


def oerld_update(
    state: SacState,
    buffer: ReplayBuffer,
    demo_buffer: ReplayBuffer,
    rng: TrainingRng,
    *,
    bc_weight: float | None = None,
) -> UpdateLosses:
    """SAC pass plus behavior cloning on ``demo_batch_size`` demonstrations.

    Demonstrations feed the actor's BC term only; critics train on the replay batch.

    Raises
    ------
    BufferTooSmall
        If either buffer is smaller than its batch.
    """
    cfg = state.config
    weight = cfg.bc_weight if bc_weight is None else bc_weight
    if len(demo_buffer) < cfg.demo_batch_size:
        raise BufferTooSmall(
            f"Demo buffer holds {len(demo_buffer)} transitions, BC batch needs {cfg.demo_batch_size}"
        )
    return _gradient_pass(
        state,
        buffer.sample(cfg.batch_size, rng.sample),
        rng,
        demo_source=demo_buffer,
        demo_batch_size=cfg.demo_batch_size,
        bc_weight=weight,
    )


def bc_weight_at(config: SacConfig, env_steps: int) -> float:
    """BC weight after ``env_steps``; linear decay to zero when ``bc_decay_steps > 0``."""
    if config.bc_decay_steps <= 0:
        return config.bc_weight
    return config.bc_weight * max(0.0, 1.0 - env_steps / config.bc_decay_steps)


# --- checkpoints -------------------------------------------------------------------


def _module_arrays(prefix: str, module: torch.nn.Module) -> dict[str, np.ndarray]:
    return {f"{prefix}/{name}": t.detach().numpy().copy() for name, t in module.state_dict().items()}


def _load_module(prefix: str, module: torch.nn.Module, arrays: dict[str, np.ndarray]) -> None:
    keys = module.state_dict().keys()
    module.load_state_dict({name: torch.from_numpy(arrays[f"{prefix}/{name}"].copy()) for name in keys})


@dataclass
class Checkpoint:
    state: SacState
    rng: TrainingRng | None
    counters: dict[str, int]
    meta: dict


def save_checkpoint(
    path: str | Path,
    state: SacState,
    *,
    rng: TrainingRng | None = None,
    counters: dict[str, int] | None = None,
    config_hash: str = "",
    seed: int | None = None,
) -> Path:
    """Write a versioned ``.npz`` with parameters, optimizer moments, rng state and counters.

    The archive is byte-reproducible: entries are stored uncompressed, in sorted order,
    with a fixed timestamp, so saving the same learner twice yields identical files.
    """
    meta = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "config_hash": config_hash,
        "seed": seed,
        "obs_dim": state.obs_dim,
        "action_dim": state.action_dim,
        "sac": state.config.to_dict(),
        "gradient_passes": state.gradient_passes,
        "target_updates": state.target_updates,
        "demo_samples_drawn": state.demo_samples_drawn,
        "counters": dict(sorted((counters or {}).items())),
        "has_rng": rng is not None,
    }
    arrays: dict[str, np.ndarray] = {
        "meta": np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8).copy(),
        "log_alpha": state.log_alpha.detach().numpy().copy(),
    }
    for prefix, module in (
        ("actor", state.actor),
        ("critic1", state.critic1),
        ("critic2", state.critic2),
        ("target1", state.target1),
        ("target2", state.target2),
    ):
        arrays.update(_module_arrays(prefix, module))
    arrays.update(state.actor_opt.export_arrays("adam_actor"))
    arrays.update(state.critic_opt.export_arrays("adam_critic"))
    arrays.update(state.alpha_opt.export_arrays("adam_alpha"))
    if rng is not None:
        arrays.update(rng.export_arrays())

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(target, "w", compression=zipfile.ZIP_STORED) as archive:
        for name in sorted(arrays):
            buffer = io.BytesIO()
            np.lib.format.write_array(buffer, np.asarray(arrays[name], order="C"), version=(1, 0), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_ZIP_DATE)
            info.external_attr = 0o644 << 16
            archive.writestr(info, buffer.getvalue())
    logger.debug("Saved checkpoint %s (%d passes)", target, state.gradient_passes)
    return target


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Rebuild the learner saved by ``save_checkpoint``.

    Raises
    ------
    SchemaMismatch
        If the file is not a checkpoint or has an unsupported version.
    """
    try:
        with np.load(Path(path), allow_pickle=False) as data:
            arrays = {name: data[name] for name in data.files}
    except (OSError, ValueError, zipfile.BadZipFile) as exc:
        raise SchemaMismatch(f"{path}: not a readable checkpoint ({exc})") from exc
    if "meta" not in arrays:
        raise SchemaMismatch(f"{path}: checkpoint has no metadata entry")
    meta = json.loads(arrays["meta"].tobytes().decode("utf-8"))
    if meta.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise SchemaMismatch(f"{path}: unsupported checkpoint schema {meta.get('schema_version')}")

    config = build_dataclass(SacConfig, meta["sac"], "sac")
    state = SacState.create(meta["obs_dim"], meta["action_dim"], config)
    for prefix, module in (
        ("actor", state.actor),
        ("critic1", state.critic1),
        ("critic2", state.critic2),
        ("target1", state.target1),
        ("target2", state.target2),
    ):
        _load_module(prefix, module, arrays)
    with torch.no_grad():
        state.log_alpha.copy_(torch.from_numpy(arrays["log_alpha"].copy()))
    state.actor_opt.restore_arrays(arrays, "adam_actor")
    state.critic_opt.restore_arrays(arrays, "adam_critic")
    state.alpha_opt.restore_arrays(arrays, "adam_alpha")
    state.gradient_passes = int(meta["gradient_passes"])
    state.target_updates = int(meta["target_updates"])
    state.demo_samples_drawn = int(meta["demo_samples_drawn"])

    rng = None
    if meta.get("has_rng"):
        rng = TrainingRng(meta["seed"] or 0)
        rng.restore_arrays(arrays)
    return Checkpoint(state=state, rng=rng, counters=dict(meta["counters"]), meta=meta)
