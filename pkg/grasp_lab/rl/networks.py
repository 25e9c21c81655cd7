"""Float64 multilayer perceptrons, the squashed Gaussian actor and Q critics."""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..errors import ShapeMismatch

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_LOG2 = math.log(2.0)

HEADS: dict[str, Callable[[torch.Tensor], torch.Tensor]] = {
    "identity": lambda x: x,
    "tanh": torch.tanh,
    "relu": torch.relu,
}


class Mlp(nn.Module):
    """Affine layers with ReLU between them and a configurable output head.

    Parameters
    ----------
    sizes : Sequence[int]
        ``(input, hidden..., output)`` widths.
    head : str
        Output non-linearity: ``identity``, ``tanh`` or ``relu``.
    """

    def __init__(self, sizes: Sequence[int], head: str = "identity"):
        super().__init__()
        if len(sizes) < 2 or any(int(s) <= 0 for s in sizes):
            raise ValueError(f"Mlp needs at least two positive layer sizes, got {tuple(sizes)}")
        if head not in HEADS:
            raise ValueError(f"Unknown head {head!r}; expected one of {sorted(HEADS)}")
        self.sizes = tuple(int(s) for s in sizes)
        self.head = head
        self.layers = nn.ModuleList(
            nn.Linear(a, b, dtype=torch.float64) for a, b in zip(self.sizes[:-1], self.sizes[1:])
        )

    @property
    def in_features(self) -> int:
        return self.sizes[0]

    @property
    def out_features(self) -> int:
        return self.sizes[-1]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer in self.layers[:-1]:
            x = torch.relu(layer(x))
        return HEADS[self.head](self.layers[-1](x))


def mlp_forward(mlp: Mlp, inputs) -> torch.Tensor:
    """Evaluate ``mlp`` on a ``(in,)`` or ``(N, in)`` input.

    Raises
    ------
    ShapeMismatch
        If the trailing input dimension differs from the first layer size.
    """
    x = inputs if torch.is_tensor(inputs) else torch.as_tensor(np.asarray(inputs, dtype=np.float64))
    if x.ndim == 0 or x.shape[-1] != mlp.in_features:
        raise ShapeMismatch(f"Expected input width {mlp.in_features}, got shape {tuple(x.shape)}")
    return mlp(x.to(torch.float64))


def mlp_gradients(
    mlp: nn.Module,
    loss_fn: Callable[[nn.Module, object], torch.Tensor],
    batch: object,
) -> list[torch.Tensor]:
    """Gradients of ``loss_fn(mlp, batch)`` with respect to every parameter of ``mlp``.

    Parameters that do not influence the loss (including all of them for a constant
    loss) get zero gradients.
    """
    params = list(mlp.parameters())
    loss = loss_fn(mlp, batch)
    if not loss.requires_grad:
        return [torch.zeros_like(p) for p in params]
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    return [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]


class TanhGaussianActor(nn.Module):
    """Policy network emitting the mean and clamped log-std of a pre-squash Gaussian."""

    def __init__(self, obs_dim: int, action_dim: int, hidden_sizes: Sequence[int] = (128, 128)):
        super().__init__()
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.body = Mlp([obs_dim, *hidden_sizes, 2 * action_dim])

    def forward(self, obs: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        out = mlp_forward(self.body, obs)
        mean, log_std = out.split(self.action_dim, dim=-1)
        return mean, log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)


class QCritic(nn.Module):
    """State-action value ``Q(s, a)`` returning one value per batch row."""

    def __init__(self, obs_dim: int, action_dim: int, hidden_sizes: Sequence[int] = (128, 128)):
        super().__init__()
        self.body = Mlp([obs_dim + action_dim, *hidden_sizes, 1])

    def forward(self, obs: torch.Tensor, action: torch.Tensor) -> torch.Tensor:
        return mlp_forward(self.body, torch.cat([obs, action], dim=-1)).squeeze(-1)


def tanh_gaussian_log_prob(mean: torch.Tensor, log_std: torch.Tensor, pre_tanh: torch.Tensor) -> torch.Tensor:
    """Log-density of ``tanh(u)`` for ``u ~ N(mean, exp(log_std))``, summed over the last axis.

    The change-of-variables term ``log(1 - tanh(u)^2)`` is evaluated as
    ``2 (log 2 - u - softplus(-2u))``, which stays finite for large ``|u|``.
    """
    gaussian = torch.distributions.Normal(mean, log_std.exp()).log_prob(pre_tanh)
    correction = 2.0 * (_LOG2 - pre_tanh - F.softplus(-2.0 * pre_tanh))
    return (gaussian - correction).sum(dim=-1)


def policy_sample(
    actor: TanhGaussianActor,
    obs: torch.Tensor,
    generator: torch.Generator | None = None,
    deterministic: bool = False,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Reparameterized action in ``(-1, 1)`` and its log-probability.

    Deterministic mode returns ``tanh(mean)`` (the log-probability is then that of the
    mean under the policy).
    """
    mean, log_std = actor(obs)
    if deterministic:
        pre_tanh = mean
    else:
        noise = torch.randn(mean.shape, generator=generator, dtype=mean.dtype)
        pre_tanh = mean + log_std.exp() * noise
    return torch.tanh(pre_tanh), tanh_gaussian_log_prob(mean, log_std, pre_tanh)


def deterministic_action(actor: TanhGaussianActor, obs: torch.Tensor) -> torch.Tensor:
    mean, _ = actor(obs)
    return torch.tanh(mean)

