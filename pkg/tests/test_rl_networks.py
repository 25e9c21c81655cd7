from __future__ import annotations

import math

import numpy as np
import pytest
import torch
from scipy import integrate, stats

from grasp_lab.errors import ShapeMismatch
from grasp_lab.rl.networks import (
    LOG_STD_MAX,
    Mlp,
    QCritic,
    TanhGaussianActor,
    deterministic_action,
    mlp_forward,
    mlp_gradients,
    policy_sample,
    tanh_gaussian_log_prob,
)


def _seeded_mlp(sizes, head: str = "identity", seed: int = 0) -> Mlp:
    torch.manual_seed(seed)
    return Mlp(sizes, head)


def _fixed_actor(mean: float, log_std: float) -> TanhGaussianActor:
    """One-dimensional actor whose output ignores the observation."""
    actor = TanhGaussianActor(2, 1, (4,))
    with torch.no_grad():
        last = actor.body.layers[-1]
        last.weight.zero_()
        last.bias.copy_(torch.tensor([mean, log_std], dtype=torch.float64))
    return actor


class TestMlp:
    def test_layer_sizes(self) -> None:
        mlp = _seeded_mlp([3, 8, 8, 2])
        assert len(mlp.layers) == 3
        assert (mlp.in_features, mlp.out_features) == (3, 2)
        assert all(p.dtype == torch.float64 for p in mlp.parameters())

    @pytest.mark.parametrize("sizes", [[3], [3, 0, 2], []])
    def test_invalid_sizes(self, sizes) -> None:
        with pytest.raises(ValueError):
            Mlp(sizes)

    def test_unknown_head(self) -> None:
        with pytest.raises(ValueError, match="Unknown head"):
            Mlp([2, 2], head="softmax")

    def test_heads_bound_the_output(self) -> None:
        inputs = torch.randn(64, 3, dtype=torch.float64, generator=torch.Generator().manual_seed(1)) * 10
        assert torch.all(mlp_forward(_seeded_mlp([3, 8, 2], "tanh"), inputs).abs() <= 1.0)
        assert torch.all(mlp_forward(_seeded_mlp([3, 8, 2], "relu"), inputs) >= 0.0)

    def test_forward_accepts_single_rows_and_batches(self) -> None:
        mlp = _seeded_mlp([3, 5, 2])
        row = np.array([0.1, -0.2, 0.3])
        single = mlp_forward(mlp, row)
        batch = mlp_forward(mlp, np.stack([row, row]))
        assert single.shape == (2,)
        torch.testing.assert_close(batch[0], single)

    def test_width_mismatch(self) -> None:
        with pytest.raises(ShapeMismatch):
            mlp_forward(_seeded_mlp([3, 5, 2]), np.zeros((4, 2)))
        with pytest.raises(ShapeMismatch):
            mlp_forward(_seeded_mlp([3, 5, 2]), np.float64(1.0))


class TestGradients:
    @staticmethod
    def _loss(mlp: Mlp, batch: torch.Tensor) -> torch.Tensor:
        return (mlp_forward(mlp, batch) ** 2).sum()

    def test_matches_finite_differences(self) -> None:
        mlp = _seeded_mlp([3, 6, 2], seed=4)
        batch = torch.randn(5, 3, dtype=torch.float64, generator=torch.Generator().manual_seed(2))
        grads = mlp_gradients(mlp, self._loss, batch)
        eps = 1e-6
        rng = np.random.default_rng(0)
        for param, grad in zip(mlp.parameters(), grads):
            flat = param.data.view(-1)
            for index in rng.choice(flat.numel(), size=min(4, flat.numel()), replace=False):
                original = float(flat[index])
                with torch.no_grad():
                    flat[index] = original + eps
                    up = float(self._loss(mlp, batch))
                    flat[index] = original - eps
                    down = float(self._loss(mlp, batch))
                    flat[index] = original
                numeric = (up - down) / (2 * eps)
                assert float(grad.view(-1)[index]) == pytest.approx(numeric, rel=1e-5, abs=1e-7)

    def test_constant_loss_gives_zero_gradients(self) -> None:
        mlp = _seeded_mlp([3, 4, 1])
        grads = mlp_gradients(mlp, lambda m, b: torch.tensor(1.0, dtype=torch.float64), None)
        assert len(grads) == len(list(mlp.parameters()))
        assert all(not torch.any(g) for g in grads)

    def test_unused_parameters_get_zeros(self) -> None:
        mlp = _seeded_mlp([3, 4, 1])
        grads = mlp_gradients(mlp, lambda m, b: m.layers[0].bias.sum(), None)
        torch.testing.assert_close(grads[1], torch.ones(4, dtype=torch.float64))
        assert not torch.any(grads[2]) and not torch.any(grads[3])


class TestPolicy:
    def test_log_std_is_clamped(self) -> None:
        actor = _fixed_actor(0.0, 10.0)
        _, log_std = actor(torch.zeros(1, 2, dtype=torch.float64))
        assert float(log_std) == LOG_STD_MAX

    def test_density_integrates_to_one(self) -> None:
        mean = torch.tensor([0.4], dtype=torch.float64)
        log_std = torch.tensor([math.log(0.6)], dtype=torch.float64)

        def density(a: float) -> float:
            u = torch.tensor([math.atanh(a)], dtype=torch.float64)
            return math.exp(float(tanh_gaussian_log_prob(mean, log_std, u)))

        total, _ = integrate.quad(density, -1.0, 1.0, limit=200)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_log_prob_matches_change_of_variables(self) -> None:
        u = torch.linspace(-3.0, 3.0, 13, dtype=torch.float64)[:, None]
        mean = torch.full_like(u, 0.2)
        log_std = torch.full_like(u, -0.3)
        got = tanh_gaussian_log_prob(mean, log_std, u).numpy()
        expected = stats.norm(0.2, math.exp(-0.3)).logpdf(u[:, 0].numpy()) - np.log(1.0 - np.tanh(u[:, 0].numpy()) ** 2)
        np.testing.assert_allclose(got, expected, rtol=1e-10)

    def test_log_prob_is_finite_far_in_the_tails(self) -> None:
        u = torch.tensor([[60.0], [-60.0]], dtype=torch.float64)
        out = tanh_gaussian_log_prob(torch.zeros_like(u), torch.zeros_like(u), u)
        assert torch.all(torch.isfinite(out))

    def test_samples_follow_the_squashed_gaussian(self) -> None:
        actor = _fixed_actor(0.3, math.log(0.5))
        obs = torch.zeros(20_000, 2, dtype=torch.float64)
        actions, _ = policy_sample(actor, obs, torch.Generator().manual_seed(7))
        samples = np.sort(actions.detach().numpy()[:, 0])
        assert np.all(np.abs(samples) < 1.0)
        cdf = stats.norm(0.3, 0.5).cdf(np.arctanh(samples))
        empirical = np.arange(1, samples.size + 1) / samples.size
        assert np.max(np.abs(empirical - cdf)) < 0.02

    def test_generator_makes_sampling_reproducible(self) -> None:
        actor = _fixed_actor(0.0, 0.0)
        obs = torch.zeros(8, 2, dtype=torch.float64)
        a1, lp1 = policy_sample(actor, obs, torch.Generator().manual_seed(3))
        a2, lp2 = policy_sample(actor, obs, torch.Generator().manual_seed(3))
        torch.testing.assert_close(a1, a2, rtol=0, atol=0)
        torch.testing.assert_close(lp1, lp2, rtol=0, atol=0)

    def test_deterministic_mode_is_tanh_of_the_mean(self) -> None:
        actor = _fixed_actor(0.8, 0.0)
        obs = torch.zeros(3, 2, dtype=torch.float64)
        action, _ = policy_sample(actor, obs, deterministic=True)
        expected = torch.full((3, 1), math.tanh(0.8), dtype=torch.float64)
        torch.testing.assert_close(action, expected)
        torch.testing.assert_close(deterministic_action(actor, obs), expected)


def test_critic_returns_one_value_per_row() -> None:
    torch.manual_seed(0)
    critic = QCritic(4, 2, (8,))
    out = critic(torch.zeros(5, 4, dtype=torch.float64), torch.zeros(5, 2, dtype=torch.float64))
    assert out.shape == (5,)

