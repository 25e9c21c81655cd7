"""Adam state with inspectable moments, backed by ``torch.optim.Adam``."""

from __future__ import annotations

from collections.abc import Iterable, Sequence

import numpy as np
import torch

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class AdamState:
    """Per-parameter first/second moments and the step count of one optimizer.

    Parameters
    ----------
    params : Iterable[torch.Tensor]
        Leaf tensors updated in place.
    lr : float
        Step size.
    """

    def __init__(self, params: Iterable[torch.Tensor], lr: float = 3e-4):
        self.params = list(params)
        self.lr = lr
        self.optimizer = torch.optim.Adam(self.params, lr=lr, betas=ADAM_BETAS, eps=ADAM_EPS, foreach=False)

    @property
    def step_count(self) -> int:
        state = self.optimizer.state.get(self.params[0], {})
        return int(state["step"]) if "step" in state else 0

    def moments(self) -> list[tuple[torch.Tensor, torch.Tensor]]:
        """``(m, v)`` per parameter; zeros before the first step."""
        out = []
        for p in self.params:
            state = self.optimizer.state.get(p, {})
            if "exp_avg" in state:
                out.append((state["exp_avg"], state["exp_avg_sq"]))
            else:
                out.append((torch.zeros_like(p), torch.zeros_like(p)))
        return out

    def export_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        """Moments and step count as named arrays for checkpoints."""
        arrays = {f"{prefix}/step": np.array(float(self.step_count))}
        for i, (m, v) in enumerate(self.moments()):
            arrays[f"{prefix}/exp_avg/{i}"] = m.detach().numpy().copy()
            arrays[f"{prefix}/exp_avg_sq/{i}"] = v.detach().numpy().copy()
        return arrays

    def restore_arrays(self, arrays: dict[str, np.ndarray], prefix: str) -> None:
        """Inverse of ``export_arrays``; a zero step count leaves the optimizer fresh."""
        step = float(arrays[f"{prefix}/step"])
        if step == 0.0:
            self.optimizer.state.clear()
            return
        state = {
            i: {
                "step": torch.tensor(step, dtype=torch.float32),
                "exp_avg": torch.as_tensor(arrays[f"{prefix}/exp_avg/{i}"]).clone(),
                "exp_avg_sq": torch.as_tensor(arrays[f"{prefix}/exp_avg_sq/{i}"]).clone(),
            }
            for i in range(len(self.params))
        }
        self.optimizer.load_state_dict({"state": state, "param_groups": self.optimizer.state_dict()["param_groups"]})


def adam_step(state: AdamState, params: Sequence[torch.Tensor], grads: Sequence[torch.Tensor]) -> None:
    """One bias-corrected Adam update of ``params`` (in place) from ``grads``."""
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"Gradient shape {tuple(g.shape)} does not match parameter {tuple(p.shape)}")
        p.grad = g.detach().clone()
    state.optimizer.step()
    for p in params:
        p.grad = None
