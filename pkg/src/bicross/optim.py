"""Decoupled first/second-moment adaptive gradient descent (Adam) with
per-parameter-group learning rates."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class Adam:
    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float | dict[str, float] = 1e-4,
        group_of=None,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        """``lr`` is either one rate or a map group-name -> rate, with
        ``group_of(param_name)`` assigning each parameter to a group."""
        self.params = params
        self.lr = lr
        self.group_of = group_of or (lambda name: "default")
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def _rate(self, name: str) -> float:
        if isinstance(self.lr, dict):
            return self.lr[self.group_of(name)]
        return self.lr

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self._rate(name) * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for name in self.params:
            out[f"{prefix}.m.{name}"] = self.m[name].copy()
            out[f"{prefix}.v.{name}"] = self.v[name].copy()
        return out

    def load_state_arrays(self, prefix: str, arrays: dict[str, np.ndarray], t: int) -> None:
        self.t = t
        for name in self.params:
            self.m[name] = arrays[f"{prefix}.m.{name}"].copy()
            self.v[name] = arrays[f"{prefix}.v.{name}"].copy()
