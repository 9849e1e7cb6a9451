"""First-order optimizers over leaf tensors."""

from __future__ import annotations

from typing import Literal, Sequence, TypeAlias

import numpy as np

import hcc3d.errors
from hcc3d.tensor import Tensor

OptimizerName: TypeAlias = Literal["adam", "momentum"]


class Optimizer:
    def __init__(self, params: Sequence[Tensor], lr: float) -> None:
        if not lr > 0:
            raise hcc3d.errors.ConfigError(f"Learning rate must be positive, got {lr}.")

        self.params = list(params)
        self.lr = lr

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()

    def step(self) -> None:
        raise NotImplementedError


class Momentum(Optimizer):
    """SGD with heavy-ball momentum."""

    def __init__(self, params: Sequence[Tensor], lr: float, *, beta: float = 0.9) -> None:
        super().__init__(params, lr)
        self.beta = beta
        self._velocity = [np.zeros_like(param.data) for param in self.params]

    def step(self) -> None:
        for param, velocity in zip(self.params, self._velocity):
            if param.grad is None:
                continue

            velocity *= self.beta
            velocity += param.grad
            param.assign(param.data - self.lr * velocity)


class Adam(Optimizer):
    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float,
        *,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ) -> None:
        super().__init__(params, lr)
        self.betas = betas
        self.eps = eps
        self._steps = 0
        self._m = [np.zeros_like(param.data) for param in self.params]
        self._v = [np.zeros_like(param.data) for param in self.params]

    def step(self) -> None:
        self._steps += 1
        beta1, beta2 = self.betas
        correction1 = 1.0 - beta1**self._steps
        correction2 = 1.0 - beta2**self._steps
        for param, m, v in zip(self.params, self._m, self._v):
            if param.grad is None:
                continue

            m *= beta1
            m += (1.0 - beta1) * param.grad
            v *= beta2
            v += (1.0 - beta2) * param.grad**2
            update = (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            param.assign(param.data - self.lr * update)


def create(
    name: OptimizerName,
    params: Sequence[Tensor],
    *,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> Optimizer:
    match name:
        case "adam":
            return Adam(params, lr, betas=betas, eps=eps)
        case "momentum":
            return Momentum(params, lr, beta=betas[0])
        case other:
            raise hcc3d.errors.ConfigError(f'Unknown optimizer "{other}".')
