"""Optimizer configuration and steppers over flat parameter vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

METHODS = ("sgd", "adam")


class OptimizerConfigError(ValueError):
    """Raised when an optimizer configuration violates its bounds."""


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "adam"
    learning_rate: float = 1e-3
    epochs: int = 1
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self) -> None:
        problems = []
        if self.method not in METHODS:
            problems.append(f"method must be one of {METHODS}, got {self.method!r}")
        if not (self.learning_rate > 0):
            problems.append(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            problems.append(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if problems:
            raise OptimizerConfigError("; ".join(problems))


class SGD:
    def __init__(self, n_params: int, config: OptimizerConfig, dtype):
        self.lr = config.learning_rate

    def step(self, params: np.ndarray, grads: np.ndarray) -> None:
        params -= self.lr * grads.astype(params.dtype)


class Adam:
    def __init__(self, n_params: int, config: OptimizerConfig, dtype,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = config.learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(n_params, dtype=dtype)
        self.v = np.zeros(n_params, dtype=dtype)
        self.t = 0

    def step(self, params: np.ndarray, grads: np.ndarray) -> None:
        g = grads.astype(params.dtype)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        params -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def make_stepper(config: OptimizerConfig, n_params: int, dtype):
    if config.method == "adam":
        return Adam(n_params, config, dtype)
    return SGD(n_params, config, dtype)
