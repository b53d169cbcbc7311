"""Parameter containers and the two optimizers used by the pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class MissingGradError(ValueError):
    """An optimizer step was requested for a parameter without a gradient."""


class ParamSet:
    """Ordered mapping of unique names to gradient-tracked tensors."""

    def __init__(self, items=()):
        self._params: dict[str, Tensor] = {}
        for name, tensor in dict(items).items():
            self.add(name, tensor)

    def add(self, name: str, tensor: Tensor):
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        if not tensor.requires_grad:
            raise ValueError(f"parameter {name!r} must require grad")
        self._params[name] = tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self):
        return iter(self._params)

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params)

    def tensors(self):
        return list(self._params.values())

    @property
    def total_parameters(self) -> int:
        return sum(t.size for t in self._params.values())

    def subset(self, prefix: str) -> "ParamSet":
        return ParamSet({n: t for n, t in self._params.items() if n.startswith(prefix)})

    def zero_grads(self):
        for t in self._params.values():
            t.grad = None

    def copy_values(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray]):
        for n, t in self._params.items():
            t.data[...] = values[n]


@dataclass
class AdamState:
    """Per-parameter moment buffers plus the shared step counter."""

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


class Adam:
    """Adam with bias correction, applied in place."""

    def __init__(self, params: ParamSet, learning_rate: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.state = AdamState(learning_rate, beta1, beta2, eps)
        for name, t in params.items():
            self.state.m[name] = np.zeros_like(t.data)
            self.state.v[name] = np.zeros_like(t.data)

    def step(self):
        s = self.state
        s.step_count += 1
        bc1 = 1.0 - s.beta1**s.step_count
        bc2 = 1.0 - s.beta2**s.step_count
        for name, t in self.params.items():
            if t.grad is None:
                raise MissingGradError(f"parameter {name!r} has no gradient")
            g = t.grad
            s.m[name] = s.beta1 * s.m[name] + (1.0 - s.beta1) * g
            s.v[name] = s.beta2 * s.v[name] + (1.0 - s.beta2) * (g * g)
            m_hat = s.m[name] / bc1
            v_hat = s.v[name] / bc2
            t.data -= (s.learning_rate * m_hat / (np.sqrt(v_hat) + s.eps)).astype(t.data.dtype, copy=False)

    def zero_grads(self):
        self.params.zero_grads()


class SGD:
    """Plain gradient descent: p <- p - lr * grad."""

    def __init__(self, params: ParamSet, learning_rate: float):
        self.params = params
        self.learning_rate = learning_rate

    def step(self):
        for name, t in self.params.items():
            if t.grad is None:
                raise MissingGradError(f"parameter {name!r} has no gradient")
            t.data -= (self.learning_rate * t.grad).astype(t.data.dtype, copy=False)

    def zero_grads(self):
        self.params.zero_grads()
