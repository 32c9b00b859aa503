"""Named parameter collections and the RMSprop update."""

from __future__ import annotations

import numpy as np

from .tensor import DEFAULT_DTYPE, ShapeError, Tensor


def uniform_fan_in(rng: np.random.Generator, shape, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """U(-1/sqrt(fan_in), 1/sqrt(fan_in)); fan_in is the first dim."""
    bound = 1.0 / np.sqrt(shape[0])
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class ParameterSet:
    """Uniquely named tensors plus per-tensor optimizer state.

    Shapes are immutable after creation; the second-moment accumulator
    (and the momentum buffer, when used) persist across update steps.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._second_moment: dict[str, np.ndarray] = {}
        self._momentum_buf: dict[str, np.ndarray] = {}

    def add(self, name: str, values: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(np.asarray(values), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.grad = None

    def gradients(self) -> dict[str, np.ndarray]:
        """Gradients after a backward pass; untouched params give zeros."""
        return {
            name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in self._params.items()
        }

    def copy(self) -> "ParameterSet":
        """Deep value copy; optimizer state is copied too."""
        out = ParameterSet()
        for name, t in self._params.items():
            out.add(name, t.data.copy())
        out._second_moment = {k: v.copy() for k, v in self._second_moment.items()}
        out._momentum_buf = {k: v.copy() for k, v in self._momentum_buf.items()}
        return out

    def global_grad_norm(self) -> float:
        total = 0.0
        for t in self._params.values():
            if t.grad is not None:
                total += float((t.grad.astype(np.float64) ** 2).sum())
        return float(np.sqrt(total))


def rmsprop_step(params: ParameterSet, grads: dict[str, np.ndarray], lr: float,
                 decay: float = 0.99, eps: float = 1e-4, momentum: float = 0.0) -> None:
    """v <- decay*v + (1-decay)*g^2;  p <- p - lr*g/(sqrt(v)+eps).

    With momentum > 0 the scaled gradient feeds a momentum buffer that is
    applied instead; momentum == 0 keeps no buffer.
    """
    if lr < 0:
        raise ValueError(f"negative learning rate: {lr}")
    for name, t in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != t.data.shape:
            raise ShapeError(f"gradient shape {g.shape} vs parameter {t.data.shape} for '{name}'")
        v = params._second_moment.get(name)
        if v is None:
            v = np.zeros_like(t.data)
            params._second_moment[name] = v
        v *= decay
        v += (1.0 - decay) * (g * g)
        update = lr * g / (np.sqrt(v) + eps)
        if momentum > 0.0:
            buf = params._momentum_buf.get(name)
            if buf is None:
                buf = np.zeros_like(t.data)
                params._momentum_buf[name] = buf
            buf *= momentum
            buf += update
            update = buf
        t.data -= update
