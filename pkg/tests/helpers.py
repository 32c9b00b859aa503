"""Shared test oracles: finite differences and naive-loop recomputations.

Everything here is independent of the library's backward rules; the FD
oracle only calls forward passes.
"""

from __future__ import annotations

import numpy as np

from epnlab.diffmath import Tape, Tensor, backward, recording


def fd_gradient(f, arrays: list[np.ndarray], step: float = 1e-5) -> list[np.ndarray]:
    """Central finite differences of scalar f(*arrays) w.r.t. every entry."""
    grads = []
    for k, a in enumerate(arrays):
        g = np.zeros_like(a, dtype=np.float64)
        flat = a.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = f(*arrays)
            flat[i] = orig - step
            lo = f(*arrays)
            flat[i] = orig
            gf[i] = (hi - lo) / (2.0 * step)
        grads.append(g)
    return grads


def tape_gradient(build_loss, tensors: list[Tensor]) -> list[np.ndarray]:
    """Gradient of build_loss(*tensors) (a Tensor-valued fn) via the tape."""
    for t in tensors:
        t.grad = None
    tape = Tape()
    with recording(tape):
        loss = build_loss(*tensors)
    backward(loss, tape)
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    # the 1e-6 floor absorbs FD noise when the true gradient is exactly zero
    denom = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-6)
    return float(np.abs(a - b).max(initial=0.0) / denom)


def check_grads(build_loss, arrays: list[np.ndarray], step: float = 1e-5,
                tol: float = 1e-3) -> float:
    """Compare tape gradients to central differences; returns worst rel err."""
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    analytic = tape_gradient(build_loss, tensors)

    def scalar_f(*arrs):
        ts = [Tensor(a) for a in arrs]
        return float(build_loss(*ts).data.reshape(()))

    numeric = fd_gradient(scalar_f, [t.data for t in tensors], step=step)
    worst = max(rel_err(a, n) for a, n in zip(analytic, numeric))
    assert worst <= tol, f"gradient mismatch: rel err {worst:.3e} > {tol}"
    return worst
