"""Central-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .core import ShapeError, Tape, Tensor


def _scalar(out: Tensor) -> float:
    if out.data.size != 1:
        raise ShapeError(f"grad_check: function must return a scalar, got shape {out.shape}")
    return float(out.data.reshape(-1)[0])


def numerical_grad(f: Callable[[], Tensor], x: Tensor, eps: float = 1e-6,
                   entries: Sequence[int] | None = None) -> np.ndarray:
    """Central differences of ``f()`` with respect to entries of ``x``.

    ``entries`` restricts the work to some flat indices; the others are left 0.
    """
    flat = x.data.reshape(-1)
    grad = np.zeros(flat.size, dtype=np.float64)
    for i in range(flat.size) if entries is None else entries:
        orig = flat[i]
        flat[i] = orig + eps
        up = _scalar(f())
        flat[i] = orig - eps
        down = _scalar(f())
        flat[i] = orig
        grad[i] = (up - down) / (2.0 * eps)
    return grad.reshape(x.shape)


def analytic_grads(f: Callable[[], Tensor], xs: Sequence[Tensor]) -> list[np.ndarray]:
    for x in xs:
        x.grad = None
    with Tape() as tape:
        out = f()
        _scalar(out)
        tape.backward(out)
    return [np.zeros(x.shape) if x.grad is None else x.grad.astype(np.float64) for x in xs]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(1, |a|) over coordinates."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(1.0, np.abs(a))))


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-6) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` maps ``x`` to a scalar tensor. ``x`` is temporarily marked as
    requiring gradients.
    """
    prior = x.requires_grad
    x.requires_grad = True
    try:
        (analytic,) = analytic_grads(lambda: f(x), [x])
        numeric = numerical_grad(lambda: f(x), x, eps)
    finally:
        x.requires_grad = prior
        x.grad = None
    return relative_error(analytic, numeric)


def grad_check_params(loss_fn: Callable[[], Tensor], params: dict[str, Tensor], eps: float = 1e-6,
                      max_entries: int | None = None, seed: int = 0) -> dict[str, float]:
    """Per-parameter relative error for a closure over many tensors.

    With ``max_entries`` a larger tensor is checked on that many flat indices:
    the one with the largest analytic gradient plus a seeded random draw.
    """
    names = list(params)
    analytic = analytic_grads(loss_fn, [params[n] for n in names])
    rng = np.random.default_rng(seed)
    errors = {}
    for name, a in zip(names, analytic):
        size = a.size
        if max_entries is None or size <= max_entries:
            numeric = numerical_grad(loss_fn, params[name], eps)
            errors[name] = relative_error(a, numeric)
            continue
        picks = np.unique(np.append(rng.choice(size, max_entries - 1, replace=False), np.argmax(np.abs(a))))
        numeric = numerical_grad(loss_fn, params[name], eps, picks.tolist())
        errors[name] = relative_error(a.reshape(-1)[picks], numeric.reshape(-1)[picks])
    for p in params.values():
        p.grad = None
    return errors
