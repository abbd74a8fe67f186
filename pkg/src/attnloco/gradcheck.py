"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor, precision


def numerical_gradient(f: Callable[[Tensor], Tensor], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(Tensor(x)).data.sum())
        flat[i] = orig - eps
        fm = float(f(Tensor(x)).data.sum())
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> np.ndarray:
    """Componentwise |a - n| / max(|a|, |n|, floor).

    Components whose magnitude is below ``floor`` are effectively compared
    in absolute terms, which keeps round-off in near-zero entries from
    dominating the report.
    """
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def grad_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5, floor: float = 1e-4) -> float:
    """Worst relative error between reverse-mode and central-difference gradients.

    ``f`` maps a tensor to a scalar tensor. Evaluation runs in float64.
    """
    with precision(np.float64):
        x = np.array(x, dtype=np.float64)
        xt = Tensor(x, requires_grad=True)
        out = f(xt)
        if out.size != 1:
            raise ValueError(f"grad_check needs a scalar-valued function, got shape {out.shape}")
        out.backward()
        analytic = xt.grad if xt.grad is not None else np.zeros_like(x)
        numeric = numerical_gradient(f, x, eps)
    return float(relative_error(analytic, numeric, floor).max()) if x.size else 0.0


def grad_check_parameters(
    loss: Callable[[], Tensor],
    params: dict[str, Tensor],
    eps: float = 1e-5,
    floor: float = 1e-4,
    max_entries: int | None = None,
    seed: int = 0,
) -> dict[str, float]:
    """Check gradients of a scalar ``loss()`` w.r.t. named parameter tensors.

    Parameters are perturbed in place (and restored). With ``max_entries``
    only a random subset of each tensor's entries is probed. Returns the
    worst relative error per parameter. Caller is responsible for running
    under float64 precision with float64 parameters.
    """
    for p in params.values():
        p.grad = None
    out = loss()
    out.backward()
    rng = np.random.default_rng(seed)
    report = {}
    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        numeric = np.empty(idx.size)
        for n, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(loss().data.sum())
            flat[i] = orig - eps
            fm = float(loss().data.sum())
            flat[i] = orig
            numeric[n] = (fp - fm) / (2.0 * eps)
        err = relative_error(analytic.reshape(-1)[idx], numeric, floor)
        report[name] = float(err.max()) if err.size else 0.0
    return report
