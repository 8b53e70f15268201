"""Shared test helpers: finite-difference gradient oracle and rel-error."""

from __future__ import annotations

import numpy as np

from nextplace.autodiff import Tape, Tensor, backward


def finite_difference(loss_fn, arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar loss_fn() w.r.t. arr, entry by
    entry; loss_fn must read the current contents of arr."""
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        saved = arr[idx]
        arr[idx] = saved + h
        up = loss_fn()
        arr[idx] = saved - h
        down = loss_fn()
        arr[idx] = saved
        grad[idx] = (up - down) / (2.0 * h)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-5)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(make_loss, tensors: list[Tensor], tol: float = 1e-4) -> None:
    """Assert analytic gradients of make_loss() match central differences.

    make_loss builds and returns the scalar loss tensor from the current
    tensor contents; it is re-invoked (without a tape) for each probe.
    """
    for t in tensors:
        t.zero_grad()
    with Tape() as tape:
        loss = make_loss()
    backward(loss, tape)

    def value():
        return float(make_loss().data)

    for t in tensors:
        numeric = finite_difference(value, t.data)
        err = max_rel_error(t.grad, numeric)
        assert err < tol, (
            f"gradient mismatch for {t.name or 'tensor'}: rel error {err:.3e}\n"
            f"analytic={t.grad}\nnumeric={numeric}")
