"""Central-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DeterminismError, NumericError
from .nn import ParamStore
from .tensor import no_grad


@dataclass
class GradReport:
    """Per-parameter worst relative error between analytic and numeric grads."""

    per_param: dict[str, float]
    tol: float

    @property
    def max_error(self) -> float:
        return max(self.per_param.values()) if self.per_param else 0.0

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol

    def worst(self) -> tuple[str, float]:
        name = max(self.per_param, key=self.per_param.get)
        return name, self.per_param[name]


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1.0)


def grad_check(loss_fn, params: ParamStore, eps: float = 1e-5, tol: float = 1e-5,
               max_coords: int = 64, seed: int = 0) -> GradReport:
    """Compare reverse-mode gradients of ``loss_fn()`` with central differences.

    ``loss_fn`` must be a deterministic closure over ``params`` returning a
    scalar Tensor; it is evaluated twice up front and must reproduce its value
    bit-exactly. Parameters must be float64. For tensors larger than
    ``max_coords``, a seeded subsample of coordinates is checked.
    """
    for name, t in params.trainable_items():
        if t.dtype != np.float64:
            raise NumericError(f"grad_check requires float64 parameters, {name} is {t.dtype}")

    with no_grad():
        first = loss_fn().item()
        second = loss_fn().item()
    if first != second:
        raise DeterminismError(f"loss_fn not deterministic: {first!r} vs {second!r}")
    if not np.isfinite(first):
        raise NumericError(f"loss_fn returned non-finite value {first}")

    params.zero_grad()
    loss = loss_fn()
    loss.backward()

    rng = np.random.default_rng(seed)
    report: dict[str, float] = {}
    for name, t in params.trainable_items():
        grad = np.zeros(t.size) if t.grad is None else t.grad.reshape(-1)
        if t.size <= max_coords:
            coords = np.arange(t.size)
        else:
            coords = np.sort(rng.choice(t.size, size=max_coords, replace=False))
        worst = 0.0
        for idx in coords:
            multi = np.unravel_index(idx, t.data.shape)
            orig = t.data[multi]
            t.data[multi] = orig + eps
            with no_grad():
                hi = loss_fn().item()
            t.data[multi] = orig - eps
            with no_grad():
                lo = loss_fn().item()
            t.data[multi] = orig
            numeric = (hi - lo) / (2.0 * eps)
            worst = max(worst, _rel_err(float(grad[idx]), numeric))
        report[name] = worst
    params.zero_grad()
    return GradReport(report, tol)
