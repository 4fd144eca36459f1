"""Central finite-difference check of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float = 0.0
    per_tensor: dict[str, float] = field(default_factory=dict)
    coords_checked: int = 0

    def worst(self) -> tuple[str, float]:
        if not self.per_tensor:
            return "", 0.0
        name = max(self.per_tensor, key=self.per_tensor.get)
        return name, self.per_tensor[name]


def rel_error(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-12)


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: dict[str, Tensor],
    h: float = 1e-5,
    samples_per_tensor: int = 32,
    seed: int = 0,
    floor: float = 0.0,
) -> GradCheckReport:
    """Compare backprop gradients with ``(f(p+h) - f(p-h)) / 2h`` on sampled coordinates.

    Only tensors with ``requires_grad`` are checked. When ``floor`` is positive,
    coordinates whose analytic and numeric gradients are both below it are
    skipped: their relative error is pure round-off.
    """
    rng = np.random.default_rng(seed)
    for t in params.values():
        t.grad = None
    loss = loss_fn()
    loss.backward()
    report = GradCheckReport()
    for name, t in params.items():
        if not t.requires_grad:
            continue
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        flat = t.data.reshape(-1)
        k = min(samples_per_tensor, flat.size)
        coords = rng.choice(flat.size, size=k, replace=False)
        worst = 0.0
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            fp = float(loss_fn().data)
            flat[c] = orig - h
            fm = float(loss_fn().data)
            flat[c] = orig
            num = (fp - fm) / (2 * h)
            a = float(analytic.reshape(-1)[c])
            if floor and max(abs(a), abs(num)) < floor:
                continue
            worst = max(worst, rel_error(a, num))
            report.coords_checked += 1
        report.per_tensor[name] = worst
        report.max_rel_error = max(report.max_rel_error, worst)
    for t in params.values():
        t.grad = None
    return report
