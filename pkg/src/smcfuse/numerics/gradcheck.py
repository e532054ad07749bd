"""Central-difference gradient checking against :func:`backward`."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Parameter, Tensor, backward


@dataclass
class GradCheckReport:
    tolerance: float
    errors: dict[str, float] = field(default_factory=dict)
    probes: dict[str, int] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return all(e < self.tolerance for e in self.errors.values())

    def table(self) -> str:
        rows = [f"{'parameter':40s} {'probes':>6s} {'max rel err':>12s}"]
        for name, err in self.errors.items():
            flag = "" if err < self.tolerance else "  FAIL"
            rows.append(f"{name:40s} {self.probes[name]:6d} {err:12.3e}{flag}")
        return "\n".join(rows)


def grad_check(fn: Callable[[], Tensor], params: Sequence[Parameter], probes: int = 8,
               step: float = 1e-5, tolerance: float = 1e-4, seed: int = 0,
               abs_floor: float = 1e-6, stencil: int = 3,
               analytic: dict[str, np.ndarray] | None = None) -> GradCheckReport:
    """Compare analytic gradients of the scalar ``fn()`` with central differences.

    ``probes`` coordinates are drawn per parameter (all of them if the
    parameter is smaller). Relative error is ``|a - n| / max(|a|, |n|, abs_floor)``,
    so coordinates whose true gradient sits at roundoff level are judged on
    absolute difference instead.
    ``stencil`` is 3 (plain central difference) or 5 (fourth-order central
    difference, for deep graphs where curvature makes O(h^2) truncation visible).
    ``analytic`` overrides the backward pass (used for negative controls).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if stencil not in (3, 5):
        raise ValueError(f"stencil must be 3 or 5, got {stencil}")
    rng = np.random.default_rng(seed)
    if analytic is None:
        for p in params:
            p.zero_grad()
        backward(fn())
        analytic = {p.name: p.grad.copy() for p in params}
    report = GradCheckReport(tolerance)
    for p in params:
        flat = p.data.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= probes else rng.choice(n, size=probes, replace=False)
        worst = 0.0
        for c in coords:
            orig = flat[c]

            def at(offset):
                flat[c] = orig + offset
                value = fn().item()
                flat[c] = orig
                return value

            numeric = (at(step) - at(-step)) / (2.0 * step)
            if stencil == 5:
                wide = (at(2 * step) - at(-2 * step)) / (4.0 * step)
                numeric = (4.0 * numeric - wide) / 3.0
            a = analytic[p.name].reshape(-1)[c]
            err = abs(a - numeric) / max(abs(a), abs(numeric), abs_floor)
            worst = max(worst, err)
        report.errors[p.name] = worst
        report.probes[p.name] = len(coords)
    return report
