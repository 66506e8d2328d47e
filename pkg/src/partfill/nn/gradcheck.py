"""Finite-difference verification of backward passes.

Every entry of every checked array is perturbed by +/- h and the central
difference of a scalar objective is compared against the analytic gradient.
Relative error is measured against max(1, |analytic|, |numeric|), so it acts
as an absolute error for small gradients and a true relative error for large
ones. Modules must be double precision for the tolerances to be meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optim import zero_grads


@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def __str__(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag}  {self.name}: max relative error {self.max_rel_error:.3e} (tolerance {self.tolerance:.0e})"


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))


def max_relative_error(loss_fn, arrays, analytic_grads, h: float = 1e-5) -> float:
    """Central-difference check of loss_fn against analytic gradients.

    `arrays` are perturbed in place entry by entry (and restored); they must
    be C-contiguous so ravel() is a view. loss_fn must be deterministic and
    must not call backward.
    """
    worst = 0.0
    for arr, grad in zip(arrays, analytic_grads):
        if not arr.flags["C_CONTIGUOUS"]:
            raise ValueError("gradcheck arrays must be C-contiguous")
        flat = arr.ravel()  # view, since the array is contiguous
        gflat = np.asarray(grad).ravel()
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            loss_plus = loss_fn()
            flat[i] = original - h
            loss_minus = loss_fn()
            flat[i] = original
            numeric = (loss_plus - loss_minus) / (2.0 * h)
            worst = max(worst, relative_error(float(gflat[i]), numeric))
    return worst


def check_module(name, module, x, train: bool = True, tol: float = 1e-6, seed=0, h: float = 1e-5) -> GradCheckReport:
    """Check a module's input and parameter gradients under a weighted-sum objective."""
    rng = np.random.default_rng(seed)
    weights = rng.standard_normal(module.forward(x, train).shape)

    def loss() -> float:
        return float((module.forward(x, train) * weights).sum())

    zero_grads(module.params())
    out = module.forward(x, train)
    grad_x = module.backward(weights.astype(out.dtype))
    arrays = [x] + [p.value for p in module.params()]
    grads = [grad_x] + [p.grad for p in module.params()]
    return GradCheckReport(name, max_relative_error(loss, arrays, grads, h), tol)
