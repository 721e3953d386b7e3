"""Central finite-difference gradient verification.

The numeric side never touches the tape: the loss callable is re-evaluated
under ``no_grad`` with one coordinate nudged at a time, so it stays an
independent oracle for the analytic backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

DEFAULT_STEP = 1e-5
DEFAULT_RTOL = 1e-4
DEFAULT_ATOL = 1e-7


@dataclass
class CheckEntry:
    name: str
    worst_abs: float
    worst_rel: float
    ok: bool


@dataclass
class CheckReport:
    entries: list[CheckEntry]

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.entries)

    def worst(self) -> CheckEntry | None:
        bad = [e for e in self.entries if not e.ok]
        pool = bad if bad else self.entries
        return max(pool, key=lambda e: e.worst_rel) if pool else None


def _coordinate_ok(analytic: float, numeric: float, rtol: float, atol: float) -> bool:
    err = abs(analytic - numeric)
    scale = max(abs(analytic), abs(numeric))
    return err <= max(atol, rtol * scale)


def gradient_report(loss_fn: Callable[[], Tensor], params: Mapping[str, Tensor],
                    step: float = DEFAULT_STEP, rtol: float = DEFAULT_RTOL,
                    atol: float = DEFAULT_ATOL) -> CheckReport:
    """Compare backward() gradients of ``loss_fn`` against central differences.

    ``loss_fn`` must run a full fresh forward pass on every call (it is
    invoked 2 * total-coordinate-count times).
    """
    for p in params.values():
        if p.requires_grad:
            p.zero_grad()
    ad.reset_tape()
    loss = loss_fn()
    ad.backward(loss)
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.items()}
    ad.reset_tape()

    entries = []
    with ad.no_grad():
        for name, p in params.items():
            flat = p.data.reshape(-1)
            worst_abs = 0.0
            worst_rel = 0.0
            ok = True
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                f_plus = float(loss_fn().data)
                flat[i] = orig - step
                f_minus = float(loss_fn().data)
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2.0 * step)
                a = float(analytic[name].reshape(-1)[i])
                err = abs(a - numeric)
                scale = max(abs(a), abs(numeric))
                worst_abs = max(worst_abs, err)
                if scale > 0:
                    worst_rel = max(worst_rel, err / scale)
                if not _coordinate_ok(a, numeric, rtol, atol):
                    ok = False
            entries.append(CheckEntry(name, worst_abs, worst_rel, ok))
    return CheckReport(entries)


def numeric_gradient(loss_fn: Callable[[], Tensor], tensor: Tensor,
                     step: float = DEFAULT_STEP) -> np.ndarray:
    """Central-difference gradient of ``loss_fn`` w.r.t. one tensor."""
    out = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    gout = out.reshape(-1)
    with ad.no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(loss_fn().data)
            flat[i] = orig - step
            f_minus = float(loss_fn().data)
            flat[i] = orig
            gout[i] = (f_plus - f_minus) / (2.0 * step)
    return out
