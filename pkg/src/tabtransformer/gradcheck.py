"""Central finite-difference checks of tape gradients.

Meant to be run with float64 tensors; the perturbations are applied in place
to ``Tensor.data`` and always restored.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, record_kinks


def relative_error(a, b, floor: float = 1e-6) -> np.ndarray:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def _eval(f: Callable[[], Tensor]) -> tuple[float, list[np.ndarray]]:
    with record_kinks() as log:
        value = f().item()
    return value, log


def _same_pattern(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def numerical_gradient(f: Callable[[], Tensor], param: Tensor, h: float = 1e-5,
                       entries: Sequence[int] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Central differences of the scalar ``f()`` w.r.t. the flat ``entries`` of ``param``.

    Also returns a boolean array marking entries whose +h and -h evaluations
    saw different relu/selu sign patterns; the difference quotient is not a
    derivative estimate there.
    """
    flat = param.data.reshape(-1)
    idx = range(flat.size) if entries is None else entries
    out = np.zeros(len(idx))
    kinked = np.zeros(len(idx), dtype=bool)
    for j, i in enumerate(idx):
        orig = flat[i]
        flat[i] = orig + h
        fp, kp = _eval(f)
        flat[i] = orig - h
        fm, km = _eval(f)
        flat[i] = orig
        out[j] = (fp - fm) / (2 * h)
        kinked[j] = not _same_pattern(kp, km)
    return out, kinked


def directional_derivative(f: Callable[[], Tensor], params: Sequence[Tensor], directions: Sequence[np.ndarray],
                           h: float = 1e-5) -> tuple[float, bool]:
    """Central difference along ``directions``; second value flags a kink crossing."""
    saved = [p.data.copy() for p in params]
    try:
        for p, s, v in zip(params, saved, directions):
            p.data[...] = s + h * v
        fp, kp = _eval(f)
        for p, s, v in zip(params, saved, directions):
            p.data[...] = s - h * v
        fm, km = _eval(f)
    finally:
        for p, s in zip(params, saved):
            p.data[...] = s
    return (fp - fm) / (2 * h), not _same_pattern(kp, km)


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: str
    n_checks: int
    n_kinked: int = 0


def check_gradients(f: Callable[[], Tensor], params: Sequence[Tensor], rng: np.random.Generator,
                    h: float = 1e-5, entries_per_param: int | None = 8, floor: float = 1e-6) -> GradCheckReport:
    """Compare tape gradients with central differences.

    For every parameter: a sampled set of single entries (all of them when
    ``entries_per_param`` is None) plus one random direction spanning the
    whole tensor (normalized to unit length, so the step is exactly ``h``).
    Checks whose difference quotient straddles a relu/selu kink are counted
    in ``n_kinked`` and left out of ``max_rel_error``.
    """
    with Tape() as tape:
        loss = f()
    grads = tape.gradient(loss, params)
    worst, where, n, n_kinked = 0.0, "", 0, 0
    for k, (p, g) in enumerate(zip(params, grads)):
        flat_g = g.reshape(-1)
        if entries_per_param is None or p.size <= entries_per_param:
            entries = list(range(p.size))
        else:
            entries = sorted(rng.choice(p.size, size=entries_per_param, replace=False).tolist())
        num, kinked = numerical_gradient(f, p, h, entries)
        err = np.where(kinked, 0.0, relative_error(flat_g[entries], num, floor))
        n += len(entries)
        n_kinked += int(kinked.sum())
        if err.size and err.max() > worst:
            worst, where = float(err.max()), f"{p.name or k}[{entries[int(err.argmax())]}]"
        v = rng.standard_normal(p.shape)
        v /= np.linalg.norm(v)
        dd, kink = directional_derivative(f, [p], [v], h)
        e = 0.0 if kink else float(relative_error(float((g * v).sum()), dd, floor))
        n += 1
        n_kinked += int(kink)
        if e > worst:
            worst, where = e, f"{p.name or k}[direction]"
    return GradCheckReport(worst, where, n, n_kinked)
