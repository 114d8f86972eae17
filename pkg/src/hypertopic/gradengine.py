"""Named parameter storage, gradient evaluation, and the Adam update rule.

The training loop never touches the autodiff tape directly.  It hands a
``loss_program`` (a callable mapping named parameter tensors plus an optional
batch and RNG to a scalar :class:`~hypertopic.autodiff.Tensor`) to
:func:`evaluate_and_backward` and gets back a float loss and a gradient map
keyed exactly like the parameter store.  Finite-difference checking and
global-norm clipping live here too so every consumer shares one definition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import ContractViolationError, TrainingStepError

__all__ = [
    "ParamStore",
    "evaluate_and_backward",
    "finite_diff_check",
    "FiniteDiffReport",
    "global_norm",
    "clip_by_global_norm",
    "AdamState",
    "adam_step",
]


class ParamStore:
    """Ordered mapping of unique names to float64 arrays of fixed shape.

    Shapes are frozen at insertion; every write is validated to be finite and
    shape-compatible, so a corrupted update fails at the store boundary
    instead of propagating NaNs into later steps.
    """

    def __init__(self):
        self._arrays: dict[str, np.ndarray] = {}

    def add(self, name: str, array) -> None:
        if name in self._arrays:
            raise ContractViolationError(f"parameter {name!r} already exists")
        arr = np.array(array, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ContractViolationError(f"parameter {name!r} contains non-finite values")
        self._arrays[name] = arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __setitem__(self, name: str, array) -> None:
        if name not in self._arrays:
            raise ContractViolationError(f"unknown parameter {name!r}; use add()")
        arr = np.asarray(array, dtype=np.float64)
        if arr.shape != self._arrays[name].shape:
            raise ContractViolationError(
                f"shape mismatch for {name!r}: {arr.shape} vs {self._arrays[name].shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ContractViolationError(f"assignment to {name!r} contains non-finite values")
        self._arrays[name] = np.array(arr, dtype=np.float64)

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def __len__(self) -> int:
        return len(self._arrays)

    def names(self) -> list[str]:
        return list(self._arrays)

    def items(self):
        return self._arrays.items()

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name, arr in self._arrays.items():
            out.add(name, arr.copy())
        return out

    def total_size(self) -> int:
        return sum(a.size for a in self._arrays.values())

    def as_tensors(self) -> dict[str, Tensor]:
        return {name: Tensor(arr, requires_grad=True) for name, arr in self._arrays.items()}


def _validate_gradmap(params: ParamStore, grads: dict) -> None:
    if set(grads) != set(params.names()):
        raise ContractViolationError("gradient map keys do not match the parameter store")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ContractViolationError(f"gradient shape mismatch for {name!r}")


def evaluate_and_backward(loss_program, params: ParamStore, batch=None, rng=None):
    """Run ``loss_program`` once and return ``(loss, grads)``.

    ``grads`` has one float64 array per parameter name; parameters the loss
    does not touch get zero gradients.  A non-finite loss or gradient raises
    :class:`TrainingStepError` naming the offending parameter.
    """
    tensors = params.as_tensors()
    loss = loss_program(tensors, batch, rng)
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise ContractViolationError("loss_program must return a scalar Tensor")
    loss_value = float(loss.data)
    if not math.isfinite(loss_value):
        raise TrainingStepError(f"loss is non-finite ({loss_value})")
    loss.backward()
    grads: dict[str, np.ndarray] = {}
    for name, t in tensors.items():
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        if not np.all(np.isfinite(g)):
            raise TrainingStepError(f"gradient for {name!r} is non-finite", param=name)
        grads[name] = g
    return loss_value, grads


@dataclass
class FiniteDiffReport:
    """Outcome of comparing analytic gradients against central differences."""

    passed: bool
    max_rel_err: float
    worst_param: str
    per_param: dict[str, float]
    tolerance: float


def finite_diff_check(
    loss_program,
    params: ParamStore,
    tolerance: float = 1e-4,
    step: float = 1e-5,
    batch=None,
    rng=None,
) -> FiniteDiffReport:
    """Compare every analytic gradient entry against a central difference.

    The relative error for one entry is ``|a - n| / max(1e-8, |a| + |n|)``.
    Intended for small parameter counts; cost is two loss evaluations per
    scalar entry.
    """
    _, grads = evaluate_and_backward(loss_program, params, batch=batch, rng=rng)
    per_param: dict[str, float] = {}
    for name in params.names():
        base = params[name]
        worst = 0.0
        flat = base.reshape(-1)
        analytic = grads[name].reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            plus = float(loss_program(params.as_tensors(), batch, rng).data)
            flat[i] = saved - step
            minus = float(loss_program(params.as_tensors(), batch, rng).data)
            flat[i] = saved
            numeric = (plus - minus) / (2.0 * step)
            a = analytic[i]
            rel = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, rel)
        per_param[name] = worst
    worst_param = max(per_param, key=per_param.get) if per_param else ""
    max_rel = per_param.get(worst_param, 0.0)
    return FiniteDiffReport(
        passed=max_rel <= tolerance,
        max_rel_err=max_rel,
        worst_param=worst_param,
        per_param=per_param,
        tolerance=tolerance,
    )


def global_norm(grads: dict) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    return math.sqrt(total)


def clip_by_global_norm(grads: dict, max_norm: float = 10.0) -> dict:
    """Scale all gradients by a shared factor so the global norm is capped."""
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return {name: g * scale for name, g in grads.items()}


@dataclass
class AdamState:
    """First/second moment accumulators and the shared step counter."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_params(cls, params: ParamStore) -> "AdamState":
        return cls(
            m={name: np.zeros_like(arr) for name, arr in params.items()},
            v={name: np.zeros_like(arr) for name, arr in params.items()},
            t=0,
        )


def adam_step(
    params: ParamStore,
    grads: dict,
    state: AdamState,
    lr: float = 0.01,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Apply one bias-corrected Adam update in place."""
    _validate_gradmap(params, grads)
    if set(state.m) != set(params.names()):
        raise ContractViolationError("Adam state does not match the parameter store")
    state.t += 1
    t = state.t
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, g in grads.items():
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * (g * g)
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        params[name] = params[name] - lr * m_hat / (np.sqrt(v_hat) + eps)
