"""Scalar SDE models and Euler-Maruyama propagation driven by explicit increments.

Every drift here is vectorized: it accepts a float or an ndarray of states and
returns an array of the same shape. The samplers rely on this to run batches
of independent chains in lockstep.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

DriftFn = Callable[[np.ndarray], np.ndarray]


class PropagationError(FloatingPointError):
    """A propagated state became non-finite."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite state at Euler step {step}")


def double_well_drift(x):
    """Gradient flow of ``U(x) = x**4 - 2*x**2``: ``-4x(x^2 - 1)``."""
    return -4.0 * x * (x * x - 1.0)


def double_well_drift_deriv(x):
    return -4.0 * (3.0 * x * x - 1.0)


def scaled_well_drift(alpha: float, y):
    """Double-well drift scaled by ``alpha``; the minima stay at +-1."""
    return alpha * double_well_drift(y)


def _zero(x):
    return np.zeros_like(np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class SdeModel:
    """Drift, its derivative, and a constant diffusion coefficient."""

    drift: DriftFn
    drift_deriv: DriftFn
    sigma: float
    name: str = "sde"

    def __post_init__(self):
        if callable(self.sigma):
            raise TypeError("state-dependent diffusion is not supported; sigma must be a constant")
        sigma = float(self.sigma)
        if not np.isfinite(sigma) or sigma < 0.0:
            raise ValueError(f"sigma must be a finite non-negative number, got {self.sigma!r}")
        object.__setattr__(self, "sigma", sigma)


def double_well(sigma: float = 0.5) -> SdeModel:
    return SdeModel(double_well_drift, double_well_drift_deriv, sigma, name="double-well")


def scaled_well(alpha: float = 0.1, sigma: float = 0.5) -> SdeModel:
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return SdeModel(
        lambda y: alpha * double_well_drift(y),
        lambda y: alpha * double_well_drift_deriv(y),
        sigma,
        name=f"scaled-well(alpha={alpha:g})",
    )


def zero_drift(sigma: float = 0.5) -> SdeModel:
    return SdeModel(_zero, _zero, sigma, name="zero-drift")


@dataclass(frozen=True)
class RelaxedModel:
    """Convex combination ``(1 - eps) * base + eps * target`` of two drifts.

    The endpoints short-circuit: at ``eps == 0`` only the base drift is
    evaluated and at ``eps == 1`` only the target drift, so the results are
    exactly those of the respective model.
    """

    base: SdeModel
    target: SdeModel
    epsilon: float

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.base.sigma != self.target.sigma:
            raise ValueError(
                f"base and target must share sigma ({self.base.sigma} != {self.target.sigma})"
            )

    @property
    def sigma(self) -> float:
        return self.base.sigma

    def drift(self, y):
        eps = self.epsilon
        if eps == 0.0:
            return self.base.drift(y)
        if eps == 1.0:
            return self.target.drift(y)
        return (1.0 - eps) * self.base.drift(y) + eps * self.target.drift(y)

    def drift_deriv(self, y):
        eps = self.epsilon
        if eps == 0.0:
            return self.base.drift_deriv(y)
        if eps == 1.0:
            return self.target.drift_deriv(y)
        return (1.0 - eps) * self.base.drift_deriv(y) + eps * self.target.drift_deriv(y)


def relaxed_drift(model: RelaxedModel, y):
    return model.drift(y)


@dataclass(frozen=True)
class IncrementPath:
    """Brownian increments ``dB_0 .. dB_{I-1}`` on a grid of step ``dt``."""

    increments: np.ndarray
    dt: float

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=np.float64)
        if inc.ndim != 1 or inc.size == 0:
            raise ValueError("increments must be a non-empty 1-D array")
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @property
    def n_steps(self) -> int:
        return self.increments.size

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt


@dataclass(frozen=True)
class DiscretePath:
    states: np.ndarray
    dt: float
    times: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "times", self.dt * np.arange(len(self.states)))

    @property
    def endpoint(self) -> float:
        return float(self.states[-1])


def euler_states(x0, increments: np.ndarray, drift: DriftFn, sigma: float, dt: float) -> np.ndarray:
    """Batched Euler-Maruyama recursion without error checking.

    ``increments`` has shape ``(..., I)`` and ``x0`` broadcasts against the
    leading shape. Returns states of shape ``(..., I + 1)``; non-finite
    values are propagated, not raised.
    """
    increments = np.asarray(increments, dtype=np.float64)
    n = increments.shape[-1]
    states = np.empty(increments.shape[:-1] + (n + 1,))
    x = np.broadcast_to(np.asarray(x0, dtype=np.float64), increments.shape[:-1]).copy()
    states[..., 0] = x
    noise = sigma * increments
    for i in range(n):
        x = x + drift(x) * dt + noise[..., i]
        states[..., i + 1] = x
    return states


def propagate(x0: float, path: IncrementPath, model) -> DiscretePath:
    """Euler-Maruyama path from ``x0`` driven by ``path.increments``.

    ``model`` is anything with ``drift`` and ``sigma`` (an :class:`SdeModel`
    or :class:`RelaxedModel`).

    Raises:
        PropagationError: if a state overflows; ``step`` names the first
            offending index ``i`` of ``states[i]``.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        states = euler_states(float(x0), path.increments, model.drift, model.sigma, path.dt)
    bad = ~np.isfinite(states)
    if bad.any():
        raise PropagationError(int(np.argmax(bad)))
    states[0] = x0
    return DiscretePath(states, path.dt)


def sample_increments(rng: np.random.Generator, n_steps: int, dt: float) -> IncrementPath:
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    return IncrementPath(rng.normal(0.0, np.sqrt(dt), size=n_steps), dt)


def check_drift_derivative(model, xs=None, h: float = 1e-6, rtol: float = 1e-6) -> float:
    """Largest scaled mismatch between ``drift_deriv`` and central differences.

    The mismatch at ``x`` is ``|d(x) - fd(x)| / max(1, |d(x)|)``. Raises
    ``ValueError`` if it exceeds ``rtol`` anywhere.
    """
    if xs is None:
        xs = np.linspace(-3.0, 3.0, 61)
    xs = np.asarray(xs, dtype=np.float64)
    analytic = np.asarray(model.drift_deriv(xs), dtype=np.float64)
    fd = (np.asarray(model.drift(xs + h)) - np.asarray(model.drift(xs - h))) / (2.0 * h)
    err = np.abs(analytic - fd) / np.maximum(1.0, np.abs(analytic))
    worst = float(err.max())
    if worst > rtol:
        raise ValueError(f"drift_deriv disagrees with finite differences (max scaled error {worst:.3g})")
    return worst
