"""Conditional path sampling by drift relaxation.

A path from ``x0`` over ``I`` Euler steps is parametrized by its Brownian
increments ``q``. Conditioning the endpoint on an observation ``z`` with
Gaussian noise of variance ``obs_var`` gives the target density
``exp(-V(q))`` with

    V(q) = (z - X_I(q))**2 / (2 obs_var) + sum(q**2) / (2 dt).

The drift used to build ``X_I`` is relaxed from an easy ``base`` drift to the
true ``target`` drift along a ladder ``0 = eps_0 < ... < eps_L = 1``; each
level is sampled with Hybrid Monte Carlo started from the last sample of the
previous level.

All array routines accept a single chain (``q`` of shape ``(I,)``) or a batch
of independent chains (``q`` of shape ``(B, I)``, with ``x0``/``z`` scalars or
length-``B`` arrays). A random source is either one ``Generator`` or a
sequence with one ``Generator`` per chain.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from driftrelax.sde import (
    DiscretePath,
    PropagationError,
    RelaxedModel,
    SdeModel,
    euler_states,
)
from driftrelax.streams import RandomSource, standard_normals, uniforms

class SamplerError(RuntimeError):
    """Path propagation failed outside an HMC proposal."""

    def __init__(self, level: int, trial: int, chain: int | None = None):
        self.level, self.trial, self.chain = level, trial, chain
        where = f"level {level}, trial {trial}"
        if chain is not None:
            where += f", chain {chain}"
        super().__init__(f"path propagation blew up at {where}")


@dataclass(frozen=True)
class ConditionalProblem:
    x0: float | np.ndarray
    z: float | np.ndarray
    obs_var: float
    base: SdeModel
    target: SdeModel
    n_steps: int
    dt: float

    def __post_init__(self):
        if not self.obs_var > 0.0:
            raise ValueError(f"obs_var must be positive, got {self.obs_var}")
        if self.n_steps < 1 or not self.dt > 0.0:
            raise ValueError("need n_steps >= 1 and dt > 0")
        if self.base.sigma != self.target.sigma:
            raise ValueError("base and target models must share sigma")

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    @property
    def sigma(self) -> float:
        return self.target.sigma

    def relaxed(self, epsilon: float) -> RelaxedModel:
        return RelaxedModel(self.base, self.target, float(epsilon))


@dataclass(frozen=True)
class RelaxationLadder:
    epsilons: tuple[float, ...]

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        if len(eps) < 2 or eps[0] != 0.0 or eps[-1] != 1.0:
            raise ValueError("ladder must start at exactly 0 and end at exactly 1")
        if any(b <= a for a, b in zip(eps, eps[1:])):
            raise ValueError("ladder must be strictly increasing")
        object.__setattr__(self, "epsilons", eps)

    def __len__(self):
        return len(self.epsilons)

    def __iter__(self):
        return iter(self.epsilons)


def make_ladder(n_levels: int) -> RelaxationLadder:
    """Uniform ladder ``{l / L : l = 0..L}``."""
    if n_levels < 1:
        raise ValueError("need at least one relaxation level")
    return RelaxationLadder(tuple(l / n_levels for l in range(n_levels + 1)))


@dataclass(frozen=True)
class HmcConfig:
    """HMC settings per ladder level.

    ``metropolis_trials_per_level == 0`` disables sampling entirely; the
    chain then returns its initial increments.
    """

    metropolis_trials_per_level: int = 10
    leapfrog_steps_per_trial: int = 1
    step_size: float = 1e-2

    def __post_init__(self):
        if self.metropolis_trials_per_level < 0:
            raise ValueError("metropolis_trials_per_level must be non-negative")
        if self.leapfrog_steps_per_trial < 1:
            raise ValueError("leapfrog_steps_per_trial must be positive")
        if not self.step_size > 0.0:
            raise ValueError("step_size must be positive")


@dataclass(frozen=True)
class HmcState:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        if np.shape(self.q) != np.shape(self.p):
            raise ValueError("q and p must have the same shape")


# --- potential and gradient ---------------------------------------------------


def _evaluate(problem: ConditionalProblem, model, q: np.ndarray, with_grad: bool = True):
    """Potential, gradient and endpoint for a batch; non-finite on blow-up."""
    dt, obs_var = problem.dt, problem.obs_var
    with np.errstate(over="ignore", invalid="ignore"):
        states = euler_states(problem.x0, q, model.drift, model.sigma, dt)
        end = states[..., -1]
        miss = end - problem.z
        if np.isinf(obs_var):
            lik = np.zeros_like(end)
            lam = np.zeros_like(end)
        else:
            lik = miss * miss / (2.0 * obs_var)
            lam = miss / obs_var
        V = lik + np.sum(q * q, axis=-1) / (2.0 * dt)
        if not with_grad:
            return V, None, end
        # adjoint of X_I with respect to X_j, j = 1..I
        factors = 1.0 + model.drift_deriv(states[..., 1:-1]) * dt
        sens = np.ones_like(q)
        if q.shape[-1] > 1:
            sens[..., :-1] = np.cumprod(factors[..., ::-1], axis=-1)[..., ::-1]
        grad = q / dt + model.sigma * lam[..., None] * sens
    return V, grad, end


def potential(problem: ConditionalProblem, epsilon: float, q) -> float | np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    _check_length(problem, q)
    model = problem.relaxed(epsilon)
    V, _, _ = _evaluate(problem, model, q, with_grad=False)
    if not np.all(np.isfinite(V)):
        _raise_blowup(problem, model, q)
    return V if V.ndim else float(V)


def potential_gradient(problem: ConditionalProblem, epsilon: float, q) -> np.ndarray:
    """Gradient of ``V`` with respect to the increments, by the adjoint recursion."""
    q = np.asarray(q, dtype=np.float64)
    _check_length(problem, q)
    model = problem.relaxed(epsilon)
    _, grad, _ = _evaluate(problem, model, q)
    if not np.all(np.isfinite(grad)):
        _raise_blowup(problem, model, q)
    return grad


def hamiltonian(problem: ConditionalProblem, epsilon: float, state: HmcState):
    p = np.asarray(state.p, dtype=np.float64)
    return potential(problem, epsilon, state.q) + 0.5 * np.sum(p * p, axis=-1)


def _check_length(problem, q):
    if q.shape[-1] != problem.n_steps:
        raise ValueError(f"expected {problem.n_steps} increments, got {q.shape[-1]}")


def _raise_blowup(problem, model, q):
    with np.errstate(over="ignore", invalid="ignore"):
        states = euler_states(problem.x0, q, model.drift, model.sigma, problem.dt)
    bad = np.argwhere(~np.isfinite(states))
    raise PropagationError(int(bad[0, -1]) if len(bad) else problem.n_steps)


# --- HMC ----------------------------------------------------------------------


def _leapfrog(problem, model, q, p, grad, steps: int, dtau: float):
    """Kick-drift-kick Verlet; returns ``(q, p, V, grad)`` at the end point."""
    p = p - 0.5 * dtau * grad
    for s in range(steps):
        q = q + dtau * p
        V, grad, _ = _evaluate(problem, model, q)
        if s < steps - 1:
            p = p - dtau * grad
    p = p - 0.5 * dtau * grad
    return q, p, V, grad


def leapfrog(state: HmcState, problem: ConditionalProblem, epsilon: float, steps: int, dtau: float) -> HmcState:
    """Integrate Hamilton's equations for ``H = V_eps(q) + p.p/2`` with unit mass."""
    model = problem.relaxed(epsilon)
    q = np.asarray(state.q, dtype=np.float64)
    p = np.asarray(state.p, dtype=np.float64)
    _, grad, _ = _evaluate(problem, model, q)
    q, p, _, _ = _leapfrog(problem, model, q, p, grad, steps, dtau)
    return HmcState(q, p)


def _trial(problem, model, q, V, grad, cfg: HmcConfig, rng: RandomSource):
    """One Metropolis-corrected HMC move for every chain in the batch."""
    p = standard_normals(rng, q.shape)
    h_old = V + 0.5 * np.sum(p * p, axis=-1)
    q_new, p_new, V_new, grad_new = _leapfrog(
        problem, model, q, p, grad, cfg.leapfrog_steps_per_trial, cfg.step_size
    )
    h_new = V_new + 0.5 * np.sum(p_new * p_new, axis=-1)
    u = uniforms(rng, h_old.shape)
    with np.errstate(invalid="ignore", divide="ignore"):
        # NaN energies (blown-up proposals) compare False, i.e. reject
        accept = np.log(u) < (h_old - h_new)
    accept &= np.all(np.isfinite(grad_new), axis=-1)
    q = np.where(accept[..., None], q_new, q)
    V = np.where(accept, V_new, V)
    grad = np.where(accept[..., None], grad_new, grad)
    return q, V, grad, accept


def hmc_trial(q, problem: ConditionalProblem, epsilon: float, cfg: HmcConfig, rng: RandomSource):
    """Fresh standard-normal momenta, one leapfrog trajectory, Metropolis test.

    Returns the new increments and the acceptance flag (arrays for a batch).
    A proposal whose path overflows is rejected.
    """
    q = np.asarray(q, dtype=np.float64)
    model = problem.relaxed(epsilon)
    V, grad, _ = _evaluate(problem, model, q)
    q, _, _, accept = _trial(problem, model, q, V, grad, cfg, rng)
    return q, (bool(accept) if accept.ndim == 0 else accept)


# --- drift relaxation ---------------------------------------------------------


@dataclass(frozen=True)
class SamplerDiagnostics:
    accepted: np.ndarray  # (L+1,) or (B, L+1) accepted trials per level
    trials_per_level: int

    @property
    def accept_rate(self) -> float:
        total = self.accepted.size * self.trials_per_level
        return float(self.accepted.sum() / total) if total else float("nan")


@dataclass(frozen=True)
class ConditionalSample:
    increments: np.ndarray
    path: DiscretePath
    diagnostics: SamplerDiagnostics


@dataclass(frozen=True)
class ConditionalBatch:
    increments: np.ndarray  # (B, I)
    states: np.ndarray  # (B, I + 1), under the target drift
    diagnostics: SamplerDiagnostics

    @property
    def endpoints(self) -> np.ndarray:
        return self.states[:, -1]


def _run_ladder(problem, ladder, cfg, q, rng):
    n_chains = q.shape[0]
    accepted = np.zeros((n_chains, len(ladder)), dtype=np.int64)
    for level, eps in enumerate(ladder):
        model = problem.relaxed(eps)
        V, grad, _ = _evaluate(problem, model, q)
        bad = ~np.all(np.isfinite(grad), axis=-1)
        if bad.any():
            raise SamplerError(level, 0, int(np.argmax(bad)))
        for _ in range(cfg.metropolis_trials_per_level):
            q, V, grad, acc = _trial(problem, model, q, V, grad, cfg, rng)
            accepted[:, level] += acc
    return q, accepted


def sample_conditional_paths(
    problem: ConditionalProblem,
    ladder: RelaxationLadder,
    cfg: HmcConfig,
    rng: RandomSource,
    init_q=None,
    n_chains: int | None = None,
) -> ConditionalBatch:
    """Run independent drift-relaxation chains in lockstep.

    The batch size comes from ``init_q``, from ``n_chains``, or from the
    length of a per-chain generator sequence. Missing initial increments are
    drawn unconditionally, i.e. a forward path of the base SDE.
    """
    if init_q is not None:
        q = np.array(init_q, dtype=np.float64, ndmin=2)
    else:
        if n_chains is None:
            if isinstance(rng, np.random.Generator):
                raise ValueError("n_chains is required with a single generator and no init_q")
            n_chains = len(rng)
        q = np.sqrt(problem.dt) * standard_normals(rng, (n_chains, problem.n_steps))
    _check_length(problem, q)
    q, accepted = _run_ladder(problem, ladder, cfg, q, rng)
    with np.errstate(over="ignore", invalid="ignore"):
        states = euler_states(problem.x0, q, problem.target.drift, problem.sigma, problem.dt)
    bad = ~np.all(np.isfinite(states), axis=-1)
    if bad.any():
        raise SamplerError(len(ladder) - 1, cfg.metropolis_trials_per_level, int(np.argmax(bad)))
    return ConditionalBatch(q, states, SamplerDiagnostics(accepted, cfg.metropolis_trials_per_level))


def sample_conditional_path(
    problem: ConditionalProblem,
    ladder: RelaxationLadder,
    cfg: HmcConfig,
    rng: np.random.Generator,
    init_q=None,
) -> ConditionalSample:
    """Single-chain drift relaxation; returns the last level-``L`` sample."""
    if np.ndim(problem.x0) or np.ndim(problem.z):
        raise ValueError("sample_conditional_path takes a scalar problem; use sample_conditional_paths")
    batch = sample_conditional_paths(problem, ladder, cfg, rng, init_q=init_q, n_chains=1)
    diag = SamplerDiagnostics(batch.diagnostics.accepted[0], cfg.metropolis_trials_per_level)
    return ConditionalSample(batch.increments[0], DiscretePath(batch.states[0], problem.dt), diag)
