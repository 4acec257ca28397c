"""Bootstrap particle filter and its drift-relaxation MCMC variant.

Both filters carry particles as ``(prev, curr)`` pairs so that resampling
copies the value at the previous observation together with the value it
evolved into. The MCMC variant restarts a conditional path sampler from every
resampled ``prev`` and replaces ``curr`` by the sampled endpoint.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from driftrelax.sampler import (
    ConditionalProblem,
    HmcConfig,
    RelaxationLadder,
    SamplerError,
    sample_conditional_paths,
)
from driftrelax.sde import SdeModel, euler_states
from driftrelax.streams import PREDICT, REJUVENATE, RESAMPLE, RandomSource, SeedStreams, standard_normals

log = logging.getLogger(__name__)


class DegenerateWeightsError(ValueError):
    """Every particle has zero likelihood in floating point."""


class FilterError(RuntimeError):
    def __init__(self, message: str, k: int | None = None, particle: int | None = None):
        self.k, self.particle = k, particle
        super().__init__(message)


@dataclass(frozen=True)
class ObservationModel:
    """Additive Gaussian observation noise of variance ``obs_var``."""

    obs_var: float = 0.01

    def __post_init__(self):
        if not self.obs_var > 0.0:
            raise ValueError("obs_var must be positive")

    def log_likelihood(self, x, z):
        return log_likelihood(x, z, self.obs_var)


def log_likelihood(x, z, obs_var: float):
    """Unnormalized Gaussian log-likelihood ``-(z - x)**2 / (2 obs_var)``."""
    d = np.asarray(z, dtype=np.float64) - x
    out = -(d * d) / (2.0 * obs_var)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ParticleEnsemble:
    prev: np.ndarray
    curr: np.ndarray
    log_lik: np.ndarray
    weights: np.ndarray
    # increments of the path from prev to curr, when known
    increments: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.prev)
        if not (len(self.curr) == len(self.log_lik) == len(self.weights) == n):
            raise ValueError("ensemble arrays must share length N")
        if self.increments is not None and len(self.increments) != n:
            raise ValueError("increments must have one row per particle")

    @property
    def size(self) -> int:
        return len(self.prev)

    @property
    def raw_lik(self) -> np.ndarray:
        return np.exp(self.log_lik)

    @classmethod
    def initial(cls, x0: float, n_particles: int) -> "ParticleEnsemble":
        if n_particles < 1:
            raise ValueError("need at least one particle")
        x = np.full(n_particles, float(x0))
        return cls(x, x.copy(), np.zeros(n_particles), np.full(n_particles, 1.0 / n_particles))

    def advance(self) -> "ParticleEnsemble":
        """Start a new observation interval: the current values become ``prev``."""
        n = self.size
        return ParticleEnsemble(self.curr, self.curr.copy(), np.zeros(n), np.full(n, 1.0 / n))


@dataclass(frozen=True)
class FilterRecord:
    k: int
    t: float
    z: float
    post_mean: float
    ess: float
    n_particles: int
    accept_rate: float | None = None
    degenerate: bool = False

    @property
    def ess_pct(self) -> float:
        return 100.0 * self.ess / self.n_particles


@dataclass(frozen=True)
class FilterSetup:
    """Signal dynamics and observation grid shared by both filters."""

    model: SdeModel
    n_steps: int = 100
    dt: float = 0.01
    obs_var: float = 0.01

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt


BaseDrift = SdeModel | Sequence[SdeModel] | Callable[[int], SdeModel]


@dataclass(frozen=True)
class Rejuvenation:
    """Settings of the drift-relaxation MCMC step.

    ``base`` is the modified drift: one model for every particle, a sequence
    with one model per particle, or a callable ``n -> model``. ``init`` picks
    the chain's starting increments: ``"fresh"`` draws a new path of the
    base SDE from ``prev``; ``"resampled"`` reuses the resampled predicted
    path.
    """

    base: BaseDrift
    ladder: RelaxationLadder
    hmc: HmcConfig = HmcConfig()
    init: str = "fresh"

    def __post_init__(self):
        if self.init not in ("fresh", "resampled"):
            raise ValueError(f"unknown init mode {self.init!r}")

    def base_for(self, n: int) -> SdeModel:
        if isinstance(self.base, SdeModel):
            return self.base
        if callable(self.base):
            return self.base(n)
        return self.base[n]


# --- building blocks ----------------------------------------------------------


def predict(ensemble: ParticleEnsemble, model: SdeModel, n_steps: int, dt: float, rng: RandomSource) -> ParticleEnsemble:
    """Propagate every ``prev`` over one observation interval with fresh noise."""
    n = ensemble.size
    inc = np.sqrt(dt) * standard_normals(rng, (n, n_steps))
    with np.errstate(over="ignore", invalid="ignore"):
        states = euler_states(ensemble.prev, inc, model.drift, model.sigma, dt)
    curr = states[:, -1]
    bad = ~np.isfinite(curr)
    if bad.any():
        j = int(np.argmax(bad))
        raise FilterError(f"prediction blew up for particle {j}", particle=j)
    return replace(ensemble, curr=curr, increments=inc)


def normalize_weights(log_lik) -> np.ndarray:
    ll = np.asarray(log_lik, dtype=np.float64)
    ll = np.where(np.isnan(ll), -np.inf, ll)
    top = ll.max()
    if not np.isfinite(top):
        raise DegenerateWeightsError("all log-likelihoods are -inf")
    w = np.exp(ll - top)
    return w / w.sum()


def resample_indices(weights, rng: np.random.Generator) -> np.ndarray:
    """Multinomial selection: index ``j`` with ``cum[j-1] <= theta < cum[j]``."""
    w = np.asarray(weights, dtype=np.float64)
    cum = np.cumsum(w)
    theta = rng.random(len(w)) * cum[-1]
    idx = np.searchsorted(cum, theta, side="right")
    return np.minimum(idx, len(w) - 1)


def resample_pairs(ensemble: ParticleEnsemble, rng: np.random.Generator) -> ParticleEnsemble:
    """Resample ``(prev, curr)`` pairs jointly; weights become uniform."""
    idx = resample_indices(ensemble.weights, rng)
    n = ensemble.size
    inc = None if ensemble.increments is None else ensemble.increments[idx]
    return ParticleEnsemble(
        ensemble.prev[idx], ensemble.curr[idx], ensemble.log_lik[idx], np.full(n, 1.0 / n), inc
    )


def effective_sample_size(raw_lik) -> float:
    """``N / (1 + C**2)`` with ``C`` the population coefficient of variation.

    Scale-free in the likelihoods; clipped to ``[1, N]`` against rounding.
    """
    g = np.asarray(raw_lik, dtype=np.float64)
    n = len(g)
    top = g.max()
    if not top > 0.0:
        raise DegenerateWeightsError("likelihoods are all zero")
    g = g / top  # keeps the squared mean away from underflow
    mean = g.mean()
    cv2 = np.mean((g - mean) ** 2) / (mean * mean)
    return float(np.clip(n / (1.0 + cv2), 1.0, n))


def posterior_mean(curr, raw_lik) -> float:
    g = np.asarray(raw_lik, dtype=np.float64)
    total = g.sum()
    if not total > 0.0:
        raise DegenerateWeightsError("likelihoods are all zero")
    return float(np.dot(curr, g) / total)


def _weigh(ensemble: ParticleEnsemble, z: float, obs_var: float):
    """Attach weights; returns ``(ensemble, ess, post_mean, degenerate)``."""
    ll = np.asarray(log_likelihood(ensemble.curr, z, obs_var))
    try:
        w = normalize_weights(ll)
    except DegenerateWeightsError:
        n = ensemble.size
        log.warning("all particle likelihoods underflowed at z=%g; using uniform weights", z)
        ens = replace(ensemble, log_lik=ll, weights=np.full(n, 1.0 / n))
        return ens, 1.0, float(np.mean(ensemble.curr)), True
    # shifted likelihoods: both statistics are scale-invariant
    shifted = np.exp(ll - ll.max())
    ens = replace(ensemble, log_lik=ll, weights=w)
    return ens, effective_sample_size(shifted), posterior_mean(ensemble.curr, shifted), False


# --- filter steps -------------------------------------------------------------


def pf_step_generic(
    ensemble: ParticleEnsemble, z: float, setup: FilterSetup, streams: SeedStreams, k: int
) -> tuple[ParticleEnsemble, FilterRecord]:
    """Predict, weigh, record from the weighted ensemble, resample pairs."""
    ens = ensemble.advance()
    ens = predict(ens, setup.model, setup.n_steps, setup.dt, streams.per_particle(PREDICT, k, ens.size))
    ens, ess, mean, degenerate = _weigh(ens, z, setup.obs_var)
    ens = resample_pairs(ens, streams.stream(RESAMPLE, k))
    record = FilterRecord(k, k * setup.horizon, float(z), mean, ess, ens.size, None, degenerate)
    return ens, record


def _group_by_model(rejuv: Rejuvenation, n: int) -> dict[int, tuple[SdeModel, list[int]]]:
    groups: dict[int, tuple[SdeModel, list[int]]] = {}
    for j in range(n):
        model = rejuv.base_for(j)
        groups.setdefault(id(model), (model, []))[1].append(j)
    return groups


def pf_step_mcmc(
    ensemble: ParticleEnsemble,
    z: float,
    setup: FilterSetup,
    rejuv: Rejuvenation,
    streams: SeedStreams,
    k: int,
) -> tuple[ParticleEnsemble, FilterRecord]:
    """Generic step followed by drift-relaxation rejuvenation of every particle.

    The record's ESS and mean come from the unweighted post-MCMC particles.
    """
    ens = ensemble.advance()
    n = ens.size
    ens = predict(ens, setup.model, setup.n_steps, setup.dt, streams.per_particle(PREDICT, k, n))
    ens, _, _, degenerate = _weigh(ens, z, setup.obs_var)
    ens = resample_pairs(ens, streams.stream(RESAMPLE, k))

    chain_rngs = streams.per_particle(REJUVENATE, k, n)
    curr = np.empty(n)
    inc = np.empty((n, setup.n_steps))
    accepted = 0
    for base, members in _group_by_model(rejuv, n).values():
        members = np.asarray(members)
        problem = ConditionalProblem(
            ens.prev[members], float(z), setup.obs_var, base, setup.model, setup.n_steps, setup.dt
        )
        init_q = ens.increments[members] if rejuv.init == "resampled" else None
        try:
            batch = sample_conditional_paths(
                problem, rejuv.ladder, rejuv.hmc, [chain_rngs[j] for j in members], init_q=init_q
            )
        except SamplerError as err:
            j = int(members[err.chain or 0])
            raise FilterError(f"rejuvenation failed for particle {j}: {err}", k=k, particle=j) from err
        curr[members] = batch.endpoints
        inc[members] = batch.increments
        accepted += int(batch.diagnostics.accepted.sum())

    ens = ParticleEnsemble(ens.prev, curr, np.zeros(n), np.full(n, 1.0 / n), inc)
    ens, _, _, _ = _weigh(ens, z, setup.obs_var)
    raw = np.exp(ens.log_lik - ens.log_lik.max())
    n_trials = n * len(rejuv.ladder) * rejuv.hmc.metropolis_trials_per_level
    record = FilterRecord(
        k,
        k * setup.horizon,
        float(z),
        float(np.mean(curr)),
        effective_sample_size(raw),
        n,
        accepted / n_trials if n_trials else None,
        degenerate,
    )
    return replace(ens, weights=np.full(n, 1.0 / n)), record


def run_filter(
    observations: Sequence[float],
    x0: float,
    n_particles: int,
    setup: FilterSetup,
    streams: SeedStreams,
    rejuv: Rejuvenation | None = None,
) -> list[FilterRecord]:
    """Filter the observations at ``T_k = k * horizon``, ``k = 1..K``."""
    ens = ParticleEnsemble.initial(x0, n_particles)
    records = []
    for k, z in enumerate(observations, start=1):
        try:
            if rejuv is None:
                ens, rec = pf_step_generic(ens, z, setup, streams, k)
            else:
                ens, rec = pf_step_mcmc(ens, z, setup, rejuv, streams, k)
        except FilterError as err:
            err.k = k
            raise
        records.append(rec)
    return records
