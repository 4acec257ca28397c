"""Double-well filtering benchmark: configuration, runs and file outputs."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from driftrelax import __version__
from driftrelax.filters import FilterRecord, FilterSetup, Rejuvenation, run_filter
from driftrelax.sampler import HmcConfig, make_ladder
from driftrelax.sde import SdeModel, double_well, euler_states, scaled_well, zero_drift
from driftrelax.streams import GENERIC_FILTER, MCMC_FILTER, TRUTH, SeedStreams

log = logging.getLogger(__name__)

CSV_HEADER = ["k", "t", "z", "post_mean", "ess", "ess_pct", "accept_rate"]

DRIFTS = ("double_well", "scaled_well", "zero")
INIT_MODES = ("fresh", "resampled")


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(message)


@dataclass(frozen=True)
class BenchmarkConfig:
    n_particles_generic: int = 5000
    n_particles_mcmc: int = 10
    alpha: float = 0.1
    L: int = 10
    dt: float = 0.01
    I: int = 100
    spacing: float = 1.0
    obs_var: float = 0.01
    sigma: float = 0.5
    x0: float = -1.0
    n_obs: int = 10
    metropolis_trials: int = 10
    leapfrog_steps: int = 1
    step_size: float = 0.01
    seed: int = 0
    target: str = "double_well"
    base: str = "scaled_well"
    rejuvenation_init: str = "fresh"
    simulate_truth: bool = False

    def validate(self) -> "BenchmarkConfig":
        for key in ("n_particles_generic", "n_particles_mcmc", "L", "I", "n_obs",
                    "metropolis_trials", "leapfrog_steps"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be a positive integer, got {getattr(self, key)}", key)
        for key in ("dt", "spacing", "obs_var", "step_size"):
            value = getattr(self, key)
            if not (math.isfinite(value) and value > 0.0):
                raise ConfigError(f"{key} must be positive and finite, got {value}", key)
        if not (math.isfinite(self.sigma) and self.sigma >= 0.0):
            raise ConfigError(f"sigma must be non-negative, got {self.sigma}", "sigma")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}", "alpha")
        if abs(self.I * self.dt - self.spacing) > 1e-12 * max(1.0, self.spacing):
            raise ConfigError(
                f"I * dt = {self.I * self.dt!r} does not match the observation spacing {self.spacing!r}", "dt"
            )
        for key in ("target", "base"):
            if getattr(self, key) not in DRIFTS:
                raise ConfigError(f"{key} must be one of {', '.join(DRIFTS)}", key)
        if self.rejuvenation_init not in INIT_MODES:
            raise ConfigError(f"rejuvenation_init must be one of {', '.join(INIT_MODES)}", "rejuvenation_init")
        return self

    @property
    def hmc(self) -> HmcConfig:
        return HmcConfig(self.metropolis_trials, self.leapfrog_steps, self.step_size)

    def target_model(self) -> SdeModel:
        return _drift(self.target, self.alpha, self.sigma)

    def base_model(self) -> SdeModel:
        return _drift(self.base, self.alpha, self.sigma)

    def filter_setup(self) -> FilterSetup:
        return FilterSetup(self.target_model(), self.I, self.dt, self.obs_var)

    def rejuvenation(self) -> Rejuvenation:
        return Rejuvenation(self.base_model(), make_ladder(self.L), self.hmc, self.rejuvenation_init)


def _drift(name: str, alpha: float, sigma: float) -> SdeModel:
    if name == "double_well":
        return double_well(sigma)
    if name == "scaled_well":
        return scaled_well(alpha, sigma)
    return zero_drift(sigma)


_FIELD_TYPES = {f.name: f.type for f in fields(BenchmarkConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
    except ValueError:
        raise ConfigError(f"cannot parse {key} = {raw!r} as {kind}", key) from None
    return raw


def parse_config(text: str) -> BenchmarkConfig:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'", key or None)
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}", key)
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}", key)
        values[key] = _coerce(key, raw.strip())
    return BenchmarkConfig(**values).validate()


def load_config(path) -> BenchmarkConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err.strerror or err}") from err
    return parse_config(text)


def render_config(cfg: BenchmarkConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in asdict(cfg).items())


# --- runs ---------------------------------------------------------------------


@dataclass(frozen=True)
class ObservationSequence:
    times: np.ndarray
    values: np.ndarray
    truth: np.ndarray | None = None


def alternating_observations(n_obs: int, spacing: float = 1.0) -> ObservationSequence:
    """``z_k = -1`` for odd ``k`` and ``+1`` for even ``k`` at ``T_k = k * spacing``."""
    k = np.arange(1, n_obs + 1)
    return ObservationSequence(k * spacing, np.where(k % 2 == 1, -1.0, 1.0))


def simulated_observations(cfg: BenchmarkConfig, seed: int) -> ObservationSequence:
    """Hidden path of the target SDE from ``x0`` observed with Gaussian noise."""
    rng = SeedStreams(seed).stream(TRUTH)
    model = cfg.target_model()
    inc = rng.normal(0.0, math.sqrt(cfg.dt), size=cfg.n_obs * cfg.I)
    states = euler_states(cfg.x0, inc, model.drift, model.sigma, cfg.dt)
    truth = states[cfg.I :: cfg.I]
    values = truth + rng.normal(0.0, math.sqrt(cfg.obs_var), size=cfg.n_obs)
    k = np.arange(1, cfg.n_obs + 1)
    return ObservationSequence(k * cfg.spacing, values, truth)


def observations_for(cfg: BenchmarkConfig, seed: int | None = None) -> ObservationSequence:
    seed = cfg.seed if seed is None else seed
    if cfg.simulate_truth:
        return simulated_observations(cfg, seed)
    return alternating_observations(cfg.n_obs, cfg.spacing)


def run_single(cfg: BenchmarkConfig, variant: str, seed: int | None = None,
               observations: ObservationSequence | None = None) -> list[FilterRecord]:
    seed = cfg.seed if seed is None else seed
    obs = observations if observations is not None else observations_for(cfg, seed)
    if variant == "generic":
        return run_filter(obs.values, cfg.x0, cfg.n_particles_generic, cfg.filter_setup(),
                          SeedStreams(seed, GENERIC_FILTER))
    if variant == "mcmc":
        return run_filter(obs.values, cfg.x0, cfg.n_particles_mcmc, cfg.filter_setup(),
                          SeedStreams(seed, MCMC_FILTER), cfg.rejuvenation())
    raise ValueError(f"unknown filter variant {variant!r}")


@dataclass(frozen=True)
class BenchmarkResult:
    generic: list[FilterRecord]
    mcmc: list[FilterRecord]
    observations: ObservationSequence
    seed: int


def run_benchmark(cfg: BenchmarkConfig, seed: int | None = None) -> BenchmarkResult:
    seed = cfg.seed if seed is None else seed
    obs = observations_for(cfg, seed)
    log.info("generic filter, N=%d, seed=%d", cfg.n_particles_generic, seed)
    generic = run_single(cfg, "generic", seed, obs)
    log.info("MCMC filter, N=%d, seed=%d", cfg.n_particles_mcmc, seed)
    mcmc = run_single(cfg, "mcmc", seed, obs)
    return BenchmarkResult(generic, mcmc, obs, seed)


# --- outputs ------------------------------------------------------------------


def _num(x) -> str:
    return "" if x is None else format(float(x), ".17g")


def write_csv(records: Sequence[FilterRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([r.k, _num(r.t), _num(r.z), _num(r.post_mean), _num(r.ess),
                             _num(r.ess_pct), _num(r.accept_rate)])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def emit_plot(records_generic: Sequence[FilterRecord], records_mcmc: Sequence[FilterRecord],
              observations: ObservationSequence, path) -> None:
    """Two-panel SVG: posterior means against observations, and ESS in percent."""
    if len(records_generic) != len(records_mcmc):
        raise ValueError("both filters must have one record per observation")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "driftrelax"
    # keep labels as <text> elements
    matplotlib.rcParams["svg.fonttype"] = "none"
    n_gen = records_generic[0].n_particles if records_generic else 0
    n_mc = records_mcmc[0].n_particles if records_mcmc else 0
    gen_label = f"generic particle filter (N={n_gen})"
    mc_label = f"particle filter with MCMC step (N={n_mc})"
    t_gen = [r.t for r in records_generic]
    t_mc = [r.t for r in records_mcmc]

    fig, (top, bottom) = plt.subplots(2, 1, figsize=(7, 7), sharex=True)
    top.set_gid("panel-estimate")
    bottom.set_gid("panel-ess")
    top.plot(t_gen, [r.post_mean for r in records_generic], "s--", label=gen_label)
    top.plot(t_mc, [r.post_mean for r in records_mcmc], "o-", label=mc_label)
    top.plot(observations.times, observations.values, "kx", markersize=9, label="observations", gid="observations")
    if observations.truth is not None:
        top.plot(observations.times, observations.truth, "k:", label="hidden state")
    top.set_ylabel("posterior mean of X_t")
    top.legend(loc="best", fontsize="small")
    bottom.plot(t_gen, [r.ess_pct for r in records_generic], "s--", label=gen_label)
    bottom.plot(t_mc, [r.ess_pct for r in records_mcmc], "o-", label=mc_label)
    bottom.set_ylabel("effective sample size (% of N)")
    bottom.set_xlabel("t")
    bottom.set_ylim(0, 105)
    bottom.legend(loc="best", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def git_blob_hash(data: bytes) -> str:
    """Content hash as computed by ``git hash-object``."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def write_manifest(out_dir, cfg: BenchmarkConfig, seed: int, config_bytes: bytes | None,
                   outputs: Sequence[str]) -> Path:
    out_dir = Path(out_dir)
    manifest = {
        "version": __version__,
        "seed": seed,
        "config": asdict(replace(cfg, seed=seed)),
        "config_file_hash": git_blob_hash(config_bytes) if config_bytes is not None else None,
        "resolved_config_hash": git_blob_hash(render_config(replace(cfg, seed=seed)).encode()),
        "outputs": {name: git_blob_hash((out_dir / name).read_bytes()) for name in outputs},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def write_benchmark(result: BenchmarkResult, cfg: BenchmarkConfig, out_dir,
                    config_bytes: bytes | None = None) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "generic": out_dir / "generic.csv",
        "mcmc": out_dir / "mcmc.csv",
        "plot": out_dir / "comparison.svg",
    }
    write_csv(result.generic, paths["generic"])
    write_csv(result.mcmc, paths["mcmc"])
    emit_plot(result.generic, result.mcmc, result.observations, paths["plot"])
    paths["manifest"] = write_manifest(out_dir, cfg, result.seed, config_bytes,
                                       [p.name for p in paths.values()])
    return paths
