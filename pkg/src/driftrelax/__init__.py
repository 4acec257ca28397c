"""Conditional path sampling for SDEs through drift relaxation."""

__version__ = "0.1.0"

from driftrelax.filters import (
    FilterRecord,
    FilterSetup,
    ParticleEnsemble,
    Rejuvenation,
    effective_sample_size,
    pf_step_generic,
    pf_step_mcmc,
    run_filter,
)
from driftrelax.sampler import (
    ConditionalProblem,
    HmcConfig,
    RelaxationLadder,
    make_ladder,
    sample_conditional_path,
    sample_conditional_paths,
)
from driftrelax.sde import (
    IncrementPath,
    RelaxedModel,
    SdeModel,
    double_well,
    propagate,
    scaled_well,
    zero_drift,
)
from driftrelax.streams import SeedStreams

__all__ = [
    "ConditionalProblem",
    "FilterRecord",
    "FilterSetup",
    "HmcConfig",
    "IncrementPath",
    "ParticleEnsemble",
    "Rejuvenation",
    "RelaxationLadder",
    "RelaxedModel",
    "SdeModel",
    "SeedStreams",
    "double_well",
    "effective_sample_size",
    "make_ladder",
    "pf_step_generic",
    "pf_step_mcmc",
    "propagate",
    "run_filter",
    "sample_conditional_path",
    "sample_conditional_paths",
    "scaled_well",
    "zero_drift",
]
