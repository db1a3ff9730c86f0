"""Search engines: UCB acquisition and its maximizer, CMA-ES / PSO / DE generations."""
from .acquisition import AcquisitionConfig, maximize_acquisition, pattern_search, ucb
from .ea import (
    CMAES,
    DE,
    EA_KINDS,
    PSO,
    EAConfig,
    Population,
    ea_step,
    environmental_selection,
    identify_promising,
    init_population,
    rescore,
)
from .sampling import latin_hypercube, uniform_population

__all__ = [
    "AcquisitionConfig",
    "maximize_acquisition",
    "pattern_search",
    "ucb",
    "CMAES",
    "DE",
    "EA_KINDS",
    "PSO",
    "EAConfig",
    "Population",
    "ea_step",
    "environmental_selection",
    "identify_promising",
    "init_population",
    "rescore",
    "latin_hypercube",
    "uniform_population",
]
