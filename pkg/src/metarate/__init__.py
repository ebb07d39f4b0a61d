"""Rate functionals and metastable time-scale hierarchies of finite CTMCs."""

from .asymptotic import ZERO, AsymptoticScalar, RateFamily, asym
from .chains import (
    ChainSpec,
    ClassDecomposition,
    Generator,
    ProbabilityMeasure,
    build_generator,
    classify_states,
    extreme_stationary_states,
    hitting_probability,
    load_chain_spec,
    save_chain_spec,
    simulate_empirical_measure,
    stationary_distribution,
    transition_matrix,
)
from .gamma import (
    GammaTable,
    LevelFunctionalInput,
    decompose_measure,
    expansion_residual,
    gamma_liminf_probe,
    gamma_limsup_table,
    level_functional,
    recovery_sequence,
)
from .hierarchy import HierarchyTree, a_coefficients, build_tree, t1_check
from .operators import TiltPotential, harmonic_extension, reflect, tilt, trace
from .rate import RateReport, j_functional, rate, rate_irreducible

__version__ = "0.1.0"

__all__ = [
    "AsymptoticScalar",
    "ZERO",
    "asym",
    "RateFamily",
    "ChainSpec",
    "Generator",
    "ClassDecomposition",
    "ProbabilityMeasure",
    "build_generator",
    "classify_states",
    "stationary_distribution",
    "extreme_stationary_states",
    "transition_matrix",
    "hitting_probability",
    "simulate_empirical_measure",
    "load_chain_spec",
    "save_chain_spec",
    "TiltPotential",
    "reflect",
    "tilt",
    "trace",
    "harmonic_extension",
    "RateReport",
    "j_functional",
    "rate",
    "rate_irreducible",
    "HierarchyTree",
    "build_tree",
    "a_coefficients",
    "t1_check",
    "GammaTable",
    "LevelFunctionalInput",
    "decompose_measure",
    "level_functional",
    "recovery_sequence",
    "gamma_limsup_table",
    "gamma_liminf_probe",
    "expansion_residual",
]
