"""Entanglement witnesses for atoms in optical lattices from time-of-flight correlations."""

from .entanglement_bounds import (
    WitnessReport,
    binary_entropy,
    concurrence,
    eof_bound_occupation,
    eof_bound_occupation_defects,
    eof_from_fidelity,
    fidelity_one_atom,
    lambda_general,
    rotate_state,
    ssr_eof,
    witness_report,
    witness_report_from_record,
    wootters_eof,
)
from .fock_space import DensityOperator, LatticeGeometry, ManyBodyState, Statistics
from .reduced_density import BipartiteReducedState, delocalized_rho_ab
from .state_builders import DefectBudget, build_bell_chain, build_delocalized_atoms, build_mott
from .tof_observables import MeasurementRecord, MomentumGrid, WannierEnvelope, simulate_record

__version__ = "0.1.0"

__all__ = [
    "BipartiteReducedState", "DefectBudget", "DensityOperator", "LatticeGeometry", "ManyBodyState",
    "MeasurementRecord", "MomentumGrid", "Statistics", "WannierEnvelope", "WitnessReport",
    "binary_entropy", "build_bell_chain", "build_delocalized_atoms", "build_mott", "concurrence",
    "delocalized_rho_ab", "eof_bound_occupation", "eof_bound_occupation_defects", "eof_from_fidelity",
    "fidelity_one_atom", "lambda_general", "rotate_state", "simulate_record", "ssr_eof",
    "witness_report", "witness_report_from_record", "wootters_eof",
]
