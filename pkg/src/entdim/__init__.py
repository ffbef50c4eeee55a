"""Entanglement-dimension certification for few-body lattice systems."""
from .bounds import (BoundModel, BoundValue, bound_attractive, bound_multiparticle,
                     bound_repulsive, bound_tripartite, csi_bound, optimize_lambda)
from .certifier import CertificationResult, FidelityCertifier, certify_exact, certify_shots
from .config import ConfigError, ExperimentConfig
from .fock import FockBasis, LatticeSpec, SpeciesConfig, Statistics, enumerate_basis, make_basis
from .hubbard import (DensityMatrix, HubbardParams, apply_dephasing, build_hamiltonian,
                      disorder_realization, ground_state, thermal_state)
from .momentum import WannierEnvelope, coherence_tensor, momentum_density
from .reconstruction import build_mode_set, build_overlap, project_coefficients, solve_g
from .reference import (ReferenceKind, ReferenceState, ThresholdLadder, certified_dimension,
                        exact_fidelity, make_reference, schmidt_decompose)
from .sampling import ShotRecord, ShotSet, sample_momenta, sample_positions
from .stats import BootstrapPlan, SweepResult, bootstrap_se, disorder_average, fit_linear, \
    fit_powerlaw

__version__ = "0.1.0"
