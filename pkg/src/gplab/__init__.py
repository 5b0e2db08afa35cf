"""Simulation and inference for exchangeable Gibbs partitions built from
mixtures of Ewens-Pitman partitions."""

from gplab.errors import BoundaryError, ConfigError, MembershipError, NumericalError
from gplab.harness import ExperimentConfig, ReplicateRecord, run_experiment
from gplab.mixing import MixingSpec, ParticleMeasure, discretize, exact_log_v
from gplab.partition import (Assignment, PartitionState, SuffStats, enumerate_exact,
                             path_probability, sample_partitions)
from gplab.predict import (SimplexKind, SimplexPair, SubsetCI, estimate_simplex, f_divergence,
                           kl, local_ci, sample_subset_In, tv, uniform_ci)
from gplab.qmle import Boundary, QmleResult, ci_alpha, qmle
from gplab.sibuya import FisherInfo, fisher_info, psi, psi_derivative, psi_n, sibuya_pmf

__version__ = "0.1.0"

__all__ = [
    "Assignment", "Boundary", "BoundaryError", "ConfigError", "ExperimentConfig", "FisherInfo",
    "MembershipError", "MixingSpec", "NumericalError", "ParticleMeasure", "PartitionState",
    "QmleResult", "ReplicateRecord", "SimplexKind", "SimplexPair", "SubsetCI", "SuffStats",
    "ci_alpha", "discretize", "enumerate_exact", "estimate_simplex", "exact_log_v",
    "f_divergence", "fisher_info", "kl", "local_ci", "path_probability", "psi",
    "psi_derivative", "psi_n", "qmle", "run_experiment", "sample_partitions",
    "sample_subset_In", "sibuya_pmf", "tv", "uniform_ci",
]
