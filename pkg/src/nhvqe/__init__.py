"""Variational eigensolver for non-Hermitian spin chains."""

from .circuit import AnsatzParams, GateKind, GateOp, apply_ansatz, apply_gate, simulate_batch
from .cost import EigenSide, EnergyParam, VarianceObjective, cost, grad_energy, grad_theta, variance_operator
from .estimator import BiorthogonalEstimator, SpectrumScanner, VarianceEigensolver
from .exceptions import (
    AmbiguityError,
    ConfigError,
    ContractViolation,
    DegenerateOverlapError,
    DimensionError,
    NHVQEError,
    NumericalDivergenceError,
    ResourceError,
)
from .noise import (
    DensityMatrix,
    MitigationPlan,
    NoiseModel,
    NoisyObjective,
    mitigated_optimize,
    noisy_ansatz,
    noisy_cost,
    richardson_extrapolate,
    richardson_weights,
)
from .optimizer import EigenSolution, OptimizerConfig, Pin, ScanConfig, SpectrumReport, optimize_theta, spectrum_scan, two_step_optimize
from .oracle import EigenDecomposition, exact_eig, exceptional_point_scan, locate_exceptional_point
from .overlap import biorthogonal_expectation, fidelity, hadamard_test, matrix_element
from .pauli import BoundaryCondition, PauliSum, PauliTerm, adjoint, build_ising, sum_product, to_dense

__version__ = "0.1.0"
