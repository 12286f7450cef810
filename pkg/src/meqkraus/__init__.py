"""Time-local master equations and their evolution maps.

Forward: generator -> transfer matrix -> Choi matrix -> signed Kraus operators.
Backward: transfer-matrix trajectory -> exact or best-possible generator.
"""

__version__ = "0.1.0"

from .basis import (
    DimensionError,
    HermitianBasis,
    build_basis,
    coefficients,
    devectorize,
    pauli_matrices,
    superop_matrix,
    tau_basis,
    vectorize,
)
from .generators import (
    ChoiFormGenerator,
    LindbladGenerator,
    TabulatedGenerator,
    generator_to_matrix,
)
from .propagator import TimeGrid, Trajectory, differentiate_trajectory, propagate
from .recovery import (
    ConsistencyReport,
    RecoveryResult,
    SVDFactors,
    best_possible_diagnostics,
    check_consistency,
    generator_to_choi_R,
    kernel_projector,
    pseudo_inverse,
    recover_generator,
    solution_family_member,
)
from .superop import (
    KrausDecomposition,
    apply_transfer,
    choi_in_basis,
    choi_to_kraus,
    hs_norm,
    intermediate_map,
    is_completely_positive,
    kraus_to_choi,
    kraus_to_transfer,
    transfer_to_choi,
)
