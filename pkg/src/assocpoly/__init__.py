"""Connection coefficients for associated classical orthogonal polynomials.

The package builds structured (divide-and-conquer) representations of the
upper-triangular connection matrices between associated classical orthogonal
polynomials and classical families, provides closed-form coefficient
formulas as independent oracles, coefficient-space series transforms, and
weighted Hilbert transform synthesis on [-1, 1].
"""

from .banded import (
    GivensChain,
    ShufflePerm,
    UpperBanded,
    apply_chain,
    back_substitute,
    band_matvec,
    block_qr_2x2,
    last_cols_inverse,
    perfect_shuffle,
)
from .dc import (
    CauchyOperator,
    EigenDiag,
    SolveOptions,
    StructuredConnection,
    cauchy_solve,
    condition_estimate,
    hierarchical_cauchy_matvec,
    norm_estimate,
    offdiag_rhs,
    refine_collisions,
    solve_forced_gevp,
    solve_gevp,
    structured_matvec,
    structured_solve,
    structured_transpose_matvec,
)
from .errors import (
    BasisMismatchError,
    ConfigurationError,
    DegeneracyError,
    DomainError,
    NumericalError,
    RefinementError,
    SingularityError,
)
from .families import (
    OPFamily,
    QuadSpectrum,
    RecurrenceCoeffs,
    classical_eigenvalue,
    clenshaw_eval,
    eval_sequence,
    hermite,
    jacobi,
    laguerre,
    leading_coeff_ratios,
    log_norm_h,
    norm_h,
    quad_spectrum,
    recurrence,
)
from .hilbert import (
    MeasureHilbert,
    elliott_kernel_check,
    hasegawa_torii,
    hilbert_legendre,
    hilbert_uniform_measure,
    pv_hilbert_oracle,
    uniform_chebU_moments,
    uniform_measure,
)
from .ladder import (
    ForcedSystem,
    LadderOp,
    QEPDiscretization,
    assemble_classical_connection,
    assemble_forced,
    assemble_qep,
    hermite_ops,
    jacobi_derivative,
    jacobi_lower,
    jacobi_multiplication,
    jacobi_raise,
    laguerre_ops,
    poly_of_M,
)
from .oracles import (
    LogGammaProduct,
    first_assoc_legendre,
    first_assoc_legendre_matrix,
    hermite_connection,
    hermite_connection_matrix,
    jacobi_half_connection,
    jacobi_half_connection_matrix,
    ultraspherical_connection,
    ultraspherical_connection_matrix,
)
from .qep import (
    AssocConnection,
    AssociatedConnection,
    LinearizedPencil,
    degenerate_connection,
    kronecker_factor_identity_check,
    linearize,
    solve_associated,
    solve_coupled,
    solve_direct_plus,
    solve_first_association,
    spectral_gap_predicate,
    triangularize,
)
from .series import (
    Basis,
    CoeffVector,
    chebyshev_analyze,
    chebyshev_points,
    chebyshev_synthesize,
    chebyshev_to_jacobi,
    classical_connection,
    convert,
    jacobi_to_chebyshev,
    kratio_vector,
)

__version__ = "0.1.0"
