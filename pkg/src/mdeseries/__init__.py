"""Tree-indexed Laurent series and fixed-point solvers for the matrix Dyson equation."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConvergenceError,
    MdeError,
    NumericalError,
    ResourceLimitError,
    SeriesDivergenceWarning,
    StructureError,
    ValidationError,
)
from .fixed_point import SolverConfig, solve_mde, stieltjes_checks, vector_dyson_solve  # noqa: E402
from .laurent import (  # noqa: E402
    coefficients,
    compute_coefficients,
    decay_constants,
    laurent_M,
    val_bruteforce,
    val_recursive,
    verify_offdiagonal_decay,
)
from .operators import (  # noqa: E402
    DenseOperator,
    FactoredOperator,
    VarianceProfileOperator,
    filtered_gaussian_operator,
    rho,
    wigner_operator,
)
from .sampler import EnsembleConfig, moment_convergence_study, sample_batch  # noqa: E402
from .trees import OrderedTree, compose, decompose, enumerate_trees, summation_graphs  # noqa: E402
