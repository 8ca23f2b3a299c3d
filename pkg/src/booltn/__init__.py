"""Boolean tensor networks via QUBO-based Boolean matrix factorization."""

__version__ = "0.1.0"

from .tensor import (
    BooleanMatrix,
    BooleanTensor,
    BtnFormatError,
    ShapeError,
    bool_matmul,
    hamming,
    read_btn,
    reshape,
    unfold,
    write_btn,
)
from .hubo import Hubo, Qubo, build_column_hubo, default_strength, evaluate, hubo_to_qubo
from .solvers import (
    SolveRequest,
    SolveResult,
    pack_and_solve,
    reads_for_rank,
    solve_exhaustive,
    solve_greedy,
    solve_sa,
)
from .factorization import (
    FactorizationParams,
    FactorizationResult,
    QuboCache,
    Solver,
    boolean_nnsvd,
    column_factorization,
    iterative_matrix_factorization,
    matrix_factorization,
)
from .networks import (
    TensorNetwork,
    contract,
    decompose,
    error_rate,
    hierarchical_tucker,
    iterative_tucker,
    recursive_tucker,
    split_tt,
    tensor_train,
)
from .experiment import ExperimentConfig, RunReport, add_noise, generate_ground_truth, run_experiment
