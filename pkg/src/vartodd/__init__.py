"""vartodd: parity-matrix column-count (T-count) optimizer with a tunable search policy."""

from .gf2 import BitMatrix, BitVector, and_popcount_parity, nullspace_basis, rank, xor_in_place
from .parity import (
    MatrixFormatError,
    ParityMatrix,
    SignatureTensor,
    density,
    parse_matrix,
    format_matrix,
    read_matrix_file,
    signature_tensor,
    simplify,
    tensors_equal,
    write_matrix_file,
)
from .engine import (
    Action,
    ConstraintSystem,
    apply_action,
    constraint_system,
    nullspace_for_z,
    reduction_upper_bound,
    tohpe_subspace,
    z_candidates,
)
from .policy import (
    FeatureVector,
    Policy,
    Schedule,
    default_policy,
    final_score,
    greedy_preset,
    policy_digest,
    policy_from_config,
    policy_to_config,
    pool_score,
    schedule_eval,
    softmax_select,
)
from .search import (
    EvalCounter,
    SearchBudget,
    Trajectory,
    optimize,
    optimize_beam,
    parse_trajectory,
    format_trajectory,
    read_trajectory_file,
    run_iteration,
    write_trajectory_file,
)
from .tuner import (
    FitnessReport,
    MappingEntry,
    MappingSpec,
    PathStore,
    Transform,
    TuneSettings,
    fitness,
    policy_mapping,
    pso_optimize,
    set_up_new_init,
    tune,
)
from .bench import (
    DEFAULT_MODULI,
    MultiplicationSpec,
    VerifyReport,
    gen_gf2n,
    gen_random,
    trilinear_terms,
    verify,
)

__version__ = "0.1.0"
