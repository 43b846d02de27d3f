"""mellowgen: sequence-generation MDP solvers, trainers and evaluators
built around the general-mellowmax regularizer family."""

from .regularizers import (
    GmParams,
    conjugate_table,
    gm_backup,
    gm_consistency_term,
    gm_consistency_vector,
    gm_optimal_policy,
    log_softmax,
    omega_gm,
    softmax,
    tilted_decomposition,
)
from .solver import (
    check_trajectory_consistency,
    expected_terminal_reward,
    q_from_values,
    quantile_mass_report,
    solve_backward,
    terminal_distribution,
)
from .spaces import (
    RewardModel,
    SequenceSpace,
    State,
    Trajectory,
    children,
    enumerate_terminals,
    n_terminals,
    render_sequence,
    rollout,
    rollout_batch,
    uniform_policy,
)
from .tasks import (
    BitSequenceReward,
    BitSequenceTask,
    EvalProtocol,
    EvalReport,
    ModeMetrics,
    RewardTable,
    bitseq_reward,
    evaluate_sampler,
    generate_modes,
    greedy_diverse_topk,
    levenshtein,
    mode_metrics,
    normalize_reward,
)
from .training import (
    QFunction,
    TrainConfig,
    TrainingDivergedError,
    TrainLog,
    policy_from_q,
    train,
    vargrad_gradient,
    vargrad_loss,
)
from .uncertainty import (
    Membership,
    UncertaintySetSpec,
    boundary_trace_2d,
    membership,
    minkowski_membership,
)

__version__ = "0.1.0"
