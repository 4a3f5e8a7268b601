"""Policy-guided, tree-parallel Monte-Carlo Tree Search for SameGame.

The package splits into five layers: the game engine (``board``), the
search (``mcts``), policy models (``policy``), the generation training
pipeline (``training``), and the benchmark harness plus CLI (``bench``,
``cli``).
"""

from .board import (
    Action,
    Board,
    BoardSeed,
    IllegalMoveError,
    MoveOutcome,
    PositionFormatError,
    apply_action,
    encode_board,
    find_groups,
    generate_board,
    group_representative,
    legal_actions,
    load_position_file,
    move_score,
    replay_actions,
    save_position_file,
    terminal_penalty,
)
from .mcts import (
    EpisodeResult,
    RootSnapshot,
    SearchConfig,
    SearchResult,
    SearchUsageError,
    dirichlet_mix,
    play_episode,
    search,
)
from .policy import (
    ConvPolicyNet,
    GradCheckReport,
    UniformPolicy,
    cross_entropy,
    gradient_check,
    load_model,
    masked_renormalize,
    save_model,
    uniform_policy,
)
from .training import (
    GenerationConfig,
    GenerationReport,
    PRESETS,
    ReplayBuffer,
    TrainSample,
    evaluate_policy,
    evaluation_boards,
    run_generation,
    split_and_append,
    train_pipeline,
)
from .bench import (
    BenchmarkRow,
    BenchmarkSpec,
    paired_one_sided_z,
    run_benchmark,
    summarize,
    write_csv,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "Board",
    "BoardSeed",
    "IllegalMoveError",
    "MoveOutcome",
    "PositionFormatError",
    "apply_action",
    "encode_board",
    "find_groups",
    "generate_board",
    "group_representative",
    "legal_actions",
    "load_position_file",
    "move_score",
    "replay_actions",
    "save_position_file",
    "terminal_penalty",
    "EpisodeResult",
    "RootSnapshot",
    "SearchConfig",
    "SearchResult",
    "SearchUsageError",
    "dirichlet_mix",
    "play_episode",
    "search",
    "ConvPolicyNet",
    "GradCheckReport",
    "UniformPolicy",
    "cross_entropy",
    "gradient_check",
    "load_model",
    "masked_renormalize",
    "save_model",
    "uniform_policy",
    "GenerationConfig",
    "GenerationReport",
    "PRESETS",
    "ReplayBuffer",
    "TrainSample",
    "evaluate_policy",
    "evaluation_boards",
    "run_generation",
    "split_and_append",
    "train_pipeline",
    "BenchmarkRow",
    "BenchmarkSpec",
    "paired_one_sided_z",
    "run_benchmark",
    "summarize",
    "write_csv",
    "__version__",
]
