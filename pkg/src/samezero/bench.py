"""Benchmark harness: score algorithms over board sets and emit CSV.

A benchmark is a grid of (algorithm, board, run) cells.  Cells execute
sequentially so wall-clock numbers stay honest; each cell may still use
search-internal threads.  Every episode's score is re-verified by
replaying its action sequence through the engine before the row is
emitted.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .board import (
    Board,
    BoardSeed,
    apply_action,
    find_groups,
    generate_board,
    group_representative,
    load_position_file,
    replay_actions,
)
from .mcts import (
    ROLLOUT_POLICY,
    ROLLOUT_RANDOM,
    SearchConfig,
    SearchContractError,
    SearchUsageError,
    play_episode,
)

logger = logging.getLogger(__name__)

ALGO_PLAIN = "plain-mcts"
ALGO_POLICY_RANDOM = "policy-mcts-random"
ALGO_POLICY_GUIDED = "policy-mcts-guided"
ALGO_GREEDY = "greedy"
ALGORITHMS = (ALGO_PLAIN, ALGO_POLICY_RANDOM, ALGO_POLICY_GUIDED, ALGO_GREEDY)

CSV_COLUMNS = (
    "algorithm",
    "board_id",
    "run_id",
    "score",
    "simulations",
    "expansions",
    "leaf_expansions",
    "wall_time_s",
)

# 99% two-sided normal quantile, used for the summary confidence bands.
Z99 = 2.576
# 99% one-sided threshold for paired significance calls.
Z99_ONE_SIDED = 2.326

_NS_BENCH_BOARD = 11
_NS_BENCH_RUN = 12


@dataclass
class BenchmarkSpec:
    """Grid definition: boards x runs x algorithms under one budget.

    Exactly one of ``simulations`` and ``time_budget_s`` must be set.
    ``position_dir`` switches the board source from seeded generation to
    position files (every ``*.txt`` in the directory, sorted).
    """

    height: int = 15
    width: int = 15
    num_colors: int = 5
    boards: int = 500
    runs_per_board: int = 5
    algorithms: tuple[str, ...] = (ALGO_PLAIN,)
    simulations: Optional[int] = 100
    time_budget_s: Optional[float] = None
    c_puct: float = 4.0
    plain_threads: int = 16
    policy_threads: int = 100
    tree_reuse: bool = False
    position_dir: Optional[str] = None
    board_seed: int = 0
    seed: int = 0

    def validate(self) -> None:
        if self.boards < 1:
            raise SearchUsageError("boards must be >= 1")
        if self.runs_per_board < 1:
            raise SearchUsageError("runs_per_board must be >= 1")
        if not self.algorithms:
            raise SearchUsageError("at least one algorithm is required")
        for name in self.algorithms:
            if name not in ALGORITHMS:
                raise SearchUsageError(
                    f"unknown algorithm {name!r}; choose from {ALGORITHMS}"
                )
        if (self.simulations is None) == (self.time_budget_s is None):
            raise SearchUsageError(
                "exactly one of simulations and time_budget_s must be set"
            )
        if self.simulations is not None and self.simulations < 1:
            raise SearchUsageError("simulations must be >= 1")
        if self.time_budget_s is not None and self.time_budget_s <= 0:
            raise SearchUsageError("time_budget_s must be positive")
        if self.plain_threads < 1 or self.policy_threads < 1:
            raise SearchUsageError("thread counts must be >= 1")


@dataclass
class BenchmarkRow:
    algorithm: str
    board_id: str
    run_id: int
    score: int
    simulations: int
    expansions: int
    leaf_expansions: int
    wall_time_s: float

    def as_csv(self) -> list:
        return [
            self.algorithm,
            self.board_id,
            self.run_id,
            self.score,
            self.simulations,
            self.expansions,
            self.leaf_expansions,
            repr(self.wall_time_s),
        ]


@dataclass
class CellSummary:
    """Per-algorithm aggregate over every (board, run) in the grid."""

    algorithm: str
    runs: int
    mean_score: float
    std_score: float
    ci99_half_width: float
    mean_simulations: float
    mean_expansions: float
    mean_leaf_expansions: float
    mean_wall_time_s: float


@dataclass
class SignificanceReport:
    """Paired one-sided comparison: is candidate better than baseline?"""

    diff_mean: float
    diff_std: float
    n: int
    z: float
    threshold: float = Z99_ONE_SIDED

    @property
    def significant(self) -> bool:
        return self.z > self.threshold


def paired_one_sided_z(candidate: Sequence[float],
                       baseline: Sequence[float]) -> SignificanceReport:
    """Paired z-statistic for mean(candidate - baseline) > 0.

    Scores must be paired by board (same index = same board).  A zero
    difference vector yields z=0, never a division error.
    """
    c = np.asarray(candidate, dtype=np.float64)
    b = np.asarray(baseline, dtype=np.float64)
    if c.shape != b.shape or c.ndim != 1 or c.size < 2:
        raise ValueError("candidate and baseline must be equal-length 1-d, n >= 2")
    d = c - b
    sd = float(d.std(ddof=1))
    mean = float(d.mean())
    z = 0.0 if sd == 0.0 else mean / (sd / math.sqrt(d.size))
    return SignificanceReport(diff_mean=mean, diff_std=sd, n=d.size, z=z)


def greedy_episode(board: Board) -> tuple[list, int]:
    """Always clear the largest group; ties break on canonical action order.

    Returns the action list and the final score (terminal penalty or
    clearance bonus included).  A cheap anchor, not a search algorithm.
    """
    actions = []
    total = 0
    while not board.is_terminal:
        groups = find_groups(board)
        best = max(groups, key=lambda grp: (len(grp), group_representative(grp)))
        act = group_representative(best)
        out = apply_action(board, act)
        actions.append(act)
        total += out.move_score + out.terminal_adjustment
        board = out.board
    return actions, total


def benchmark_boards(spec: BenchmarkSpec) -> list[tuple[str, Board]]:
    """Materialize the board set as (board_id, Board) pairs."""
    if spec.position_dir is not None:
        paths = sorted(Path(spec.position_dir).glob("*.txt"),
                       key=lambda p: (len(p.stem), p.stem))
        if not paths:
            raise SearchUsageError(f"no *.txt position files in {spec.position_dir}")
        return [(p.stem, load_position_file(p)) for p in paths]
    out = []
    for i in range(spec.boards):
        seed = int(np.random.SeedSequence(
            [spec.board_seed, _NS_BENCH_BOARD, i]).generate_state(1)[0])
        b = generate_board(BoardSeed(seed, width=spec.width, height=spec.height,
                                     num_colors=spec.num_colors))
        out.append((str(i), b))
    return out


def _search_config(spec: BenchmarkSpec, algorithm: str, seed: int) -> SearchConfig:
    if algorithm == ALGO_PLAIN:
        threads, rollout = spec.plain_threads, ROLLOUT_RANDOM
    elif algorithm == ALGO_POLICY_RANDOM:
        threads, rollout = spec.policy_threads, ROLLOUT_RANDOM
    else:
        threads, rollout = spec.policy_threads, ROLLOUT_POLICY
    return SearchConfig(
        simulations_per_move=spec.simulations or 1,
        time_budget_s=spec.time_budget_s,
        c_puct=spec.c_puct,
        thread_count=threads,
        rollout_mode=rollout,
        tree_reuse=spec.tree_reuse,
        seed=seed,
    )


def _verified_score(start: Board, actions: Sequence, claimed: int) -> None:
    _, replayed = replay_actions(start, [(a.row, a.col) for a in actions])
    if replayed != claimed:
        raise SearchContractError(
            f"score mismatch: engine replay {replayed} vs claimed {claimed}"
        )


def run_benchmark(spec: BenchmarkSpec, policy=None,
                  progress: bool = False) -> list[BenchmarkRow]:
    """Execute the full grid and return one row per (algorithm, board, run).

    ``policy`` is required for the policy-mcts algorithms.  Rows appear
    in algorithm-major, board-minor, run-innermost order.
    """
    spec.validate()
    needs_policy = any(a in (ALGO_POLICY_RANDOM, ALGO_POLICY_GUIDED)
                       for a in spec.algorithms)
    if needs_policy and policy is None:
        raise SearchUsageError("policy model required for policy-mcts algorithms")
    boards = benchmark_boards(spec)
    rows: list[BenchmarkRow] = []
    for algorithm in spec.algorithms:
        for bi, (board_id, board) in enumerate(boards):
            for run in range(spec.runs_per_board):
                if algorithm == ALGO_GREEDY:
                    actions, score = greedy_episode(board)
                    _verified_score(board, actions, score)
                    rows.append(BenchmarkRow(algorithm, board_id, run, score,
                                             0, 0, 0, 0.0))
                    continue
                seed = int(np.random.SeedSequence(
                    [spec.seed, _NS_BENCH_RUN,
                     ALGORITHMS.index(algorithm), bi, run]).generate_state(1)[0])
                cfg = _search_config(spec, algorithm, seed)
                use_policy = policy if algorithm != ALGO_PLAIN else None
                episode = play_episode(board, cfg, use_policy)
                _verified_score(board, episode.actions, episode.final_score)
                rows.append(BenchmarkRow(
                    algorithm=algorithm,
                    board_id=board_id,
                    run_id=run,
                    score=episode.final_score,
                    simulations=sum(s.search.simulations for s in episode.steps),
                    expansions=sum(s.search.expansions for s in episode.steps),
                    leaf_expansions=sum(s.search.leaf_expansions
                                        for s in episode.steps),
                    wall_time_s=sum(s.search.wall_time_s for s in episode.steps),
                ))
            if progress:
                logger.info("bench %s: board %d/%d done",
                            algorithm, bi + 1, len(boards))
    return rows


def summarize(rows: Sequence[BenchmarkRow]) -> list[CellSummary]:
    """Aggregate rows per algorithm: mean score with 99% CI, mean counters."""
    out = []
    seen: list[str] = []
    for row in rows:
        if row.algorithm not in seen:
            seen.append(row.algorithm)
    for algorithm in seen:
        scores = np.array([r.score for r in rows if r.algorithm == algorithm],
                          dtype=np.float64)
        sub = [r for r in rows if r.algorithm == algorithm]
        std = float(scores.std(ddof=1)) if scores.size > 1 else 0.0
        half = Z99 * std / math.sqrt(scores.size) if scores.size > 1 else 0.0
        out.append(CellSummary(
            algorithm=algorithm,
            runs=scores.size,
            mean_score=float(scores.mean()),
            std_score=std,
            ci99_half_width=half,
            mean_simulations=float(np.mean([r.simulations for r in sub])),
            mean_expansions=float(np.mean([r.expansions for r in sub])),
            mean_leaf_expansions=float(np.mean([r.leaf_expansions for r in sub])),
            mean_wall_time_s=float(np.mean([r.wall_time_s for r in sub])),
        ))
    return out


def render_summary(summaries: Sequence[CellSummary]) -> str:
    """Fixed-width text table of the per-algorithm aggregates."""
    header = (f"{'algorithm':<20} {'runs':>6} {'mean':>9} {'ci99':>8} "
              f"{'sims':>10} {'expand':>10} {'leaf':>10} {'wall_s':>9}")
    lines = [header, "-" * len(header)]
    for s in summaries:
        lines.append(
            f"{s.algorithm:<20} {s.runs:>6d} {s.mean_score:>9.1f} "
            f"{s.ci99_half_width:>8.1f} {s.mean_simulations:>10.1f} "
            f"{s.mean_expansions:>10.1f} {s.mean_leaf_expansions:>10.1f} "
            f"{s.mean_wall_time_s:>9.3f}"
        )
    return "\n".join(lines)


def write_csv(rows: Sequence[BenchmarkRow], path) -> None:
    """Write the documented schema: header plus one row per line."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(row.as_csv())


def read_csv(path) -> list[BenchmarkRow]:
    """Inverse of write_csv, for tests and downstream tooling."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV columns: {reader.fieldnames}")
        for rec in reader:
            out.append(BenchmarkRow(
                algorithm=rec["algorithm"],
                board_id=rec["board_id"],
                run_id=int(rec["run_id"]),
                score=int(rec["score"]),
                simulations=int(rec["simulations"]),
                expansions=int(rec["expansions"]),
                leaf_expansions=int(rec["leaf_expansions"]),
                wall_time_s=float(rec["wall_time_s"]),
            ))
    return out
