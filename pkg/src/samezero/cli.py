"""Command-line entry point: play, train, bench, positions, gradcheck, selftest.

Every subcommand exits 0 on success and nonzero with a diagnostic on any
error.  Play transcripts carry no timestamps, so a fixed seed with one
thread reproduces the output byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .board import (
    Board,
    BoardSeed,
    apply_action,
    generate_board,
    load_position_file,
    replay_actions,
)
from .bench import (
    ALGO_GREEDY,
    ALGO_PLAIN,
    ALGO_POLICY_GUIDED,
    ALGO_POLICY_RANDOM,
    ALGORITHMS,
    BenchmarkSpec,
    greedy_episode,
    render_summary,
    run_benchmark,
    summarize,
    write_csv,
)
from .mcts import ROLLOUT_POLICY, ROLLOUT_RANDOM, SearchConfig, SearchUsageError, play_episode
from .policy import ConvPolicyNet, gradient_check, load_model
from .training import PRESETS, GenerationConfig, train_pipeline

logger = logging.getLogger(__name__)

# Published totals on the 20 public positions, echoed for reference only.
REFERENCE_TOTAL_PLAIN = 60_891
REFERENCE_TOTAL_POLICY = 78_072
STANDARD_POSITION_COUNT = 20


class CliError(Exception):
    """User-facing command failure; message printed to stderr, exit 1."""


def _load_policy(path: str | None, required: bool):
    if path is None:
        if required:
            raise CliError("this mode requires --model")
        return None
    try:
        return load_model(path)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot load model {path}: {exc}") from exc


def _board_from_args(args) -> Board:
    if getattr(args, "position", None):
        try:
            return load_position_file(args.position)
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot load position {args.position}: {exc}") from exc
    return generate_board(BoardSeed(args.board_seed, width=args.width,
                                    height=args.height, num_colors=args.colors))


# ---------------------------------------------------------------------------
# Config file handling
# ---------------------------------------------------------------------------

def config_from_mapping(data: dict) -> GenerationConfig:
    """Build a GenerationConfig from a JSON object with strict keys.

    An optional ``preset`` key selects a named baseline; every other key
    must be a GenerationConfig field and overrides the baseline.  Unknown
    or ill-typed keys raise with the full offending list.
    """
    if not isinstance(data, dict):
        raise CliError("config root must be a JSON object")
    data = dict(data)
    preset = data.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise CliError(
                f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        base = dataclasses.asdict(PRESETS[preset])
    else:
        base = dataclasses.asdict(GenerationConfig())
    valid = {f.name for f in dataclasses.fields(GenerationConfig)}
    unknown = sorted(set(data) - valid)
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(unknown)}")
    bad_types = sorted(
        k for k, v in data.items()
        if not isinstance(v, (int, float, str, bool)) or isinstance(v, list)
    )
    if bad_types:
        raise CliError(f"config keys with unsupported values: {', '.join(bad_types)}")
    base.update(data)
    cfg = GenerationConfig(**base)
    cfg.validate()
    return cfg


def _read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"malformed JSON in {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_play(args) -> int:
    board = _board_from_args(args)
    rollout = ROLLOUT_POLICY if args.rollout == "policy" else ROLLOUT_RANDOM
    policy = _load_policy(args.model, required=args.rollout == "policy")
    if board.is_terminal:
        print("board is terminal; no moves available")
        print(f"final score: {-_terminal_penalty(board)}")
        return 0
    cfg = SearchConfig(
        simulations_per_move=args.simulations,
        time_budget_s=args.time_budget,
        c_puct=args.c_puct,
        thread_count=args.threads,
        rollout_mode=rollout,
        tree_reuse=args.tree_reuse,
        seed=args.seed,
    )
    episode = play_episode(board, cfg, policy)
    _, replayed = replay_actions(board, [(a.row, a.col) for a in episode.actions])
    if replayed != episode.final_score:
        raise CliError(f"replay mismatch: {replayed} vs {episode.final_score}")
    running = 0
    for i, step in enumerate(episode.steps):
        running += step.move_score + step.terminal_adjustment
        print(f"move {i:3d}: clear ({step.action.row},{step.action.col}) "
              f"+{step.move_score} total {running}")
    print(f"final score: {episode.final_score} in {len(episode.steps)} moves")
    if args.out:
        _write_episode_log(args.out, board, episode)
        print(f"episode log written to {args.out}")
    return 0


def _terminal_penalty(board: Board) -> int:
    from .board import terminal_penalty
    return terminal_penalty(board)


def _write_episode_log(path: str, start: Board, episode) -> None:
    """Line-delimited JSON: one meta line, then one line per move."""
    with open(path, "w") as fh:
        meta = {
            "height": start.height,
            "width": start.width,
            "num_colors": start.num_colors,
            "final_score": episode.final_score,
            "moves": len(episode.steps),
        }
        fh.write(json.dumps(meta) + "\n")
        for i, step in enumerate(episode.steps):
            fh.write(json.dumps({
                "move": i,
                "action": [step.action.row, step.action.col],
                "move_score": step.move_score,
                "terminal_adjustment": step.terminal_adjustment,
                "simulations": step.search.simulations,
                "expansions": step.search.expansions,
                "leaf_expansions": step.search.leaf_expansions,
                "wall_time_s": round(step.search.wall_time_s, 6),
            }) + "\n")


def cmd_train(args) -> int:
    if args.config:
        cfg = config_from_mapping(_read_json(args.config))
    elif args.preset:
        if args.preset not in PRESETS:
            raise CliError(
                f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
        cfg = PRESETS[args.preset]
    else:
        raise CliError("train requires --preset or --config")
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    out_dir = args.out or "checkpoints"
    result = train_pipeline(cfg, out_dir=out_dir, workers=args.threads)
    for rep in result.reports:
        print(f"generation {rep.generation}: mean {rep.mean_score:.1f} "
              f"sd {rep.std_score:.1f} samples {rep.samples} "
              f"val_loss {rep.val_loss:.4f}")
    print(f"checkpoints in {out_dir}")
    return 0


def cmd_bench(args) -> int:
    algorithms = tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
    spec = BenchmarkSpec(
        height=args.height,
        width=args.width,
        num_colors=args.colors,
        boards=args.boards,
        runs_per_board=args.runs,
        algorithms=algorithms,
        simulations=args.simulations if args.time_budget is None else None,
        time_budget_s=args.time_budget,
        c_puct=args.c_puct,
        plain_threads=args.plain_threads,
        policy_threads=args.policy_threads,
        tree_reuse=args.tree_reuse,
        position_dir=args.positions,
        board_seed=args.board_seed,
        seed=args.seed,
    )
    if args.threads is not None:
        spec.plain_threads = spec.policy_threads = args.threads
    needs_policy = any(a in (ALGO_POLICY_RANDOM, ALGO_POLICY_GUIDED)
                       for a in algorithms)
    policy = _load_policy(args.model, required=needs_policy)
    try:
        rows = run_benchmark(spec, policy, progress=True)
    except SearchUsageError as exc:
        raise CliError(str(exc)) from exc
    print(render_summary(summarize(rows)))
    if args.out:
        write_csv(rows, args.out)
        print(f"CSV written to {args.out}")
    return 0


def cmd_positions(args) -> int:
    pos_dir = Path(args.dir)
    expected = [pos_dir / f"{i}.txt" for i in range(1, STANDARD_POSITION_COUNT + 1)]
    missing = [str(p) for p in expected if not p.exists()]
    if missing:
        raise CliError("missing position files: " + ", ".join(missing))
    if args.simulations is None and args.time_budget is None:
        raise CliError("positions requires --simulations or --time-budget")
    if args.simulations is not None and args.simulations < 1:
        raise CliError("--simulations must be >= 1")

    needs_policy = args.algorithm in (ALGO_POLICY_RANDOM, ALGO_POLICY_GUIDED)
    policy = _load_policy(args.model, required=needs_policy)
    rollout = ROLLOUT_POLICY if args.algorithm == ALGO_POLICY_GUIDED else ROLLOUT_RANDOM
    total = 0
    greedy_total = 0
    print(f"{'position':>9} {'score':>8} {'greedy':>8}")
    for i, path in enumerate(expected, start=1):
        board = load_position_file(path)
        _, greedy_score = greedy_episode(board)
        greedy_total += greedy_score
        if args.algorithm == ALGO_GREEDY:
            score = greedy_score
        else:
            cfg = SearchConfig(
                simulations_per_move=args.simulations or 1,
                time_budget_s=args.time_budget,
                c_puct=args.c_puct,
                thread_count=args.threads,
                rollout_mode=rollout,
                tree_reuse=args.tree_reuse,
                seed=int(np.random.SeedSequence([args.seed, i]).generate_state(1)[0]),
            )
            episode = play_episode(board, cfg, policy if needs_policy else None)
            _, replayed = replay_actions(
                board, [(a.row, a.col) for a in episode.actions])
            if replayed != episode.final_score:
                raise CliError(f"replay mismatch on {path.name}")
            score = episode.final_score
        total += score
        print(f"{path.name:>9} {score:>8d} {greedy_score:>8d}")
    print(f"{'total':>9} {total:>8d} {greedy_total:>8d}")
    print(f"reference totals: plain-mcts {REFERENCE_TOTAL_PLAIN:,} / "
          f"policy-mcts-guided {REFERENCE_TOTAL_POLICY:,}")
    return 0


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    net = ConvPolicyNet(height=args.height, width=args.width,
                        num_colors=args.colors, preset="tiny", seed=args.seed)
    n = args.samples
    x = np.zeros((n, args.height + 2, args.width + 2, args.colors + 1),
                 dtype=np.float32)
    for i in range(n):
        cells = rng.integers(1, args.colors + 1, size=(args.height, args.width))
        rows, cols = np.indices((args.height, args.width))
        x[i, rows + 1, cols + 1, cells] = 1.0
    y = rng.integers(0, args.height * args.width, size=n)
    report = gradient_check(net, x, y, step=args.step, tolerance=args.tolerance)
    status = "PASS" if report.passed else "FAIL"
    print(f"gradcheck {status}: max relative error {report.max_rel_error:.3e} "
          f"over {report.n_checked} parameters "
          f"(tolerance {report.tolerance:.1e}, kink retries {report.kink_retries})")
    return 0 if report.passed else 1


def cmd_selftest(args) -> int:
    """Fast internal consistency sweep; prints one line per check."""
    failures = 0

    def check(name: str, fn) -> None:
        nonlocal failures
        try:
            fn()
            print(f"PASS {name}")
        except Exception as exc:
            failures += 1
            print(f"FAIL {name}: {exc}")

    def engine_invariants():
        rng = np.random.default_rng(args.seed)
        for _ in range(20):
            b = generate_board(BoardSeed(int(rng.integers(2**31)),
                                         width=6, height=6, num_colors=4))
            blocks = b.remaining_blocks()
            while not b.is_terminal:
                act = b.legal_actions()[0]
                out = apply_action(b, act)
                assert out.board.remaining_blocks() < blocks
                blocks = out.board.remaining_blocks()
                b = out.board

    def search_determinism():
        b = generate_board(BoardSeed(7, width=5, height=5, num_colors=4))
        cfg = SearchConfig(simulations_per_move=40, thread_count=1, seed=11)
        a = play_episode(b, cfg)
        c = play_episode(b, cfg)
        assert a.actions == c.actions and a.final_score == c.final_score

    def policy_round_trip():
        import tempfile
        net = ConvPolicyNet(height=5, width=5, num_colors=4, preset="tiny", seed=3)
        x = np.random.default_rng(0).random((4, 7, 7, 5)).astype(np.float32)
        y = np.array([0, 1, 2, 3])
        net.fit(x, y)
        with tempfile.TemporaryDirectory() as tmp:
            p = Path(tmp) / "m.szpn"
            net.save(p)
            again = load_model(p)
            assert np.allclose(net.evaluate_batch(x), again.evaluate_batch(x))

    check("engine-invariants", engine_invariants)
    check("search-determinism", search_determinism)
    check("policy-round-trip", policy_round_trip)
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_board_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--height", type=int, default=7)
    p.add_argument("--width", type=int, default=7)
    p.add_argument("--colors", type=int, default=5)
    p.add_argument("--board-seed", type=int, default=0,
                   help="seed for generated boards")


def _add_budget_args(p: argparse.ArgumentParser, default_sims: int = 100) -> None:
    p.add_argument("--simulations", type=int, default=default_sims,
                   help="fixed simulation budget per move")
    p.add_argument("--time-budget", type=float, default=None,
                   help="wall-clock seconds per move (overrides --simulations)")
    p.add_argument("--c-puct", type=float, default=4.0)
    p.add_argument("--tree-reuse", action="store_true",
                   help="keep the committed child's subtree between moves")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="samezero",
        description="Policy-guided tree-parallel MCTS for SameGame",
    )
    parser.add_argument("--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    # Each subparser gets its own copy of the shared flags; argparse
    # parents share Action objects, so per-command set_defaults on a
    # single parent would leak across commands.
    def common() -> argparse.ArgumentParser:
        c = argparse.ArgumentParser(add_help=False)
        c.add_argument("--seed", type=int, default=0)
        c.add_argument("--threads", type=int, default=1)
        c.add_argument("--model", type=str, default=None,
                       help="path to a saved policy model")
        c.add_argument("--out", type=str, default=None,
                       help="output path (log, CSV, or checkpoint dir)")
        return c

    p = sub.add_parser("play", parents=[common()],
                       help="search and play one episode")
    _add_board_args(p)
    _add_budget_args(p)
    p.add_argument("--position", type=str, default=None,
                   help="position file instead of a generated board")
    p.add_argument("--rollout", choices=["random", "policy"], default="random")
    p.set_defaults(func=cmd_play)

    p = sub.add_parser("train", parents=[common()],
                       help="run the generation training pipeline")
    p.add_argument("--preset", type=str, default=None,
                   help=f"one of {sorted(PRESETS)}")
    p.add_argument("--config", type=str, default=None,
                   help="JSON config file (strict keys; 'preset' selects a baseline)")
    # --seed default None means "keep the config's seed".
    p.set_defaults(func=cmd_train, seed=None)

    p = sub.add_parser("bench", parents=[common()],
                       help="benchmark algorithms over a board set")
    _add_board_args(p)
    _add_budget_args(p)
    p.add_argument("--boards", type=int, default=500)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--algorithms", type=str, default=ALGO_PLAIN,
                   help=f"comma-separated subset of {ALGORITHMS}")
    p.add_argument("--plain-threads", type=int, default=16)
    p.add_argument("--policy-threads", type=int, default=100)
    p.add_argument("--positions", type=str, default=None,
                   help="directory of position files as the board source")
    # --threads default None means "keep the per-algorithm defaults".
    p.set_defaults(func=cmd_bench, threads=None)

    p = sub.add_parser("positions", parents=[common()],
                       help="score the 20 standard public positions")
    p.add_argument("dir", type=str)
    p.add_argument("--algorithm", choices=ALGORITHMS, default=ALGO_PLAIN)
    _add_budget_args(p)
    # No implicit budget: the caller must pick simulations or wall clock.
    p.set_defaults(func=cmd_positions, simulations=None)

    p = sub.add_parser("gradcheck", parents=[common()],
                       help="finite-difference audit of policy gradients")
    p.add_argument("--height", type=int, default=5)
    p.add_argument("--width", type=int, default=5)
    p.add_argument("--colors", type=int, default=4)
    p.add_argument("--samples", type=int, default=8)
    p.add_argument("--step", type=float, default=1e-4)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("selftest", parents=[common()],
                       help="fast internal consistency checks")
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SearchUsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
