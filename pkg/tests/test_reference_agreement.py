"""Cross-validation of the engine against the independent reference rules.

Every transition reachable by the engine must agree with the reference
implementation cell for cell, and exhaustive DFS optimal scores must
match on small boards.
"""

import numpy as np
import pytest

from samezero.board import (
    Action,
    BoardSeed,
    apply_action,
    generate_board,
    legal_actions,
    terminal_penalty,
)

from reference_engine import (
    grid_of,
    ref_apply,
    ref_legal_actions,
    ref_optimal_score,
    ref_terminal_adjustment,
)


def engine_optimal_score(board) -> int:
    """DFS over the engine's own transition function."""
    actions = legal_actions(board)
    if not actions:
        if board.is_empty:
            return 0
        return -terminal_penalty(board)
    best = None
    for a in actions:
        out = apply_action(board, a)
        total = out.move_score + out.terminal_adjustment + (
            0 if out.terminal else engine_optimal_score(out.board)
        )
        if best is None or total > best:
            best = total
    return best


def assert_transitions_agree(board, depth=3):
    """Engine and reference agree on actions and next states, recursively."""
    grid = grid_of(board.cells.tolist())
    got = [(a.row, a.col) for a in legal_actions(board)]
    assert got == ref_legal_actions(grid)
    if depth == 0:
        return
    for a in legal_actions(board):
        out = apply_action(board, a)
        ref_next, ref_cleared, ref_score = ref_apply(grid, (a.row, a.col))
        assert out.cleared == ref_cleared
        assert out.move_score == ref_score
        assert tuple(map(tuple, out.board.cells.tolist())) == ref_next
        if out.terminal:
            assert out.terminal_adjustment == ref_terminal_adjustment(ref_next)
        else:
            assert out.terminal_adjustment == 0
        assert_transitions_agree(out.board, depth - 1)


@pytest.mark.parametrize("seed", range(30))
def test_transition_agreement_random_boards(seed):
    b = generate_board(BoardSeed(seed, width=4, height=4, num_colors=3))
    assert_transitions_agree(b, depth=2)


@pytest.mark.parametrize("seed", range(40))
def test_optimal_scores_match(seed):
    b = generate_board(BoardSeed(1000 + seed, width=4, height=3, num_colors=3))
    grid = grid_of(b.cells.tolist())
    assert engine_optimal_score(b) == ref_optimal_score(grid)


def test_optimal_score_hand_case():
    # 2x2 monochrome: one move clears all, (4-2)^2 + 1000
    b = generate_board(BoardSeed(5, width=2, height=2, num_colors=1))
    assert engine_optimal_score(b) == 1004


def test_illegal_reference_action_rejected():
    b = generate_board(BoardSeed(2, width=4, height=4, num_colors=3))
    grid = grid_of(b.cells.tolist())
    with pytest.raises(ValueError):
        ref_apply(grid, (0, 0) if (0, 0) not in ref_legal_actions(grid)
                  else (-1, -1))
