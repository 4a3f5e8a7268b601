"""Self-verification helpers: exhaustive optimum, greedy baseline, cross-checks.

``best_score`` here enumerates the engine's own transition function; the
sibling implementation in :mod:`samezero.reference` does the same over the
naive column-list rules.  Agreement between the two routes (per transition
and on the optimum) is the engine's correctness oracle, exercised by the
test suite and the ``selftest`` CLI command.
"""

from __future__ import annotations

import numpy as np

from . import reference as ref
from .board import Action, Board, apply_action, move_score
from . import _kernels as _k


def best_score(b: Board) -> int:
    """Exhaustive DFS optimum of the episode score from this board.

    Exponential; intended for boards of roughly 16 cells or fewer.
    """
    memo: dict[Board, int] = {}

    def rec(state: Board) -> int:
        actions = state.legal_actions()
        if not actions:
            return ref.FULL_CLEAR_BONUS if state.is_empty else -int(_k.leftover_penalty(state.cells))
        hit = memo.get(state)
        if hit is not None:
            return hit
        best = None
        for a in actions:
            out = apply_action(state, a)
            v = out.move_score + out.terminal_adjustment
            if not out.terminal:
                v += rec(out.board)
            if best is None or v > best:
                best = v
        memo[state] = best
        return best

    return rec(b)


def greedy_episode(b: Board) -> tuple[list[Action], int]:
    """Play the largest-group-first baseline; ties go to the canonical action.

    Returns the action list and the final episode score (terminal
    adjustment included).
    """
    actions: list[Action] = []
    total = 0
    while True:
        reps, sizes, n = _k.groups_meta(b.cells)
        if n == 0:
            break
        pick = 0
        for i in range(1, n):
            if sizes[i] > sizes[pick]:
                pick = i
        a = Action(int(reps[pick, 0]), int(reps[pick, 1]))
        out = apply_action(b, a)
        actions.append(a)
        total += out.move_score + out.terminal_adjustment
        b = out.board
    return actions, total


def boards_agree(b: Board) -> bool:
    """Compare one engine state against the reference representation."""
    r = ref.from_rows(b.cells.tolist())
    back = np.asarray(ref.to_rows(r, b.height, b.width), dtype=np.int8)
    return bool((back == b.cells).all())


def compare_all_transitions(b: Board, max_states: int = 200_000) -> int:
    """Walk every reachable state; assert engine and reference rules agree.

    Checks, per state: the legal action set, the terminal flag, and for
    every action the cleared count and successor grid.  Returns the number
    of distinct states visited; raises AssertionError on any divergence.
    """
    height, width = b.height, b.width
    seen: set[Board] = set()
    stack = [b]
    while stack:
        state = stack.pop()
        if state in seen:
            continue
        seen.add(state)
        if len(seen) > max_states:
            raise RuntimeError("state space larger than max_states")
        rstate = ref.from_rows(state.cells.tolist())
        eng_moves = [tuple(a) for a in state.legal_actions()]
        ref_moves = ref.legal_moves(rstate, height)
        if eng_moves != ref_moves:
            raise AssertionError(
                f"legal move mismatch on {state!r}: engine {eng_moves} vs reference {ref_moves}"
            )
        if state.is_terminal != ref.is_terminal(rstate):
            raise AssertionError(f"terminal flag mismatch on {state!r}")
        for a in eng_moves:
            out = apply_action(state, Action(*a))
            rnext, rcleared = ref.apply_move(rstate, a, height)
            if out.cleared != rcleared:
                raise AssertionError(f"cleared mismatch on {state!r} action {a}")
            rgrid = np.asarray(ref.to_rows(rnext, height, width), dtype=np.int8)
            if not (rgrid == out.board.cells).all():
                raise AssertionError(f"successor mismatch on {state!r} action {a}")
            if out.move_score != ref.move_score(rcleared):
                raise AssertionError(f"score mismatch on {state!r} action {a}")
            expected_adjustment = (
                ref.terminal_value(rnext) if ref.is_terminal(rnext) else 0
            )
            if out.terminal_adjustment != expected_adjustment:
                raise AssertionError(f"adjustment mismatch on {state!r} action {a}")
            stack.append(out.board)
    return len(seen)


def optima_agree(b: Board) -> tuple[int, int]:
    """Return (engine DFS optimum, reference DFS optimum) for the board."""
    eng = best_score(b)
    rb = ref.from_rows(b.cells.tolist())
    rf = ref.best_score(rb, b.height)
    return eng, rf
