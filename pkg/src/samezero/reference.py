"""Naive, independent re-implementation of the SameGame rules.

This module deliberately shares no code or data layout with the engine: a
board is a tuple of *columns*, each column a tuple of colors listed bottom
to top with no gaps.  Gravity is therefore structural (removing a block
from a column tuple is the fall), and column packing is just dropping empty
columns.  Everything is pure Python over sets and deques.

It exists to cross-check the engine: the self-test command and the test
suite compare transitions, terminal flags, and exhaustive optima computed
here against the engine's own answers.
"""

from __future__ import annotations

from collections import deque
from functools import lru_cache

FULL_CLEAR_BONUS = 1000

# A RefBoard is a tuple of non-empty columns, left to right; each column is
# a tuple of colors from the bottom up.  The original height is needed to
# translate to (row, col) coordinates; the width only bounds the grid.
RefBoard = tuple[tuple[int, ...], ...]


def from_rows(rows, height: int | None = None) -> RefBoard:
    """Build a RefBoard from a row-major grid (row 0 on top, 0 = empty)."""
    nrows = len(rows)
    ncols = len(rows[0]) if nrows else 0
    cols = []
    for c in range(ncols):
        col = []
        for r in range(nrows - 1, -1, -1):
            v = int(rows[r][c])
            if v != 0:
                col.append(v)
        if col:
            cols.append(tuple(col))
    return tuple(cols)


def to_rows(b: RefBoard, height: int, width: int) -> list[list[int]]:
    """Render back to a row-major grid of the given dimensions."""
    grid = [[0] * width for _ in range(height)]
    for ci, col in enumerate(b):
        for hi, v in enumerate(col):
            grid[height - 1 - hi][ci] = v
    return grid


def _cells(b: RefBoard) -> set[tuple[int, int]]:
    """All occupied positions as (column index, height index) pairs."""
    out = set()
    for ci, col in enumerate(b):
        for hi in range(len(col)):
            out.add((ci, hi))
    return out


def _color(b: RefBoard, pos: tuple[int, int]) -> int:
    return b[pos[0]][pos[1]]


def _neighbors(pos):
    ci, hi = pos
    yield ci - 1, hi
    yield ci + 1, hi
    yield ci, hi - 1
    yield ci, hi + 1


def groups(b: RefBoard) -> list[set[tuple[int, int]]]:
    """Connected same-color components of size >= 2, in (col, height) space."""
    todo = _cells(b)
    found = []
    while todo:
        start = todo.pop()
        color = _color(b, start)
        comp = {start}
        queue = deque([start])
        while queue:
            cur = queue.popleft()
            for nb in _neighbors(cur):
                if nb in todo and _color(b, nb) == color:
                    todo.discard(nb)
                    comp.add(nb)
                    queue.append(nb)
        if len(comp) >= 2:
            found.append(comp)
    return found


def _to_rowcol(pos: tuple[int, int], height: int) -> tuple[int, int]:
    ci, hi = pos
    return height - 1 - hi, ci


def representative(comp: set[tuple[int, int]], height: int) -> tuple[int, int]:
    """Bottom-most row then left-most column, in (row, col) coordinates."""
    rcs = [_to_rowcol(p, height) for p in comp]
    return min(rcs, key=lambda rc: (-rc[0], rc[1]))


def legal_moves(b: RefBoard, height: int) -> list[tuple[int, int]]:
    """Representatives of every clearable group, sorted row-major."""
    return sorted(representative(comp, height) for comp in groups(b))


def is_terminal(b: RefBoard) -> bool:
    return not groups(b)


def apply_move(b: RefBoard, action: tuple[int, int], height: int) -> tuple[RefBoard, int]:
    """Clear the group whose representative is ``action``; return (board, n).

    Raises ValueError when the action is not a legal representative.
    """
    target = None
    for comp in groups(b):
        if representative(comp, height) == tuple(action):
            target = comp
            break
    if target is None:
        raise ValueError(f"no group has representative {action}")
    doomed_by_col: dict[int, set[int]] = {}
    for ci, hi in target:
        doomed_by_col.setdefault(ci, set()).add(hi)
    new_cols = []
    for ci, col in enumerate(b):
        gone = doomed_by_col.get(ci)
        if gone is None:
            new_cols.append(col)
            continue
        kept = tuple(v for hi, v in enumerate(col) if hi not in gone)
        if kept:
            new_cols.append(kept)
    return tuple(new_cols), len(target)


def move_score(cleared: int) -> int:
    return (cleared - 2) ** 2


def leftover_penalty(b: RefBoard) -> int:
    counts: dict[int, int] = {}
    for col in b:
        for v in col:
            counts[v] = counts.get(v, 0) + 1
    return sum((n - 2) ** 2 for n in counts.values())


def terminal_value(b: RefBoard) -> int:
    """Game-end adjustment: +1000 when cleared, else the negated penalty."""
    if not b:
        return FULL_CLEAR_BONUS
    return -leftover_penalty(b)


def best_score(b: RefBoard, height: int) -> int:
    """Exhaustive DFS optimum of the episode score from this position.

    Intended for tiny boards; the recursion memoizes on the board value.
    """

    @lru_cache(maxsize=None)
    def rec(state: RefBoard) -> int:
        comps = groups(state)
        if not comps:
            return terminal_value(state)
        best = None
        for comp in comps:
            nxt, n = apply_move(state, representative(comp, height), height)
            v = move_score(n) + rec(nxt)
            if best is None or v > best:
                best = v
        return best

    result = rec(b)
    rec.cache_clear()
    return result
