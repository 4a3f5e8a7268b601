"""SameGame board engine: state, rules, scoring, generation, serialization.

Coordinates are (row, col) with row 0 at the top.  Gravity pulls blocks
toward higher row indices; when a column empties, the columns to its right
shift left.  A move clears a maximal 4-connected same-color group of size
n >= 2 and scores (n - 2)**2.  Clearing the whole board earns +1000; a game
that ends with blocks remaining is charged (count_c - 2)**2 for every color
still present.

A move is identified by its group's representative cell: the bottom-most
row, and the left-most column within that row.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import _kernels as _k

FULL_CLEAR_BONUS = 1000


class Action(NamedTuple):
    """Representative cell of the group a move clears."""

    row: int
    col: int


@dataclass(frozen=True)
class BoardSeed:
    """Deterministic recipe for a random full board."""

    seed: int
    width: int = 15
    height: int = 15
    num_colors: int = 5


class IllegalMoveError(ValueError):
    """Raised when an action does not name a legal group representative."""


class PositionFormatError(ValueError):
    """Raised when a position file does not match the documented format."""


class Board:
    """Immutable board state in normal form.

    ``cells`` is an ``int8`` array of shape (height, width): 0 marks an
    empty cell, 1..num_colors a color.  Instances validate normal form on
    construction; engine-internal transitions skip re-validation because
    the rules preserve it.
    """

    __slots__ = ("cells", "num_colors", "_legal", "_hash")

    def __init__(self, cells, num_colors: int, _validate: bool = True):
        arr = np.ascontiguousarray(cells, dtype=np.int8)
        if _validate:
            _check_grid(arr, num_colors)
        arr.setflags(write=False)
        object.__setattr__(self, "cells", arr)
        object.__setattr__(self, "num_colors", int(num_colors))
        object.__setattr__(self, "_legal", None)
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, name, value):
        raise AttributeError("Board is immutable")

    @classmethod
    def from_grid(cls, rows: Sequence[Sequence[int]], num_colors: int) -> "Board":
        return cls(np.asarray(rows, dtype=np.int8), num_colors)

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def is_empty(self) -> bool:
        # Normal form: the board is empty iff the bottom-left cell is.
        return self.cells[self.height - 1, 0] == 0

    @property
    def is_terminal(self) -> bool:
        return len(self.legal_actions()) == 0

    def legal_actions(self) -> tuple[Action, ...]:
        """All legal moves as representatives, row-major order."""
        cached = self._legal
        if cached is None:
            reps, _, n = _k.groups_meta(self.cells)
            cached = tuple(Action(int(reps[i, 0]), int(reps[i, 1])) for i in range(n))
            object.__setattr__(self, "_legal", cached)
        return cached

    def remaining_blocks(self) -> int:
        return int(np.count_nonzero(self.cells))

    def __eq__(self, other):
        if not isinstance(other, Board):
            return NotImplemented
        return (
            self.num_colors == other.num_colors
            and self.cells.shape == other.cells.shape
            and self.cells.tobytes() == other.cells.tobytes()
        )

    def __hash__(self):
        h = self._hash
        if h is None:
            h = hash((self.cells.shape, self.num_colors, self.cells.tobytes()))
            object.__setattr__(self, "_hash", h)
        return h

    def __repr__(self):
        return f"Board({self.height}x{self.width}, {self.num_colors} colors, {self.remaining_blocks()} blocks)"


@dataclass(frozen=True)
class MoveOutcome:
    """Result of applying one action."""

    board: Board
    action: Action
    cleared: int
    move_score: int
    terminal: bool
    terminal_adjustment: int


def _check_grid(arr: np.ndarray, num_colors: int) -> None:
    if not (1 <= int(num_colors) <= 127):
        raise ValueError(f"num_colors must be in 1..127, got {num_colors}")
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"cells must be a 2-D grid, got shape {arr.shape}")
    if arr.min() < 0 or arr.max() > num_colors:
        raise ValueError("cell values must lie in 0..num_colors")
    h, w = arr.shape
    occupied = arr != 0
    # Gravity normal form: within a column, no empty cell below a block.
    col_has = occupied.any(axis=0)
    for c in range(w):
        col = occupied[:, c]
        if col.any():
            first = int(np.argmax(col))
            if not col[first:].all():
                raise ValueError(f"column {c} violates gravity normal form")
    # Packing normal form: no empty column left of a non-empty one.
    if col_has.any():
        last = w - 1 - int(np.argmax(col_has[::-1]))
        if not col_has[: last + 1].all():
            raise ValueError("empty column left of a non-empty column")


def move_score(cleared: int) -> int:
    """Score of clearing a group of the given size: (n - 2)**2."""
    d = cleared - 2
    return d * d


def generate_board(spec: BoardSeed) -> Board:
    """Draw a full random board from a counter-based seeded generator.

    Uses the Philox bit generator keyed by the seed, so boards are
    reproducible across runs and platforms and independent draws come from
    independent keys.
    """
    if spec.width < 1 or spec.height < 1:
        raise ValueError("board dimensions must be positive")
    if not (1 <= spec.num_colors <= 127):
        raise ValueError("num_colors must be in 1..127")
    rng = np.random.Generator(np.random.Philox(key=np.uint64(spec.seed & (2**64 - 1))))
    cells = rng.integers(1, spec.num_colors + 1, size=(spec.height, spec.width), dtype=np.int8)
    return Board(cells, spec.num_colors, _validate=False)


def find_groups(b: Board) -> list[frozenset[tuple[int, int]]]:
    """All maximal 4-connected same-color groups of size >= 2.

    Returned in canonical order: row-major by group representative.
    """
    h, w = b.cells.shape
    labels = np.empty(h * w, dtype=np.int32)
    n = _k.group_labels(b.cells, labels)
    members: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    flat = labels.reshape(h, w)
    for r in range(h):
        for c in range(w):
            g = flat[r, c]
            if g >= 0:
                members[g].append((r, c))
    groups = [frozenset(m) for m in members]
    groups.sort(key=lambda g: group_representative(g))
    return groups


def group_representative(group: Iterable[tuple[int, int]]) -> Action:
    """Bottom-most row, then left-most column: the cell naming the move."""
    cells = list(group)
    if not cells:
        raise ValueError("empty group has no representative")
    r = max(c[0] for c in cells)
    c = min(c[1] for c in cells if c[0] == r)
    return Action(r, c)


def legal_actions(b: Board) -> list[Action]:
    """Legal moves (group representatives) in canonical row-major order."""
    return list(b.legal_actions())


def apply_action(b: Board, a: Action) -> MoveOutcome:
    """Apply one move: clear, gravity, pack, score, terminal adjustment.

    ``terminal_adjustment`` is +1000 when the move empties the board, the
    negated leftover penalty when it ends the game with blocks remaining,
    and 0 for a non-terminal move.
    """
    r, c = int(a[0]), int(a[1])
    h, w = b.cells.shape
    if not (0 <= r < h and 0 <= c < w):
        raise IllegalMoveError(f"cell ({r}, {c}) is outside the {h}x{w} board")
    size, rep_r, rep_c = _k.group_at(b.cells, r, c)
    if size == 0:
        raise IllegalMoveError(f"cell ({r}, {c}) is empty")
    if size < 2:
        raise IllegalMoveError(f"cell ({r}, {c}) is an isolated block, not a group")
    if (rep_r, rep_c) != (r, c):
        raise IllegalMoveError(
            f"cell ({r}, {c}) is not its group's representative ({rep_r}, {rep_c})"
        )
    cells = b.cells.copy()
    cleared = int(_k.apply_move(cells, r, c))
    nxt = Board(cells, b.num_colors, _validate=False)
    terminal = nxt.is_terminal
    if terminal:
        adjustment = FULL_CLEAR_BONUS if nxt.is_empty else -int(_k.leftover_penalty(nxt.cells))
    else:
        adjustment = 0
    return MoveOutcome(
        board=nxt,
        action=Action(r, c),
        cleared=cleared,
        move_score=move_score(cleared),
        terminal=terminal,
        terminal_adjustment=adjustment,
    )


def terminal_penalty(b: Board) -> int:
    """Leftover penalty of a finished, non-empty board (a positive number)."""
    if not b.is_terminal:
        raise ValueError("terminal_penalty is defined only for terminal boards")
    if b.is_empty:
        raise ValueError("an empty board has no leftover penalty")
    return int(_k.leftover_penalty(b.cells))


def replay_actions(b: Board, actions: Iterable[tuple[int, int]]) -> tuple[Board, int]:
    """Re-apply a recorded action sequence; return (final board, total score).

    The total includes the terminal adjustment when the last move ends the
    game.  Raises IllegalMoveError if the sequence does not replay cleanly.
    """
    total = 0
    for a in actions:
        out = apply_action(b, Action(int(a[0]), int(a[1])))
        total += out.move_score + out.terminal_adjustment
        b = out.board
    return b, total


def encode_board(b: Board) -> np.ndarray:
    """One-hot input tensor of shape (height+2, width+2, num_colors+1).

    Channel 0 flags empty interior cells; channel k flags color k.  The
    one-cell padding ring is zero in every channel, which distinguishes
    off-board cells from empty ones.
    """
    h, w = b.cells.shape
    enc = np.zeros((h + 2, w + 2, b.num_colors + 1), dtype=np.float32)
    rows, cols = np.indices((h, w))
    enc[rows + 1, cols + 1, b.cells] = 1.0
    return enc


def load_position_file(path, num_colors: int | None = None) -> Board:
    """Parse a position file: height lines of width ASCII digits 1..num_colors.

    When ``num_colors`` is omitted it defaults to the largest digit present.
    """
    with open(path, "r", encoding="ascii") as fh:
        raw = fh.read()
    lines = [ln for ln in raw.splitlines() if ln.strip() != ""]
    if not lines:
        raise PositionFormatError(f"{path}: file contains no rows")
    width = len(lines[0])
    grid = np.zeros((len(lines), width), dtype=np.int8)
    max_digit = 0
    for i, ln in enumerate(lines):
        if len(ln) != width:
            raise PositionFormatError(
                f"{path}: line {i + 1} has {len(ln)} cells, expected {width}"
            )
        for j, ch in enumerate(ln):
            if not ch.isdigit() or ch == "0":
                raise PositionFormatError(
                    f"{path}: line {i + 1}, column {j + 1}: invalid cell {ch!r}"
                )
            v = int(ch)
            grid[i, j] = v
            max_digit = max(max_digit, v)
    colors = max_digit if num_colors is None else int(num_colors)
    if max_digit > colors:
        raise PositionFormatError(
            f"{path}: contains digit {max_digit} but num_colors={colors}"
        )
    return Board(grid, colors, _validate=False)


def save_position_file(b: Board, path) -> None:
    """Write a full board in the digit-grid format (inverse of the loader)."""
    if b.remaining_blocks() != b.width * b.height:
        raise ValueError("only full boards can be saved as position files")
    if b.num_colors > 9:
        raise ValueError("position files support at most 9 colors")
    lines = ["".join(str(int(v)) for v in row) for row in b.cells]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def board_digest(b: Board) -> str:
    """Short stable identifier for reports and provenance records."""
    h = hashlib.sha256()
    h.update(b.cells.tobytes())
    h.update(bytes([b.num_colors, b.height & 0xFF, b.width & 0xFF]))
    return h.hexdigest()[:12]
