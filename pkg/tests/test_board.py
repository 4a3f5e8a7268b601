"""Engine unit and property tests: rules, scoring, normal form, serialization."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from samezero.board import (
    Action,
    Board,
    BoardSeed,
    IllegalMoveError,
    PositionFormatError,
    apply_action,
    board_digest,
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

from reference_engine import grid_of, ref_legal_actions, ref_terminal_adjustment


def board_from(rows, colors=5) -> Board:
    return Board.from_grid(rows, num_colors=colors)


def random_boards(n, h, w, c, seed=0):
    return [
        generate_board(BoardSeed(seed * 10_000 + i, width=w, height=h, num_colors=c))
        for i in range(n)
    ]


class TestScoring:
    def test_move_score_formula(self):
        assert move_score(2) == 0
        assert move_score(5) == 9
        assert move_score(10) == 64

    def test_full_clear_bonus(self):
        b = board_from([[1, 1], [1, 1]], colors=3)
        out = apply_action(b, legal_actions(b)[0])
        assert out.move_score == 4
        assert out.terminal
        assert out.terminal_adjustment == 1000

    def test_leftover_penalty_values(self):
        # 3 of one color and 1 of another: (3-2)^2 + (1-2)^2 = 2
        b = board_from([[0, 0, 0], [2, 0, 0], [1, 1, 1]], colors=3)
        # no adjacent same-color pair except the 1s; clear them to reach terminal
        out = apply_action(b, Action(2, 0))
        assert out.terminal
        assert out.terminal_adjustment == -1  # single 2 left: (1-2)^2
        lone = board_from([[0, 0], [0, 0]], colors=3)
        with pytest.raises(ValueError):
            terminal_penalty(lone)  # empty board has no penalty

    def test_penalty_requires_terminal(self):
        b = board_from([[1, 1], [2, 2]], colors=3)
        with pytest.raises(ValueError):
            terminal_penalty(b)

    def test_penalty_two_blocks_per_color_is_zero(self):
        b = board_from([[0, 0, 0, 0], [1, 2, 1, 2]], colors=3)
        assert b.is_terminal
        assert terminal_penalty(b) == 0  # (2-2)^2 twice


class TestGroups:
    def test_checker_has_no_groups(self):
        b = board_from([[1, 2], [2, 1]], colors=3)
        assert find_groups(b) == []
        assert b.is_terminal

    def test_monochrome_single_group(self):
        b = board_from([[1, 1], [1, 1]], colors=3)
        groups = find_groups(b)
        assert len(groups) == 1
        assert len(groups[0]) == 4

    def test_two_color_rows(self):
        b = board_from([[1, 1, 1], [2, 2, 2], [2, 2, 2]], colors=3)
        sizes = sorted(len(g) for g in find_groups(b))
        assert sizes == [3, 6]

    def test_representative_rules(self):
        assert group_representative({(1, 2), (2, 2)}) == Action(2, 2)
        assert group_representative({(1, 2), (1, 3)}) == Action(1, 2)
        assert group_representative({(2, 3), (3, 3), (3, 2)}) == Action(3, 2)

    def test_legal_actions_row_major(self):
        b = board_from([[1, 1, 2, 2], [3, 3, 4, 4]], colors=4)
        acts = legal_actions(b)
        assert acts == sorted(acts)


class TestApply:
    def test_gravity_and_column_close(self):
        b = board_from([
            [1, 2, 3],
            [1, 3, 2],
            [1, 3, 2],
        ], colors=3)
        out = apply_action(b, Action(2, 0))  # clear the 1-column
        # columns shift left, blocks unchanged elsewhere
        assert out.cleared == 3
        assert out.board.cells[0, 2].item() == 0
        ref = grid_of([[2, 3, 0], [3, 2, 0], [3, 2, 0]])
        assert tuple(map(tuple, out.board.cells.tolist())) == ref

    def test_illegal_move_names_cell(self):
        b = board_from([[1, 2], [2, 1]], colors=3)
        with pytest.raises(IllegalMoveError, match=r"\(0, 0\)"):
            apply_action(b, Action(0, 0))

    def test_non_representative_cell_is_illegal(self):
        b = board_from([[1, 1], [2, 2]], colors=3)
        with pytest.raises(IllegalMoveError):
            apply_action(b, Action(0, 1))  # group member, not its representative

    def test_deterministic(self):
        b = random_boards(1, 6, 6, 4, seed=3)[0]
        a = legal_actions(b)[0]
        o1, o2 = apply_action(b, a), apply_action(b, a)
        assert np.array_equal(o1.board.cells, o2.board.cells)
        assert o1.move_score == o2.move_score


@st.composite
def small_board(draw):
    h = draw(st.integers(2, 6))
    w = draw(st.integers(2, 6))
    colors = draw(st.integers(2, 4))
    rows = draw(st.lists(
        st.lists(st.integers(1, colors), min_size=w, max_size=w),
        min_size=h, max_size=h))
    return Board.from_grid(rows, num_colors=colors)


class TestProperties:
    @settings(max_examples=150, deadline=None)
    @given(small_board(), st.randoms(use_true_random=False))
    def test_normal_form_and_conservation(self, b, rnd):
        while not b.is_terminal:
            acts = legal_actions(b)
            a = rnd.choice(acts)
            before = np.bincount(b.cells.ravel(), minlength=b.num_colors + 1)
            out = apply_action(b, a)
            cells = out.board.cells
            # gravity-normal: no empty below a block
            for col in range(cells.shape[1]):
                column = cells[:, col]
                nz = np.nonzero(column)[0]
                if nz.size:
                    assert np.all(column[nz[0]:] != 0)
            # column packing: empty columns only on the right
            occupied = [bool(np.any(cells[:, c])) for c in range(cells.shape[1])]
            assert occupied == sorted(occupied, reverse=True)
            after = np.bincount(cells.ravel(), minlength=b.num_colors + 1)
            assert before.sum() - out.cleared == after[1:].sum() + before[0]
            # only one color's count changed
            changed = np.nonzero(before[1:] != after[1:])[0]
            assert changed.size == 1
            b = out.board

    @settings(max_examples=100, deadline=None)
    @given(small_board())
    def test_legal_actions_match_reference(self, b):
        got = [(a.row, a.col) for a in legal_actions(b)]
        ref = ref_legal_actions(grid_of(b.cells.tolist()))
        assert got == ref

    @settings(max_examples=100, deadline=None)
    @given(small_board(), st.randoms(use_true_random=False))
    def test_episode_score_identity(self, b, rnd):
        start = b
        actions = []
        total = 0
        while not b.is_terminal:
            a = rnd.choice(legal_actions(b))
            out = apply_action(b, a)
            actions.append((a.row, a.col))
            total += out.move_score + out.terminal_adjustment
            b = out.board
        _, replayed = replay_actions(start, actions)
        assert replayed == total
        if b.is_empty:
            assert total >= 1000 - 0  # bonus included
        else:
            assert ref_terminal_adjustment(grid_of(b.cells.tolist())) <= 0


class TestGeneration:
    def test_single_color_board(self):
        b = generate_board(BoardSeed(5, width=2, height=2, num_colors=1))
        assert np.all(b.cells == 1)

    def test_determinism(self):
        a = generate_board(BoardSeed(42, width=15, height=15, num_colors=5))
        b = generate_board(BoardSeed(42, width=15, height=15, num_colors=5))
        assert np.array_equal(a.cells, b.cells)
        assert board_digest(a) == board_digest(b)

    def test_color_frequencies(self):
        b = generate_board(BoardSeed(7, width=100, height=100, num_colors=5))
        counts = np.bincount(b.cells.ravel(), minlength=6)[1:]
        # 10000 cells, mean 2000, sigma = sqrt(10000 * .2 * .8) = 40
        assert np.all(np.abs(counts - 2000) < 5 * 40)

    def test_bad_dimensions(self):
        with pytest.raises(ValueError):
            generate_board(BoardSeed(0, width=0, height=3, num_colors=2))


class TestEncode:
    def test_one_hot_shape_and_interior(self):
        b = generate_board(BoardSeed(3, width=7, height=7, num_colors=5))
        enc = encode_board(b)
        assert enc.shape == (9, 9, 6)
        interior = enc[1:-1, 1:-1, :]
        assert np.all(interior.sum(axis=2) == 1.0)
        assert enc.sum() == 49

    def test_padding_all_zero(self):
        b = generate_board(BoardSeed(3, width=5, height=4, num_colors=3))
        enc = encode_board(b)
        assert np.all(enc[0, :, :] == 0) and np.all(enc[-1, :, :] == 0)
        assert np.all(enc[:, 0, :] == 0) and np.all(enc[:, -1, :] == 0)

    def test_cell_maps_with_offset(self):
        b = board_from([[3, 1], [2, 1]], colors=3)
        enc = encode_board(b)
        assert enc[1, 1, 3] == 1.0
        assert enc[2, 1, 2] == 1.0

    def test_empty_cells_use_channel_zero(self):
        b = board_from([[0, 1], [1, 1]], colors=2)
        enc = encode_board(b)
        assert enc[1, 1, 0] == 1.0


class TestPositionFiles:
    def test_round_trip(self, tmp_path):
        b = generate_board(BoardSeed(11, width=15, height=15, num_colors=5))
        p = tmp_path / "b.txt"
        save_position_file(b, p)
        again = load_position_file(p)
        assert np.array_equal(b.cells, again.cells)
        save_position_file(again, tmp_path / "b2.txt")
        assert (tmp_path / "b.txt").read_bytes() == (tmp_path / "b2.txt").read_bytes()

    def test_monochrome_file(self, tmp_path):
        p = tmp_path / "m.txt"
        p.write_text("\n".join(["1" * 15] * 15) + "\n")
        b = load_position_file(p)
        assert np.all(b.cells == 1)

    def test_ragged_line_reports_number(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("111\n11\n111\n")
        with pytest.raises(PositionFormatError, match="line 2"):
            load_position_file(p)

    def test_non_digit_rejected(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("1a1\n111\n")
        with pytest.raises(PositionFormatError):
            load_position_file(p)
