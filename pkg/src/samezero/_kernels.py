"""Compiled hot-path kernels for the board engine and the search loop.

Everything here operates on the raw board array: ``int8``, shape
``(height, width)``, row 0 at the top, ``0`` marking an empty cell and
``1..num_colors`` marking colors.  Boards are kept in normal form at all
times: blocks rest on the bottom of their column (gravity) and no empty
column lies to the left of a non-empty one (column packing).

All kernels are compiled with ``nogil=True`` so that search threads spend
their playout and rules work outside the interpreter lock; this is what
makes the shared-tree parallel search scale on multicore hosts.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Fixed virtual-loss-free sentinel used by selection when a node has no
# defined value spread yet: every normalized value is 1 (optimistic).
_JIT = dict(cache=True, nogil=True)


# ---------------------------------------------------------------------------
# Seeded PRNG (splitmix64).  State is a 1-element uint64 array so the same
# stream can be threaded through nested kernel calls and mutated in place.
# ---------------------------------------------------------------------------

@njit(**_JIT)
def rng_next(state):
    state[0] = state[0] + np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(**_JIT)
def rng_below(state, n):
    # Modulo bias is ~n/2**64: irrelevant for the n <= a few hundred used here.
    return np.int64(rng_next(state) % np.uint64(n))


@njit(**_JIT)
def rng_uniform(state):
    return (rng_next(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


# ---------------------------------------------------------------------------
# Group discovery
# ---------------------------------------------------------------------------

@njit(**_JIT)
def _flood_meta(cells, visited, stack, reps, sizes):
    """Scan for all groups (4-connected, same color, size >= 2).

    Fills ``reps`` with each group's representative (bottom-most row, then
    left-most column) and ``sizes`` with its cell count, in row-major scan
    discovery order.  Returns the number of groups found.
    """
    h, w = cells.shape
    visited[:] = 0
    n = 0
    for r in range(h):
        for c in range(w):
            color = cells[r, c]
            if color == 0 or visited[r * w + c] != 0:
                continue
            size = 0
            rep_r = r
            rep_c = c
            sp = 0
            stack[sp] = r * w + c
            visited[r * w + c] = 1
            sp = 1
            while sp > 0:
                sp -= 1
                idx = stack[sp]
                rr = idx // w
                cc = idx - rr * w
                size += 1
                if rr > rep_r or (rr == rep_r and cc < rep_c):
                    rep_r = rr
                    rep_c = cc
                if rr > 0 and cells[rr - 1, cc] == color and visited[idx - w] == 0:
                    visited[idx - w] = 1
                    stack[sp] = idx - w
                    sp += 1
                if rr + 1 < h and cells[rr + 1, cc] == color and visited[idx + w] == 0:
                    visited[idx + w] = 1
                    stack[sp] = idx + w
                    sp += 1
                if cc > 0 and cells[rr, cc - 1] == color and visited[idx - 1] == 0:
                    visited[idx - 1] = 1
                    stack[sp] = idx - 1
                    sp += 1
                if cc + 1 < w and cells[rr, cc + 1] == color and visited[idx + 1] == 0:
                    visited[idx + 1] = 1
                    stack[sp] = idx + 1
                    sp += 1
            if size >= 2:
                reps[n, 0] = rep_r
                reps[n, 1] = rep_c
                sizes[n] = size
                n += 1
    return n


@njit(**_JIT)
def groups_meta(cells):
    """Allocate scratch and return (reps, sizes, n) in canonical order.

    Canonical order is row-major by representative: ascending row, then
    ascending column.  Insertion sort; group counts are small.
    """
    h, w = cells.shape
    cap = (h * w) // 2 + 1
    visited = np.empty(h * w, dtype=np.uint8)
    stack = np.empty(h * w, dtype=np.int32)
    reps = np.empty((cap, 2), dtype=np.int32)
    sizes = np.empty(cap, dtype=np.int32)
    n = _flood_meta(cells, visited, stack, reps, sizes)
    for i in range(1, n):
        kr = reps[i, 0]
        kc = reps[i, 1]
        ks = sizes[i]
        j = i - 1
        while j >= 0 and (reps[j, 0] > kr or (reps[j, 0] == kr and reps[j, 1] > kc)):
            reps[j + 1, 0] = reps[j, 0]
            reps[j + 1, 1] = reps[j, 1]
            sizes[j + 1] = sizes[j]
            j -= 1
        reps[j + 1, 0] = kr
        reps[j + 1, 1] = kc
        sizes[j + 1] = ks
    return reps, sizes, n


@njit(**_JIT)
def group_labels(cells, labels):
    """Label every cell of every group (size >= 2) with a discovery-order id.

    ``labels`` is a flat int32 array of length h*w, set to -1 outside groups.
    Returns the number of groups.
    """
    h, w = cells.shape
    labels[:] = -1
    visited = np.zeros(h * w, dtype=np.uint8)
    stack = np.empty(h * w, dtype=np.int32)
    member = np.empty(h * w, dtype=np.int32)
    n = 0
    for r in range(h):
        for c in range(w):
            color = cells[r, c]
            if color == 0 or visited[r * w + c] != 0:
                continue
            sp = 0
            stack[sp] = r * w + c
            visited[r * w + c] = 1
            sp = 1
            size = 0
            while sp > 0:
                sp -= 1
                idx = stack[sp]
                member[size] = idx
                size += 1
                rr = idx // w
                cc = idx - rr * w
                if rr > 0 and cells[rr - 1, cc] == color and visited[idx - w] == 0:
                    visited[idx - w] = 1
                    stack[sp] = idx - w
                    sp += 1
                if rr + 1 < h and cells[rr + 1, cc] == color and visited[idx + w] == 0:
                    visited[idx + w] = 1
                    stack[sp] = idx + w
                    sp += 1
                if cc > 0 and cells[rr, cc - 1] == color and visited[idx - 1] == 0:
                    visited[idx - 1] = 1
                    stack[sp] = idx - 1
                    sp += 1
                if cc + 1 < w and cells[rr, cc + 1] == color and visited[idx + 1] == 0:
                    visited[idx + 1] = 1
                    stack[sp] = idx + 1
                    sp += 1
            if size >= 2:
                for k in range(size):
                    labels[member[k]] = n
                n += 1
    return n


@njit(**_JIT)
def group_at(cells, r, c):
    """Return (size, rep_row, rep_col) for the group containing (r, c).

    Size 1 means an isolated block; size 0 means the cell is empty.
    """
    h, w = cells.shape
    color = cells[r, c]
    if color == 0:
        return 0, -1, -1
    visited = np.zeros(h * w, dtype=np.uint8)
    stack = np.empty(h * w, dtype=np.int32)
    sp = 0
    stack[sp] = r * w + c
    visited[r * w + c] = 1
    sp = 1
    size = 0
    rep_r = r
    rep_c = c
    while sp > 0:
        sp -= 1
        idx = stack[sp]
        rr = idx // w
        cc = idx - rr * w
        size += 1
        if rr > rep_r or (rr == rep_r and cc < rep_c):
            rep_r = rr
            rep_c = cc
        if rr > 0 and cells[rr - 1, cc] == color and visited[idx - w] == 0:
            visited[idx - w] = 1
            stack[sp] = idx - w
            sp += 1
        if rr + 1 < h and cells[rr + 1, cc] == color and visited[idx + w] == 0:
            visited[idx + w] = 1
            stack[sp] = idx + w
            sp += 1
        if cc > 0 and cells[rr, cc - 1] == color and visited[idx - 1] == 0:
            visited[idx - 1] = 1
            stack[sp] = idx - 1
            sp += 1
        if cc + 1 < w and cells[rr, cc + 1] == color and visited[idx + 1] == 0:
            visited[idx + 1] = 1
            stack[sp] = idx + 1
            sp += 1
    return size, rep_r, rep_c


# ---------------------------------------------------------------------------
# Move application
# ---------------------------------------------------------------------------

@njit(**_JIT)
def apply_move(cells, r, c):
    """Clear the group containing (r, c) in place; gravity, then packing.

    Assumes (r, c) belongs to a group of size >= 2 (callers validate).
    Returns the number of cleared cells.
    """
    h, w = cells.shape
    color = cells[r, c]
    visited = np.zeros(h * w, dtype=np.uint8)
    stack = np.empty(h * w, dtype=np.int32)
    sp = 0
    stack[sp] = r * w + c
    visited[r * w + c] = 1
    sp = 1
    cleared = 0
    col_lo = c
    col_hi = c
    while sp > 0:
        sp -= 1
        idx = stack[sp]
        rr = idx // w
        cc = idx - rr * w
        if rr > 0 and cells[rr - 1, cc] == color and visited[idx - w] == 0:
            visited[idx - w] = 1
            stack[sp] = idx - w
            sp += 1
        if rr + 1 < h and cells[rr + 1, cc] == color and visited[idx + w] == 0:
            visited[idx + w] = 1
            stack[sp] = idx + w
            sp += 1
        if cc > 0 and cells[rr, cc - 1] == color and visited[idx - 1] == 0:
            visited[idx - 1] = 1
            stack[sp] = idx - 1
            sp += 1
        if cc + 1 < w and cells[rr, cc + 1] == color and visited[idx + 1] == 0:
            visited[idx + 1] = 1
            stack[sp] = idx + 1
            sp += 1
        cells[rr, cc] = 0
        cleared += 1
        if cc < col_lo:
            col_lo = cc
        if cc > col_hi:
            col_hi = cc
    # Gravity on touched columns: stable downward compaction.
    for cc in range(col_lo, col_hi + 1):
        wp = h - 1
        for rr in range(h - 1, -1, -1):
            v = cells[rr, cc]
            if v != 0:
                cells[wp, cc] = v
                wp -= 1
        for rr in range(wp, -1, -1):
            cells[rr, cc] = 0
    # Column packing: shift non-empty columns left, zero-fill the right.
    # In normal form a column is non-empty iff its bottom cell is occupied.
    j = 0
    for cc in range(w):
        if cells[h - 1, cc] != 0:
            if j != cc:
                for rr in range(h):
                    cells[rr, j] = cells[rr, cc]
            j += 1
    for cc in range(j, w):
        for rr in range(h):
            cells[rr, cc] = 0
    return cleared


@njit(**_JIT)
def leftover_penalty(cells):
    """Sum of (count_c - 2)**2 over the colors still present on the board."""
    h, w = cells.shape
    counts = np.zeros(128, dtype=np.int64)
    for r in range(h):
        for c in range(w):
            v = cells[r, c]
            if v != 0:
                counts[v] += 1
    total = np.int64(0)
    for v in range(1, 128):
        if counts[v] > 0:
            d = counts[v] - 2
            total += d * d
    return total


# ---------------------------------------------------------------------------
# Playouts
# ---------------------------------------------------------------------------

@njit(**_JIT)
def random_playout(cells, rng_state):
    """Play uniformly random legal moves until terminal; return the score.

    Mutates ``cells`` (callers pass a scratch copy).  The returned value is
    the sum of per-move scores (n-2)**2 plus the terminal adjustment: +1000
    for a cleared board, minus the leftover penalty otherwise.
    """
    h, w = cells.shape
    cap = (h * w) // 2 + 1
    visited = np.empty(h * w, dtype=np.uint8)
    stack = np.empty(h * w, dtype=np.int32)
    reps = np.empty((cap, 2), dtype=np.int32)
    sizes = np.empty(cap, dtype=np.int32)
    total = 0.0
    while True:
        n = _flood_meta(cells, visited, stack, reps, sizes)
        if n == 0:
            if cells[h - 1, 0] == 0:
                total += 1000.0
            else:
                total -= leftover_penalty(cells)
            return total
        k = rng_below(rng_state, n)
        cleared = apply_move(cells, reps[k, 0], reps[k, 1])
        d = cleared - 2
        total += d * d


# ---------------------------------------------------------------------------
# Selection and backup arithmetic
# ---------------------------------------------------------------------------

@njit(**_JIT)
def select_edge(prior, n_visits, in_flight, q_bar, c_puct, vloss_weight,
                use_returns, r_min, r_max, rng_state):
    """Pick the edge maximizing normalized value plus exploration bonus.

    Effective value per edge is Q_bar minus the virtual loss
    ``vloss_weight * in_flight * |Q_bar|``.  Values are mapped onto [-1, 1]
    with the node-local max-min scaling (all 1 when the spread is
    degenerate), then the PUCT bonus
    ``c_puct * prior * sqrt(parent_visits) / (1 + visits)`` is added.
    Exact ties break uniformly at random from the seeded stream.  The
    chosen edge's visit and in-flight counters are incremented before
    returning its index.
    """
    n = prior.shape[0]
    parent = np.int64(0)
    for i in range(n):
        parent += n_visits[i]
    if parent < 1:
        parent = 1
    sqrt_parent = np.sqrt(np.float64(parent))

    lo = np.inf
    hi = -np.inf
    if use_returns:
        lo = r_min
        hi = r_max
        if not (hi > lo):
            lo = np.inf
            hi = -np.inf
    else:
        for i in range(n):
            q = q_bar[i]
            eff = q - vloss_weight * in_flight[i] * abs(q)
            if eff < lo:
                lo = eff
            if eff > hi:
                hi = eff

    best = -np.inf
    pick = 0
    ties = 1
    span = hi - lo
    for i in range(n):
        q = q_bar[i]
        eff = q - vloss_weight * in_flight[i] * abs(q)
        if span > 0.0:
            norm = 2.0 * (eff - lo) / span - 1.0
        else:
            norm = 1.0
        score = norm + c_puct * prior[i] * sqrt_parent / (1.0 + n_visits[i])
        if score > best:
            best = score
            pick = i
            ties = 1
        elif score == best:
            ties += 1
            if rng_below(rng_state, ties) == 0:
                pick = i
    n_visits[pick] += 1
    in_flight[pick] += 1
    return pick


@njit(**_JIT)
def update_edge(n_visits, in_flight, q_total, q_bar, i, value):
    """Fold one completed simulation into edge i; returns the new in-flight count."""
    q_total[i] += value
    q_bar[i] = q_total[i] / n_visits[i]
    in_flight[i] -= 1
    return in_flight[i]
