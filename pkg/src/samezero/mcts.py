"""Tree-parallel Monte-Carlo Tree Search with policy priors.

The search keeps one shared tree; any number of threads run simulations on
it concurrently, synchronizing through per-node mutexes.  Four ingredients
make plain PUCT work for single-agent score maximization at unknown reward
scale:

* node-local max-min normalization: action values are mapped onto [-1, 1]
  using the node's own value spread (all 1 when the spread is degenerate),
  so the exploration constant keeps meaning across boards and depths;
* virtual loss: an edge with W in-flight simulations is penalized by
  ``w * W * |Q|`` during selection, steering concurrent threads apart;
* optimistic initialization: after a node's first rollout returns R, every
  edge mean starts at R, so untried actions stay competitive;
* policy priors: a (possibly uniform) policy supplies the PUCT prior over
  the node's legal actions at expansion time.

One simulation = selection down the tree, expansion of the reached leaf,
one rollout (first step: the leaf's highest-prior edge; afterwards random
or policy-sampled moves), and backpropagation of the return along the
selected path.  Returns are incremental: the value folded into an edge is
the score accumulated from that edge's parent state to the end of the
playout, terminal adjustment included.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import _kernels as _k
from .board import Action, Board, apply_action, encode_board
from .policy import masked_renormalize

Evaluator = Callable[[np.ndarray], np.ndarray]


class SearchUsageError(ValueError):
    """Raised for invalid configurations or preconditions."""


class SearchContractError(RuntimeError):
    """Raised when an internal bookkeeping invariant is violated."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

ROLLOUT_RANDOM = "random"
ROLLOUT_POLICY = "policy"


@dataclass
class SearchConfig:
    """Knobs for one search (and, via play_episode, one episode).

    ``simulations_per_move`` is the planning budget per committed move;
    ``time_budget_s`` replaces it with a wall-clock budget when set (at
    least one simulation always completes).  ``dirichlet_alpha`` switches
    on root exploration noise and is meant for training episodes only.
    """

    simulations_per_move: int = 100
    c_puct: float = 4.0
    virtual_loss_weight: float = 0.01
    rollout_mode: str = ROLLOUT_RANDOM
    thread_count: int = 1
    seed: int = 0
    dirichlet_alpha: Optional[float] = None
    dirichlet_epsilon: float = 0.25
    eval_batch_size: Optional[int] = None
    eval_timeout_s: float = 0.002
    time_budget_s: Optional[float] = None
    tree_reuse: bool = False
    normalize_by_returns: bool = False

    def validate(self) -> None:
        if self.time_budget_s is None and self.simulations_per_move < 1:
            raise SearchUsageError("simulations_per_move must be >= 1")
        if self.time_budget_s is not None and self.time_budget_s <= 0:
            raise SearchUsageError("time_budget_s must be positive")
        if self.thread_count < 1:
            raise SearchUsageError("thread_count must be >= 1")
        if self.c_puct < 0:
            raise SearchUsageError("c_puct must be non-negative")
        if self.virtual_loss_weight < 0:
            raise SearchUsageError("virtual_loss_weight must be non-negative")
        if self.rollout_mode not in (ROLLOUT_RANDOM, ROLLOUT_POLICY):
            raise SearchUsageError(f"unknown rollout_mode {self.rollout_mode!r}")
        if self.dirichlet_alpha is not None and self.dirichlet_alpha <= 0:
            raise SearchUsageError("dirichlet_alpha must be positive when set")
        if not (0.0 <= self.dirichlet_epsilon <= 1.0):
            raise SearchUsageError("dirichlet_epsilon must lie in [0, 1]")
        if self.eval_timeout_s < 0:
            raise SearchUsageError("eval_timeout_s must be non-negative")


# ---------------------------------------------------------------------------
# Tree nodes
# ---------------------------------------------------------------------------

class SearchNode:
    """One state in the shared tree, with per-edge statistics.

    Edges follow the canonical legal-action order of the state.  Arrays are
    allocated at expansion; a node with zero legal actions is terminal and
    never expands.  All mutation happens under ``lock``.
    """

    __slots__ = (
        "board", "reps", "flat_actions", "n_edges", "terminal", "expanded",
        "prior", "visit_counts", "in_flight", "value_totals", "value_means",
        "edge_scores", "children", "lock", "opt_initialized",
        "return_min", "return_max",
    )

    def __init__(self, board: Board):
        reps, _, n = _k.groups_meta(board.cells)
        self.board = board
        self.reps = reps[:n].copy()
        self.n_edges = int(n)
        self.terminal = n == 0
        self.flat_actions = (self.reps[:, 0] * board.width + self.reps[:, 1]).astype(np.int64)
        self.expanded = False
        self.prior = None
        self.visit_counts = None
        self.in_flight = None
        self.value_totals = None
        self.value_means = None
        self.edge_scores = None
        self.children = None
        self.lock = threading.Lock()
        self.opt_initialized = False
        self.return_min = np.inf
        self.return_max = -np.inf

    def actions(self) -> list[Action]:
        return [Action(int(r), int(c)) for r, c in self.reps]

    def install_priors(self, prior: np.ndarray) -> None:
        """Allocate edge statistics; caller holds the lock."""
        n = self.n_edges
        self.prior = np.ascontiguousarray(prior, dtype=np.float64)
        self.visit_counts = np.zeros(n, dtype=np.int64)
        self.in_flight = np.zeros(n, dtype=np.int64)
        self.value_totals = np.zeros(n, dtype=np.float64)
        self.value_means = np.zeros(n, dtype=np.float64)
        self.edge_scores = np.zeros(n, dtype=np.float64)
        self.children = [None] * n
        self.expanded = True


# ---------------------------------------------------------------------------
# Pure selection arithmetic (the reference route for the fused kernel)
# ---------------------------------------------------------------------------

def virtual_loss(q_bar: np.ndarray, in_flight: np.ndarray, weight: float) -> np.ndarray:
    """Temporary selection penalty ``weight * W * |Q|`` per edge."""
    return weight * np.asarray(in_flight, dtype=np.float64) * np.abs(q_bar)


def normalize_values(values: np.ndarray) -> np.ndarray:
    """Map values onto [-1, 1] by the vector's own extrema.

    Degenerate spreads (no values, or max == min) map everything to 1,
    keeping untried nodes optimistic.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return v.copy()
    lo = v.min()
    hi = v.max()
    if not (hi > lo):
        return np.ones_like(v)
    return 2.0 * (v - lo) / (hi - lo) - 1.0


def puct_bonus(prior: np.ndarray, visit_counts: np.ndarray, parent_visits: int,
               c_puct: float) -> np.ndarray:
    """Exploration bonus ``c * prior * sqrt(parent) / (1 + visits)``.

    ``parent_visits`` is floored at 1 so that a freshly expanded node
    already orders its edges by prior.
    """
    parent = max(int(parent_visits), 1)
    return c_puct * np.asarray(prior, dtype=np.float64) * np.sqrt(parent) / (
        1.0 + np.asarray(visit_counts, dtype=np.float64)
    )


def selection_scores(prior, visit_counts, in_flight, q_bar, c_puct, weight) -> np.ndarray:
    """Composed per-edge selection score; mirrors the fused kernel exactly."""
    eff = np.asarray(q_bar, dtype=np.float64) - virtual_loss(q_bar, in_flight, weight)
    parent = int(np.sum(visit_counts))
    return normalize_values(eff) + puct_bonus(prior, visit_counts, parent, c_puct)


def dirichlet_mix(priors: np.ndarray, alpha: float, epsilon: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Blend priors with Dirichlet(alpha) noise: (1 - eps) * p + eps * noise.

    The Dirichlet draw is built from per-component Gamma(alpha, 1) samples
    normalized by their sum; a degenerate all-zero draw falls back to the
    uniform distribution.
    """
    n = len(priors)
    g = rng.gamma(alpha, 1.0, size=n)
    total = g.sum()
    if not np.isfinite(total) or total <= 0.0:
        noise = np.full(n, 1.0 / n)
    else:
        noise = g / total
    return (1.0 - epsilon) * np.asarray(priors, dtype=np.float64) + epsilon * noise


# ---------------------------------------------------------------------------
# Tree operations
# ---------------------------------------------------------------------------

def select_edge(node: SearchNode, cfg: SearchConfig, rng_state: np.ndarray) -> int:
    """Pick an edge by normalized value plus PUCT bonus; mark it in flight.

    The chosen edge's visit and in-flight counters are incremented before
    the index is returned.  Ties break uniformly at random.
    """
    if not node.expanded or node.terminal:
        raise SearchContractError("select_edge requires an expanded, non-terminal node")
    with node.lock:
        return int(_k.select_edge(
            node.prior, node.visit_counts, node.in_flight, node.value_means,
            cfg.c_puct, cfg.virtual_loss_weight,
            cfg.normalize_by_returns, node.return_min, node.return_max,
            rng_state,
        ))


def optimistic_init(node: SearchNode, first_return: float) -> None:
    """Seed every edge mean with the node's first rollout return.

    Called exactly once per node, right after its first rollout completes;
    a second call is a contract violation.  The value is an initialization
    override only: it is not folded into the running totals, and any edge
    that already completed a backpropagation keeps its measured mean.
    """
    with node.lock:
        if node.opt_initialized:
            raise SearchContractError("optimistic_init called twice on one node")
        node.opt_initialized = True
        untouched = (node.visit_counts - node.in_flight) == 0
        node.value_means[untouched] = float(first_return)


def backpropagate(path: list[tuple[SearchNode, int]], tail_return: float) -> None:
    """Fold one simulation's return into every edge on the selected path.

    ``tail_return`` is the return measured from the state *below* the last
    path edge (0 for a terminal node, the playout return otherwise).  Each
    step up adds the edge's own move score, so each edge receives the
    return from its parent state onward.  Every update releases the
    in-flight mark taken at selection time.
    """
    value = float(tail_return)
    for node, i in reversed(path):
        with node.lock:
            value += node.edge_scores[i]
            left = _k.update_edge(
                node.visit_counts, node.in_flight,
                node.value_totals, node.value_means, i, value,
            )
            if value < node.return_min:
                node.return_min = value
            if value > node.return_max:
                node.return_max = value
        if left < 0:
            raise SearchContractError("in-flight counter went negative during backpropagation")


# ---------------------------------------------------------------------------
# Evaluation routing
# ---------------------------------------------------------------------------

class EvalQueue:
    """Multi-producer, single-consumer batching front-end for a policy model.

    Search threads submit encoded states and block until their prior vector
    is ready.  The consumer drains the queue into one batch and flushes when
    the batch-size limit is reached, when every in-flight request has
    arrived (nothing more can come until replies go out), or when the
    timeout since the first pending request expires.
    """

    def __init__(self, model, batch_size: int = 8, timeout_s: float = 0.002):
        if batch_size < 1:
            raise SearchUsageError("eval batch size must be >= 1")
        self._model = model
        self._batch_size = int(batch_size)
        self._timeout_s = float(timeout_s)
        self._cond = threading.Condition()
        self._pending: list[list] = []
        self._waiting = 0
        self._closed = False
        self.requests = 0
        self.batches = 0
        self.max_batch = 0
        self._thread = threading.Thread(target=self._run, name="eval-queue", daemon=True)
        self._thread.start()

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Submit one encoded state; blocks until the model's output returns."""
        item = [x, threading.Event(), None]
        with self._cond:
            if self._closed:
                raise SearchUsageError("evaluation queue is closed")
            self._waiting += 1
            self._pending.append(item)
            self._cond.notify_all()
        item[1].wait()
        with self._cond:
            self._waiting -= 1
        result = item[2]
        if isinstance(result, BaseException):
            raise result
        return result

    def _take_batch(self) -> list[list]:
        with self._cond:
            while not self._pending and not self._closed:
                self._cond.wait()
            if not self._pending:
                return []
            deadline = time.monotonic() + self._timeout_s
            while (
                len(self._pending) < self._batch_size
                and len(self._pending) < self._waiting
                and not self._closed
            ):
                remaining = deadline - time.monotonic()
                if remaining <= 0 or not self._cond.wait(timeout=remaining):
                    break
            batch = self._pending[: self._batch_size]
            del self._pending[: len(batch)]
            return batch

    def _run(self) -> None:
        while True:
            batch = self._take_batch()
            if not batch:
                return
            try:
                stacked = np.stack([item[0] for item in batch])
                outputs = self._model.evaluate_batch(stacked)
                for item, out in zip(batch, outputs):
                    item[2] = np.asarray(out)
            except BaseException as exc:  # propagate to all blocked producers
                for item in batch:
                    item[2] = exc
            self.requests += len(batch)
            self.batches += 1
            self.max_batch = max(self.max_batch, len(batch))
            for item in batch:
                item[1].set()

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()
        self._thread.join()


# ---------------------------------------------------------------------------
# The search proper
# ---------------------------------------------------------------------------

@dataclass
class _Tally:
    simulations: int = 0
    expansions: int = 0
    leaf_expansions: int = 0


@dataclass
class RootSnapshot:
    """Root edge statistics at the end of a search."""

    actions: list[Action]
    prior: np.ndarray
    visit_counts: np.ndarray
    in_flight: np.ndarray
    value_means: np.ndarray


@dataclass
class SearchResult:
    best_action: Action
    simulations: int
    expansions: int
    leaf_expansions: int
    wall_time_s: float
    root: RootSnapshot
    diagnostics: dict = field(default_factory=dict)


class _Budget:
    """Thread-safe simulation claim: fixed count or wall-clock deadline."""

    def __init__(self, count: Optional[int], deadline: Optional[float]):
        self._lock = threading.Lock()
        self._remaining = count
        self._deadline = deadline
        self._claimed = 0

    def claim(self) -> bool:
        with self._lock:
            if self._remaining is not None:
                if self._remaining <= 0:
                    return False
                self._remaining -= 1
                self._claimed += 1
                return True
            # Wall-clock budget: always allow the first simulation.
            if self._claimed > 0 and time.monotonic() >= self._deadline:
                return False
            self._claimed += 1
            return True


class _SearchContext:
    def __init__(self, root: SearchNode, cfg: SearchConfig, evaluator: Optional[Evaluator],
                 noise_rng: np.random.Generator):
        self.root = root
        self.cfg = cfg
        self.evaluator = evaluator
        self.noise_rng = noise_rng
        self.uniform_fallbacks = 0

    def priors_for(self, node: SearchNode) -> np.ndarray:
        n = node.n_edges
        if self.evaluator is None:
            return np.full(n, 1.0 / n)
        raw = self.evaluator(encode_board(node.board))
        priors, fell_back = masked_renormalize(raw, node.flat_actions)
        if fell_back:
            self.uniform_fallbacks += 1
        return priors


def _ensure_expanded(node: SearchNode, ctx: _SearchContext) -> bool:
    """Expand the node if needed; returns True when this call expanded it.

    The node stays locked until its priors are installed, so competing
    threads wait here instead of duplicating the expansion (or selecting
    from a half-built node).
    """
    if node.expanded:
        return False
    with node.lock:
        if node.expanded:
            return False
        priors = ctx.priors_for(node)
        if node is ctx.root and ctx.cfg.dirichlet_alpha is not None:
            priors = dirichlet_mix(
                priors, ctx.cfg.dirichlet_alpha, ctx.cfg.dirichlet_epsilon, ctx.noise_rng
            )
        node.install_priors(priors)
        return True


def _get_or_create_child(node: SearchNode, i: int, tally: _Tally) -> SearchNode:
    """Child node behind edge i, creating it (and its edge score) on demand.

    Caller holds ``node.lock``.  Creating a terminal child is its first and
    only visit, so it is booked as a leaf expansion right here.
    """
    child = node.children[i]
    if child is None:
        out = apply_action(node.board, Action(int(node.reps[i, 0]), int(node.reps[i, 1])))
        child = SearchNode(out.board)
        node.edge_scores[i] = out.move_score + out.terminal_adjustment
        node.children[i] = child
        if child.terminal:
            tally.expansions += 1
            tally.leaf_expansions += 1
    return child


def rollout(node: SearchNode, ctx: _SearchContext, rng_state: np.ndarray,
            tally: _Tally) -> tuple[float, tuple[SearchNode, int]]:
    """Run the simulation phase from a freshly expanded node.

    The first step takes the node's highest-prior edge (ties resolved by
    canonical action order), marking it in flight exactly like a selection.
    Subsequent moves are uniformly random or policy-sampled until terminal.
    Returns the playout return measured from *below* the first edge, plus
    the path entry for that edge; the caller folds in the edge score.
    """
    i = int(np.argmax(node.prior))
    with node.lock:
        node.visit_counts[i] += 1
        node.in_flight[i] += 1
        child = _get_or_create_child(node, i, tally)
    if child.terminal:
        return 0.0, (node, i)
    if ctx.cfg.rollout_mode == ROLLOUT_POLICY and ctx.evaluator is not None:
        value = _policy_playout(child.board, ctx, rng_state)
    else:
        value = float(_k.random_playout(child.board.cells.copy(), rng_state))
    return value, (node, i)


def _policy_playout(board: Board, ctx: _SearchContext, rng_state: np.ndarray) -> float:
    """Playout that samples each move from the policy over legal actions."""
    total = 0.0
    while True:
        reps, _, n = _k.groups_meta(board.cells)
        if n == 0:
            if board.is_empty:
                return total + 1000.0
            return total - float(_k.leftover_penalty(board.cells))
        flat = (reps[:n, 0] * board.width + reps[:n, 1]).astype(np.int64)
        raw = ctx.evaluator(encode_board(board))
        probs, fell_back = masked_renormalize(raw, flat)
        if fell_back:
            ctx.uniform_fallbacks += 1
        u = float(_k.rng_uniform(rng_state))
        k = int(np.searchsorted(np.cumsum(probs), u, side="right"))
        if k >= n:
            k = n - 1
        out = apply_action(board, Action(int(reps[k, 0]), int(reps[k, 1])))
        total += out.move_score + out.terminal_adjustment
        board = out.board


def _simulate(ctx: _SearchContext, rng_state: np.ndarray, tally: _Tally) -> None:
    """One complete simulation: select, expand, roll out, backpropagate."""
    cfg = ctx.cfg
    node = ctx.root
    path: list[tuple[SearchNode, int]] = []
    tail = 0.0
    while True:
        if node.terminal:
            tail = 0.0
            break
        if _ensure_expanded(node, ctx):
            tally.expansions += 1
            tail, entry = rollout(node, ctx, rng_state, tally)
            path.append(entry)
            leaf, i = entry
            optimistic_init(leaf, tail + float(leaf.edge_scores[i]))
            break
        with node.lock:
            i = int(_k.select_edge(
                node.prior, node.visit_counts, node.in_flight, node.value_means,
                cfg.c_puct, cfg.virtual_loss_weight,
                cfg.normalize_by_returns, node.return_min, node.return_max,
                rng_state,
            ))
            child = _get_or_create_child(node, i, tally)
        path.append((node, i))
        if child.terminal:
            tail = 0.0
            break
        node = child
    backpropagate(path, tail)
    tally.simulations += 1


def _pick_best_action(root: SearchNode, rng: np.random.Generator) -> Action:
    """Highest mean return among root edges with at least one visit."""
    visited = np.flatnonzero(root.visit_counts >= 1)
    if visited.size == 0:
        raise SearchContractError("no root edge was visited")
    means = root.value_means[visited]
    best = means.max()
    ties = visited[means == best]
    pick = int(ties[0]) if ties.size == 1 else int(rng.choice(ties))
    return Action(int(root.reps[pick, 0]), int(root.reps[pick, 1]))


def search(board: Board, cfg: SearchConfig, policy=None, *,
           evaluator: Optional[Evaluator] = None,
           root: Optional[SearchNode] = None) -> tuple[SearchResult, SearchNode]:
    """Run one full search from ``board`` and return the committed choice.

    ``policy`` may be None (uniform priors, the plain-search configuration)
    or a model with ``evaluate``/``evaluate_batch``.  ``evaluator`` injects
    an external evaluation front-end (for example a shared batching queue)
    and takes precedence over ``policy``.  ``root`` re-enters a previously
    built subtree (tree reuse); new root noise is never re-applied to an
    already expanded root.

    Returns ``(result, root_node)``; the root node can seed the next search
    when tree reuse is enabled.
    """
    cfg.validate()
    if cfg.rollout_mode == ROLLOUT_POLICY and policy is None and evaluator is None:
        raise SearchUsageError("policy rollouts require a policy or evaluator")

    if root is None:
        root_node = SearchNode(board)
    else:
        if root.board != board:
            raise SearchUsageError("reused root does not match the search board")
        root_node = root
    if root_node.terminal:
        raise SearchUsageError("cannot search a terminal state")

    owned_queue: Optional[EvalQueue] = None
    if evaluator is None and policy is not None and not getattr(policy, "is_uniform", False):
        if cfg.thread_count == 1:
            evaluator = lambda x: policy.evaluate(x)  # noqa: E731
        else:
            batch = cfg.eval_batch_size or cfg.thread_count
            owned_queue = EvalQueue(policy, batch_size=batch, timeout_s=cfg.eval_timeout_s)
            evaluator = owned_queue.evaluate

    ss = np.random.SeedSequence(cfg.seed)
    children = ss.spawn(cfg.thread_count + 2)
    thread_states = [
        child.generate_state(1, dtype=np.uint64) for child in children[: cfg.thread_count]
    ]
    noise_rng = np.random.Generator(np.random.Philox(children[-2]))
    tie_rng = np.random.Generator(np.random.Philox(children[-1]))

    ctx = _SearchContext(root_node, cfg, evaluator, noise_rng)
    deadline = None
    count = None
    if cfg.time_budget_s is not None:
        deadline = time.monotonic() + cfg.time_budget_s
    else:
        count = cfg.simulations_per_move
    budget = _Budget(count, deadline)
    tallies = [_Tally() for _ in range(cfg.thread_count)]
    errors: list[BaseException] = []

    def worker(tid: int) -> None:
        state = thread_states[tid]
        tally = tallies[tid]
        try:
            while budget.claim():
                _simulate(ctx, state, tally)
        except BaseException as exc:
            errors.append(exc)

    t0 = time.perf_counter()
    try:
        if cfg.thread_count == 1:
            worker(0)
        else:
            threads = [
                threading.Thread(target=worker, args=(i,), name=f"search-{i}")
                for i in range(cfg.thread_count)
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
    finally:
        if owned_queue is not None:
            owned_queue.close()
    wall = time.perf_counter() - t0
    if errors:
        raise errors[0]

    best = _pick_best_action(root_node, tie_rng)
    snapshot = RootSnapshot(
        actions=root_node.actions(),
        prior=root_node.prior.copy(),
        visit_counts=root_node.visit_counts.copy(),
        in_flight=root_node.in_flight.copy(),
        value_means=root_node.value_means.copy(),
    )
    diagnostics = {"uniform_fallbacks": ctx.uniform_fallbacks}
    if owned_queue is not None:
        diagnostics.update(
            eval_requests=owned_queue.requests,
            eval_batches=owned_queue.batches,
            eval_max_batch=owned_queue.max_batch,
        )
    result = SearchResult(
        best_action=best,
        simulations=sum(t.simulations for t in tallies),
        expansions=sum(t.expansions for t in tallies),
        leaf_expansions=sum(t.leaf_expansions for t in tallies),
        wall_time_s=wall,
        root=snapshot,
        diagnostics=diagnostics,
    )
    return result, root_node


# ---------------------------------------------------------------------------
# Commit-and-play episodes
# ---------------------------------------------------------------------------

@dataclass
class EpisodeStep:
    board: Board
    action: Action
    move_score: int
    terminal_adjustment: int
    search: SearchResult


@dataclass
class EpisodeResult:
    """One finished game: the committed line and its verified score."""

    steps: list[EpisodeStep]
    final_board: Board
    final_score: int

    @property
    def actions(self) -> list[Action]:
        return [s.action for s in self.steps]

    @property
    def move_scores(self) -> list[int]:
        return [s.move_score for s in self.steps]


def play_episode(board: Board, cfg: SearchConfig, policy=None, *,
                 evaluator: Optional[Evaluator] = None) -> EpisodeResult:
    """Interleave planning and playing until the game ends.

    Each move runs a fresh search with the per-move planning budget and
    commits the best root action.  The tree is rebuilt per move unless
    ``cfg.tree_reuse`` keeps the committed child's subtree.  Per-move
    search seeds are derived from ``cfg.seed`` and the move index, so a
    fixed seed fixes the whole episode (single-threaded).
    """
    if board.is_terminal:
        raise SearchUsageError("cannot start an episode from a terminal board")
    steps: list[EpisodeStep] = []
    total = 0
    reuse_root: Optional[SearchNode] = None
    move_index = 0
    while not board.is_terminal:
        move_seed = int(np.random.SeedSequence([cfg.seed, move_index]).generate_state(1)[0])
        move_cfg = replace(cfg, seed=move_seed)
        result, root_node = search(
            board, move_cfg, policy, evaluator=evaluator, root=reuse_root
        )
        out = apply_action(board, result.best_action)
        steps.append(EpisodeStep(
            board=board,
            action=result.best_action,
            move_score=out.move_score,
            terminal_adjustment=out.terminal_adjustment,
            search=result,
        ))
        total += out.move_score + out.terminal_adjustment
        board = out.board
        if cfg.tree_reuse:
            idx = root_node.actions().index(result.best_action)
            reuse_root = root_node.children[idx]
        move_index += 1
    return EpisodeResult(steps=steps, final_board=board, final_score=total)
