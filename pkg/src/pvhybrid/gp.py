"""Tree-based genetic programming for symbolic regression.

Random streams are keyed by ``(seed, generation, slot)`` so a run depends
only on its config and data, never on how fitness evaluation is scheduled
across worker threads.
"""

from __future__ import annotations

import enum
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import expr
from .errors import EmptyInputError, InputShapeError
from .expr import (
    BINARY_OPS,
    UNARY_OPS,
    Constant,
    ExprNode,
    ExprTree,
    Operator,
    OpKind,
    Variable,
)

ALL_OPS = tuple(OpKind)
MAX_VARIATION_RETRIES = 8
MUTATION_SUBTREE_DEPTH = 2


@dataclass(frozen=True)
class GpConfig:
    population_size: int = 500
    generations: int = 20
    tournament_size: int = 7
    crossover_prob: float = 0.9
    subtree_mutation_prob: float = 0.05
    point_mutation_prob: float = 0.01
    max_depth: int = 12
    init_depth_range: tuple = (2, 6)
    parsimony_coefficient: float = 0.001
    stop_rmse: float = 0.0
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        lo, hi = self.init_depth_range
        object.__setattr__(self, "init_depth_range", (int(lo), int(hi)))
        if self.population_size < 1 or self.generations < 1:
            raise ValueError("population_size and generations must be positive")
        if not 1 <= self.tournament_size <= self.population_size:
            raise ValueError("tournament_size must lie in [1, population_size]")
        probs = (self.crossover_prob, self.subtree_mutation_prob, self.point_mutation_prob)
        if any(p < 0 or p > 1 for p in probs) or sum(probs) > 1 + 1e-12:
            raise ValueError("variation probabilities must be in [0, 1] and sum to <= 1")
        if not 1 <= lo <= hi <= self.max_depth:
            raise ValueError("need 1 <= init min <= init max <= max_depth")
        if self.parsimony_coefficient < 0 or self.stop_rmse < 0:
            raise ValueError("parsimony_coefficient and stop_rmse must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class Individual:
    tree: ExprTree
    raw_rmse: float
    penalized_fitness: float

    @property
    def size(self) -> int:
        return expr.node_count(self.tree.root)


class StopReason(enum.Enum):
    GENERATION_BUDGET = "GenerationBudget"
    RMSE_THRESHOLD = "RmseThreshold"


@dataclass
class GpRunReport:
    best: Individual
    best_rmse_per_generation: list
    generations_executed: int
    stop_reason: StopReason
    best_fitness_per_generation: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            f"best_sexpr = {expr.print_sexpr(self.best.tree)}",
            f"best_raw_rmse = {self.best.raw_rmse!r}",
            f"best_penalized_fitness = {self.best.penalized_fitness!r}",
            f"best_size = {self.best.size}",
            f"best_depth = {expr.depth(self.best.tree.root)}",
            f"input_dim = {self.best.tree.input_dim}",
            f"generations_executed = {self.generations_executed}",
            f"stop_reason = {self.stop_reason.value}",
        ]
        return "\n".join(lines) + "\n"

    def trace_csv(self) -> str:
        buf = io.StringIO()
        buf.write("generation,best_rmse,best_penalized_fitness\n")
        for g, (r, f) in enumerate(
            zip(self.best_rmse_per_generation, self.best_fitness_per_generation)
        ):
            buf.write(f"{g},{r!r},{f!r}\n")
        return buf.getvalue()


def stream(seed: int, generation: int, slot: int) -> np.random.Generator:
    return np.random.default_rng([seed, generation, slot])


# ---------------------------------------------------------------------------
# tree generation


def random_terminal(input_dim: int, rng: np.random.Generator) -> ExprNode:
    # one constant slot alongside the variables
    i = int(rng.integers(input_dim + 1))
    if i == input_dim:
        return Constant(float(rng.uniform(-1.0, 1.0)))
    return Variable(i)


def random_tree(
    input_dim: int, max_depth: int, min_depth: int, full: bool, rng: np.random.Generator
) -> ExprNode:
    """Grow (``full=False``) or full tree with depth in ``[min_depth, max_depth]``."""
    p_op = len(ALL_OPS) / (len(ALL_OPS) + input_dim + 1)

    def build(d):
        if d >= max_depth:
            return random_terminal(input_dim, rng)
        if full or d < min_depth or rng.random() < p_op:
            kind = ALL_OPS[int(rng.integers(len(ALL_OPS)))]
            return Operator(kind, tuple(build(d + 1) for _ in range(kind.arity)))
        return random_terminal(input_dim, rng)

    return build(0)


def init_population(cfg: GpConfig, input_dim: int) -> list:
    """Ramped half-and-half over ``cfg.init_depth_range``."""
    if input_dim < 1:
        raise InputShapeError("input_dim must be >= 1")
    lo, hi = cfg.init_depth_range
    n_depths = hi - lo + 1
    trees = []
    for slot in range(cfg.population_size):
        rng = stream(cfg.seed, 0, slot)
        d = lo + (slot // 2) % n_depths
        root = random_tree(input_dim, d, lo, full=(slot % 2 == 0), rng=rng)
        trees.append(ExprTree(root, input_dim))
    return trees


# ---------------------------------------------------------------------------
# fitness and selection


def fitness(tree: ExprTree, X, y, parsimony: float) -> tuple[float, float]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0 or X.shape[0] == 0:
        raise EmptyInputError("fitness needs at least one row")
    if X.shape[0] != y.shape[0]:
        raise InputShapeError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    err = expr.evaluate_batch(tree, X) - y
    raw = math.sqrt(float(np.dot(err, err)) / y.size)
    if not math.isfinite(raw):
        raw = float(np.finfo(np.float64).max) / 4
    return raw, raw + parsimony * expr.node_count(tree.root)


def _better(a: Individual, b: Individual) -> bool:
    if a.penalized_fitness != b.penalized_fitness:
        return a.penalized_fitness < b.penalized_fitness
    return a.size < b.size


def tournament_select(pop: list, k: int, rng: np.random.Generator) -> Individual:
    """Best of ``k`` uniform draws with replacement.

    Ties go to the smaller tree, then to the earlier draw.
    """
    draws = rng.integers(len(pop), size=k)
    best = pop[int(draws[0])]
    for i in draws[1:]:
        cand = pop[int(i)]
        if _better(cand, best):
            best = cand
    return best


# ---------------------------------------------------------------------------
# variation


def _n_nodes(node: ExprNode) -> int:
    return expr.node_count(node)


def crossover(a: ExprTree, b: ExprTree, max_depth: int, rng: np.random.Generator) -> ExprTree:
    na, nb = _n_nodes(a.root), _n_nodes(b.root)
    for _ in range(MAX_VARIATION_RETRIES):
        cut = int(rng.integers(na))
        donor = expr.subtree_at(b.root, int(rng.integers(nb)))
        child = expr.replace_subtree(a.root, cut, donor)
        if expr.depth(child) <= max_depth:
            return ExprTree(child, a.input_dim)
    return a


def _point_replace(node: ExprNode, input_dim: int, rng: np.random.Generator) -> ExprNode:
    if isinstance(node, Operator):
        pool = BINARY_OPS if node.kind.arity == 2 else UNARY_OPS
        others = [k for k in pool if k is not node.kind]
        kind = others[int(rng.integers(len(others)))]
        return Operator(kind, node.children)
    return random_terminal(input_dim, rng)


class MutationMode(enum.Enum):
    SUBTREE = "subtree"
    POINT = "point"


def mutate(t: ExprTree, mode: MutationMode | str, max_depth: int, rng: np.random.Generator) -> ExprTree:
    mode = MutationMode(mode)
    n = _n_nodes(t.root)
    if mode is MutationMode.POINT:
        i = int(rng.integers(n))
        new = _point_replace(expr.subtree_at(t.root, i), t.input_dim, rng)
        return ExprTree(expr.replace_subtree(t.root, i, new), t.input_dim)
    for _ in range(MAX_VARIATION_RETRIES):
        i = int(rng.integers(n))
        fresh = random_tree(t.input_dim, MUTATION_SUBTREE_DEPTH, 0, full=False, rng=rng)
        child = expr.replace_subtree(t.root, i, fresh)
        if expr.depth(child) <= max_depth:
            return ExprTree(child, t.input_dim)
    return t


# ---------------------------------------------------------------------------
# evolution


def _evaluate_population(trees, X, y, cfg: GpConfig, pool) -> list:
    def one(tree):
        raw, pen = fitness(tree, X, y, cfg.parsimony_coefficient)
        return Individual(tree, raw, pen)

    if pool is None:
        return [one(t) for t in trees]
    return list(pool.map(one, trees))


def _raw_key(ind: Individual):
    return (ind.raw_rmse, ind.penalized_fitness, ind.size)


def _pen_key(ind: Individual):
    return (ind.penalized_fitness, ind.size)


def _offspring(cfg: GpConfig, pop: list, generation: int, slot: int) -> ExprTree:
    rng = stream(cfg.seed, generation, slot)
    parent = tournament_select(pop, cfg.tournament_size, rng)
    u = rng.random()
    c1 = cfg.crossover_prob
    c2 = c1 + cfg.subtree_mutation_prob
    c3 = c2 + cfg.point_mutation_prob
    if u < c1:
        donor = tournament_select(pop, cfg.tournament_size, rng)
        return crossover(parent.tree, donor.tree, cfg.max_depth, rng)
    if u < c2:
        return mutate(parent.tree, MutationMode.SUBTREE, cfg.max_depth, rng)
    if u < c3:
        return mutate(parent.tree, MutationMode.POINT, cfg.max_depth, rng)
    return parent.tree


def evolve(cfg: GpConfig, X, y, on_generation=None) -> GpRunReport:
    """Run generational GP and return the most accurate tree found.

    Each new generation keeps the lowest-RMSE individual and, when it is a
    different tree, the lowest-penalized-fitness individual, so that both the
    best RMSE and the best penalized fitness are non-increasing.  A non-finite
    ``stop_rmse`` disables early stopping.  ``on_generation(g, population)``
    is called after every evaluation (used for trace validation).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] == 0 or y.size == 0:
        raise EmptyInputError("evolve needs a non-empty 2-D X and y")
    if X.shape[0] != y.size:
        raise InputShapeError(f"X has {X.shape[0]} rows but y has {y.size}")

    pool = ThreadPoolExecutor(cfg.n_jobs) if cfg.n_jobs > 1 else None
    try:
        trees = init_population(cfg, X.shape[1])
        rmse_trace, fit_trace = [], []
        reason = StopReason.GENERATION_BUDGET
        best = None
        for g in range(cfg.generations):
            pop = _evaluate_population(trees, X, y, cfg, pool)
            if on_generation is not None:
                on_generation(g, pop)
            best = min(pop, key=_raw_key)
            rmse_trace.append(best.raw_rmse)
            fit_trace.append(min(pop, key=_pen_key).penalized_fitness)
            if math.isfinite(cfg.stop_rmse) and best.raw_rmse <= cfg.stop_rmse:
                reason = StopReason.RMSE_THRESHOLD
                break
            if g == cfg.generations - 1:
                break
            elites = [best.tree]
            lean = min(pop, key=_pen_key)
            if lean.tree != best.tree:
                elites.append(lean.tree)
            elites = elites[: cfg.population_size]
            trees = elites + [
                _offspring(cfg, pop, g + 1, slot)
                for slot in range(len(elites), cfg.population_size)
            ]
    finally:
        if pool is not None:
            pool.shutdown()
    return GpRunReport(best, rmse_trace, len(rmse_trace), reason, fit_trace)


def predict(tree: ExprTree, X) -> np.ndarray:
    return expr.evaluate_batch(tree, X)
