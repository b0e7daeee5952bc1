"""
Multi-objective engines over GP populations: NSGA-II, SPEA2 and MOEA/D.

All objectives are minimized. Engines are deterministic for a given
generator; the only parallel step is program evaluation, which is pure.
The ``Mechanism`` object is where semantic approaches hook into variation,
objective extension and density estimation; the base class is the
canonical behaviour and consumes nothing from the generator.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from gp_core import (INIT_DEPTHS, MAX_DEPTH, ramped_half_and_half, subtree_crossover,
                     subtree_mutation)
from metrics import REFERENCE_POINT, generation_stats

# Set up logging
logger = logging.getLogger(__name__)


class EMOError(ValueError):
    """Raised for invalid engine input or configuration"""


@dataclass
class EngineConfig:
    """GP and engine parameters shared by all three engines"""
    pop_size: int = 100
    generations: int = 30
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    init_min_depth: int = INIT_DEPTHS[0]
    init_max_depth: int = INIT_DEPTHS[1]
    max_depth: int = MAX_DEPTH
    mutation_depth: int = 4
    archive_size: int = None
    moead_neighbors: int = 20
    moead_max_replacements: int = 2
    moead_neighbor_prob: float = 0.9
    reference_point: tuple = REFERENCE_POINT
    unique_by: str = "objectives"

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("crossover_rate", "mutation_rate", "moead_neighbor_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise EMOError(f"{name} must lie in [0, 1], got {value}")
        if self.pop_size < 2:
            raise EMOError(f"pop_size must be at least 2, got {self.pop_size}")
        if self.generations < 1:
            raise EMOError(f"generations must be at least 1, got {self.generations}")
        if not 1 <= self.init_min_depth <= self.init_max_depth <= self.max_depth:
            raise EMOError("Need 1 <= init_min_depth <= init_max_depth <= max_depth")
        if self.archive_size is not None and self.archive_size < 1:
            raise EMOError(f"archive_size must be positive, got {self.archive_size}")
        if self.moead_neighbors < 2 or self.moead_max_replacements < 1:
            raise EMOError("MOEA/D needs at least 2 neighbors and 1 replacement per child")
        if self.unique_by not in ("objectives", "semantics"):
            raise EMOError(f"unique_by must be 'objectives' or 'semantics', got {self.unique_by!r}")

    @property
    def spea2_archive_size(self):
        return self.archive_size or self.pop_size


class Mechanism:
    """Canonical hooks; semantic approaches override some of them"""

    name = "canonical"
    n_objectives = 2

    def __init__(self, problem, config):
        self.problem = problem
        self.config = config

    def crossover(self, p1, p2, rng):
        return subtree_crossover(p1.tree, p2.tree, rng, self.config.max_depth)

    def prepare(self, population, rng):
        """Adjust objective vectors of a merged population before selection"""
        return population

    def semantic_density(self, population, rng):
        """Replacement for crowding/density (larger = preferred), or None"""
        return None

    def begin_generation(self, reference, rng):
        """MOEA/D: refresh per-generation state from the external archive"""

    def extend(self, population):
        """MOEA/D: bring objective vectors to the engine's dimension"""
        return population

    def prefers(self, child, incumbent):
        """MOEA/D tie-break between equal aggregation values"""
        return False


def dominates(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise EMOError(f"Objective vectors differ in length: {a.shape} vs {b.shape}")
    return bool(np.all(a <= b) and np.any(a < b))


def objective_matrix(population, base=False):
    """Stack objective vectors into an (n, m) matrix"""
    rows = []
    for i, ind in enumerate(population):
        if ind.objectives is None:
            raise EMOError(f"Individual {i} has no objective vector")
        rows.append(ind.base_objectives if base else ind.objectives)
    if not rows:
        return np.empty((0, 2))
    if len({len(row) for row in rows}) != 1:
        raise EMOError("Objective vectors differ in length within the population")
    return np.array(rows, dtype=np.float64)


def _as_matrix(points):
    if isinstance(points, np.ndarray):
        return np.atleast_2d(points.astype(np.float64))
    points = list(points)
    if not points:
        return np.empty((0, 2))
    if hasattr(points[0], "tree"):
        return objective_matrix(points)
    return np.array(points, dtype=np.float64).reshape(len(points), -1)


def dominance_matrix(F):
    """D[i, j] is True when row i dominates row j"""
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    return le & lt


def fast_nondominated_sort(population):
    """
    Partition into non-domination layers.

    Args:
        population: individuals with objectives, or an (n, m) array

    Returns:
        list of fronts, each a list of indices in ascending order
    """
    F = _as_matrix(population)
    n = len(F)
    if n == 0:
        return []
    D = dominance_matrix(F)
    dominated_by = D.sum(axis=0)
    assigned = np.zeros(n, dtype=bool)
    fronts = []
    current = np.flatnonzero(dominated_by == 0)
    while current.size:
        fronts.append(current.tolist())
        assigned[current] = True
        dominated_by = dominated_by - D[current].sum(axis=0)
        current = np.flatnonzero((dominated_by == 0) & ~assigned)
    return fronts


def nondominated(points):
    """Indices of the mutually non-dominated members"""
    F = _as_matrix(points)
    if len(F) == 0:
        return []
    return np.flatnonzero(~dominance_matrix(F).any(axis=0)).tolist()


def crowding_distance(front):
    """
    NSGA-II crowding distance of each member of one front.

    Boundary members of every objective get +inf; zero-range objectives
    add nothing to interior members.
    """
    F = _as_matrix(front)
    n, m = F.shape
    distance = np.zeros(n)
    if n <= 2:
        distance[:] = np.inf
        return distance
    for k in range(m):
        order = np.argsort(F[:, k], kind="stable")
        values = F[order, k]
        distance[order[0]] = distance[order[-1]] = np.inf
        span = values[-1] - values[0]
        if span == 0:
            continue
        distance[order[1:-1]] += (values[2:] - values[:-2]) / span
    return distance


def environmental_selection(fronts, density, size):
    """Fill front by front; the last partial front keeps its highest-density members"""
    chosen = []
    for front in fronts:
        if len(chosen) + len(front) <= size:
            chosen.extend(front)
            continue
        ranked = sorted(front, key=lambda i: -density[i])
        chosen.extend(ranked[:size - len(chosen)])
        break
    return chosen


def rank_tournament(rank, density, rng, n):
    """Binary tournaments on (rank, density); ties keep the first contestant"""
    winners = []
    for _ in range(n):
        a, b = (int(x) for x in rng.integers(len(rank), size=2))
        if rank[b] < rank[a] or (rank[b] == rank[a] and density[b] > density[a]):
            a = b
        winners.append(a)
    return winners


def fitness_tournament(fitness, rng, n):
    """Binary tournaments on a minimized scalar fitness"""
    winners = []
    for _ in range(n):
        a, b = (int(x) for x in rng.integers(len(fitness), size=2))
        winners.append(b if fitness[b] < fitness[a] else a)
    return winners


def breed(pool, mechanism, rng):
    """Pairwise crossover then per-child mutation; returns len(pool) program trees"""
    config = mechanism.config
    primitives = mechanism.problem.primitives
    offspring = []
    for k in range(0, len(pool), 2):
        p1, p2 = pool[k], pool[(k + 1) % len(pool)]
        if rng.random() < config.crossover_rate:
            c1, c2 = mechanism.crossover(p1, p2, rng)
        else:
            c1, c2 = p1.tree, p2.tree
        for child in (c1, c2):
            if rng.random() < config.mutation_rate:
                child = subtree_mutation(child, rng, primitives, config.max_depth, config.mutation_depth)
            offspring.append(child)
    return offspring[:len(pool)]


def report_front(population):
    """Members of the first front in the (1-TPR, 1-TNR) plane"""
    return [population[i] for i in nondominated(objective_matrix(population, base=True))]


def initial_population(problem, config, rng, size=None):
    trees = ramped_half_and_half(size or config.pop_size, config.init_min_depth, config.init_max_depth,
                                 problem.primitives, rng)
    return problem.evaluate_population(trees)


@dataclass
class EngineRun:
    front: list
    stats: list
    population: list


def _record(stats, generation, front, population, config, engine):
    entry = generation_stats(generation, front, population, config.reference_point, config.unique_by)
    stats.append(entry)
    logger.info(f"[{engine}] generation {generation}: hypervolume={entry.hypervolume:.4f} "
                f"front={entry.front_size} unique={entry.unique_count} mean_nodes={entry.mean_nodes:.1f}")


# --- NSGA-II -------------------------------------------------------------


@dataclass
class NSGA2State:
    population: list
    rank: np.ndarray
    density: np.ndarray
    generation: int = 0


def nsga2_select(population, size, mechanism, rng):
    """Sort the merged population and keep ``size`` survivors"""
    population = mechanism.prepare(population, rng)
    F = objective_matrix(population)
    fronts = fast_nondominated_sort(F)
    rank = np.empty(len(population), dtype=np.int64)
    for r, front in enumerate(fronts):
        rank[front] = r
    density = mechanism.semantic_density(population, rng)
    if density is None:
        density = np.zeros(len(population))
        for front in fronts:
            density[front] = crowding_distance(F[front])
    chosen = environmental_selection(fronts, density, size)
    return NSGA2State([population[i] for i in chosen], rank[chosen], np.asarray(density)[chosen])


def nsga2_initialize(problem, config, rng, mechanism):
    population = initial_population(problem, config, rng)
    return nsga2_select(population, len(population), mechanism, rng)


def nsga2_generation(state, mechanism, rng):
    """One NSGA-II step: tournament, variation, merge, sort, truncate"""
    config = mechanism.config
    pool = [state.population[i] for i in rank_tournament(state.rank, state.density, rng, config.pop_size)]
    offspring = mechanism.problem.evaluate_many(breed(pool, mechanism, rng))
    merged = list(state.population) + offspring
    selected = nsga2_select(merged, config.pop_size, mechanism, rng)
    selected.generation = state.generation + 1
    return selected


def run_nsga2(problem, config, rng, mechanism=None, on_generation=None):
    mechanism = mechanism or Mechanism(problem, config)
    state = nsga2_initialize(problem, config, rng, mechanism)
    stats = []
    for generation in range(config.generations):
        if generation:
            state = nsga2_generation(state, mechanism, rng)
        _record(stats, generation, report_front(state.population), state.population, config, "nsga2")
        if on_generation:
            on_generation(generation, state)
    return EngineRun(report_front(state.population), stats, state.population)


# --- SPEA2 ---------------------------------------------------------------


def spea2_fitness_components(F):
    """
    Strength, raw fitness and density of every row of F.

    Density uses the distance to the k-th nearest neighbour with
    k = floor(sqrt(n)), the row itself being the 0-th neighbour.
    """
    F = _as_matrix(F)
    n = len(F)
    D = dominance_matrix(F)
    strength = D.sum(axis=1).astype(np.float64)
    raw = (D * strength[:, None]).sum(axis=0)
    k = min(int(math.isqrt(n)), n - 1)
    sigma = np.sort(cdist(F, F), axis=1)[:, k]
    density = 1.0 / (sigma + 2.0)
    return strength, raw, density


def spea2_fitness(pop, archive):
    """SPEA2 fitness R + D for pop followed by archive"""
    parts = [m for m in (_as_matrix(pop), _as_matrix(archive)) if m.size]
    if not parts:
        return np.empty(0)
    F = np.vstack(parts)
    _, raw, density = spea2_fitness_components(F)
    return raw + density


def truncation_indices(F, target_size):
    """Indices kept by SPEA2 archive truncation, in input order"""
    F = _as_matrix(F)
    if target_size <= 0:
        raise EMOError(f"Truncation target must be positive, got {target_size}")
    alive = list(range(len(F)))
    if len(alive) <= target_size:
        return alive
    distances = cdist(F, F)
    np.fill_diagonal(distances, np.inf)
    while len(alive) > target_size:
        rows = np.sort(distances[np.ix_(alive, alive)], axis=1)
        # lexsort treats the last key as primary; stable, so ties drop the lowest index
        victim = int(np.lexsort(rows.T[::-1])[0])
        del alive[victim]
    return alive


def spea2_truncate(archive, target_size):
    """Iteratively drop the member with the lexicographically smallest neighbour distances"""
    kept = truncation_indices(archive, target_size)
    if isinstance(archive, np.ndarray):
        return archive[kept]
    return [archive[i] for i in kept]


@dataclass
class SPEA2State:
    population: list
    archive: list
    fitness: np.ndarray
    generation: int = 0


def spea2_select(union, archive_size, mechanism, rng):
    """SPEA2 environmental selection over population plus archive"""
    union = mechanism.prepare(union, rng)
    F = objective_matrix(union)
    _, raw, density = spea2_fitness_components(F)
    surrogate = mechanism.semantic_density(union, rng)
    if surrogate is not None:
        density = 1.0 / (np.asarray(surrogate, dtype=np.float64) + 2.0)
    fitness = raw + density
    nondom = np.flatnonzero(raw == 0)
    if len(nondom) <= archive_size:
        dominated = [i for i in np.argsort(fitness, kind="stable") if raw[i] > 0]
        chosen = nondom.tolist() + dominated[:archive_size - len(nondom)]
    elif surrogate is not None:
        chosen = sorted(nondom.tolist(), key=lambda i: -surrogate[i])[:archive_size]
    else:
        chosen = nondom[truncation_indices(F[nondom], archive_size)].tolist()
    return [union[i] for i in chosen], fitness[chosen]


def spea2_initialize(problem, config, rng, mechanism):
    population = initial_population(problem, config, rng)
    archive, fitness = spea2_select(population, config.spea2_archive_size, mechanism, rng)
    return SPEA2State(population, archive, fitness)


def spea2_generation(state, mechanism, rng):
    """Mate from the archive, then select the next archive from offspring plus archive"""
    config = mechanism.config
    pool = [state.archive[i] for i in fitness_tournament(state.fitness, rng, config.pop_size)]
    offspring = mechanism.problem.evaluate_many(breed(pool, mechanism, rng))
    archive, fitness = spea2_select(offspring + list(state.archive), config.spea2_archive_size, mechanism, rng)
    return SPEA2State(offspring, archive, fitness, state.generation + 1)


def run_spea2(problem, config, rng, mechanism=None, on_generation=None):
    mechanism = mechanism or Mechanism(problem, config)
    state = spea2_initialize(problem, config, rng, mechanism)
    stats = []
    for generation in range(config.generations):
        if generation:
            state = spea2_generation(state, mechanism, rng)
        _record(stats, generation, report_front(state.archive), state.archive, config, "spea2")
        if on_generation:
            on_generation(generation, state)
    return EngineRun(report_front(state.archive), stats, state.archive)


# --- MOEA/D --------------------------------------------------------------


@dataclass
class WeightVectorSet:
    weights: np.ndarray
    neighbors: np.ndarray

    def __len__(self):
        return len(self.weights)


def simplex_lattice(m, h):
    """All weight vectors with components in {0, 1/h, ..., 1} summing to 1"""
    vectors = []
    for bars in itertools.combinations(range(h + m - 1), m - 1):
        parts = np.diff((-1,) + bars + (h + m - 1,)) - 1
        vectors.append(parts / h)
    return np.array(vectors, dtype=np.float64)


def build_weights(m, pop_size, n_neighbors):
    """Smallest lattice with at least pop_size vectors, plus T nearest neighbours (self included)"""
    h = 1
    while math.comb(h + m - 1, m - 1) < pop_size:
        h += 1
    weights = simplex_lattice(m, h)
    t = min(n_neighbors, len(weights))
    neighbors = np.argsort(cdist(weights, weights), axis=1, kind="stable")[:, :t]
    return WeightVectorSet(weights, neighbors)


def tchebycheff(f, w, z):
    f, w, z = (np.asarray(x, dtype=np.float64) for x in (f, w, z))
    if not f.shape == w.shape == z.shape:
        raise EMOError(f"Tchebycheff inputs differ in length: {f.shape}, {w.shape}, {z.shape}")
    return float(np.max(w * np.abs(f - z)))


def moead_replace(population, weights, ideal, child, candidates, max_replacements, mechanism=None):
    """
    Replace subproblem solutions the child improves, at most ``max_replacements``.

    Returns:
        (new population list, replaced subproblem indices)
    """
    population = list(population)
    replaced = []
    for j in candidates:
        if len(replaced) >= max_replacements:
            break
        j = int(j)
        g_child = tchebycheff(child.objectives, weights[j], ideal)
        g_old = tchebycheff(population[j].objectives, weights[j], ideal)
        if g_child < g_old or (g_child == g_old and mechanism is not None
                               and mechanism.prefers(child, population[j])):
            population[j] = child
            replaced.append(j)
    return population, replaced


def update_archive(archive, child):
    """External archive of non-dominated (1-TPR, 1-TNR) vectors, no duplicates"""
    f = child.base_objectives
    for member in archive:
        if np.array_equal(member.base_objectives, f) or dominates(member.base_objectives, f):
            return archive
    return [m for m in archive if not dominates(f, m.base_objectives)] + [child]


@dataclass
class MOEADState:
    population: list
    weights: WeightVectorSet
    ideal: np.ndarray
    archive: list = field(default_factory=list)
    generation: int = 0


def moead_initialize(problem, config, rng, mechanism):
    weights = build_weights(mechanism.n_objectives, config.pop_size, config.moead_neighbors)
    population = initial_population(problem, config, rng, size=len(weights))
    archive = []
    for ind in population:
        archive = update_archive(archive, ind)
    mechanism.begin_generation(archive, rng)
    population = mechanism.extend(population)
    ideal = objective_matrix(population).min(axis=0)
    return MOEADState(population, weights, ideal, archive)


def moead_generation(state, mechanism, rng):
    """One pass over every subproblem: mate, evaluate, update ideal point, replace, archive"""
    config = mechanism.config
    problem = mechanism.problem
    n = len(state.weights)
    mechanism.begin_generation(state.archive, rng)
    population = mechanism.extend(state.population)
    ideal = np.minimum(state.ideal, objective_matrix(population).min(axis=0))
    archive = list(state.archive)
    everyone = np.arange(n)
    for i in range(n):
        pool = state.weights.neighbors[i] if rng.random() < config.moead_neighbor_prob else everyone
        a, b = (int(x) for x in rng.choice(pool, size=2, replace=False))
        if rng.random() < config.crossover_rate:
            tree, _ = mechanism.crossover(population[a], population[b], rng)
        else:
            tree = population[a].tree
        if rng.random() < config.mutation_rate:
            tree = subtree_mutation(tree, rng, problem.primitives, config.max_depth, config.mutation_depth)
        child = mechanism.extend([problem.evaluate(tree)])[0]
        ideal = np.minimum(ideal, child.objectives)
        population, replaced = moead_replace(population, state.weights.weights, ideal, child,
                                             rng.permutation(pool), config.moead_max_replacements, mechanism)
        if replaced:
            logger.debug(f"Subproblem {i}: child replaced {replaced}")
        archive = update_archive(archive, child)
    return MOEADState(population, state.weights, ideal, archive, state.generation + 1)


def run_moead(problem, config, rng, mechanism=None, on_generation=None):
    mechanism = mechanism or Mechanism(problem, config)
    state = moead_initialize(problem, config, rng, mechanism)
    stats = []
    for generation in range(config.generations):
        if generation:
            state = moead_generation(state, mechanism, rng)
        _record(stats, generation, report_front(state.archive), state.population, config, "moead")
        if on_generation:
            on_generation(generation, state)
    return EngineRun(report_front(state.archive), stats, state.population)


ENGINES = {
    "nsga2": run_nsga2,
    "spea2": run_spea2,
    "moead": run_moead,
}
