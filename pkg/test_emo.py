import math

import numpy as np
import pytest

from emo import (EMOError, EngineConfig, Mechanism, build_weights, crowding_distance, dominates,
                 environmental_selection, fast_nondominated_sort, fitness_tournament, moead_replace,
                 nondominated, nsga2_generation, nsga2_select, rank_tournament, run_moead, run_nsga2,
                 run_spea2, simplex_lattice, spea2_fitness, spea2_fitness_components, spea2_truncate,
                 tchebycheff, truncation_indices, update_archive)
from gp_core import Individual, parse_prefix
from objectives import ClassificationProblem
from test_mocks import brute_force_fronts, individual, scripted_rng


@pytest.fixture(scope="module")
def problem(synthetic):
    return ClassificationProblem(synthetic)


@pytest.fixture
def small():
    return EngineConfig(pop_size=20, generations=5, moead_neighbors=5)


def test_dominates():
    assert dominates((0.0, 0.0), (1.0, 1.0))
    assert dominates((0.0, 1.0), (0.5, 1.0))
    assert not dominates((0.5, 0.5), (0.5, 0.5))
    assert not dominates((0.0, 1.0), (1.0, 0.0))
    with pytest.raises(EMOError):
        dominates((0.0, 1.0), (0.0, 1.0, 2.0))


def test_sort_single_front_and_chain():
    assert fast_nondominated_sort(np.array([[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]])) == [[0, 1, 2]]
    assert fast_nondominated_sort(np.array([[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]])) == [[1], [2], [0]]


def test_sort_matches_peeling_oracle():
    rng = np.random.default_rng(2)
    for trial in range(100):
        n = int(rng.integers(1, 500))
        m = 2 if trial % 2 == 0 else 3
        # coarse grid values produce ties and duplicates
        F = rng.integers(0, 12, size=(n, m)).astype(np.float64) if trial % 3 == 0 else rng.random((n, m))
        assert fast_nondominated_sort(F) == brute_force_fronts(F)


def test_sort_of_individuals_and_missing_objectives():
    population = [individual((0.5, 0.5)), individual((0.2, 0.9)), individual((0.6, 0.6))]
    assert fast_nondominated_sort(population) == [[0, 1], [2]]
    with pytest.raises(EMOError):
        fast_nondominated_sort([individual((0.5, 0.5)), Individual(parse_prefix("x0"))])


def test_nondominated_keeps_duplicates():
    assert nondominated([(0.0, 1.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]) == [0, 1, 3]


def test_crowding_examples():
    assert crowding_distance([(0.0, 1.0), (0.5, 0.5), (1.0, 0.0)]).tolist() == [math.inf, 2.0, math.inf]
    assert crowding_distance([(0.0, 1.0), (1.0, 0.0)]).tolist() == [math.inf, math.inf]
    assert crowding_distance([(0.3, 0.3)] * 4).tolist() == [math.inf, 0.0, 0.0, math.inf]


def test_crowding_order_survives_rescaling():
    rng = np.random.default_rng(6)
    F = rng.random((12, 2))
    scaled = F * np.array([7.5, 1.0]) + np.array([3.0, 0.0])
    a, b = crowding_distance(F), crowding_distance(scaled)
    assert np.allclose(a, b)


def line_front():
    xs = np.array([0.0, 0.1, 0.4, 0.6, 0.9, 1.0])
    return np.column_stack([xs, 1.0 - xs])


def test_truncated_front_keeps_highest_crowding():
    F = line_front()
    density = crowding_distance(F)
    assert sorted(environmental_selection([list(range(6))], density, 4)) == [0, 2, 3, 5]


def test_nsga2_select_truncates_first_front():
    population = [individual(p) for p in line_front()]
    state = nsga2_select(population, 4, Mechanism(None, EngineConfig()), scripted_rng())
    kept = sorted(population.index(ind) for ind in state.population)
    assert kept == [0, 2, 3, 5]
    assert state.rank.tolist() == [0, 0, 0, 0]


def test_rank_tournament_prefers_rank_then_density():
    rng = scripted_rng(integers=[np.array([1, 0]), np.array([0, 1])])
    assert rank_tournament([0, 1], [0.0, 0.0], rng, 2) == [0, 0]
    rng = scripted_rng(integers=[np.array([0, 1])])
    assert rank_tournament([0, 0], [1.0, 5.0], rng, 1) == [1]
    rng = scripted_rng(integers=[np.array([0, 1])])
    assert rank_tournament([0, 0], [1.0, 1.0], rng, 1) == [0]


def test_fitness_tournament_minimizes():
    rng = scripted_rng(integers=[np.array([0, 1]), np.array([2, 1])])
    assert fitness_tournament([0.5, 0.2, 3.0], rng, 2) == [1, 1]


def test_spea2_chain():
    strength, raw, _ = spea2_fitness_components(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]))
    assert strength.tolist() == [2.0, 1.0, 0.0]
    assert raw.tolist() == [0.0, 2.0, 3.0]


def test_spea2_nondominated_fitness_below_one():
    fitness = spea2_fitness([(0.0, 1.0), (0.5, 0.5)], [(1.0, 0.0)])
    assert len(fitness) == 3
    assert (fitness < 1.0).all()


def brute_force_spea2(F):
    n = len(F)
    dom = [[bool(np.all(F[i] <= F[j]) and np.any(F[i] < F[j])) for j in range(n)] for i in range(n)]
    strength = [sum(dom[i]) for i in range(n)]
    raw = [sum(strength[j] for j in range(n) if dom[j][i]) for i in range(n)]
    k = min(math.isqrt(n), n - 1)
    density = [1.0 / (sorted(math.dist(F[i], F[j]) for j in range(n))[k] + 2.0) for i in range(n)]
    return strength, raw, density


def test_spea2_fitness_matches_brute_force():
    rng = np.random.default_rng(8)
    for _ in range(50):
        n = int(rng.integers(2, 100))
        F = rng.random((n, int(rng.integers(2, 4))))
        strength, raw, density = spea2_fitness_components(F)
        expected = brute_force_spea2(F)
        assert strength.tolist() == expected[0]
        assert raw.tolist() == expected[1]
        assert density.tolist() == pytest.approx(expected[2], rel=1e-12)


def test_truncation_removes_an_interior_collinear_point():
    F = np.array([[0.0, 3.0], [1.0, 2.0], [2.0, 1.0], [3.0, 0.0]])
    assert truncation_indices(F, 3) == [0, 2, 3]


def test_truncation_hits_target_size():
    rng = np.random.default_rng(10)
    F = rng.random((30, 2))
    for target in (1, 7, 29, 30, 40):
        assert len(spea2_truncate(F, target)) == min(target, 30)
    with pytest.raises(EMOError):
        spea2_truncate(F, 0)


def test_tchebycheff_examples():
    assert tchebycheff((0.4, 0.6), (0.5, 0.5), (0.0, 0.0)) == 0.3
    assert tchebycheff((0.4, 0.6), (1.0, 0.0), (0.0, 0.0)) == 0.4
    assert tchebycheff((0.2, 0.7), (0.3, 0.7), (0.2, 0.7)) == 0.0
    with pytest.raises(EMOError):
        tchebycheff((0.4, 0.6), (1.0,), (0.0, 0.0))


def test_simplex_lattice():
    assert simplex_lattice(2, 4).tolist() == [[0.0, 1.0], [0.25, 0.75], [0.5, 0.5], [0.75, 0.25], [1.0, 0.0]]
    three = simplex_lattice(3, 3)
    assert three.shape == (10, 3)
    assert np.allclose(three.sum(axis=1), 1.0)


def test_build_weights_neighborhoods():
    weights = build_weights(2, 10, 3)
    assert len(weights) == 10
    assert weights.neighbors.shape == (10, 3)
    assert weights.neighbors[:, 0].tolist() == list(range(10))


def toy_subproblems():
    weights = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])
    population = [individual((0.5, 0.5)) for _ in range(3)]
    return weights, population


def test_moead_replace_capped():
    weights, population = toy_subproblems()
    child = individual((0.0, 0.0))
    updated, replaced = moead_replace(population, weights, np.zeros(2), child, [0, 1, 2], 2)
    assert replaced == [0, 1]
    assert updated[0] is child and updated[1] is child and updated[2] is population[2]


def test_moead_replace_worse_child():
    weights, population = toy_subproblems()
    updated, replaced = moead_replace(population, weights, np.zeros(2), individual((0.9, 0.9)), [0, 1, 2], 2)
    assert replaced == []
    assert updated == population


def test_update_archive():
    a, b = individual((0.2, 0.8)), individual((0.8, 0.2))
    archive = update_archive(update_archive([], a), b)
    assert archive == [a, b]
    assert update_archive(archive, individual((0.9, 0.9))) == archive
    assert update_archive(archive, individual((0.2, 0.8))) == archive
    better = individual((0.1, 0.1))
    assert update_archive(archive, better) == [better]


def test_identical_population_keeps_size(problem, small):
    ind = problem.evaluate(parse_prefix("x0"))
    mechanism = Mechanism(problem, small)
    state = nsga2_select([ind] * small.pop_size, small.pop_size, mechanism, np.random.default_rng(0))
    nxt = nsga2_generation(state, mechanism, np.random.default_rng(1))
    assert len(nxt.population) == small.pop_size
    assert nxt.generation == 1


def fronts_of(run):
    return [ind.tree.to_prefix() for ind in run.front]


@pytest.mark.parametrize("engine", [run_nsga2, run_spea2, run_moead])
def test_engines_are_deterministic(problem, small, engine):
    a = engine(problem, small, np.random.default_rng(4))
    b = engine(problem, small, np.random.default_rng(4))
    assert fronts_of(a) == fronts_of(b)
    assert a.stats == b.stats
    assert len(a.stats) == small.generations


@pytest.mark.parametrize("engine", [run_nsga2, run_spea2, run_moead])
def test_reported_front_is_nondominated(problem, small, engine):
    run = engine(problem, small, np.random.default_rng(5))
    F = np.array([ind.base_objectives for ind in run.front])
    assert brute_force_fronts(F) == [list(range(len(F)))]


def test_population_sizes_are_constant(problem, small):
    sizes = []
    run_nsga2(problem, small, np.random.default_rng(6), on_generation=lambda g, s: sizes.append(len(s.population)))
    run_spea2(problem, small, np.random.default_rng(6), on_generation=lambda g, s: sizes.append(len(s.archive)))
    assert sizes == [small.pop_size] * (2 * small.generations)


@pytest.mark.parametrize("seed", range(5))
def test_moead_ideal_point_never_increases(problem, small, seed):
    ideals = []
    run_moead(problem, small, np.random.default_rng(seed), on_generation=lambda g, s: ideals.append(s.ideal.copy()))
    assert len(ideals) == small.generations
    for before, after in zip(ideals, ideals[1:]):
        assert (after <= before).all()


def test_engine_config_validation():
    with pytest.raises(EMOError):
        EngineConfig(crossover_rate=1.5)
    with pytest.raises(EMOError):
        EngineConfig(pop_size=1)
    with pytest.raises(EMOError):
        EngineConfig(unique_by="programs")
    assert EngineConfig(pop_size=30).spea2_archive_size == 30
