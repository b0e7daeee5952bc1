"""
Semantic approaches wired into the engines.

- SSC: crossover retried until the exchanged subtrees' semantic distance
  falls inside [LBSS, UBSS].
- SCD: the distance count to a pivot replaces crowding distance (NSGA-II)
  or the density term (SPEA2).
- SDO: the normalized distance count to the pivot becomes a third,
  minimized criterion.

The pivot is the member of the first front with the largest finite
crowding distance, recomputed every generation.
"""
import dataclasses
import enum
import logging
from dataclasses import dataclass

import numpy as np

from emo import ENGINES, Mechanism, crowding_distance, nondominated, objective_matrix
from gp_core import crossover_point, evaluate_semantics, node_count, swap_subtrees
from metrics import FrontMember, RunResult
from semantics import DistanceRule, SimilarityBounds, pivot_distance, select_pivot, ssc_distance

# Set up logging
logger = logging.getLogger(__name__)

DEFAULT_SSC_TRIALS = 12


class SemanticConfigError(ValueError):
    """Raised for invalid semantic settings or unsupported engine combinations"""


class Approach(enum.Enum):
    CANONICAL = "canonical"
    SSC = "ssc"
    SCD = "scd"
    SDO = "sdo"


@dataclass(frozen=True)
class SemanticConfig:
    approach: Approach = Approach.CANONICAL
    bounds: SimilarityBounds = SimilarityBounds(0.01, 0.5)
    distance_rule: DistanceRule = DistanceRule.EQ2
    ssc_max_trials: int = DEFAULT_SSC_TRIALS
    ssc_subset_fraction: float = 1.0
    ssc_whole_parent: bool = False
    allow_moead_scd: bool = False

    def __post_init__(self):
        try:
            object.__setattr__(self, "approach", Approach(self.approach))
            object.__setattr__(self, "distance_rule", DistanceRule(self.distance_rule))
        except ValueError as e:
            raise SemanticConfigError(str(e)) from None
        if isinstance(self.bounds, (tuple, list)):
            object.__setattr__(self, "bounds", SimilarityBounds(*self.bounds))
        if self.ssc_max_trials < 1:
            raise SemanticConfigError(f"ssc_max_trials must be at least 1, got {self.ssc_max_trials}")
        if not 0.0 < self.ssc_subset_fraction <= 1.0:
            raise SemanticConfigError(f"ssc_subset_fraction must lie in (0, 1], got {self.ssc_subset_fraction}")


@dataclass(frozen=True)
class SSCResult:
    offspring: tuple
    trials: int
    accepted: bool
    distance: float


def _subtree_semantics(parent, index, ds):
    if index == 0 and parent.semantics is not None:
        return parent.semantics
    return evaluate_semantics(parent.tree.subtree(index), ds)


def ssc_crossover(p1, p2, cfg, rng, max_depth, ds, subset=None):
    """
    Semantic similarity-based crossover.

    Up to ``cfg.ssc_max_trials`` crossover points are drawn; the first
    trial whose semantic distance lies in [LBSS, UBSS] and whose offspring
    both fit within max_depth is accepted. The distance is measured between
    the exchanged subtrees, or between the whole parents when
    ``cfg.ssc_whole_parent`` is set. Without an accepted trial the last
    trial's offspring are returned, with an over-deep child replaced by its
    parent.

    Identical parents always fail in whole-parent mode when LBSS > 0. In
    subtree mode they can still exchange two different subtrees of the same
    program, so such a trial may be accepted.
    """
    for trial in range(1, cfg.ssc_max_trials + 1):
        i = crossover_point(p1.tree, rng)
        j = crossover_point(p2.tree, rng)
        if cfg.ssc_whole_parent:
            distance = ssc_distance(p1.semantics, p2.semantics, subset)
        else:
            distance = ssc_distance(_subtree_semantics(p1, i, ds), _subtree_semantics(p2, j, ds), subset)
        c1, c2 = swap_subtrees(p1.tree, i, p2.tree, j)
        fits = c1.depth <= max_depth and c2.depth <= max_depth
        offspring = (c1 if c1.depth <= max_depth else p1.tree), (c2 if c2.depth <= max_depth else p2.tree)
        if fits and cfg.bounds.contains(distance):
            return SSCResult(offspring, trial, True, distance)
    logger.debug(f"SSC fell back to plain crossover after {cfg.ssc_max_trials} trials")
    return SSCResult(offspring, cfg.ssc_max_trials, False, distance)


def scd_assign(front_semantics, pivot, cfg):
    """Crowding surrogate of each member: its distance count to the pivot"""
    return np.array([pivot_distance(sem, pivot.semantics, cfg.bounds, cfg.distance_rule)
                     for sem in front_semantics], dtype=np.float64)


def sdo_extend(pop, pivot, cfg):
    """Append -d(p, pivot) / l to every individual's two base objectives"""
    extended = []
    for ind in pop:
        l = len(ind.semantics)
        d = pivot_distance(ind.semantics, pivot.semantics, cfg.bounds, cfg.distance_rule)
        objectives = np.append(ind.base_objectives, -d / l)
        objectives.setflags(write=False)
        extended.append(dataclasses.replace(ind, objectives=objectives))
    return extended


def pick_pivot(population, rng):
    """Pivot from the first (1-TPR, 1-TNR) front of ``population``"""
    F = objective_matrix(population, base=True)
    first = nondominated(F)
    return select_pivot([population[i].semantics for i in first], crowding_distance(F[first]), rng)


class SSCMechanism(Mechanism):
    name = "ssc"

    def __init__(self, problem, config, semantic, subset=None):
        super().__init__(problem, config)
        self.semantic = semantic
        self.subset = subset
        self.trials = 0
        self.accepted = 0

    def crossover(self, p1, p2, rng):
        result = ssc_crossover(p1, p2, self.semantic, rng, self.config.max_depth, self.problem.train, self.subset)
        self.trials += result.trials
        self.accepted += int(result.accepted)
        return result.offspring


class SCDMechanism(Mechanism):
    """
    Semantic crowding. Under MOEA/D (limitation studies only) the pivot
    count breaks ties between equal Tchebycheff values.
    """
    name = "scd"

    def __init__(self, problem, config, semantic):
        super().__init__(problem, config)
        self.semantic = semantic
        self.pivot = None

    def semantic_density(self, population, rng):
        self.pivot = pick_pivot(population, rng)
        return scd_assign([ind.semantics for ind in population], self.pivot, self.semantic)

    def begin_generation(self, reference, rng):
        self.pivot = pick_pivot(reference, rng)

    def prefers(self, child, incumbent):
        if self.pivot is None:
            return False
        b, rule = self.semantic.bounds, self.semantic.distance_rule
        return (pivot_distance(child.semantics, self.pivot.semantics, b, rule)
                > pivot_distance(incumbent.semantics, self.pivot.semantics, b, rule))


class SDOMechanism(Mechanism):
    name = "sdo"
    n_objectives = 3

    def __init__(self, problem, config, semantic):
        super().__init__(problem, config)
        self.semantic = semantic
        self.pivot = None

    def prepare(self, population, rng):
        self.begin_generation(population, rng)
        return self.extend(population)

    def begin_generation(self, reference, rng):
        self.pivot = pick_pivot(reference, rng)

    def extend(self, population):
        return sdo_extend(population, self.pivot, self.semantic)


def build_mechanism(cfg, problem, config, subset=None):
    if cfg.approach is Approach.SSC:
        return SSCMechanism(problem, config, cfg, subset)
    if cfg.approach is Approach.SCD:
        return SCDMechanism(problem, config, cfg)
    if cfg.approach is Approach.SDO:
        return SDOMechanism(problem, config, cfg)
    return Mechanism(problem, config)


def check_combination(engine, cfg):
    if engine not in ENGINES:
        raise SemanticConfigError(f"Unknown engine {engine!r}; expected one of {sorted(ENGINES)}")
    if engine == "moead" and cfg.approach is Approach.SCD and not cfg.allow_moead_scd:
        raise SemanticConfigError("SCD has no crowding distance to replace under MOEA/D; "
                                  "set allow_moead_scd to run it as a limitation study")


def run_variant(engine, cfg, problem, config, rng, seed=None, on_generation=None):
    """
    Run one engine with the configured semantic approach.

    Returns:
        RunResult whose front holds 2-entry (1-TPR, 1-TNR) vectors only
    """
    check_combination(engine, cfg)
    subset = None
    if cfg.approach is Approach.SSC and cfg.ssc_subset_fraction < 1.0:
        n = problem.n_cases
        size = max(1, int(round(cfg.ssc_subset_fraction * n)))
        subset = np.sort(rng.choice(n, size=size, replace=False))
    mechanism = build_mechanism(cfg, problem, config, subset)
    logger.info(f"Running {engine} with approach {cfg.approach.value} "
                f"(LBSS={cfg.bounds.lbss}, UBSS={cfg.bounds.ubss}, rule={cfg.distance_rule.value})")
    run = ENGINES[engine](problem, config, rng, mechanism, on_generation)
    if isinstance(mechanism, SSCMechanism) and mechanism.trials:
        logger.info(f"SSC accepted {mechanism.accepted} crossovers in {mechanism.trials} trials")

    members = []
    for ind in run.front:
        test = problem.test_objectives(ind.tree)
        members.append(FrontMember(
            program=ind.tree.to_prefix(),
            objectives=tuple(float(x) for x in ind.base_objectives),
            nodes=node_count(ind.tree),
            test_objectives=tuple(float(x) for x in test) if test is not None else None,
        ))
    members.sort(key=lambda m: (m.objectives, m.nodes, m.program))
    return RunResult(seed=seed, engine=engine, approach=cfg.approach.value, front=members,
                     stats=run.stats, reference_point=tuple(config.reference_point))
