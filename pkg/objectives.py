"""
Classification objectives: the (1 - TPR, 1 - TNR) minimization pair, and the
problem object that turns programs into evaluated individuals.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from dataset import NEGATIVE, POSITIVE
from gp_core import Individual, PrimitiveSet, evaluate_semantics

# Set up logging
logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.0


class ObjectiveError(ValueError):
    """Raised for inconsistent predictions, labels or counts"""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fn: int
    tn: int
    fp: int

    def __post_init__(self):
        if min(self.tp, self.fn, self.tn, self.fp) < 0:
            raise ObjectiveError(f"Confusion counts must be non-negative: {self}")

    @property
    def tpr(self):
        return self.tp / (self.tp + self.fn)

    @property
    def tnr(self):
        return self.tn / (self.tn + self.fp)


def classify(sem, threshold=DEFAULT_THRESHOLD):
    """Predict POSITIVE where the program output is >= threshold"""
    return np.where(np.asarray(sem) >= threshold, POSITIVE, NEGATIVE)


def confusion(predictions, labels):
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ObjectiveError(f"Length mismatch: {predictions.shape} predictions vs {labels.shape} labels")
    positive = labels == POSITIVE
    if positive.all() or not positive.any():
        raise ObjectiveError("Labels must contain both classes")
    predicted = predictions == POSITIVE
    tp = int(np.count_nonzero(predicted & positive))
    fp = int(np.count_nonzero(predicted & ~positive))
    return ConfusionCounts(tp=tp, fn=int(np.count_nonzero(positive)) - tp,
                           tn=int(np.count_nonzero(~positive)) - fp, fp=fp)


def objective_vector(c):
    """(1 - TPR, 1 - TNR); both entries are minimized"""
    if c.tp + c.fn == 0 or c.tn + c.fp == 0:
        raise ObjectiveError(f"Both classes need at least one case: {c}")
    return np.array([1.0 - c.tpr, 1.0 - c.tnr])


def rates(objectives):
    """Convert a minimization vector back to (TPR, TNR)"""
    return 1.0 - float(objectives[0]), 1.0 - float(objectives[1])


class ClassificationProblem:
    """
    Binds a training split to the objective computation.

    Semantics are evaluated on ``train``; ``test`` is only used to report
    the final front. Evaluation of many programs may fan out over
    ``n_workers`` threads; results always come back in input order.
    """

    def __init__(self, train, test=None, threshold=DEFAULT_THRESHOLD, primitives=None, n_workers=1):
        self.train = train
        self.test = test
        self.threshold = threshold
        self.primitives = primitives or PrimitiveSet(train.n_features)
        self.n_workers = max(1, int(n_workers))

    @property
    def n_cases(self):
        return len(self.train)

    def objectives_on(self, tree, ds):
        sem = evaluate_semantics(tree, ds)
        return sem, objective_vector(confusion(classify(sem, self.threshold), ds.y))

    def evaluate(self, tree):
        sem, objectives = self.objectives_on(tree, self.train)
        objectives.setflags(write=False)
        return Individual(tree, sem, objectives, self.train.fingerprint)

    def evaluate_many(self, trees):
        trees = list(trees)
        if self.n_workers == 1 or len(trees) < 2:
            return [self.evaluate(tree) for tree in trees]
        with ThreadPoolExecutor(max_workers=self.n_workers) as pool:
            return list(pool.map(self.evaluate, trees))

    def evaluate_population(self, population):
        """Evaluate every member whose cache is missing or stale"""
        stale = [i for i, ind in enumerate(population) if not ind.is_evaluated_on(self.train)]
        fresh = self.evaluate_many(population[i].tree for i in stale)
        population = list(population)
        for i, ind in zip(stale, fresh):
            population[i] = ind
        return population

    def test_objectives(self, tree):
        """Objective vector on the held-out split, or None without one"""
        if self.test is None:
            return None
        return self.objectives_on(tree, self.test)[1]
