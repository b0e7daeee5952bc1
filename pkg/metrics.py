"""
Post-hoc analysis: 2-D hypervolume, unique-solution diversity and program
size statistics, plus the records a run reports.
"""
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from gp_core import node_count
from objectives import rates

# Set up logging
logger = logging.getLogger(__name__)

REFERENCE_POINT = (1.01, 1.01)
HYPERVOLUME_SPACE = "raw (1-TPR, 1-TNR)"


class MetricsError(ValueError):
    """Raised when a statistic is undefined for its input"""


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    hypervolume: float
    unique_count: int
    mean_nodes: float
    front_size: int

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class SizeStats:
    mean: float
    median: float
    max: int


@dataclass(frozen=True)
class FrontMember:
    """One reported solution: program text, train objectives and size"""
    program: str
    objectives: tuple
    nodes: int
    test_objectives: tuple = None

    def to_dict(self):
        tpr, tnr = rates(self.objectives)
        data = {"program": self.program, "objectives": list(self.objectives), "tpr": tpr, "tnr": tnr,
                "nodes": self.nodes, "test_objectives": None, "test_tpr": None, "test_tnr": None}
        if self.test_objectives is not None:
            data["test_objectives"] = list(self.test_objectives)
            data["test_tpr"], data["test_tnr"] = rates(self.test_objectives)
        return data

    @classmethod
    def from_dict(cls, data):
        test = data.get("test_objectives")
        return cls(data["program"], tuple(data["objectives"]), int(data["nodes"]),
                   tuple(test) if test is not None else None)


@dataclass
class RunResult:
    """Final front and per-generation statistics of one seeded run"""
    seed: int
    engine: str
    approach: str
    front: list
    stats: list
    config: dict = field(default_factory=dict)
    reference_point: tuple = REFERENCE_POINT
    hypervolume_space: str = HYPERVOLUME_SPACE
    wall_time: float = None

    @property
    def final(self):
        return self.stats[-1]


def hypervolume_2d(front, ref=REFERENCE_POINT):
    """
    Exact area dominated by a 2-objective minimization front.

    Points not strictly better than ``ref`` in both objectives add nothing
    and are discarded; dominated points are skipped by the sweep.
    """
    points = np.asarray(front, dtype=np.float64).reshape(-1, 2)
    r1, r2 = float(ref[0]), float(ref[1])
    points = points[(points[:, 0] < r1) & (points[:, 1] < r2)]
    if points.size == 0:
        return 0.0
    order = np.lexsort((points[:, 1], points[:, 0]))
    sweep = []
    best_f2 = np.inf
    for f1, f2 in points[order]:
        if f2 < best_f2:
            sweep.append((f1, f2))
            best_f2 = f2
    volume = 0.0
    for k, (f1, f2) in enumerate(sweep):
        next_f1 = sweep[k + 1][0] if k + 1 < len(sweep) else r1
        volume += (next_f1 - f1) * (r2 - f2)
    return float(volume)


def unique_solutions(vectors):
    """Number of distinct vectors under exact equality"""
    return len({tuple(float(x) for x in np.ravel(v)) for v in vectors})


def size_stats(population):
    if len(population) == 0:
        raise MetricsError("Cannot compute size statistics of an empty population")
    counts = np.array([node_count(getattr(ind, "tree", ind)) for ind in population])
    return SizeStats(float(counts.mean()), float(np.median(counts)), int(counts.max()))


def generation_stats(generation, front, population, ref=REFERENCE_POINT, unique_by="objectives"):
    """
    Statistics of one generation.

    Args:
        front: reported first front (individuals with 2-entry base objectives)
        population: the engine's working population, used for mean_nodes
        unique_by: "objectives" or "semantics"
    """
    base = [ind.base_objectives for ind in front]
    if unique_by == "semantics":
        unique = unique_solutions(ind.semantics for ind in front)
    elif unique_by == "objectives":
        unique = unique_solutions(base)
    else:
        raise MetricsError(f"Unknown uniqueness mode {unique_by!r}")
    return GenerationStats(
        generation=generation,
        hypervolume=hypervolume_2d(base, ref),
        unique_count=unique,
        mean_nodes=size_stats(population).mean,
        front_size=len(front),
    )
