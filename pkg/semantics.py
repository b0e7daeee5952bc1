"""
Semantic distances between program output vectors, and pivot selection.
"""
import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

# Set up logging
logger = logging.getLogger(__name__)


class SemanticsError(ValueError):
    """Raised for mismatched semantic vectors or invalid bounds"""


class DistanceRule(enum.Enum):
    """Which count measures distance to the pivot"""
    EQ1 = "eq1"  # cases differing by more than UBSS
    EQ2 = "eq2"  # cases differing within [LBSS, UBSS]


@dataclass(frozen=True)
class SimilarityBounds:
    """Lower/upper semantic similarity bounds (LBSS, UBSS); UBSS may be +inf"""
    lbss: float = 0.0
    ubss: float = math.inf

    def __post_init__(self):
        if math.isnan(self.lbss) or math.isnan(self.ubss):
            raise SemanticsError("Similarity bounds must not be NaN")
        if self.lbss < 0 or self.ubss < 0:
            raise SemanticsError(f"Similarity bounds must be non-negative, got {self.lbss}, {self.ubss}")
        if self.lbss > self.ubss:
            raise SemanticsError(f"LBSS {self.lbss} exceeds UBSS {self.ubss}")

    def contains(self, distance):
        return self.lbss <= distance <= self.ubss


@dataclass(frozen=True, eq=False)
class Pivot:
    semantics: np.ndarray
    index: int


def _differences(p, v):
    p = np.asarray(p, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if p.shape != v.shape:
        raise SemanticsError(f"Semantic vectors differ in length: {p.shape} vs {v.shape}")
    return np.abs(p - v)


def ssc_distance(s1, s2, subset=None):
    """Mean absolute difference over the chosen cases (all cases by default)"""
    diff = _differences(s1, s2)
    if subset is not None:
        subset = np.asarray(subset, dtype=np.int64)
        if subset.size == 0:
            raise SemanticsError("Case subset is empty")
        if subset.min() < 0 or subset.max() >= diff.size:
            raise SemanticsError(f"Case subset indices out of range for {diff.size} cases")
        diff = diff[subset]
    if diff.size == 0:
        raise SemanticsError("Cannot measure distance between empty semantic vectors")
    return float(diff.mean())


def distance_above_ubss(p, v, b):
    """Number of cases with |p_i - v_i| > UBSS"""
    return int(np.count_nonzero(_differences(p, v) > b.ubss))


def distance_in_band(p, v, b):
    """Number of cases with LBSS <= |p_i - v_i| <= UBSS"""
    diff = _differences(p, v)
    return int(np.count_nonzero((diff >= b.lbss) & (diff <= b.ubss)))


def distance_below_lbss(p, v, b):
    return int(np.count_nonzero(_differences(p, v) < b.lbss))


def pivot_distance(p, v, b, rule):
    """Distance count to the pivot under the configured rule"""
    if DistanceRule(rule) is DistanceRule.EQ1:
        return distance_above_ubss(p, v, b)
    return distance_in_band(p, v, b)


def select_pivot(front_semantics, crowding, rng):
    """
    Pick the pivot from the sparsest region of a front.

    Args:
        front_semantics: semantic vectors of the front members
        crowding: crowding distance of each member (same order)
        rng: generator, only used when no finite crowding value exists

    Returns:
        Pivot of the member with the largest finite crowding distance
        (lowest index on ties); a uniformly random member when the front
        has at most two members or no finite value.
    """
    crowding = np.asarray(crowding, dtype=np.float64)
    if len(front_semantics) == 0:
        raise SemanticsError("Cannot select a pivot from an empty front")
    if crowding.shape != (len(front_semantics),):
        raise SemanticsError(f"Got {crowding.size} crowding values for {len(front_semantics)} members")
    finite = np.isfinite(crowding)
    if len(front_semantics) <= 2 or not finite.any():
        index = int(rng.integers(len(front_semantics)))
    else:
        index = int(np.argmax(np.where(finite, crowding, -np.inf)))
    logger.debug(f"Pivot is front member {index} of {len(front_semantics)}")
    return Pivot(np.asarray(front_semantics[index]), index)
