"""
Tree-based GP programs over feature terminals, ephemeral constants and
protected arithmetic.

Programs are immutable prefix-ordered node tuples. Every stochastic
operation takes an explicit ``numpy.random.Generator`` (anything offering
``random()``, ``integers(n)`` and ``uniform(lo, hi)`` works).
"""
import logging
import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np

# Set up logging
logger = logging.getLogger(__name__)

PROTECTED_EPSILON = 1e-9
VALUE_BOUND = 1e12
MAX_DEPTH = 17
INIT_DEPTHS = (2, 6)
FUNCTION_POINT_BIAS = 0.9
CROSSOVER_ATTEMPTS = 5


class GPError(ValueError):
    """Raised for invalid programs or generation requests"""


def protected_div(a, b):
    """Division returning 1.0 wherever |b| < 1e-9"""
    out = np.ones(np.broadcast(a, b).shape, dtype=np.float64)
    np.divide(a, b, out=out, where=np.abs(b) >= PROTECTED_EPSILON)
    return out


FUNCTIONS = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": protected_div,
}


@dataclass(frozen=True)
class Node:
    """A function symbol, a feature reference or a real constant"""
    kind: str
    value: object

    @property
    def arity(self):
        return 2 if self.kind == "function" else 0

    @property
    def label(self):
        if self.kind == "function":
            return self.value
        if self.kind == "feature":
            return f"x{self.value}"
        return repr(float(self.value))


def function_node(symbol):
    if symbol not in FUNCTIONS:
        raise GPError(f"Unknown function symbol {symbol!r}")
    return Node("function", symbol)


def feature_node(index):
    return Node("feature", int(index))


def constant_node(value):
    return Node("constant", float(value))


@dataclass(frozen=True)
class ProgramTree:
    """Immutable GP program stored as a prefix-ordered tuple of nodes"""
    nodes: tuple

    def __post_init__(self):
        nodes = tuple(self.nodes)
        object.__setattr__(self, "nodes", nodes)
        open_slots = 1
        for position, node in enumerate(nodes):
            if open_slots == 0:
                raise GPError(f"Malformed program: trailing nodes after position {position}")
            open_slots += node.arity - 1
        if open_slots != 0:
            raise GPError("Malformed program: missing arguments")

    def __len__(self):
        return len(self.nodes)

    def __str__(self):
        return self.to_prefix()

    def subtree_end(self, index):
        """Index one past the last node of the subtree rooted at ``index``"""
        open_slots = 1
        end = index
        while open_slots:
            open_slots += self.nodes[end].arity - 1
            end += 1
        return end

    def subtree(self, index):
        return ProgramTree(self.nodes[index:self.subtree_end(index)])

    def replace_subtree(self, index, other):
        end = self.subtree_end(index)
        return ProgramTree(self.nodes[:index] + other.nodes + self.nodes[end:])

    @cached_property
    def node_depths(self):
        """Depth of each node in prefix order (root at depth 0)"""
        depths = []
        stack = [0]
        for node in self.nodes:
            d = stack.pop()
            depths.append(d)
            stack.extend([d + 1] * node.arity)
        return tuple(depths)

    @cached_property
    def depth(self):
        return max(self.node_depths)

    @cached_property
    def max_feature(self):
        features = [node.value for node in self.nodes if node.kind == "feature"]
        return max(features) if features else -1

    def to_prefix(self):
        """Parenthesized prefix text, e.g. ``(+ x0 (* 0.5 x1))``"""
        stack = []
        for node in reversed(self.nodes):
            if node.arity:
                left, right = stack.pop(), stack.pop()
                stack.append(f"({node.label} {left} {right})")
            else:
                stack.append(node.label)
        return stack[0]


_TOKEN = re.compile(r"\(|\)|[^\s()]+")
_FEATURE = re.compile(r"x(\d+)")


def parse_prefix(text):
    """Inverse of ``ProgramTree.to_prefix``"""
    tokens = _TOKEN.findall(text)
    nodes = []
    position = 0

    def parse():
        nonlocal position
        if position >= len(tokens):
            raise GPError(f"Unexpected end of program text: {text!r}")
        token = tokens[position]
        position += 1
        if token == "(":
            if position >= len(tokens):
                raise GPError(f"Unexpected end of program text: {text!r}")
            nodes.append(function_node(tokens[position]))
            position += 1
            parse()
            parse()
            if position >= len(tokens) or tokens[position] != ")":
                raise GPError(f"Expected ')' in program text: {text!r}")
            position += 1
        elif token == ")":
            raise GPError(f"Unexpected ')' in program text: {text!r}")
        else:
            match = _FEATURE.fullmatch(token)
            if match:
                nodes.append(feature_node(int(match.group(1))))
            else:
                try:
                    nodes.append(constant_node(float(token)))
                except ValueError:
                    raise GPError(f"Unknown terminal {token!r}") from None

    parse()
    if position != len(tokens):
        raise GPError(f"Trailing tokens in program text: {text!r}")
    return ProgramTree(tuple(nodes))


@dataclass(frozen=True)
class PrimitiveSet:
    """Function symbols plus the terminal set (features and one constant slot)"""
    n_features: int
    functions: tuple = ("+", "-", "*", "/")
    constant_range: tuple = (-1.0, 1.0)

    def __post_init__(self):
        if not self.functions:
            raise GPError("Primitive set has no functions")
        if self.n_features < 1:
            raise GPError(f"Primitive set needs at least one feature, got {self.n_features}")
        for symbol in self.functions:
            function_node(symbol)

    @property
    def n_terminals(self):
        return self.n_features + 1

    def random_function(self, rng):
        return function_node(self.functions[int(rng.integers(len(self.functions)))])

    def random_terminal(self, rng):
        k = int(rng.integers(self.n_terminals))
        if k < self.n_features:
            return feature_node(k)
        lo, hi = self.constant_range
        return constant_node(rng.uniform(lo, hi))


def generate(primitives, rng, depth, method="grow", function_root=True):
    """
    Random tree by the full or grow method.

    Args:
        depth: exact depth for "full", upper bound for "grow"
        function_root: force a function at the root of a grow tree when depth > 0

    Returns:
        ProgramTree
    """
    if method not in ("full", "grow"):
        raise GPError(f"Unknown generation method {method!r}")
    function_share = len(primitives.functions) / (len(primitives.functions) + primitives.n_terminals)
    nodes = []
    stack = [(depth, True)]
    while stack:
        remaining, is_root = stack.pop()
        if remaining == 0:
            pick_function = False
        elif method == "full" or (is_root and function_root):
            pick_function = True
        else:
            pick_function = rng.random() < function_share
        if pick_function:
            nodes.append(primitives.random_function(rng))
            stack.extend([(remaining - 1, False)] * 2)
        else:
            nodes.append(primitives.random_terminal(rng))
    return ProgramTree(tuple(nodes))


@dataclass(frozen=True, eq=False)
class Individual:
    """A program plus its cached semantics and objective vector"""
    tree: ProgramTree
    semantics: np.ndarray = None
    objectives: np.ndarray = None
    stamp: str = None

    def is_evaluated_on(self, ds):
        return self.semantics is not None and self.objectives is not None and self.stamp == ds.fingerprint

    @property
    def base_objectives(self):
        """The two classification objectives, without any appended criterion"""
        return self.objectives[:2]


def ramped_half_and_half(pop_size, min_depth, max_depth, primitives, rng):
    """
    Koza's ramped half-and-half initialization.

    Depths cycle through [min_depth, max_depth] and methods alternate
    full / grow, so each depth gets both methods.
    """
    if primitives is None or not primitives.functions:
        raise GPError("Empty primitive set")
    if pop_size < 2:
        raise GPError(f"Population size must be at least 2, got {pop_size}")
    if not 1 <= min_depth <= max_depth:
        raise GPError(f"Need 1 <= min_depth <= max_depth, got {min_depth}, {max_depth}")
    n_depths = max_depth - min_depth + 1
    population = []
    for i in range(pop_size):
        depth = min_depth + (i // 2) % n_depths
        method = "full" if i % 2 == 0 else "grow"
        population.append(Individual(generate(primitives, rng, depth, method)))
    logger.debug(f"Initialized {pop_size} programs with depths {min_depth}-{max_depth}")
    return population


def evaluate_semantics(tree, ds):
    """Outputs of ``tree`` on every case of ``ds``, in dataset order"""
    if tree.max_feature >= ds.n_features:
        raise GPError(f"Program references x{tree.max_feature} but the dataset has {ds.n_features} features")
    n = len(ds)
    stack = []
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for node in reversed(tree.nodes):
            if node.kind == "feature":
                stack.append(ds.X[:, node.value])
            elif node.kind == "constant":
                stack.append(np.full(n, node.value))
            else:
                left, right = stack.pop(), stack.pop()
                stack.append(np.clip(FUNCTIONS[node.value](left, right), -VALUE_BOUND, VALUE_BOUND))
    values = np.array(stack[0], dtype=np.float64)
    values.setflags(write=False)
    return values


def crossover_point(tree, rng, function_bias=FUNCTION_POINT_BIAS):
    """Pick a node index, favouring function nodes with probability ``function_bias``"""
    if len(tree) == 1:
        return 0
    functions = [i for i, node in enumerate(tree.nodes) if node.arity]
    terminals = [i for i, node in enumerate(tree.nodes) if not node.arity]
    pool = functions if rng.random() < function_bias else terminals
    return pool[int(rng.integers(len(pool)))]


def swap_subtrees(p1, i, p2, j):
    """Exchange the subtree at ``i`` of p1 with the subtree at ``j`` of p2"""
    return p1.replace_subtree(i, p2.subtree(j)), p2.replace_subtree(j, p1.subtree(i))


def subtree_crossover(p1, p2, rng, max_depth=MAX_DEPTH):
    """
    Koza subtree crossover.

    Point selection is retried up to CROSSOVER_ATTEMPTS times while an
    offspring exceeds max_depth; after that the offending offspring is
    replaced by a copy of its parent.
    """
    for _ in range(CROSSOVER_ATTEMPTS):
        i = crossover_point(p1, rng)
        j = crossover_point(p2, rng)
        c1, c2 = swap_subtrees(p1, i, p2, j)
        if c1.depth <= max_depth and c2.depth <= max_depth:
            return c1, c2
    logger.debug(f"Crossover exceeded depth {max_depth} after {CROSSOVER_ATTEMPTS} attempts")
    return (c1 if c1.depth <= max_depth else p1), (c2 if c2.depth <= max_depth else p2)


def subtree_mutation(p, rng, primitives, max_depth=MAX_DEPTH, subtree_depth=4):
    """Replace a uniformly chosen subtree by a fresh grow-method subtree"""
    point = int(rng.integers(len(p)))
    room = max(0, min(subtree_depth, max_depth - p.node_depths[point]))
    fresh = generate(primitives, rng, room, "grow", function_root=False)
    return p.replace_subtree(point, fresh)


def node_count(tree):
    return len(tree.nodes)
