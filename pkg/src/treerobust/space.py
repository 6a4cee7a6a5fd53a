"""Finite filtered probability spaces as scenario trees.

Nodes at depth ``t`` are the atoms of the time-``t`` information. Every array
of per-node data is ordered depth-first with children in the order they were
given, which also makes the children of any node (and the leaves below it) a
contiguous block at every deeper level.

Random variables are plain numpy arrays with one entry (or row) per leaf;
adapted processes are lists indexed by depth holding one entry per node of
that depth.
"""

from dataclasses import dataclass
from collections.abc import Mapping

import numpy as np

from .errors import (
    DepthOutOfRange,
    InputError,
    NonPositiveProbability,
    NonUniformDepth,
    ProbabilitySumViolation,
    SizeMismatch,
)

PROB_TOL = 1e-12
EPS = np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class FilteredTree:
    """Immutable scenario tree of uniform depth ``horizon``.

    ``cond_prob[t]`` holds the conditional branch probability of every depth-t
    node (``t >= 1``); ``child_start[t]`` is an offset array of length
    ``n_t + 1`` such that the children of depth-t node ``i`` are the depth-(t+1)
    nodes ``child_start[t][i]:child_start[t][i+1]``.
    """

    horizon: int
    cond_prob: tuple
    child_start: tuple

    def __post_init__(self):
        T = self.horizon
        parent = [np.zeros(0, dtype=np.intp)]
        prob = [np.ones(1)]
        for t in range(T):
            starts = self.child_start[t]
            counts = np.diff(starts)
            parent.append(np.repeat(np.arange(counts.size), counts))
            prob.append(prob[t][parent[t + 1]] * self.cond_prob[t + 1])
        leaf_start = [None] * (T + 1)
        leaf_start[T] = np.arange(prob[T].size + 1)
        for t in range(T - 1, -1, -1):
            leaf_start[t] = leaf_start[t + 1][self.child_start[t]]
        object.__setattr__(self, "parent", tuple(parent))
        object.__setattr__(self, "node_prob", tuple(prob))
        object.__setattr__(self, "leaf_start", tuple(leaf_start))

    # sizes -----------------------------------------------------------------
    def n_nodes(self, t):
        return self.node_prob[t].size

    @property
    def n_leaves(self):
        return self.node_prob[self.horizon].size

    @property
    def prob(self):
        """Leaf probabilities (the reference measure)."""
        return self.node_prob[self.horizon]

    @property
    def measure(self):
        return Measure(self.prob)

    def children(self, t, i):
        """Index range of the depth-(t+1) children of depth-t node ``i``."""
        s = self.child_start[t]
        return range(int(s[i]), int(s[i + 1]))

    def n_children(self, t):
        return np.diff(self.child_start[t])

    def ancestor(self, t, i, s):
        """Index of the depth-``s`` ancestor of depth-``t`` node ``i``."""
        while t > s:
            i = int(self.parent[t][i])
            t -= 1
        return i

    def ancestor_map(self, t, s):
        """Vector mapping every depth-t node to its depth-s ancestor."""
        idx = np.arange(self.n_nodes(t))
        for u in range(t, s, -1):
            idx = self.parent[u][idx]
        return idx

    def lift(self, values, t):
        """Broadcast per-node values at depth ``t`` to the leaves."""
        values = np.asarray(values)
        if values.shape[0] != self.n_nodes(t):
            raise SizeMismatch(f"expected {self.n_nodes(t)} values at depth {t}, got {values.shape[0]}")
        return values[self.ancestor_map(self.horizon, t)]

    def node_path(self, t, i):
        """Child-position path from the root, e.g. ``"root/1/0"``."""
        steps = []
        while t > 0:
            p = int(self.parent[t][i])
            steps.append(i - int(self.child_start[t - 1][p]))
            i, t = p, t - 1
        return "/".join(["root"] + [str(s) for s in reversed(steps)])

    def to_spec(self):
        """Nested ``{"prob", "children"}`` description that rebuilds this tree."""
        def rec(t, i):
            node = {} if t == 0 else {"prob": float(self.cond_prob[t][i])}
            if t < self.horizon:
                node["children"] = [rec(t + 1, j) for j in self.children(t, i)]
            return node
        return rec(0, 0)


@dataclass(frozen=True)
class Measure:
    """Probability weights on the leaves."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or np.any(w < 0) or abs(w.sum() - 1.0) > PROB_TOL * max(1, w.size):
            raise InputError("measure weights must be non-negative and sum to 1")
        object.__setattr__(self, "weights", w)

    @property
    def equivalent(self):
        """True iff the measure charges every leaf (equivalence on a finite tree)."""
        return bool(np.all(self.weights > 0))

    def __len__(self):
        return self.weights.size


def _collect(spec):
    """Breadth-by-depth flattening of a nested spec, depth-first within a level."""
    levels_prob = [[]]
    levels_children = []
    leaf_depths = set()

    def walk(node, depth, path):
        kids = node.get("children") or []
        while len(levels_children) <= depth:
            levels_children.append([])
        if not kids:
            leaf_depths.add(depth)
            levels_children[depth].append(0)
            return
        levels_children[depth].append(len(kids))
        while len(levels_prob) <= depth + 1:
            levels_prob.append([])
        probs = []
        for k, child in enumerate(kids):
            if not isinstance(child, Mapping) or "prob" not in child:
                raise InputError(f"node {path}/{k} has no 'prob'")
            p = float(child["prob"])
            if not p > 0:
                raise NonPositiveProbability(f"node {path}/{k}: probability {p} is not positive")
            probs.append(p)
        total = sum(probs)
        if abs(total - 1.0) > PROB_TOL * len(probs) + PROB_TOL:
            raise ProbabilitySumViolation(f"children of {path} sum to {total!r}, not 1")
        # renormalise once, at build time; sums already exact up to rounding
        # are kept as given so saved trees reload bit for bit
        if abs(total - 1.0) > len(probs) * EPS:
            probs = [p / total for p in probs]
        levels_prob[depth + 1].extend(probs)
        for k, child in enumerate(kids):
            walk(child, depth + 1, f"{path}/{k}")

    # depth-first traversal appends per level in depth-first order
    walk(spec, 0, "root")
    return levels_prob, levels_children, leaf_depths


def build_tree(spec):
    """Build and validate a :class:`FilteredTree` from a nested description.

    ``spec`` is a mapping with an optional ``"children"`` list; every child is a
    mapping with ``"prob"`` and optional ``"children"``.
    """
    if not isinstance(spec, Mapping):
        raise InputError("tree spec must be a mapping")
    levels_prob, levels_children, leaf_depths = _collect(spec)
    if len(leaf_depths) != 1:
        raise NonUniformDepth(f"leaves found at depths {sorted(leaf_depths)}")
    T = leaf_depths.pop()
    if T < 1:
        raise NonUniformDepth("tree must have horizon T >= 1")
    child_start = tuple(
        np.concatenate([[0], np.cumsum(levels_children[t])]).astype(np.intp) for t in range(T)
    )
    cond = (np.ones(1),) + tuple(np.asarray(levels_prob[t], dtype=float) for t in range(1, T + 1))
    tree = FilteredTree(T, cond, child_start)
    if abs(tree.prob.sum() - 1.0) > PROB_TOL * max(1, tree.n_leaves):
        raise ProbabilitySumViolation(f"leaf probabilities sum to {tree.prob.sum()!r}")
    return tree


def product_tree(branch_probs):
    """Tree whose depth-t nodes all branch with the same probabilities.

    ``branch_probs[t]`` lists the conditional probabilities of the step into
    depth ``t + 1``.
    """
    def rec(t):
        if t == len(branch_probs):
            return {}
        return {"children": [dict(prob=p, **rec(t + 1)) for p in branch_probs[t]]}
    return build_tree(rec(0))


def _weights(tree, q):
    if q is None:
        return tree.prob
    w = q.weights if isinstance(q, Measure) else np.asarray(q, dtype=float)
    if w.shape != (tree.n_leaves,):
        raise SizeMismatch(f"measure has {w.size} weights, tree has {tree.n_leaves} leaves")
    return w


def expectation(x, q):
    """Sum of ``q(leaf) * x(leaf)`` in canonical leaf order."""
    w = q.weights if isinstance(q, Measure) else np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.shape[0] != w.size:
        raise SizeMismatch(f"random variable has {x.shape[0]} values, measure has {w.size}")
    return np.tensordot(w, x, axes=(0, 0))


def conditional_expectation(x, tree, t, q=None):
    """Per-node average of ``x`` over each depth-t subtree, weighted by ``q``.

    Returns an array with one entry (or row) per depth-t node.
    """
    if not 0 <= t <= tree.horizon:
        raise DepthOutOfRange(f"depth {t} outside 0..{tree.horizon}")
    x = np.asarray(x, dtype=float)
    if x.shape[0] != tree.n_leaves:
        raise SizeMismatch(f"random variable has {x.shape[0]} values, tree has {tree.n_leaves} leaves")
    w = _weights(tree, q)
    if t == tree.horizon:
        return x.copy()
    starts = tree.leaf_start[t][:-1]
    shape = (-1,) + (1,) * (x.ndim - 1)
    # centre each subtree on its first leaf so constant blocks come back exactly
    base = x[starts]
    dev = x - tree.lift(base, t)
    num = np.add.reduceat(w.reshape(shape) * dev, starts, axis=0)
    den = np.add.reduceat(w, starts)
    return base + num / den.reshape(shape)


def node_masses(tree, q, t):
    """Mass of every depth-t subtree under ``q``."""
    w = _weights(tree, q)
    return np.add.reduceat(w, tree.leaf_start[t][:-1])


def tree_from_levels(horizon, fanout, probs):
    """Internal helper used by generators: ``fanout[t]`` children counts per depth-t node."""
    child_start = tuple(np.concatenate([[0], np.cumsum(f)]).astype(np.intp) for f in fanout)
    cond = (np.ones(1),) + tuple(np.asarray(p, dtype=float) for p in probs)
    return FilteredTree(horizon, cond, child_start)


__all__ = [
    "FilteredTree",
    "Measure",
    "build_tree",
    "conditional_expectation",
    "expectation",
    "node_masses",
    "product_tree",
]
