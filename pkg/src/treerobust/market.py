"""Families of price models on one scenario tree.

A model stores its price *increments* on the tree edges: ``increments[t]`` has
shape ``(n_t, d)`` and row ``i`` is the price change on the edge into depth-t
node ``i`` (``increments[0]`` is an unused ``(1, d)`` zero block). Strategies
are predictable: ``positions[t - 1]`` has one ``d``-vector per depth-(t-1)
node, held over the step into depth ``t``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import AffineSupportNotLinear, InputError, SizeMismatch, UnknownModel
from .space import FilteredTree

RANK_TOL = 1e-10
HULL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PriceModel:
    name: str
    initial: np.ndarray
    increments: tuple

    @property
    def d(self):
        return self.initial.size

    @property
    def horizon(self):
        return len(self.increments) - 1

    def prices(self, tree):
        """Price process: list of ``(n_t, d)`` arrays, ``t = 0..T``."""
        out = [self.initial[None, :].copy()]
        for t in range(1, tree.horizon + 1):
            out.append(out[t - 1][tree.parent[t]] + self.increments[t])
        return out

    def child_increments(self, tree, t, i):
        """Increments on the edges from depth-(t-1) node ``i`` to its children."""
        return self.increments[t][tree.children(t - 1, i)]


def make_model(name, initial, increments):
    initial = np.atleast_1d(np.asarray(initial, dtype=float))
    d = initial.size
    incs = [np.zeros((1, d))]
    for t, inc in enumerate(increments, start=1):
        a = np.asarray(inc, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if a.shape[1] != d:
            raise SizeMismatch(f"model {name}: increments at depth {t} have dimension {a.shape[1]}, not {d}")
        incs.append(a)
    return PriceModel(name, initial, tuple(incs))


@dataclass(frozen=True, eq=False)
class ModelFamily:
    tree: FilteredTree
    models: tuple

    def __post_init__(self):
        if not self.models:
            raise InputError("a model family needs at least one model")
        d = self.models[0].d
        names = set()
        for m in self.models:
            if m.d != d:
                raise SizeMismatch(f"model {m.name} has {m.d} assets, expected {d}")
            if m.horizon != self.tree.horizon:
                raise SizeMismatch(f"model {m.name} has horizon {m.horizon}, tree has {self.tree.horizon}")
            for t in range(1, self.tree.horizon + 1):
                if m.increments[t].shape[0] != self.tree.n_nodes(t):
                    raise SizeMismatch(f"model {m.name}: {m.increments[t].shape[0]} increments at depth {t}, "
                                       f"tree has {self.tree.n_nodes(t)} nodes")
            if m.name in names:
                raise InputError(f"duplicate model name {m.name!r}")
            names.add(m.name)

    @property
    def d(self):
        return self.models[0].d

    @property
    def names(self):
        return [m.name for m in self.models]

    def __getitem__(self, name):
        for m in self.models:
            if m.name == name:
                return m
        raise UnknownModel(name)

    def __iter__(self):
        return iter(self.models)

    def __len__(self):
        return len(self.models)

    def subset(self, names):
        return ModelFamily(self.tree, tuple(self[n] for n in names))

    @cached_property
    def strategy_size(self):
        return sum(self.tree.n_nodes(t) for t in range(self.tree.horizon)) * self.d


class Strategy:
    """Predictable positions: ``positions[t-1]`` is ``(n_{t-1}, d)``."""

    def __init__(self, positions):
        self.positions = [np.asarray(p, dtype=float) for p in positions]

    @classmethod
    def zeros(cls, tree, d):
        return cls([np.zeros((tree.n_nodes(t), d)) for t in range(tree.horizon)])

    @classmethod
    def constant(cls, tree, value):
        """Same position vector at every node."""
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls([np.tile(v, (tree.n_nodes(t), 1)) for t in range(tree.horizon)])

    @classmethod
    def from_vector(cls, tree, d, x):
        x = np.asarray(x, dtype=float)
        out, k = [], 0
        for t in range(tree.horizon):
            n = tree.n_nodes(t) * d
            out.append(x[k:k + n].reshape(-1, d))
            k += n
        if k != x.size:
            raise SizeMismatch(f"strategy vector has {x.size} entries, expected {k}")
        return cls(out)

    def to_vector(self):
        return np.concatenate([p.ravel() for p in self.positions])

    @property
    def horizon(self):
        return len(self.positions)

    def check(self, tree, d):
        if self.horizon != tree.horizon:
            raise SizeMismatch(f"strategy horizon {self.horizon} != tree horizon {tree.horizon}")
        for t, p in enumerate(self.positions):
            if p.shape != (tree.n_nodes(t), d):
                raise SizeMismatch(f"positions at depth {t} have shape {p.shape}, expected {(tree.n_nodes(t), d)}")

    def __repr__(self):
        return f"Strategy({[p.tolist() for p in self.positions]})"


def wealth_process(model, tree, w0, phi):
    """Self-financing wealth: list of per-depth arrays, ``W_0 = w0``."""
    phi.check(tree, model.d)
    W = [np.array([float(w0)])]
    for t in range(1, tree.horizon + 1):
        par = tree.parent[t]
        gain = np.einsum("ij,ij->i", phi.positions[t - 1][par], model.increments[t])
        W.append(W[t - 1][par] + gain)
    return W


def terminal_wealth(model, tree, w0, phi):
    return wealth_process(model, tree, w0, phi)[-1]


@dataclass(frozen=True)
class SupportEntry:
    """Affine hull of the conditional support of one step's increments.

    ``basis`` rows are an orthonormal basis of the direction space.
    ``affine_offset`` is ``None`` when the hull contains the origin (then the
    hull is the linear span of ``basis``), otherwise the hull point closest to
    the origin.
    """

    basis: np.ndarray
    affine_offset: np.ndarray | None
    anchor: np.ndarray

    @property
    def linear(self):
        return self.affine_offset is None

    @property
    def dim(self):
        return self.basis.shape[0]

    def distance(self, points):
        """Euclidean distance of each point to the affine hull."""
        y = np.atleast_2d(points) - self.anchor
        r = y - (y @ self.basis.T) @ self.basis
        return np.linalg.norm(r, axis=1)

    def project(self, v):
        """Orthogonal projection onto the direction space."""
        return (v @ self.basis.T) @ self.basis


def affine_hull(points):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    p0 = points[0]
    d = points.shape[1]
    diffs = points[1:] - p0
    if diffs.size:
        _, s, vt = np.linalg.svd(diffs, full_matrices=False)
        rank = int(np.sum(s > RANK_TOL * s[0])) if s.size and s[0] > 0 else 0
        basis = vt[:rank]
    else:
        basis = np.zeros((0, d))
    closest = p0 - (p0 @ basis.T) @ basis
    dist = float(np.linalg.norm(closest))
    offset = None if dist <= HULL_TOL else closest
    return SupportEntry(basis=basis, affine_offset=offset, anchor=p0)


def conditional_support(model, tree, t, i):
    """Affine hull of the increments from depth-(t-1) node ``i`` to its children."""
    return affine_hull(model.child_increments(tree, t, i))


def support_field(model, tree):
    """``field[t-1][i]`` is the :class:`SupportEntry` of depth-(t-1) node ``i``."""
    return [[conditional_support(model, tree, t, i) for i in range(tree.n_nodes(t - 1))]
            for t in range(1, tree.horizon + 1)]


def project_strategy(phi, field):
    """Project each position onto its node's (linear) support subspace."""
    out = []
    for t, (pos, entries) in enumerate(zip(phi.positions, field), start=1):
        if len(entries) != pos.shape[0]:
            raise SizeMismatch(f"field has {len(entries)} entries at depth {t - 1}, strategy {pos.shape[0]}")
        new = np.empty_like(pos)
        for i, e in enumerate(entries):
            if not e.linear:
                raise AffineSupportNotLinear(f"support at depth {t - 1} node {i} does not contain 0")
            new[i] = e.project(pos[i])
        out.append(new)
    return Strategy(out)


def check_containment(family, star):
    """Per model, depth and node: do the model's increments lie in the star's hull?

    Returns ``{name: [bool array per depth t = 1..T]}``.
    """
    ref = family[star]
    tree = family.tree
    field = support_field(ref, tree)
    report = {}
    for m in family:
        per_depth = []
        for t in range(1, tree.horizon + 1):
            ok = np.empty(tree.n_nodes(t - 1), dtype=bool)
            for i, entry in enumerate(field[t - 1]):
                ok[i] = bool(np.all(entry.distance(m.child_increments(tree, t, i)) <= HULL_TOL))
            per_depth.append(ok)
        report[m.name] = per_depth
    return report


def containment_holds(report):
    return all(bool(np.all(a)) for v in report.values() for a in v)


def gain_matrix(model, tree, t):
    """Linear map from a strategy vector to cumulative trading gains at depth t.

    Row ``i`` gives ``W_t(node i) - w0`` as a function of
    :meth:`Strategy.to_vector`. Dense; meant for desk-scale trees.
    """
    d = model.d
    offsets = np.cumsum([0] + [tree.n_nodes(s) * d for s in range(tree.horizon)])
    n_t = tree.n_nodes(t)
    M = np.zeros((n_t, offsets[-1]))
    rows = np.arange(n_t)
    for s in range(1, t + 1):
        anc_s = tree.ancestor_map(t, s)
        anc_prev = tree.parent[s][anc_s]
        inc = model.increments[s][anc_s]
        for k in range(d):
            M[rows, offsets[s - 1] + anc_prev * d + k] = inc[:, k]
    return M
