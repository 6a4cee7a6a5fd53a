"""Time-consistency (rectangularity) of a family of two-period laws.

A law is a finitely supported distribution of ``(S_1, S_2)``, given as a
mapping ``{(s1, s2): mass}``. It decomposes into a first marginal ``P_0`` and
a kernel ``P_1`` giving the conditional law of the second increment
``S_2 - S_1`` at each atom of ``S_1``. A family is time-consistent when every
recombination ``P_0^i (x) P_1^j`` is again a member.

Kernels are only known on the atoms of their own first marginal; at any other
``s1`` the kernel of the nearest atom is used (ties go to the smaller atom).
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError, UnsupportedHorizon

MATCH_TOL = 1e-12


@dataclass
class Law:
    """Atoms ``points`` (shape ``(k, 2)``) with masses summing to one."""

    points: np.ndarray
    masses: np.ndarray

    @classmethod
    def from_mapping(cls, mapping):
        pts, ms = [], []
        for key, mass in mapping.items():
            key = tuple(np.atleast_1d(np.asarray(key, dtype=float)))
            if len(key) != 2:
                raise UnsupportedHorizon(f"atom {key} is not a two-period path")
            pts.append(key)
            ms.append(float(mass))
        if not pts:
            raise InputError("a law needs at least one atom")
        masses = np.array(ms)
        if np.any(masses < 0) or abs(masses.sum() - 1.0) > 1e-9:
            raise InputError("law masses must be non-negative and sum to 1")
        return _aggregate(np.array(pts), masses)

    def first_marginal(self):
        s1, inv = np.unique(self.points[:, 0], return_inverse=True)
        return s1, np.bincount(inv, weights=self.masses)

    def kernel(self, s1):
        """Increments and conditional masses of ``S_2 - S_1`` at ``s1``."""
        atoms, _ = self.first_marginal()
        a = atoms[np.argmin(np.abs(atoms - s1))]
        sel = self.points[:, 0] == a
        m = self.masses[sel]
        return self.points[sel, 1] - a, m / m.sum()

    def same_as(self, other, tol=MATCH_TOL):
        if self.points.shape != other.points.shape:
            return False
        used = np.zeros(len(other.masses), dtype=bool)
        for p, m in zip(self.points, self.masses):
            close = (np.abs(other.points - p).max(axis=1) <= tol) & (np.abs(other.masses - m) <= tol) & ~used
            hit = np.flatnonzero(close)
            if hit.size == 0:
                return False
            used[hit[0]] = True
        return True

    def to_mapping(self):
        return {(float(a), float(b)): float(m) for (a, b), m in zip(self.points, self.masses)}


def _aggregate(points, masses, tol=MATCH_TOL):
    """Merge atoms closer than ``tol`` and sort lexicographically."""
    order = np.lexsort((points[:, 1], points[:, 0]))
    points, masses = points[order], masses[order]
    keep_p, keep_m = [], []
    for p, m in zip(points, masses):
        if keep_p and np.abs(keep_p[-1] - p).max() <= tol:
            keep_m[-1] += m
        else:
            keep_p.append(p)
            keep_m.append(m)
    return Law(np.array(keep_p), np.array(keep_m))


def recombine(first, second):
    """The law ``P_0`` of ``first`` followed by the kernel of ``second``."""
    s1, m1 = first.first_marginal()
    pts, ms = [], []
    for a, w in zip(s1, m1):
        inc, q = second.kernel(a)
        pts.extend((a, a + x) for x in inc)
        ms.extend(w * q)
    return _aggregate(np.array(pts), np.array(ms))


@dataclass
class TimeConsistencyVerdict:
    consistent: bool
    witness: tuple | None = None
    witness_law: Law | None = None

    @property
    def description(self):
        if self.witness is None:
            return "every recombination belongs to the family"
        i, j = self.witness
        return f"P_0^{i} (x) P_1^{j} is not in the family"


class _Index:
    """Membership lookup over laws, grouped by atom count for vectorised matching."""

    def __init__(self, laws, tol=MATCH_TOL):
        self.laws = list(laws)
        self.tol = tol
        self.groups = {}
        for k, law in enumerate(self.laws):
            self.groups.setdefault(law.masses.size, []).append(k)
        self.stacks = {n: (np.stack([self.laws[k].points for k in ks]), np.stack([self.laws[k].masses for k in ks]))
                       for n, ks in self.groups.items()}

    def find(self, law):
        """Index of a member equal to ``law`` (within ``tol``), or ``None``."""
        n = law.masses.size
        if n not in self.groups:
            return None
        P, M = self.stacks[n]
        hit = (np.abs(P - law.points).max(axis=(1, 2)) <= self.tol) & (np.abs(M - law.masses).max(axis=1) <= self.tol)
        if hit.any():
            return self.groups[n][int(np.argmax(hit))]
        # atoms closer than tol may sort differently; fall back to the exact matcher
        for k in self.groups[n]:
            if law.same_as(self.laws[k], self.tol):
                return k
        return None


def time_consistency_check(laws):
    """Test closure of ``laws`` under recombination of marginals and kernels.

    Pairs ``(i, j)`` are scanned in lexicographic order (1-based); the first
    recombination missing from the family is the witness. Repeated laws give
    repeated recombinations, so only first occurrences are paired.
    """
    family = [law if isinstance(law, Law) else Law.from_mapping(law) for law in laws]
    if not family:
        raise InputError("need at least one law")
    index = _Index(family)
    reps = [i for i, law in enumerate(family) if index.find(law) == i]
    for i in reps:
        for j in reps:
            if i == j:
                continue
            mix = recombine(family[i], family[j])
            if index.find(mix) is None:
                return TimeConsistencyVerdict(False, (i + 1, j + 1), mix)
    return TimeConsistencyVerdict(True)


def recombination_closure(laws):
    """All recombinations ``P_0^i (x) P_1^j`` of ``laws``, in ``(i, j)`` order."""
    family = [law if isinstance(law, Law) else Law.from_mapping(law) for law in laws]
    return [recombine(a, b) for a in family for b in family]


def family_laws(family):
    """Laws of ``(S_1, S_2)`` under each model of a one-asset, two-period family."""
    tree = family.tree
    if tree.horizon != 2:
        raise UnsupportedHorizon(f"time-consistency needs horizon 2, got {tree.horizon}")
    if family.d != 1:
        raise InputError("time-consistency is defined for a single asset")
    out = []
    for m in family:
        prices = m.prices(tree)
        s1 = prices[1][tree.parent[2], 0]
        out.append(_aggregate(np.column_stack([s1, prices[2][:, 0]]), tree.prob.copy()))
    return out
