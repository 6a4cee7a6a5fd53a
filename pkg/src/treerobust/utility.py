"""Concave, non-decreasing utilities.

Every utility has a ``domain``: ``"positive"`` (finite on ``(0, inf)``,
``-inf`` for negative wealth, right limit at zero) or ``"real"`` (finite
everywhere). Evaluation is vectorised over numpy arrays.

String grammar (used by the CLI)::

    capped_sqrt:cap=2   log   power:alpha=0.5   neg_exp:rate=1
    linear_cap:slope=1,cap=1   pl:0:0,1:1,4:2,5.5:2

An optional ``@real`` or ``@positive`` suffix overrides the default domain,
e.g. ``power:alpha=0.5@real``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import InputError, OutsideDomain, PointsOutsideDomain

SLOPE_TOL = 1e-12


class Utility:
    domain = "positive"
    bounded_above = False

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self._value(np.maximum(x, 0.0) if self.domain == "positive" else x)
        out = np.asarray(out, dtype=float)
        if self.domain == "positive":
            out = np.where(x < 0, -np.inf, out)
        return out if out.ndim else float(out)

    def supergradient(self, x):
        """Right derivative, a valid supergradient inside the domain."""
        if self.domain == "positive" and x <= 0:
            raise OutsideDomain(f"{x} is not in the interior of (0, inf)")
        return float(self._right_derivative(float(x)))

    def growth_ok_at_infinity(self, C, alpha):
        """Whether ``U(x) <= C (x**alpha + 1)`` can hold for all large ``x``."""
        return self.bounded_above

    def shifted(self, c):
        return Shifted(self, float(c))

    @property
    def spec(self):
        return str(self)


def _fmt(v):
    return repr(float(v)) if not float(v).is_integer() else str(int(v))


@dataclass(frozen=True)
class CappedSqrt(Utility):
    cap: float = 2.0
    domain: str = "positive"
    bounded_above = True

    def _value(self, x):
        return np.minimum(np.sqrt(x), self.cap)

    def _right_derivative(self, x):
        return 0.0 if math.sqrt(x) >= self.cap else 0.5 / math.sqrt(x)

    def __str__(self):
        return f"capped_sqrt:cap={_fmt(self.cap)}"


@dataclass(frozen=True)
class Log(Utility):
    domain: str = "positive"

    def _value(self, x):
        return np.log(x)

    def _right_derivative(self, x):
        return 1.0 / x

    def growth_ok_at_infinity(self, C, alpha):
        return alpha > 0

    def __str__(self):
        return "log"


@dataclass(frozen=True)
class Power(Utility):
    """``x**alpha``; on the real line, continued below 1 by its tangent at 1."""

    alpha: float = 0.5
    domain: str = "positive"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise InputError(f"power utility needs 0 < alpha < 1, got {self.alpha}")

    def _value(self, x):
        if self.domain == "real":
            return np.where(x >= 1.0, np.abs(x) ** self.alpha, 1.0 + self.alpha * (x - 1.0))
        return x ** self.alpha

    def _right_derivative(self, x):
        if self.domain == "real" and x < 1.0:
            return self.alpha
        return self.alpha * x ** (self.alpha - 1.0)

    def growth_ok_at_infinity(self, C, alpha):
        return self.alpha < alpha or (self.alpha == alpha and C >= 1.0)

    def __str__(self):
        s = f"power:alpha={_fmt(self.alpha)}"
        return s + "@real" if self.domain == "real" else s


@dataclass(frozen=True)
class NegExp(Utility):
    rate: float = 1.0
    domain: str = "real"
    bounded_above = True

    def _value(self, x):
        return -np.exp(-self.rate * x)

    def _right_derivative(self, x):
        return self.rate * math.exp(-self.rate * x)

    def __str__(self):
        return f"neg_exp:rate={_fmt(self.rate)}"


@dataclass(frozen=True)
class LinearCap(Utility):
    """``min(slope * x, cap)``; ``cap = inf`` gives a linear utility."""

    slope: float = 1.0
    cap: float = 1.0
    domain: str = "real"

    @property
    def bounded_above(self):
        return math.isfinite(self.cap)

    def _value(self, x):
        return np.minimum(self.slope * x, self.cap)

    def _right_derivative(self, x):
        return 0.0 if self.slope * x >= self.cap else self.slope

    def __str__(self):
        return f"linear_cap:slope={_fmt(self.slope)},cap={_fmt(self.cap)}"


@dataclass(frozen=True)
class PiecewiseLinear(Utility):
    """Concave piecewise-linear utility through ``(xs[i], ys[i])``.

    Outside ``[xs[0], xs[-1]]`` it continues with ``left_slope`` and
    ``right_slope`` (by default the first and last segment slopes).
    """

    xs: tuple
    ys: tuple
    domain: str = "real"
    left_slope: float | None = None
    right_slope: float | None = None
    slopes: tuple = field(init=False, repr=False)

    def __post_init__(self):
        xs = tuple(float(v) for v in self.xs)
        ys = tuple(float(v) for v in self.ys)
        if len(xs) != len(ys) or not xs:
            raise InputError("piecewise-linear utility needs matching, non-empty breakpoint lists")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise InputError("breakpoints must be strictly increasing")
        seg = [(y1 - y0) / (x1 - x0) for x0, x1, y0, y1 in zip(xs, xs[1:], ys, ys[1:])]
        left = seg[0] if self.left_slope is None else float(self.left_slope)
        right = seg[-1] if self.right_slope is None else float(self.right_slope)
        if not seg and (self.left_slope is None or self.right_slope is None):
            raise InputError("a single breakpoint needs explicit left and right slopes")
        slopes = (left, *seg, right)
        if any(s < -SLOPE_TOL for s in slopes):
            raise InputError("piecewise-linear utility must be non-decreasing")
        if any(b > a + SLOPE_TOL * max(1.0, abs(a)) for a, b in zip(slopes, slopes[1:])):
            raise InputError("piecewise-linear utility must be concave (slopes non-increasing)")
        if self.domain == "positive" and xs[0] < 0:
            raise InputError("positive-domain piecewise-linear utility needs breakpoints >= 0")
        for name, v in (("xs", xs), ("ys", ys), ("left_slope", left), ("right_slope", right)):
            object.__setattr__(self, name, v)
        object.__setattr__(self, "slopes", slopes)

    @property
    def bounded_above(self):
        return self.right_slope <= SLOPE_TOL

    def growth_ok_at_infinity(self, C, alpha):
        return self.bounded_above

    def pieces(self):
        """``(slopes, intercepts)`` with ``U(x) = min_k slope_k * x + intercept_k``.

        Collinear neighbours are merged.
        """
        a, b = [], []
        anchors = (self.xs[0],) + self.xs[:-1] + (self.xs[-1],)
        vals = (self.ys[0],) + self.ys[:-1] + (self.ys[-1],)
        for s, x0, y0 in zip(self.slopes, anchors, vals):
            icpt = y0 - s * x0
            if a and abs(a[-1] - s) <= SLOPE_TOL * max(1.0, abs(s)) and abs(b[-1] - icpt) <= 1e-12 * max(1.0, abs(icpt)):
                continue
            a.append(s)
            b.append(icpt)
        return np.array(a), np.array(b)

    def _value(self, x):
        # by concavity the minimum over pieces is the segment containing x
        xs, ys = np.asarray(self.xs), np.asarray(self.ys)
        k = np.searchsorted(xs, x, side="right")
        anchor = np.maximum(k - 1, 0)
        return ys[anchor] + np.asarray(self.slopes)[k] * (x - xs[anchor])

    def _right_derivative(self, x):
        k = int(np.searchsorted(self.xs, x, side="right"))
        return self.slopes[k]

    def shifted(self, c):
        return PiecewiseLinear(self.xs, tuple(y + c for y in self.ys), self.domain,
                               self.left_slope, self.right_slope)

    def __str__(self):
        pts = ",".join(f"{_fmt(x)}:{_fmt(y)}" for x, y in zip(self.xs, self.ys))
        return f"pl:{pts}" + ("@real" if self.domain == "real" and self.xs[0] >= 0 else "")


@dataclass(frozen=True)
class Shifted(Utility):
    base: Utility
    c: float

    @property
    def domain(self):
        return self.base.domain

    @property
    def bounded_above(self):
        return self.base.bounded_above

    def __call__(self, x):
        return self.base(x) + self.c

    def supergradient(self, x):
        return self.base.supergradient(x)

    def growth_ok_at_infinity(self, C, alpha):
        return self.base.growth_ok_at_infinity(C, alpha)

    def __str__(self):
        return f"{self.base}+{self.c!r}"


def parse_utility(text):
    """Build a utility from the CLI grammar described in the module docstring."""
    text = text.strip()
    domain = None
    if "@" in text:
        text, domain = text.rsplit("@", 1)
        if domain not in ("real", "positive"):
            raise InputError(f"unknown domain {domain!r}")
    kind, _, rest = text.partition(":")
    if kind == "pl":
        try:
            pairs = [tuple(float(v) for v in item.split(":")) for item in rest.split(",")]
        except ValueError as exc:
            raise InputError(f"bad breakpoint list {rest!r}") from exc
        if any(len(p) != 2 for p in pairs):
            raise InputError(f"bad breakpoint list {rest!r}")
        xs, ys = zip(*pairs)
        dom = domain or ("positive" if xs[0] >= 0 else "real")
        return PiecewiseLinear(xs, ys, dom)
    params = {}
    if rest:
        for item in rest.split(","):
            k, eq, v = item.partition("=")
            if not eq:
                raise InputError(f"bad parameter {item!r} in {text!r}")
            params[k.strip()] = float(v)
    classes = {"capped_sqrt": CappedSqrt, "log": Log, "power": Power, "neg_exp": NegExp,
               "linear_cap": LinearCap}
    if kind not in classes:
        raise InputError(f"unknown utility kind {kind!r}")
    if domain:
        params["domain"] = domain
    try:
        return classes[kind](**params)
    except TypeError as exc:
        raise InputError(f"bad parameters for {kind}: {params}") from exc


def evaluate(U, x):
    return U(x)


def supergradient(U, x):
    return U.supergradient(x)


def is_bounded_above(U):
    return bool(U.bounded_above)


@dataclass
class GrowthCertificate:
    C: float
    alpha: float
    verified_grid: np.ndarray
    holds: bool


def check_growth(U, C, alpha, grid=None):
    """``U(x) <= C (x**alpha + 1)`` on ``grid`` and asymptotically."""
    if not (C > 0 and 0 <= alpha < 1):
        raise InputError("need C > 0 and 0 <= alpha < 1")
    grid = np.geomspace(1e-6, 1e6, 241) if grid is None else np.asarray(grid, dtype=float)
    if np.any(grid < 0):
        raise InputError("growth grid must lie in [0, inf)")
    ok = bool(np.all(U(grid) <= C * (grid ** alpha + 1.0) + 1e-12)) and U.growth_ok_at_infinity(C, alpha)
    return GrowthCertificate(C, alpha, grid, ok)


def _check_points(U, points):
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 1 or pts.size < 2 or np.any(np.diff(pts) <= 0):
        raise InputError("need at least two strictly increasing points")
    vals = U(pts)
    if (U.domain == "positive" and pts[0] < 0) or not np.all(np.isfinite(vals)):
        raise PointsOutsideDomain("every point must lie where the utility is finite")
    return pts, vals


def pl_under_approximation(U, points):
    """Chord interpolation of ``U`` through ``points`` and its largest gap.

    The chords lie below a concave ``U`` on ``[points[0], points[-1]]``; the gap
    is measured on a 10x refined grid of that interval.
    """
    if isinstance(U, PiecewiseLinear):
        return U, 0.0
    pts, vals = _check_points(U, points)
    pl = PiecewiseLinear(tuple(pts), tuple(vals), U.domain)
    fine = np.concatenate([np.linspace(a, b, 11)[:-1] for a, b in zip(pts, pts[1:])] + [pts[-1:]])
    gap = float(np.max(U(fine) - pl(fine)))
    return pl, max(gap, 0.0)


def pl_over_approximation(U, points):
    """Minimum of tangent lines at ``points``: lies above a concave ``U`` everywhere."""
    if isinstance(U, PiecewiseLinear):
        return U
    pts, vals = _check_points(U, points)
    if U.domain == "positive" and pts[0] <= 0:
        raise PointsOutsideDomain("tangents need points inside (0, inf)")
    g = np.array([U.supergradient(x) for x in pts])
    keep = [0]
    for k in range(1, pts.size):
        if g[k] < g[keep[-1]] - SLOPE_TOL * max(1.0, abs(g[keep[-1]])):
            keep.append(k)
    pts, vals, g = pts[keep], vals[keep], g[keep]
    if pts.size == 1:
        return PiecewiseLinear((pts[0],), (vals[0],), U.domain, g[0], g[0]) if g[0] >= 0 else None
    xs, ys = [], []
    for k in range(pts.size - 1):
        # intersection of tangents k and k+1
        x = (vals[k + 1] - g[k + 1] * pts[k + 1] - vals[k] + g[k] * pts[k]) / (g[k] - g[k + 1])
        xs.append(x)
        ys.append(vals[k] + g[k] * (x - pts[k]))
    domain = U.domain
    if domain == "positive" and xs[0] < 0:
        domain = "real"
    return PiecewiseLinear(tuple(xs), tuple(ys), domain, g[0], g[-1])
