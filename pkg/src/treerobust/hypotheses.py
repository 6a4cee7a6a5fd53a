"""Which existence theorems' hypotheses a problem instance satisfies.

Four hypothesis sets are checked:

* ``bounded_positive``: a non-arbitrage reference model dominating every
  support, a utility on the positive half-line that is bounded above, and
  non-negative intermediate wealth with ``w0 > 0``.
* ``integrable_positive``: as above without boundedness, plus moment
  conditions on the increments and on ``1/beta`` of a reference model.
* ``bounded_real``: a dominating non-arbitrage model, a utility finite on the
  whole line and bounded above, and no trading constraints.
* ``sublinear_real``: every model arbitrage-free and dominating, a whole-line
  utility with ``U(x) <= C (x**alpha + 1)``, no trading constraints, plus
  moment conditions on ``1/beta``, ``1/kappa`` and the increments.

Moment conditions always hold on a finite tree; the report records the largest
values of the quantities involved as witnesses.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .arbitrage import assumption_na, certificates
from .optimizer import AdmissibilityMode, as_mode
from .utility import check_growth, is_bounded_above

THEOREMS = ("bounded_positive", "integrable_positive", "bounded_real", "sublinear_real")
GROWTH_ALPHAS = (0.0, 0.25, 0.5, 0.75, 0.9, 0.99)


@dataclass
class HypothesisReport:
    holds: dict
    conditions: dict
    star_models: list
    growth: tuple | None = None
    moments: dict = field(default_factory=dict)

    def lines(self):
        out = []
        for name in THEOREMS:
            parts = ", ".join(f"{k}={'yes' if v else 'no'}" for k, v in self.conditions[name].items())
            out.append(f"{name}: {'holds' if self.holds[name] else 'fails'} ({parts})")
        return out


def _moment_witnesses(family, names):
    """Largest ``1/beta``, ``1/kappa`` and increment norm over the given models."""
    inv_beta = inv_kappa = max_inc = 0.0
    tree = family.tree
    for name in names:
        m = family[name]
        cert = certificates(m, tree)
        for _, _, beta, kappa, dim in cert.items():
            if dim == 0:
                continue
            inv_beta = max(inv_beta, 1.0 / beta if beta > 0 else math.inf)
            inv_kappa = max(inv_kappa, 1.0 / kappa if kappa > 0 else math.inf)
    for m in family:
        for t in range(1, tree.horizon + 1):
            max_inc = max(max_inc, float(np.linalg.norm(m.increments[t], axis=1).max()))
    return {"max_inv_beta": inv_beta, "max_inv_kappa": inv_kappa, "max_increment": max_inc}


def find_growth_constants(U, alphas=GROWTH_ALPHAS):
    """Smallest-exponent ``(C, alpha)`` for which the growth bound verifies, or ``None``."""
    grid = np.concatenate([[0.0], np.geomspace(1e-6, 1e6, 241)])
    vals = U(grid)
    for alpha in alphas:
        base = max(float(np.max(vals / (grid ** alpha + 1.0))), 1e-12)
        # the grid stops short of infinity, so allow some headroom
        for scale in (1.0 + 1e-9, 1.01, 1.1, 2.0):
            if check_growth(U, base * scale, alpha, grid).holds:
                return base * scale, alpha
    return None


def hypothesis_report(family, U, w0, mode):
    mode = as_mode(mode)
    stars = assumption_na(family)
    has_star = bool(stars)
    all_star = len(stars) == len(family)
    bounded = is_bounded_above(U)
    positive = U.domain == "positive"
    finite_moments = all(math.isfinite(v) for v in _moment_witnesses(family, stars).values()) if stars else False
    growth = None if positive else find_growth_constants(U)
    intermediate = mode is AdmissibilityMode.INTERMEDIATE and w0 > 0
    unconstrained = mode is AdmissibilityMode.UNCONSTRAINED

    conditions = {
        "bounded_positive": {"reference_model": has_star, "positive_domain": positive,
                             "bounded_above": bounded, "intermediate_admissibility": intermediate},
        "integrable_positive": {"reference_model": has_star, "positive_domain": positive,
                                "moments": finite_moments, "intermediate_admissibility": intermediate},
        "bounded_real": {"reference_model": has_star, "real_domain": not positive,
                         "bounded_above": bounded, "unconstrained": unconstrained},
        "sublinear_real": {"all_models_reference": all_star, "real_domain": not positive,
                           "growth": growth is not None, "moments": finite_moments,
                           "unconstrained": unconstrained},
    }
    holds = {k: all(v.values()) for k, v in conditions.items()}
    moments = _moment_witnesses(family, stars) if stars else {}
    return HypothesisReport(holds, conditions, stars, growth, moments)
