"""Maximum loadability index and weak-bus ranking.

For a bus ``j`` fed from ``p`` over a branch ``r + jx`` and carrying load
``P + jQ``::

    MLI = |Vp|^2 [ -(rP + xQ) + sqrt((r^2 + x^2)(P^2 + Q^2)) ]
          ------------------------------------------------------
          2 [ (r^2 + x^2)(P^2 + Q^2) - (rP + xQ)^2 ]

The value is the factor by which the bus load could grow before the
two-bus voltage solution ceases to exist, so a *smaller* index marks a
*weaker* bus. Ranking is ascending: the weakest buses become DG candidates.

By Lagrange's identity the denominator equals ``2 (xP - rQ)^2``, which is
what gets evaluated. When ``xP == rQ`` the impedance and load vectors are
parallel, numerator and denominator both vanish, and the bus is given an
infinite index.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from .errors import CollinearDegenerate, DegenerateLoad
from .loadflow import LoadFlowSolution
from .netmodel import Network


def mli_denominator_printed(r, x, p, q):
    s = math.sqrt((r * r + x * x) * (p * p + q * q))
    return 2.0 * (s * s - (r * p + x * q) ** 2)


def mli_denominator(r, x, p, q):
    return 2.0 * (x * p - r * q) ** 2


def mli_numerator(v_p, r, x, p, q):
    dot = r * p + x * q
    norm = math.hypot(r, x) * math.hypot(p, q)
    if dot > 0:
        # norm - dot cancels badly when nearly parallel; rationalise instead
        return v_p * v_p * (x * p - r * q) ** 2 / (norm + dot)
    return v_p * v_p * (norm - dot)


def _mli(v_p, r, x, p, q):
    """Index value plus the name of the degeneracy, if any."""
    if p == 0 and q == 0:
        return math.inf, "DegenerateLoad"
    if r == 0 and x == 0:
        raise ValueError("branch impedance is zero")
    den = mli_denominator(r, x, p, q)
    if den == 0:
        return math.inf, "CollinearDegenerate"
    return mli_numerator(v_p, r, x, p, q) / den, None


def mli_for_bus(v_p: float, r: float, x: float, p_j: float, q_j: float) -> float:
    """Loadability index of one bus, all arguments per-unit.

    Unloaded buses and buses whose load is parallel to their feeding
    impedance return ``inf`` with a :class:`DegenerateLoad` or
    :class:`CollinearDegenerate` warning, so they never win the ranking.
    """
    value, reason = _mli(v_p, r, x, p_j, q_j)
    if reason == "DegenerateLoad":
        warnings.warn("bus carries no load; index set to +inf", DegenerateLoad, stacklevel=2)
    elif reason == "CollinearDegenerate":
        warnings.warn(f"x*P == r*Q (r={r}, x={x}, P={p_j}, Q={q_j}); index set to +inf",
                      CollinearDegenerate, stacklevel=2)
    return value


@dataclass(frozen=True)
class MliRanking:
    mli: dict  # bus id -> index value
    order: list  # non-root bus ids, weakest first
    candidates: list
    degenerate: dict = field(default_factory=dict)  # bus id -> reason


def rank_buses(network: Network, base_solution: LoadFlowSolution, k: int = 3) -> MliRanking:
    """Evaluate the index at every non-root bus and pick the ``k`` weakest.

    Each bus uses its own load, the impedance of the branch feeding it and
    the parent-bus voltage magnitude from ``base_solution``. Ties are broken
    by bus id.
    """
    n_candidates = network.n_buses - 1
    if not 1 <= k <= max(n_candidates, 1):
        raise ValueError(f"k must lie in [1, {n_candidates}], got {k}")
    vm = base_solution.vm
    mli = {}
    degenerate = {}
    for bus in sorted(network.depth_order):
        parent = network.parent_of[bus]
        i = bus - 1
        value, reason = _mli(float(vm[parent - 1]), float(network.r[i]), float(network.x[i]),
                             float(network.p_load[i]), float(network.q_load[i]))
        mli[bus] = value
        if reason:
            degenerate[bus] = reason
    order = sorted(mli, key=lambda b: (mli[b], b))
    return MliRanking(mli=mli, order=order, candidates=order[:k], degenerate=degenerate)
