"""Analytical DG sizing from the exact loss formula, and penetration bookkeeping.

The exact loss formula writes total real loss in terms of net bus injections
``P_i, Q_i``::

    P_L = sum_i sum_j alpha_ij (P_i P_j + Q_i Q_j) + beta_ij (Q_i P_j - P_i Q_j)

    alpha_ij = R_ij cos(d_i - d_j) / (|V_i| |V_j|)
    beta_ij  = R_ij sin(d_i - d_j) / (|V_i| |V_j|)

where ``R_ij`` is the resistance shared by the root paths of buses ``i`` and
``j``. Setting the derivative with respect to a DG output at bus ``i`` to
zero, with ``Q_DG = a P_DG``, gives the analytical size.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import AllZeroSizes, DegenerateCoefficient, InfeasiblePenetration, NegativeSize
from .loadflow import DgKind, DgUnit, LoadFlowSolution, net_injection, reactive_ratio, solve
from .netmodel import ROOT, Network, total_load


@dataclass(frozen=True)
class LossCoefficients:
    alpha: np.ndarray  # N x N, index bus_id - 1
    beta: np.ndarray

    def loss(self, p_inj, q_inj) -> float:
        """Evaluate the exact loss formula for net injections (generation positive)."""
        p = np.asarray(p_inj, dtype=float)
        q = np.asarray(q_inj, dtype=float)
        a, b = self.alpha, self.beta
        return float(p @ a @ p + q @ a @ q + q @ b @ p - p @ b @ q)


def path_impedance_matrix(network: Network) -> np.ndarray:
    """Bus impedance matrix with the source as reference.

    Entry ``[i, j]`` is the total impedance of the branches common to the
    root paths of buses ``i + 1`` and ``j + 1``.
    """
    n = network.n_buses
    z_branch = network.r + 1j * network.x
    zbus = np.zeros((n, n), dtype=complex)
    # a child shares its parent's row plus its own branch on the diagonal
    for bus in network.depth_order:
        k = bus - 1
        par = network.parent_of[bus] - 1
        zbus[k, :] = zbus[par, :]
        zbus[:, k] = zbus[:, par]
        zbus[k, k] = zbus[par, par] + z_branch[k]
    zbus[ROOT - 1, :] = 0
    zbus[:, ROOT - 1] = 0
    return zbus


def loss_coefficients(network: Network, solution: LoadFlowSolution) -> LossCoefficients:
    r = path_impedance_matrix(network).real
    vm = np.abs(solution.v)
    delta = np.angle(solution.v)
    diff = delta[:, None] - delta[None, :]
    scale = np.outer(vm, vm)
    return LossCoefficients(alpha=r * np.cos(diff) / scale, beta=r * np.sin(diff) / scale)


def analytical_size(network: Network, solution: LoadFlowSolution, bus: int, pf_dg: float,
                    sign: int = 1, kind: DgKind | None = None, dg_units=()) -> DgUnit:
    """Loss-minimising size of one constant power factor DG at ``bus``.

    ``solution`` must be the load flow with ``dg_units`` already in place;
    those units count toward the net injections of the other buses. Negative
    sizes are clamped to zero with a :class:`NegativeSize` warning.

    Raises:
        DegenerateCoefficient: ``bus`` has no path resistance (the source).
    """
    if kind is None:
        kind = DgKind.PV if pf_dg == 1 else DgKind.WIND
    coeffs = loss_coefficients(network, solution)
    i = bus - 1
    alpha, beta = coeffs.alpha, coeffs.beta
    a_ii = alpha[i, i]
    if not a_ii > 0:
        raise DegenerateCoefficient(f"alpha[{bus},{bus}] = {a_ii}; cannot size DG at bus {bus}")

    demand_p, demand_q = net_injection(network, dg_units)
    p_inj, q_inj = -demand_p, -demand_q
    others = np.ones(network.n_buses, dtype=bool)
    others[i] = False
    x_i = float(alpha[i, others] @ p_inj[others] - beta[i, others] @ q_inj[others])
    y_i = float(alpha[i, others] @ q_inj[others] + beta[i, others] @ p_inj[others])

    a = reactive_ratio(pf_dg, sign)
    p_d, q_d = demand_p[i], demand_q[i]
    b_ii = beta[i, i]
    p_dg = (a_ii * (p_d + a * q_d) + b_ii * (a * p_d - q_d) - x_i - a * y_i) / (a * a * a_ii + a_ii)
    if p_dg < 0:
        warnings.warn(f"analytical size at bus {bus} is negative ({p_dg:.6g} p.u.); clamped to 0",
                      NegativeSize, stacklevel=2)
        p_dg = 0.0
    return DgUnit(kind, bus, float(p_dg), pf_dg, sign)


@dataclass(frozen=True)
class UnitTemplate:
    """Kind, power factor and reactive sign of a micro-source, without a size or bus."""

    kind: DgKind
    pf: float
    sign: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", DgKind(self.kind))
        reactive_ratio(self.pf, self.sign)

    def unit(self, bus: int, p_size: float) -> DgUnit:
        return DgUnit(self.kind, bus, p_size, self.pf, self.sign)


DEFAULT_UNITS = (
    UnitTemplate(DgKind.PV, 1.0, 1),
    UnitTemplate(DgKind.WIND, 0.9, 1),
    UnitTemplate(DgKind.MICRO_TURBINE, 0.9, 1),
)


def refine_size(network: Network, bus: int, template: UnitTemplate, dg_units=(), solution=None,
                tol: float = 1e-10, max_rounds: int = 50, **solve_kw):
    """Analytical size re-evaluated at the operating point it creates.

    The closed form uses coefficients from the voltages before the unit is
    connected. Here the unit is placed, the load flow re-run, and the same
    unit re-sized from the new coefficients (other units held fixed) until the
    size moves by less than ``tol`` p.u. Returns ``(unit, solution, rounds)``
    with ``solution`` the load flow including the unit.
    """
    dg_units = list(dg_units)
    if solution is None:
        solution = solve(network, dg_units, **solve_kw)
    unit = analytical_size(network, solution, bus, template.pf, template.sign, template.kind, dg_units)
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        solution = solve(network, dg_units + [unit], **solve_kw)
        new = analytical_size(network, solution, bus, template.pf, template.sign, template.kind, dg_units)
        moved = abs(new.p_size - unit.p_size)
        unit = new
        if moved < tol:
            break
    solution = solve(network, dg_units + [unit], **solve_kw)
    return unit, solution, rounds


def size_sequential(network: Network, buses, templates=DEFAULT_UNITS, refine: bool = True, **solve_kw):
    """Place ``templates[k]`` at ``buses[k]`` one after another.

    After each unit the load flow is re-run and the coefficients rebuilt, so
    later units see the earlier ones. With ``refine`` each unit is sized by
    :func:`refine_size` instead of a single pass. Returns ``(units, solutions)``
    where ``solutions[0]`` is the starting case and ``solutions[k]`` follows
    unit k.
    """
    if len(buses) != len(templates):
        raise ValueError("need one bus per unit template")
    units: list[DgUnit] = []
    sol = solve(network, (), **solve_kw)
    solutions = [sol]
    for bus, tpl in zip(buses, templates):
        if refine:
            unit, sol, _ = refine_size(network, bus, tpl, units, sol, **solve_kw)
            units.append(unit)
        else:
            unit = analytical_size(network, sol, bus, tpl.pf, tpl.sign, tpl.kind, units)
            units.append(unit)
            sol = solve(network, units, **solve_kw)
        solutions.append(sol)
    return units, solutions


@dataclass(frozen=True)
class PenetrationSpec:
    """Real-power penetration target.

    ``level`` is a fraction of total real load and ``pdg_pp`` the matching
    per-unit DG total.
    """

    level: float
    pdg_pp: float
    per_unit_breakdown: tuple = ()  # (bus, share) pairs

    def __post_init__(self):
        if not 0 < self.level <= 1:
            raise ValueError(f"penetration level must lie in (0, 1], got {self.level}")
        if self.pdg_pp < 0:
            raise ValueError("pdg_pp must be non-negative")

    @classmethod
    def from_level(cls, network: Network, level: float) -> "PenetrationSpec":
        p_total, _, _ = total_load(network)
        return cls(level=level, pdg_pp=level * p_total)

    def with_breakdown(self, units) -> "PenetrationSpec":
        return PenetrationSpec(self.level, self.pdg_pp, penetration_breakdown(units))


def penetration_breakdown(units) -> tuple:
    """``(bus, share)`` per unit with shares summing to one."""
    total = sum(u.p_size for u in units)
    if total <= 0:
        raise AllZeroSizes("no DG output to break down")
    shares = [u.p_size / total for u in units]
    shares[-1] = 1.0 - sum(shares[:-1])
    return tuple((u.bus, s) for u, s in zip(units, shares))


def apply_penetration(dg_units, spec: PenetrationSpec, bounds=None) -> list[DgUnit]:
    """Rescale unit sizes proportionally so they sum to ``spec.pdg_pp``.

    ``bounds`` optionally gives per-unit ``(lo, hi)`` limits per unit. Units
    that would cross a limit are pinned to it and the remainder is shared
    among the rest, so the result meets both the total and the limits.

    Raises:
        AllZeroSizes: every size is zero, so there is no direction to scale.
        InfeasiblePenetration: the limits cannot accommodate ``pdg_pp``.
    """
    units = list(dg_units)
    if not units:
        raise ValueError("need at least one DG unit")
    target = spec.pdg_pp
    sizes = np.array([u.p_size for u in units], dtype=float)
    if bounds is None:
        lo = np.zeros(len(units))
        hi = np.full(len(units), np.inf)
    else:
        lo = np.array([b[0] for b in bounds], dtype=float)
        hi = np.array([b[1] for b in bounds], dtype=float)
        if np.sum(lo) > target * (1 + 1e-12) or np.sum(hi) < target * (1 - 1e-12):
            raise InfeasiblePenetration(
                f"target {target:.6g} outside the reachable range [{np.sum(lo):.6g}, {np.sum(hi):.6g}]")
        sizes = np.clip(sizes, lo, hi)
    if target == 0:
        return [u.resized(0.0) for u in units]
    if not np.any(sizes > 0):
        raise AllZeroSizes("cannot rescale DG sizes that are all zero")

    pinned = np.zeros(len(units), dtype=bool)
    out = sizes.copy()
    while True:
        free = ~pinned
        remaining = target - out[pinned].sum()
        base = sizes[free].sum()
        if base <= 0:
            # only zero-sized units left free; share what is left evenly
            out[free] = remaining / free.sum()
        else:
            out[free] = remaining * (sizes[free] / base)
        over = free & (out > hi)
        under = free & (out < lo)
        if not over.any() and not under.any():
            break
        out[over] = hi[over]
        out[under] = lo[under]
        pinned |= over | under
        if pinned.all():
            break
    # absorb rounding in the largest free unit
    free_idx = np.flatnonzero(~pinned)
    if free_idx.size:
        j = free_idx[np.argmax(out[free_idx])]
        adjusted = out[j] + (target - out.sum())
        if lo[j] <= adjusted <= hi[j]:
            out[j] = adjusted
    return [u.resized(float(max(s, 0.0))) for u, s in zip(units, out)]


def penetration_percent(dg_units, network: Network) -> float:
    """Apparent-power penetration ``100 * |sum S_DG| / |S_load|``."""
    p = sum(u.p for u in dg_units)
    q = sum(u.q for u in dg_units)
    _, _, s_load = total_load(network)
    if s_load == 0:
        raise ValueError("network carries no load")
    return 100.0 * math.hypot(p, q) / s_load


def real_penetration_percent(dg_units, network: Network) -> float:
    p_total, _, _ = total_load(network)
    return 100.0 * sum(u.p for u in dg_units) / p_total
