"""Backward/forward sweep load flow for radial feeders.

Loads are constant power. Distributed generators are modelled as real power
at a fixed power factor and enter the sweep as negative load.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import NonConvergence, VoltageCollapse
from .netmodel import ROOT, Network

COLLAPSE_FLOOR = 0.3


class DgKind(str, enum.Enum):
    PV = "PV"
    WIND = "Wind"
    MICRO_TURBINE = "MicroTurbine"

    @classmethod
    def parse(cls, text: str) -> "DgKind":
        key = text.strip().lower().replace("-", "").replace("_", "")
        for kind in cls:
            if kind.value.lower() == key:
                return kind
        raise ValueError(f"unknown DG kind {text!r}; expected one of {[k.value for k in cls]}")


def reactive_ratio(pf: float, sign: int = 1) -> float:
    """Q/P ratio of a constant power factor source, ``sign * tan(acos(pf))``."""
    if not 0 < pf <= 1:
        raise ValueError(f"power factor must lie in (0, 1], got {pf}")
    if pf == 1:
        return 0.0
    return sign * math.tan(math.acos(pf))


@dataclass(frozen=True)
class DgUnit:
    """A micro-source at one bus. ``p_size`` is per-unit real power."""

    kind: DgKind
    bus: int
    p_size: float
    pf: float = 1.0
    sign: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", DgKind(self.kind))
        if self.p_size < 0:
            raise ValueError(f"DG size must be non-negative, got {self.p_size}")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 (inject Q) or -1 (absorb Q)")
        if not 0 < self.pf <= 1:
            raise ValueError(f"power factor must lie in (0, 1], got {self.pf}")
        if self.kind is DgKind.PV and self.pf != 1:
            raise ValueError("PV units run at unity power factor")

    @property
    def p(self) -> float:
        return self.p_size

    @property
    def q(self) -> float:
        return reactive_ratio(self.pf, self.sign) * self.p_size

    def resized(self, p_size: float) -> "DgUnit":
        return DgUnit(self.kind, self.bus, p_size, self.pf, self.sign)


@dataclass(frozen=True)
class LoadFlowSolution:
    v: np.ndarray  # complex bus voltages, index bus_id - 1
    i_branch: np.ndarray  # complex current into each bus from its parent; root entry 0
    p_loss_branch: np.ndarray
    q_loss_branch: np.ndarray
    p_loss_total: float
    q_loss_total: float
    iterations: int
    converged: bool
    s_source: complex = 0j  # power drawn from the slack bus

    @property
    def vm(self) -> np.ndarray:
        return np.abs(self.v)


def net_injection(network: Network, dg_units=()) -> tuple[np.ndarray, np.ndarray]:
    """Per-unit net demand ``(P, Q)`` per bus: load minus DG output."""
    p = np.array(network.p_load, dtype=float)
    q = np.array(network.q_load, dtype=float)
    for unit in dg_units:
        if not 1 <= unit.bus <= network.n_buses:
            raise ValueError(f"DG at bus {unit.bus} which is not in the network")
        p[unit.bus - 1] -= unit.p
        q[unit.bus - 1] -= unit.q
    return p, q


def solve(network: Network, dg_units=(), slack_v: float = 1.0, tol: float = 1e-6,
          max_iter: int = 100) -> LoadFlowSolution:
    """Run the sweep from a flat start.

    Each iteration computes bus current injections from the previous
    voltages, accumulates branch currents from the leaves to the root, then
    walks outward applying ``V_child = V_parent - z * I``. Iteration stops once
    no bus voltage moved by ``tol`` or more and the source power matches net
    demand plus branch losses to within ``tol`` in P and Q. The second check
    only matters under heavy per-unit loading, where a small voltage step can
    still leave the currents visibly out of step with the voltages.

    A solution that exhausts ``max_iter`` is returned with ``converged=False``.

    Raises:
        VoltageCollapse: some |V| dropped below 0.3 p.u. during iteration.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")

    n = network.n_buses
    p, q = net_injection(network, dg_units)
    s_net = [complex(a, b) for a, b in zip(p.tolist(), q.tolist())]
    z = [complex(a, b) for a, b in zip(network.r.tolist(), network.x.tolist())]
    order = [b - 1 for b in network.depth_order]
    parent = [0] * n
    for child, par in network.parent_of.items():
        parent[child - 1] = par - 1
    root = ROOT - 1
    slack = complex(slack_v)

    demand = sum(s_net)
    v = [slack] * n
    current = [0j] * n
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        # backward: leaves first, pushing each branch current onto its parent
        current = [(s / vk).conjugate() for s, vk in zip(s_net, v)]
        for k in reversed(order):
            current[parent[k]] += current[k]
        # forward
        v_new = [slack] * n
        for k in order:
            v_new[k] = v_new[parent[k]] - z[k] * current[k]
        delta = max(abs(a - b) for a, b in zip(v_new, v))
        v = v_new
        weakest = min(abs(vk) for vk in v)
        if not weakest >= COLLAPSE_FLOOR:
            raise VoltageCollapse(f"|V| fell to {weakest:.4f} p.u. at sweep {iterations}")
        if delta < tol:
            losses = sum(zk * abs(ik) ** 2 for k, (zk, ik) in enumerate(zip(z, current)) if k != root)
            mismatch = slack * current[root].conjugate() - demand - losses
            if abs(mismatch.real) < tol and abs(mismatch.imag) < tol:
                converged = True
                break

    v_arr = np.array(v, dtype=complex)
    i_arr = np.array(current, dtype=complex)
    s_source = v_arr[root] * np.conj(i_arr[root])
    i_arr[root] = 0
    i2 = np.abs(i_arr) ** 2
    p_loss = i2 * network.r
    q_loss = i2 * network.x
    return LoadFlowSolution(
        v=v_arr,
        i_branch=i_arr,
        p_loss_branch=p_loss,
        q_loss_branch=q_loss,
        p_loss_total=float(np.sum(p_loss)),
        q_loss_total=float(np.sum(q_loss)),
        iterations=iterations,
        converged=converged,
        s_source=complex(s_source),
    )


def objective(network: Network, dg_units=(), **solve_kw) -> float:
    """Total real loss in per-unit; the swarm's fitness kernel.

    Raises:
        NonConvergence: the sweep did not settle.
    """
    sol = solve(network, dg_units, **solve_kw)
    if not sol.converged:
        raise NonConvergence(f"load flow did not converge in {sol.iterations} sweeps", sol)
    return sol.p_loss_total


def min_voltage(solution: LoadFlowSolution) -> tuple[int, float]:
    """Weakest bus ``(bus_id, |V|)``; ties go to the lowest id.

    The source bus only counts when it is the sole bus.
    """
    vm = solution.vm
    if len(vm) == 1:
        return ROOT, float(vm[0])
    k = int(np.argmin(vm[1:])) + 1
    return k + 1, float(vm[k])
