"""Particle swarm optimiser for micro-source siting and sizing.

A particle is ``[p_1 .. p_m, l_1 .. l_m]``: ``m`` unit sizes in kW followed by
``m`` continuous location genes over the candidate bus list, with
``floor(l)`` picking the candidate. With the default three units this is the
1x6 particle.

Constraint handling:

* the penetration total is met by proportional repair inside the size limits
  (:func:`rdsmg.sizing.apply_penetration`);
* size limits by clamping positions;
* voltage and ampacity limits by a quadratic penalty on the violation in p.u.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (AllZeroSizes, InfeasiblePenetration, InfeasibleScenario, NonConvergence,
                     VoltageCollapse)
from .loadflow import DgKind, LoadFlowSolution, solve
from .netmodel import Network
from .sizing import DEFAULT_UNITS, PenetrationSpec, apply_penetration

SENTINEL_FACTOR = 1e3
IMPROVEMENT_EPS = 1e-8


def _default_bounds():
    return {DgKind.PV: (0.0, 2500.0), DgKind.WIND: (0.0, 2500.0), DgKind.MICRO_TURBINE: (0.0, 2500.0)}


@dataclass(frozen=True)
class SwarmConfig:
    c1: float = 1.0
    c2: float = 1.0
    n_particles: int = 50
    max_iter: int = 100
    v_max: float = 125.0  # kW, size dimensions
    w_start: float = 0.9
    w_end: float = 0.4
    seed: int = 0
    size_bounds: dict = field(default_factory=_default_bounds)  # kind -> (min kW, max kW)
    v_limits: tuple = (0.90, 1.05)
    penalty_weight: float = 1e3
    units: tuple = DEFAULT_UNITS
    target_fitness: float | None = None  # stop once gbest reaches this (p.u.)
    lf_tol: float = 1e-6
    lf_max_iter: int = 100

    def __post_init__(self):
        if not (0 <= self.c1 <= 2 and 0 <= self.c2 <= 2):
            raise ValueError("acceleration coefficients must lie in [0, 2]")
        if self.n_particles < 2:
            raise ValueError("need at least 2 particles")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.v_max > 0:
            raise ValueError("v_max must be positive")
        if not self.w_start >= self.w_end > 0:
            raise ValueError("inertia weights need w_start >= w_end > 0")
        if not self.units:
            raise ValueError("need at least one DG unit")
        bounds = {DgKind(k): (float(lo), float(hi)) for k, (lo, hi) in self.size_bounds.items()}
        for tpl in self.units:
            if tpl.kind not in bounds:
                raise ValueError(f"no size bounds for {tpl.kind.value}")
            lo, hi = bounds[tpl.kind]
            if not 0 <= lo <= hi:
                raise ValueError(f"bad size bounds for {tpl.kind.value}: {(lo, hi)}")
        object.__setattr__(self, "size_bounds", bounds)
        v_min, v_max = self.v_limits
        if not 0 < v_min < v_max:
            raise ValueError("voltage limits need 0 < V_min < V_max")

    @classmethod
    def table2(cls, **overrides) -> "SwarmConfig":
        """c1 = c2 = 1, 50 particles, velocity +-125 kW, 100 iterations."""
        base = dict(c1=1.0, c2=1.0, n_particles=50, v_max=125.0, max_iter=100)
        base.update(overrides)
        return cls(**base)

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def dim(self) -> int:
        return 2 * self.n_units

    def bounds_kw(self):
        return [self.size_bounds[t.kind] for t in self.units]

    def inertia(self, iteration: int) -> float:
        return self.w_start - (self.w_start - self.w_end) * iteration / self.max_iter

    def position_bounds(self, n_candidates: int):
        lo = np.array([b[0] for b in self.bounds_kw()] + [0.0] * self.n_units)
        top = np.nextafter(float(n_candidates), 0.0)
        hi = np.array([b[1] for b in self.bounds_kw()] + [top] * self.n_units)
        return lo, hi

    def velocity_clamp(self, n_candidates: int) -> np.ndarray:
        return np.array([self.v_max] * self.n_units + [n_candidates / 4.0] * self.n_units)


@dataclass
class SwarmState:
    x: np.ndarray  # (n_particles, dim)
    v: np.ndarray
    f: np.ndarray  # current fitness
    pbest_x: np.ndarray
    pbest_f: np.ndarray
    gbest_x: np.ndarray
    gbest_f: float
    seed: int = 0
    history: list = field(default_factory=list)


@dataclass
class Evaluation:
    fitness: float
    loss: float  # raw real loss, p.u.; nan when infeasible
    penalty: float
    units: list
    solution: LoadFlowSolution | None
    feasible: bool


class FitnessEvaluator:
    """Decode a particle, repair it, run the load flow and price violations.

    Anything the load flow or repair cannot handle scores the sentinel,
    ``1e3`` times the base-case loss.
    """

    def __init__(self, network: Network, candidates, spec: PenetrationSpec | None, config: SwarmConfig):
        if not candidates:
            raise ValueError("need at least one candidate bus")
        self.network = network
        self.candidates = list(candidates)
        self.spec = spec
        self.config = config
        base = solve(network, (), tol=config.lf_tol, max_iter=config.lf_max_iter)
        self.base_loss = base.p_loss_total
        self.sentinel = SENTINEL_FACTOR * (self.base_loss if self.base_loss > 0 else 1.0)
        self.bounds_pu = [(network.pu(lo), network.pu(hi)) for lo, hi in config.bounds_kw()]
        self.evaluations = 0

    def decode(self, x) -> list:
        m = self.config.n_units
        k = len(self.candidates)
        units = []
        for tpl, size_kw, gene in zip(self.config.units, x[:m], x[m:]):
            idx = min(max(int(math.floor(gene)), 0), k - 1)
            lo, hi = self.config.size_bounds[tpl.kind]
            size_kw = min(max(float(size_kw), lo), hi)
            units.append(tpl.unit(self.candidates[idx], self.network.pu(size_kw)))
        if self.spec is not None:
            units = apply_penetration(units, self.spec, self.bounds_pu)
        return units

    def penalty(self, sol: LoadFlowSolution) -> float:
        v_min, v_max = self.config.v_limits
        vm = sol.vm
        dv = np.maximum(v_min - vm, 0.0) + np.maximum(vm - v_max, 0.0)
        rated = self.network.i_rated
        has = np.isfinite(rated)
        di = np.maximum(np.abs(sol.i_branch[has]) - rated[has], 0.0)
        return self.config.penalty_weight * float(np.sum(dv ** 2) + np.sum(di ** 2))

    def evaluate(self, x) -> Evaluation:
        self.evaluations += 1
        try:
            units = self.decode(np.asarray(x, dtype=float))
        except (AllZeroSizes, InfeasiblePenetration):
            return Evaluation(self.sentinel, math.nan, math.nan, [], None, False)
        try:
            sol = solve(self.network, units, tol=self.config.lf_tol, max_iter=self.config.lf_max_iter)
        except VoltageCollapse:
            return Evaluation(self.sentinel, math.nan, math.nan, units, None, False)
        if not sol.converged:
            return Evaluation(self.sentinel, math.nan, math.nan, units, sol, False)
        pen = self.penalty(sol)
        return Evaluation(sol.p_loss_total + pen, sol.p_loss_total, pen, units, sol, pen == 0)

    def __call__(self, x) -> float:
        return self.evaluate(x).fitness


def fitness(network: Network, x, spec: PenetrationSpec | None, config: SwarmConfig, candidates) -> float:
    """One-off fitness of position ``x``. Build a :class:`FitnessEvaluator` for repeated use."""
    return FitnessEvaluator(network, candidates, spec, config)(x)


def step(state: SwarmState, iteration: int, config: SwarmConfig, rng: np.random.Generator,
         n_candidates: int) -> SwarmState:
    """Move every particle once.

    ``v <- w v + c1 r1 (pbest - x) + c2 r2 (gbest - x)``, then ``x <- x + v``.
    ``r1`` and ``r2`` are drawn per particle and dimension; velocities are
    clamped to +-v_max on size dimensions and +-k/4 on location genes, and
    positions to their bounds.
    """
    n, d = state.x.shape
    w = config.inertia(iteration)
    r = rng.random((n, 2, d))
    v = (w * state.v
         + config.c1 * r[:, 0, :] * (state.pbest_x - state.x)
         + config.c2 * r[:, 1, :] * (state.gbest_x - state.x))
    clamp = config.velocity_clamp(n_candidates)
    v = np.clip(v, -clamp, clamp)
    lo, hi = config.position_bounds(n_candidates)
    state.v = v
    state.x = np.clip(state.x + v, lo, hi)
    return state


@dataclass
class SwarmResult:
    gbest_x: np.ndarray
    gbest_f: float
    history: list  # gbest fitness after each iteration, p.u.
    converged_at: int
    evaluations: int
    units: list  # repaired DG set decoded from gbest_x
    loss: float  # real loss of the gbest DG set, p.u.
    penalty: float
    seed: int
    iterations: int


def converged_iteration(history, eps: float = IMPROVEMENT_EPS) -> int:
    """1-based iteration of the last gbest improvement larger than ``eps``."""
    last = 1
    for i in range(1, len(history)):
        if history[i - 1] - history[i] > eps:
            last = i + 1
    return last


def optimize(network: Network, ranking, spec: PenetrationSpec | None, config: SwarmConfig,
             callback=None) -> SwarmResult:
    """Run the swarm over the candidate buses of ``ranking``.

    ``ranking`` may be an :class:`~rdsmg.siting.MliRanking` or a plain list of
    bus ids. With ``spec=None`` unit sizes are free within their bounds.

    Raises:
        InfeasibleScenario: no initial particle scored below the sentinel.
    """
    candidates = list(getattr(ranking, "candidates", ranking))
    if not candidates:
        raise ValueError("ranking has no candidate buses")
    k = len(candidates)
    evaluator = FitnessEvaluator(network, candidates, spec, config)
    if spec is not None:
        lo_sum = sum(lo for lo, _ in evaluator.bounds_pu)
        hi_sum = sum(hi for _, hi in evaluator.bounds_pu)
        if spec.pdg_pp > hi_sum * (1 + 1e-12) or spec.pdg_pp < lo_sum * (1 - 1e-12):
            raise InfeasibleScenario(
                f"penetration target {network.kw(spec.pdg_pp):.1f} kW cannot be met within the size bounds")

    rng = np.random.default_rng(config.seed)
    n, d = config.n_particles, config.dim
    lo, hi = config.position_bounds(k)
    clamp = config.velocity_clamp(k)
    x = np.clip(lo + rng.random((n, d)) * (hi - lo), lo, hi)
    v = (rng.random((n, d)) * 2.0 - 1.0) * clamp
    f = np.array([evaluator(row) for row in x])
    if np.all(f >= evaluator.sentinel):
        raise InfeasibleScenario("every initial particle is infeasible")
    g = int(np.argmin(f))
    state = SwarmState(x=x, v=v, f=f, pbest_x=x.copy(), pbest_f=f.copy(),
                       gbest_x=x[g].copy(), gbest_f=float(f[g]), seed=config.seed)

    for it in range(config.max_iter):
        step(state, it, config, rng, k)
        state.f = np.array([evaluator(row) for row in state.x])
        better = state.f < state.pbest_f
        state.pbest_x[better] = state.x[better]
        state.pbest_f[better] = state.f[better]
        g = int(np.argmin(state.pbest_f))
        if state.pbest_f[g] < state.gbest_f:
            state.gbest_f = float(state.pbest_f[g])
            state.gbest_x = state.pbest_x[g].copy()
        state.history.append(state.gbest_f)
        if callback is not None:
            callback(it + 1, state)
        if config.target_fitness is not None and state.gbest_f <= config.target_fitness:
            break

    best = evaluator.evaluate(state.gbest_x)
    return SwarmResult(
        gbest_x=state.gbest_x.copy(),
        gbest_f=state.gbest_f,
        history=list(state.history),
        converged_at=converged_iteration(state.history),
        evaluations=evaluator.evaluations - 1,
        units=best.units,
        loss=best.loss,
        penalty=best.penalty,
        seed=config.seed,
        iterations=len(state.history),
    )


def write_history_csv(result: SwarmResult, network: Network, stream, comment: str | None = None) -> None:
    """Write ``iteration,gbest_f_kW`` rows to an open text stream."""
    if comment:
        stream.write(f"# {comment}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["iteration", "gbest_f_kW"])
    for i, value in enumerate(result.history, start=1):
        writer.writerow([i, f"{network.kw(value):.9f}"])


def with_seed(config: SwarmConfig, seed: int) -> SwarmConfig:
    return replace(config, seed=seed)
