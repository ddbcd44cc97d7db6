"""Radial distribution feeder studies: sweep load flow, loadability-index
siting, analytical and particle-swarm DG sizing."""

from .errors import (AllZeroSizes, Disconnected, DuplicateBusId, InfeasiblePenetration, InfeasibleScenario,
                     MalformedRecord, NonConvergence, NotRadial, RdsError, VoltageCollapse)
from .loadflow import DgKind, DgUnit, LoadFlowSolution, min_voltage, objective, solve
from .netmodel import BranchRecord, BusRecord, Network, build_topology, ieee33, load_network, total_load
from .siting import MliRanking, mli_for_bus, rank_buses
from .sizing import (LossCoefficients, PenetrationSpec, UnitTemplate, analytical_size, apply_penetration,
                     loss_coefficients, penetration_percent, refine_size, size_sequential)
from .swarm import SwarmConfig, SwarmResult, fitness, optimize, step

__version__ = "0.1.0"
