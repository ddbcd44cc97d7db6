"""Command-line front end.

Subcommands: ``loadflow``, ``site``, ``size``, ``optimize`` and ``sweep``.
Reports are JSON, tables are CSV. Exit codes: 0 success, 2 dataset or usage
error, 3 load flow failure, 4 infeasible penetration scenario.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import InfeasibleScenario, MalformedRecord, NetworkError, NonConvergence, VoltageCollapse
from .loadflow import DgKind, DgUnit, LoadFlowSolution, min_voltage, solve
from .netmodel import DEFAULT_S_BASE_MVA, DEFAULT_V_BASE_KV, Network, ieee33_path, load_network
from .siting import rank_buses
from .sizing import (DEFAULT_UNITS, PenetrationSpec, penetration_percent,
                     real_penetration_percent, size_sequential)
from .swarm import SwarmConfig, optimize, write_history_csv

log = logging.getLogger("rdsmg")

EXIT_DATASET = 2
EXIT_LOADFLOW = 3
EXIT_INFEASIBLE = 4

SIGN_NOTE = ("reactive sign of Wind/MicroTurbine units is an assumption (+1 = inject); "
             "set per unit through the sign field")
SEQUENTIAL_NOTE = ("analytical units are sized one at a time, re-running the load flow "
                   "after each placement; each size is re-evaluated at the operating point it creates")
BASIS_NOTE = "penetration_real_pct caps real power; penetration_apparent_pct is the apparent-power ratio"

PROFILES = {
    "table2": dict(c1=1.0, c2=1.0, n_particles=50, v_max=125.0, max_iter=100),
}


@dataclass
class StudyReport:
    scenario: str
    base_loss_kw: float
    final_loss_kw: float
    reduction_pct: float
    dg_table: list = field(default_factory=list)
    voltage_profile: list = field(default_factory=list)  # (bus, |V| base, |V| with DG)
    min_voltage: tuple = ()
    penetration_real_pct: float = 0.0
    penetration_apparent_pct: float = 0.0
    solver_stats: dict = field(default_factory=dict)
    reference: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _dg_row(network: Network, unit: DgUnit) -> dict:
    return {"kind": unit.kind.value, "bus": unit.bus, "p_kW": network.kw(unit.p),
            "q_kVAr": network.kw(unit.q), "pf": unit.pf, "sign": unit.sign}


def build_report(network: Network, scenario: str, base: LoadFlowSolution, final: LoadFlowSolution,
                 units, solver_stats=None, reference=None, notes=()) -> StudyReport:
    base_kw = network.kw(base.p_loss_total)
    final_kw = network.kw(final.p_loss_total)
    reduction = 100.0 * (base_kw - final_kw) / base_kw if base_kw > 0 else 0.0
    profile = [(bus, float(vb), float(vf)) for bus, vb, vf in zip(network.bus_ids, base.vm, final.vm)]
    stats = {"base_iterations": base.iterations, "final_iterations": final.iterations}
    stats.update(solver_stats or {})
    has_load = network.p_load.sum() > 0
    return StudyReport(
        scenario=scenario,
        base_loss_kw=base_kw,
        final_loss_kw=final_kw,
        reduction_pct=reduction,
        dg_table=[_dg_row(network, u) for u in units],
        voltage_profile=profile,
        min_voltage=min_voltage(final),
        penetration_real_pct=real_penetration_percent(units, network) if has_load else 0.0,
        penetration_apparent_pct=penetration_percent(units, network) if has_load else 0.0,
        solver_stats=stats,
        reference=dict(reference or {}),
        notes=list(notes),
    )


def read_dg_spec(path, network: Network) -> list[DgUnit]:
    """Parse a ``kind,bus,p_kW,pf,sign`` file. A header row and ``#`` comments are allowed."""
    try:
        text = Path(path).read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise MalformedRecord(f"cannot read DG spec {path}: {exc.strerror or exc}") from None
    units = []
    for line_no, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        cells = [c.strip() for c in row]
        if not cells or not any(cells) or cells[0].startswith("#") or cells[0].lower() == "kind":
            continue
        if len(cells) != 5:
            raise MalformedRecord(f"{path}:{line_no}: DG rows need kind,bus,p_kW,pf,sign")
        try:
            unit = DgUnit(DgKind.parse(cells[0]), int(cells[1]), network.pu(float(cells[2])),
                          float(cells[3]), int(cells[4]))
        except ValueError as exc:
            raise MalformedRecord(f"{path}:{line_no}: {exc}") from None
        if not 1 <= unit.bus <= network.n_buses:
            raise MalformedRecord(f"{path}:{line_no}: bus {unit.bus} is not in the network")
        units.append(unit)
    return units


def write_dg_spec(units, network: Network, stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["kind", "bus", "p_kW", "pf", "sign"])
    for u in units:
        writer.writerow([u.kind.value, u.bus, repr(network.kw(u.p_size)), repr(u.pf), u.sign])


class Emitter:
    """Routes text to a file or stdout and stamps CSV headers."""

    def __init__(self, timestamp: bool):
        self.timestamp = timestamp

    def stamp(self) -> str | None:
        if not self.timestamp:
            return None
        return "generated " + datetime.now(timezone.utc).isoformat(timespec="seconds")

    def csv_text(self, header, rows) -> str:
        buf = io.StringIO()
        stamp = self.stamp()
        if stamp:
            buf.write(f"# {stamp}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue()

    @staticmethod
    def emit(text: str, path) -> None:
        if path is None or str(path) == "-":
            sys.stdout.write(text)
            if not text.endswith("\n"):
                sys.stdout.write("\n")
            sys.stdout.flush()
        else:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text if text.endswith("\n") else text + "\n")


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def voltage_csv(emitter: Emitter, network: Network, base: LoadFlowSolution, final=None) -> str:
    if final is None:
        rows = [(bus, _fmt(v)) for bus, v in zip(network.bus_ids, base.vm)]
        return emitter.csv_text(["bus", "v_pu"], rows)
    rows = [(bus, _fmt(vb), _fmt(vf)) for bus, vb, vf in zip(network.bus_ids, base.vm, final.vm)]
    return emitter.csv_text(["bus", "v_base_pu", "v_dg_pu"], rows)


def _require_converged(sol: LoadFlowSolution, what: str) -> LoadFlowSolution:
    if not sol.converged:
        raise NonConvergence(f"{what} load flow did not converge in {sol.iterations} sweeps", sol)
    return sol


def _network(args) -> Network:
    path = args.network or ieee33_path()
    return load_network(path, args.v_base, args.s_base)


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("RDSMG_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise SystemExit(f"RDSMG_SEED must be an integer, got {env!r}") from None
    return 0


def _swarm_config(args) -> SwarmConfig:
    params = dict(PROFILES[args.profile])
    if args.particles is not None:
        params["n_particles"] = args.particles
    if args.iters is not None:
        params["max_iter"] = args.iters
    try:
        return SwarmConfig(seed=_seed(args), **params)
    except ValueError as exc:
        print(f"rdsmg: error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_DATASET) from None


# -- commands ---------------------------------------------------------------

def cmd_loadflow(args) -> int:
    network = _network(args)
    units = read_dg_spec(args.dg, network) if args.dg else []
    base = _require_converged(solve(network, (), tol=args.tol, max_iter=args.max_iter), "base case")
    final = _require_converged(solve(network, units, tol=args.tol, max_iter=args.max_iter), "DG case")
    notes = [SIGN_NOTE] if any(u.pf < 1 for u in units) else []
    report = build_report(network, "loadflow" if not units else "loadflow+dg", base, final, units, notes=notes)
    Emitter.emit(report.to_json(), args.out)
    if args.csv:
        emitter = Emitter(not args.no_timestamp)
        Emitter.emit(voltage_csv(emitter, network, base, final if units else None), args.csv)
    return 0


def cmd_site(args) -> int:
    network = _network(args)
    if network.n_buses < 2:
        raise MalformedRecord("siting needs at least one non-source bus")
    top = min(args.top, network.n_buses - 1)
    base = _require_converged(solve(network), "base case")
    ranking = rank_buses(network, base, top)
    rows = []
    for rank, bus in enumerate(ranking.order, start=1):
        value = ranking.mli[bus]
        rows.append((bus, "inf" if math.isinf(value) else f"{value:.9g}", rank,
                     1 if bus in ranking.candidates else 0))
    emitter = Emitter(not args.no_timestamp)
    Emitter.emit(emitter.csv_text(["bus", "mli", "rank", "candidate"], rows), args.out)
    return 0


def analytical_study(network: Network, k: int):
    """Base case, MLI candidates and sequential analytical sizing."""
    base = _require_converged(solve(network), "base case")
    ranking = rank_buses(network, base, k)
    templates = DEFAULT_UNITS[:len(ranking.candidates)]
    units, sols = size_sequential(network, ranking.candidates, templates)
    final = _require_converged(sols[-1], "analytical")
    return base, ranking, units, final


def cmd_size(args) -> int:
    network = _network(args)
    base, ranking, units, final = analytical_study(network, min(args.top, len(DEFAULT_UNITS)))
    report = build_report(network, "analytical", base, final, units,
                          solver_stats={"candidates": ranking.candidates},
                          notes=[SIGN_NOTE, SEQUENTIAL_NOTE, BASIS_NOTE])
    Emitter.emit(report.to_json(), args.out)
    emitter = Emitter(not args.no_timestamp)
    if args.csv:
        Emitter.emit(voltage_csv(emitter, network, base, final), args.csv)
    if args.dg_csv:
        buf = io.StringIO()
        write_dg_spec(units, network, buf)
        Emitter.emit(buf.getvalue(), args.dg_csv)
    return 0


def run_optimize(network: Network, level_pct: float, config: SwarmConfig, k: int):
    """Full pipeline for one penetration level; returns ``(report, result)``."""
    base = _require_converged(solve(network), "base case")
    ranking = rank_buses(network, base, k)
    spec = PenetrationSpec.from_level(network, level_pct / 100.0)
    result = optimize(network, ranking, spec, config)
    if not result.units:
        raise InfeasibleScenario("no feasible DG set found")
    final = _require_converged(solve(network, result.units), "optimised")
    _, _, analytical, analytical_sol = analytical_study(network, min(k, len(DEFAULT_UNITS)))
    spec = spec.with_breakdown(result.units)
    stats = {
        "seed": config.seed,
        "particles": config.n_particles,
        "iterations": result.iterations,
        "evaluations": result.evaluations,
        "converged_at": result.converged_at,
        "gbest_f_kW": network.kw(result.gbest_f),
        "candidates": ranking.candidates,
    }
    reference = {
        "analytical_loss_kw": network.kw(analytical_sol.p_loss_total),
        "analytical_dg_table": [_dg_row(network, u) for u in analytical],
        "target_kw": network.kw(spec.pdg_pp),
        "breakdown": [list(b) for b in spec.per_unit_breakdown],
    }
    report = build_report(network, f"pso@{level_pct:g}%", base, final, result.units, stats, reference,
                          notes=[SIGN_NOTE, BASIS_NOTE])
    return report, result


def cmd_optimize(args) -> int:
    network = _network(args)
    config = _swarm_config(args)
    report, result = run_optimize(network, args.penetration, config, args.candidates)
    Emitter.emit(report.to_json(), args.out)
    emitter = Emitter(not args.no_timestamp)
    if args.convergence:
        buf = io.StringIO()
        write_history_csv(result, network, buf, emitter.stamp())
        Emitter.emit(buf.getvalue(), args.convergence)
    if args.csv:
        base = solve(network)
        final = solve(network, result.units)
        Emitter.emit(voltage_csv(emitter, network, base, final), args.csv)
    if args.dg_csv:
        buf = io.StringIO()
        write_dg_spec(result.units, network, buf)
        Emitter.emit(buf.getvalue(), args.dg_csv)
    return 0


def parse_levels(text: str) -> list[float]:
    levels = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            value = float(part)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad penetration level {part!r}") from None
        if not 0 < value <= 100:
            raise argparse.ArgumentTypeError(f"penetration level {value:g} outside (0, 100]")
        levels.append(value)
    if not levels:
        raise argparse.ArgumentTypeError("no penetration levels given")
    return levels


def cmd_sweep(args) -> int:
    network = _network(args)
    config = _swarm_config(args)
    levels = []
    for level in args.levels:
        if level in levels:
            log.warning("duplicate penetration level %g ignored", level)
            continue
        levels.append(level)
    rows = []
    for level in levels:
        report, _ = run_optimize(network, level, config, args.candidates)
        rows.append((f"{level:g}", _fmt(report.final_loss_kw), _fmt(report.reduction_pct),
                     _fmt(report.min_voltage[1])))
        log.info("level %g%%: %.3f kW (base %.3f kW)", level, report.final_loss_kw, report.base_loss_kw)
    emitter = Emitter(not args.no_timestamp)
    Emitter.emit(emitter.csv_text(["level", "final_loss_kW", "reduction_pct", "min_voltage"], rows), args.out)
    return 0


# -- parser -----------------------------------------------------------------

def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def _percent(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0 < value <= 100:
        raise argparse.ArgumentTypeError(f"penetration must lie in (0, 100], got {value:g}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rdsmg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("network", nargs="?", help="dataset file (default: bundled IEEE 33-bus)")
    common.add_argument("--v-base", type=float, default=DEFAULT_V_BASE_KV, help="line voltage base, kV")
    common.add_argument("--s-base", type=float, default=DEFAULT_S_BASE_MVA, help="power base, MVA")
    common.add_argument("--out", help="write the main output here instead of stdout")
    common.add_argument("--no-timestamp", action="store_true", help="omit the timestamp line in CSV output")

    swarm = argparse.ArgumentParser(add_help=False)
    swarm.add_argument("--seed", type=int, help="RNG seed (fallback: $RDSMG_SEED, then 0)")
    swarm.add_argument("--particles", type=_positive_int)
    swarm.add_argument("--iters", type=_positive_int)
    swarm.add_argument("--profile", choices=sorted(PROFILES), default="table2")
    swarm.add_argument("--candidates", type=_positive_int, default=3, help="MLI candidate buses (default 3)")

    p = sub.add_parser("loadflow", parents=[common], help="run the sweep load flow")
    p.add_argument("--dg", help="DG spec CSV: kind,bus,p_kW,pf,sign")
    p.add_argument("--csv", help="per-bus voltage CSV")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=_positive_int, default=100)
    p.set_defaults(func=cmd_loadflow)

    p = sub.add_parser("site", parents=[common], help="rank buses by loadability index")
    p.add_argument("--top", type=_positive_int, default=3)
    p.set_defaults(func=cmd_site)

    p = sub.add_parser("size", parents=[common], help="analytical sizing at the MLI candidates")
    p.add_argument("--top", type=_positive_int, default=3)
    p.add_argument("--csv", help="per-bus voltage CSV")
    p.add_argument("--dg-csv", help="write the sized units as a DG spec CSV")
    p.set_defaults(func=cmd_size)

    p = sub.add_parser("optimize", parents=[common, swarm], help="PSO siting and sizing")
    p.add_argument("--penetration", type=_percent, required=True, help="real-power level, percent")
    p.add_argument("--convergence", help="gbest history CSV")
    p.add_argument("--csv", help="per-bus voltage CSV")
    p.add_argument("--dg-csv", help="write the optimised units as a DG spec CSV")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", parents=[common, swarm], help="PSO across penetration levels")
    p.add_argument("--levels", type=parse_levels, default=[50.0, 60.0, 80.0], help="e.g. 50,60,80")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except NetworkError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except (NonConvergence, VoltageCollapse) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_LOADFLOW
    except InfeasibleScenario as exc:
        print(f"error: InfeasibleScenario: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
