"""Radial network data model, dataset ingestion and per-unit conversion.

Datasets carry physical units (kW, kVAr, ohm, A). A :class:`Network` keeps
the physical records for reporting and exposes read-only per-unit arrays,
indexed by ``bus_id - 1``, for the solvers.

Dataset format::

    #BUS
    id,p_load_kW,q_load_kVAr
    #BRANCH
    from,to,r_ohm,x_ohm[,i_rated_A]

Any other line starting with ``#`` is a comment.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import Disconnected, DuplicateBusId, MalformedRecord, NotRadial

ROOT = 1
DEFAULT_V_BASE_KV = 12.66
DEFAULT_S_BASE_MVA = 100.0


@dataclass(frozen=True)
class BusRecord:
    id: int
    p_load: float  # kW
    q_load: float  # kVAr

    def __post_init__(self):
        if self.id < 1:
            raise MalformedRecord(f"bus id must be positive, got {self.id}")
        if self.p_load < 0:
            raise MalformedRecord(f"bus {self.id}: negative real load {self.p_load}")


@dataclass(frozen=True)
class BranchRecord:
    from_bus: int
    to_bus: int
    r: float  # ohm
    x: float  # ohm
    i_rated: float | None = None  # A

    def __post_init__(self):
        if self.r < 0 or self.x < 0:
            raise MalformedRecord(f"branch {self.from_bus}-{self.to_bus}: negative impedance")
        if self.r == 0 and self.x == 0:
            raise MalformedRecord(f"branch {self.from_bus}-{self.to_bus}: zero impedance")
        if self.i_rated is not None and not self.i_rated > 0:
            raise MalformedRecord(f"branch {self.from_bus}-{self.to_bus}: i_rated must be > 0")


def z_base(v_base: float, s_base: float) -> float:
    """Base impedance in ohm for a line voltage in kV and a power base in MVA."""
    return (v_base * 1e3) ** 2 / (s_base * 1e6)


def i_base(v_base: float, s_base: float) -> float:
    """Base current in A."""
    return s_base * 1e6 / (math.sqrt(3) * v_base * 1e3)


def build_topology(buses, branches):
    """Root the tree at bus 1.

    Returns ``(parent_of, children_of, depth_order)``: ``parent_of`` maps each
    non-root bus to its upstream bus, ``children_of`` maps every bus to a tuple
    of its downstream neighbours, and ``depth_order`` lists non-root buses
    breadth-first from the root so parents always precede their children.
    """
    ids = [b.id if isinstance(b, BusRecord) else int(b) for b in buses]
    known = set(ids)
    parent_of: dict[int, int] = {}
    children: dict[int, list[int]] = {i: [] for i in ids}
    for br in branches:
        if br.from_bus not in known or br.to_bus not in known:
            raise MalformedRecord(f"branch {br.from_bus}-{br.to_bus} references an unknown bus")
        if br.from_bus == br.to_bus:
            raise NotRadial(f"self-loop at bus {br.from_bus}")
        if br.to_bus == ROOT:
            raise NotRadial("the source bus 1 cannot be fed by a branch")
        if br.to_bus in parent_of:
            raise NotRadial(f"bus {br.to_bus} is fed by more than one branch")
        parent_of[br.to_bus] = br.from_bus
        children[br.from_bus].append(br.to_bus)

    if len(branches) > len(ids) - 1:
        raise NotRadial(f"{len(branches)} branches for {len(ids)} buses: the network has a loop")

    depth_order: list[int] = []
    queue = deque([ROOT])
    seen = {ROOT}
    while queue:
        bus = queue.popleft()
        for child in sorted(children[bus]):
            seen.add(child)
            depth_order.append(child)
            queue.append(child)

    unreached = sorted(known - seen)
    if unreached:
        orphans = [b for b in unreached if b not in parent_of]
        if orphans:
            raise Disconnected(f"buses {orphans} are not connected to the source")
        raise NotRadial(f"buses {unreached} form a loop detached from the source")

    children_of = {i: tuple(sorted(c)) for i, c in children.items()}
    return parent_of, children_of, depth_order


@dataclass(frozen=True)
class Network:
    """Immutable radial feeder.

    Only ``buses``, ``branches``, ``v_base`` (kV) and ``s_base`` (MVA) are
    passed in; topology and per-unit arrays are derived and frozen at
    construction.
    """

    buses: tuple[BusRecord, ...]
    branches: tuple[BranchRecord, ...]
    v_base: float = DEFAULT_V_BASE_KV
    s_base: float = DEFAULT_S_BASE_MVA
    parent_of: dict = field(init=False, repr=False, compare=False)
    children_of: dict = field(init=False, repr=False, compare=False)
    depth_order: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(sorted(self.buses, key=lambda b: b.id)))
        object.__setattr__(self, "branches", tuple(self.branches))
        if not self.buses:
            raise MalformedRecord("network has no buses")
        if self.v_base <= 0 or self.s_base <= 0:
            raise ValueError("v_base and s_base must be positive")
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DuplicateBusId(f"bus ids repeated: {dupes}")
        if ids != list(range(1, len(ids) + 1)):
            raise MalformedRecord("bus ids must form the contiguous range 1..N")

        parent_of, children_of, depth_order = build_topology(self.buses, self.branches)
        object.__setattr__(self, "parent_of", parent_of)
        object.__setattr__(self, "children_of", children_of)
        object.__setattr__(self, "depth_order", tuple(depth_order))

        n = len(ids)
        zb = z_base(self.v_base, self.s_base)
        ib = i_base(self.v_base, self.s_base)
        s_kw = self.s_base * 1e3
        p = np.array([b.p_load for b in self.buses], dtype=float) / s_kw
        q = np.array([b.q_load for b in self.buses], dtype=float) / s_kw
        r = np.zeros(n)
        x = np.zeros(n)
        i_rated = np.full(n, np.nan)
        for br in self.branches:
            k = br.to_bus - 1
            r[k] = br.r / zb
            x[k] = br.x / zb
            if br.i_rated is not None:
                i_rated[k] = br.i_rated / ib
        for name, arr in (("p_load", p), ("q_load", q), ("r", r), ("x", x), ("i_rated", i_rated)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_branch_to", {br.to_bus: br for br in self.branches})

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    @property
    def z_base(self) -> float:
        return z_base(self.v_base, self.s_base)

    @property
    def i_base(self) -> float:
        return i_base(self.v_base, self.s_base)

    def branch_into(self, bus: int) -> BranchRecord:
        """The branch feeding ``bus`` from its parent."""
        return self._branch_to[bus]

    def kw(self, value_pu):
        """Per-unit power to kW (or kVAr)."""
        return value_pu * self.s_base * 1e3

    def pu(self, value_kw):
        """kW (or kVAr) to per-unit power."""
        return value_kw / (self.s_base * 1e3)

    def with_loads(self, p_kw, q_kvar) -> "Network":
        """Copy of this network with every bus load replaced (kW, kVAr, by bus index)."""
        buses = [replace(b, p_load=float(p_kw[b.id - 1]), q_load=float(q_kvar[b.id - 1])) for b in self.buses]
        return Network(tuple(buses), self.branches, self.v_base, self.s_base)


def total_load(network: Network) -> tuple[float, float, float]:
    """Per-unit ``(P_total, Q_total, S_total)`` with ``S = hypot(P, Q)``."""
    p = float(np.sum(network.p_load))
    q = float(np.sum(network.q_load))
    return p, q, math.hypot(p, q)


def _parse_float(text, line_no):
    try:
        value = float(text)
    except ValueError:
        raise MalformedRecord(f"line {line_no}: cannot parse number {text!r}") from None
    if not math.isfinite(value):
        raise MalformedRecord(f"line {line_no}: non-finite value {text!r}")
    return value


def _parse_int(text, line_no):
    try:
        return int(text)
    except ValueError:
        raise MalformedRecord(f"line {line_no}: cannot parse bus id {text!r}") from None


def parse_dataset(text: str) -> tuple[list[BusRecord], list[BranchRecord]]:
    buses: list[BusRecord] = []
    branches: list[BranchRecord] = []
    section = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            tag = line[1:].strip().upper()
            if tag in ("BUS", "BRANCH"):
                section = tag
            continue
        if section is None:
            raise MalformedRecord(f"line {line_no}: data before a #BUS or #BRANCH header")
        cells = [c.strip() for c in next(csv.reader([line]))]
        try:
            if section == "BUS":
                if len(cells) != 3:
                    raise MalformedRecord(f"line {line_no}: bus rows need 3 fields, got {len(cells)}")
                buses.append(BusRecord(_parse_int(cells[0], line_no),
                                       _parse_float(cells[1], line_no),
                                       _parse_float(cells[2], line_no)))
            else:
                if len(cells) not in (4, 5):
                    raise MalformedRecord(f"line {line_no}: branch rows need 4 or 5 fields, got {len(cells)}")
                i_rated = _parse_float(cells[4], line_no) if len(cells) == 5 and cells[4] else None
                branches.append(BranchRecord(_parse_int(cells[0], line_no), _parse_int(cells[1], line_no),
                                             _parse_float(cells[2], line_no), _parse_float(cells[3], line_no),
                                             i_rated))
        except MalformedRecord as exc:
            if str(exc).startswith("line "):
                raise
            raise MalformedRecord(f"line {line_no}: {exc}") from None
    return buses, branches


def load_network(path, v_base: float = DEFAULT_V_BASE_KV, s_base: float = DEFAULT_S_BASE_MVA) -> Network:
    """Read and validate a dataset file.

    Raises:
        MalformedRecord: unreadable file or a bad row.
        NotRadial: a loop or a bus fed by two branches.
        Disconnected: a bus with no path to bus 1.
        DuplicateBusId: the same id listed twice.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise MalformedRecord(f"cannot read dataset {path}: {exc.strerror or exc}") from None
    except UnicodeDecodeError:
        raise MalformedRecord(f"dataset {path} is not UTF-8") from None
    buses, branches = parse_dataset(text)
    return Network(tuple(buses), tuple(branches), v_base, s_base)


def ieee33_path() -> Path:
    return Path(str(resources.files("rdsmg") / "data" / "ieee33.csv"))


def ieee33(v_base: float = DEFAULT_V_BASE_KV, s_base: float = DEFAULT_S_BASE_MVA) -> Network:
    """The bundled Baran-Wu 33-bus feeder."""
    return load_network(ieee33_path(), v_base, s_base)


def write_dataset(network: Network, path) -> None:
    """Write ``network`` back out in the dataset format (physical units)."""
    lines = ["#BUS"]
    lines += [f"{b.id},{b.p_load!r},{b.q_load!r}" for b in network.buses]
    lines.append("#BRANCH")
    for br in network.branches:
        row = f"{br.from_bus},{br.to_bus},{br.r!r},{br.x!r}"
        if br.i_rated is not None:
            row += f",{br.i_rated!r}"
        lines.append(row)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
