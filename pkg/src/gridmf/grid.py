"""Electrical network model: buses, pi-model branches, adjacency queries.

All quantities are per-unit on a single system base. A branch is a classic
pi equivalent: series impedance ``z_series`` and a total shunt admittance
``y_shunt`` of which one half sits at each end.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

DEFAULT_GRID_NAME = "default7"


class GridParseError(ValueError):
    """Raised when a grid file cannot be parsed; message carries the line number."""


class GridValidationError(ValueError):
    """Raised when a parsed grid violates a structural invariant."""


class UnknownBusError(KeyError):
    """Raised when an operation references a bus id not present in the topology."""


@dataclass(frozen=True)
class Bus:
    """A network node identified by a unique integer id."""

    id: int
    label: str = ""


@dataclass(frozen=True)
class Branch:
    """Pi-model line between two buses.

    ``y_shunt`` is the branch total; ``y_shunt / 2`` applies at each end.
    """

    from_bus: int
    to_bus: int
    z_series: complex
    y_shunt: complex

    def other_end(self, bus: int) -> int:
        if bus == self.from_bus:
            return self.to_bus
        if bus == self.to_bus:
            return self.from_bus
        raise UnknownBusError(f"bus {bus} is not an end of branch {self.key}")

    @property
    def key(self) -> tuple[int, int]:
        """Unordered key (low id, high id) identifying the branch."""
        return (min(self.from_bus, self.to_bus), max(self.from_bus, self.to_bus))


@dataclass(frozen=True)
class GridTopology:
    """Immutable set of buses and branches with derived adjacency.

    Safe to share across concurrent readers; every operation on it is pure.
    """

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    _adjacency: dict[int, tuple[tuple[int, Branch], ...]] = field(
        init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        adj: dict[int, list[tuple[int, Branch]]] = {bus.id: [] for bus in self.buses}
        for branch in self.branches:
            if branch.from_bus in adj and branch.to_bus in adj:
                adj[branch.from_bus].append((branch.to_bus, branch))
                adj[branch.to_bus].append((branch.from_bus, branch))
        frozen = {bus: tuple(sorted(entries, key=lambda e: e[0])) for bus, entries in adj.items()}
        object.__setattr__(self, "_adjacency", frozen)

    @property
    def bus_ids(self) -> tuple[int, ...]:
        return tuple(sorted(bus.id for bus in self.buses))

    def bus(self, bus_id: int) -> Bus:
        for bus in self.buses:
            if bus.id == bus_id:
                return bus
        raise UnknownBusError(f"unknown bus id {bus_id}")

    def degree(self, bus_id: int) -> int:
        return len(adjacency_of(self, bus_id))

    def branch_between(self, a: int, b: int) -> Branch:
        for neighbor, branch in adjacency_of(self, a):
            if neighbor == b:
                return branch
        raise UnknownBusError(f"no branch between buses {a} and {b}")


def adjacency_of(topology: GridTopology, bus: int) -> tuple[tuple[int, Branch], ...]:
    """Neighbors of ``bus`` as (neighbor id, branch) pairs in ascending id order."""
    try:
        return topology._adjacency[bus]
    except KeyError:
        raise UnknownBusError(f"unknown bus id {bus}") from None


def validate(topology: GridTopology) -> list[str]:
    """Check every structural invariant; returns an empty report iff all hold."""
    findings: list[str] = []
    ids = [bus.id for bus in topology.buses]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        findings.append(f"duplicate bus ids: {dupes}")
    known = set(ids)
    seen_pairs: set[tuple[int, int]] = set()
    for branch in topology.branches:
        name = f"branch {branch.from_bus}-{branch.to_bus}"
        if branch.from_bus == branch.to_bus:
            findings.append(f"{name}: self-loop (from == to)")
            continue
        if branch.from_bus not in known or branch.to_bus not in known:
            findings.append(f"{name}: references an unknown bus")
            continue
        if branch.key in seen_pairs:
            findings.append(f"{name}: duplicate branch for this bus pair")
        seen_pairs.add(branch.key)
        if abs(branch.z_series) == 0.0:
            findings.append(f"{name}: zero series impedance")
        if not (
            np.isfinite(branch.z_series.real)
            and np.isfinite(branch.z_series.imag)
            and np.isfinite(branch.y_shunt.real)
            and np.isfinite(branch.y_shunt.imag)
        ):
            findings.append(f"{name}: non-finite parameter")
    if ids and not findings:
        reached = {ids[0]}
        frontier = [ids[0]]
        while frontier:
            current = frontier.pop()
            for neighbor, _ in topology._adjacency.get(current, ()):
                if neighbor not in reached:
                    reached.add(neighbor)
                    frontier.append(neighbor)
        if reached != known:
            missing = sorted(known - reached)
            findings.append(f"disconnected: buses {missing} unreachable from bus {ids[0]}")
    return findings


def parse_grid(text: str, source_name: str = "<string>") -> GridTopology:
    """Parse the line-oriented grid format and validate the result.

    Format: a ``[buses]`` section with ``id label`` lines, then a
    ``[branches]`` section with ``from to r x b`` lines, where
    z_series = r + jx and y_shunt = jb. ``#`` starts a comment.
    """
    buses: list[Bus] = []
    branches: list[Branch] = []
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.lower() in ("[buses]", "[branches]"):
            section = line.lower().strip("[]")
            continue
        fields = line.split()
        if section == "buses":
            try:
                bus_id = int(fields[0])
            except ValueError:
                raise GridParseError(
                    f"{source_name}:{lineno}: expected integer bus id, got {fields[0]!r}"
                ) from None
            label = fields[1] if len(fields) > 1 else ""
            buses.append(Bus(id=bus_id, label=label))
        elif section == "branches":
            if len(fields) != 5:
                raise GridParseError(
                    f"{source_name}:{lineno}: expected 'from to r x b', got {len(fields)} fields"
                )
            try:
                from_bus, to_bus = int(fields[0]), int(fields[1])
                r, x, b = (float(v) for v in fields[2:5])
            except ValueError:
                raise GridParseError(
                    f"{source_name}:{lineno}: malformed branch line {line!r}"
                ) from None
            branches.append(
                Branch(from_bus=from_bus, to_bus=to_bus, z_series=complex(r, x), y_shunt=complex(0.0, b))
            )
        else:
            raise GridParseError(f"{source_name}:{lineno}: line outside any section: {line!r}")
    buses.sort(key=lambda bus: bus.id)
    branches.sort(key=lambda branch: branch.key)
    topology = GridTopology(buses=tuple(buses), branches=tuple(branches))
    findings = validate(topology)
    if findings:
        raise GridValidationError(f"{source_name}: " + "; ".join(findings))
    return topology


def load_grid(source: str | Path) -> GridTopology:
    """Load a topology from a file path, or the bundled grid for ``default7``."""
    if str(source) == DEFAULT_GRID_NAME:
        return default_grid()
    path = Path(source)
    return parse_grid(path.read_text(), source_name=str(path))


def dumps_grid(topology: GridTopology) -> str:
    """Serialize a topology back to the grid file format (canonical order)."""
    lines = ["[buses]"]
    for bus in sorted(topology.buses, key=lambda b: b.id):
        lines.append(f"{bus.id} {bus.label}".rstrip())
    lines.append("[branches]")
    for branch in sorted(topology.branches, key=lambda b: b.key):
        z, y = branch.z_series, branch.y_shunt
        lines.append(
            f"{branch.from_bus} {branch.to_bus} {z.real:.17g} {z.imag:.17g} {y.imag:.17g}"
        )
    return "\n".join(lines) + "\n"


def default_grid() -> GridTopology:
    """The bundled seven-bus meshed grid used by the CLI defaults and tests."""
    text = resources.files("gridmf.data").joinpath("grid7.txt").read_text()
    return parse_grid(text, source_name="gridmf/data/grid7.txt")
