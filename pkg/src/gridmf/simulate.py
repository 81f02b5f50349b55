"""Operating-state synthesis and noisy PMU snapshot generation.

Ground truth is generated directly as a complex bus-voltage state; branch and
injection currents follow from Ohm's and Kirchhoff's laws, so every noiseless
snapshot is physically consistent by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .grid import Branch, GridTopology, UnknownBusError, adjacency_of

SNAPSHOT_HEADER = "time,kind,bus,neighbor,re,im"


@dataclass(frozen=True)
class TrueState:
    """Ground-truth complex bus voltages, one entry per topology bus."""

    voltages: dict[int, complex]

    def magnitude(self, bus: int) -> float:
        return abs(self.voltages[bus])


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian measurement noise, std ``sigma`` per real/imaginary component."""

    sigma: float = 0.002

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class MeasurementSet:
    """One timestamped snapshot of every PMU measurement.

    ``branch_currents`` is keyed by (sending bus, receiving bus): the entry for
    (i, j) is the current measured at end i flowing into the branch toward j.
    Both ends of every branch carry an entry.
    """

    time_index: int
    bus_voltages: dict[int, complex]
    branch_currents: dict[tuple[int, int], complex]
    injection_currents: dict[int, complex]


def synthesize_true_state(
    topology: GridTopology, variation: float, rng: np.random.Generator
) -> TrueState:
    """Draw a random operating point around the flat 1 pu / 0 rad start.

    Magnitudes are uniform in [1 - variation, 1 + variation] pu and angles
    uniform in [-variation, +variation] rad; deterministic for a fixed rng.
    """
    if variation < 0:
        raise ValueError(f"variation must be >= 0, got {variation}")
    voltages: dict[int, complex] = {}
    for bus_id in topology.bus_ids:
        mag = 1.0 + rng.uniform(-variation, variation)
        ang = rng.uniform(-variation, variation)
        voltages[bus_id] = mag * complex(math.cos(ang), math.sin(ang))
    return TrueState(voltages=voltages)


def evolve_state(
    topology: GridTopology,
    base: TrueState,
    variation: float,
    rng: np.random.Generator,
    drift_scale: float = 0.1,
) -> TrueState:
    """Re-draw magnitudes and angles within ``drift_scale * variation`` of ``base``."""
    span = drift_scale * variation
    voltages: dict[int, complex] = {}
    for bus_id in topology.bus_ids:
        v = base.voltages[bus_id]
        mag = abs(v) + rng.uniform(-span, span)
        ang = math.atan2(v.imag, v.real) + rng.uniform(-span, span)
        voltages[bus_id] = mag * complex(math.cos(ang), math.sin(ang))
    return TrueState(voltages=voltages)


def branch_current(
    topology: GridTopology, state: TrueState, from_bus: int, branch: Branch
) -> complex:
    """Sending-end pi-model current leaving ``from_bus`` into ``branch``.

    I = (V_from - V_to) / Z + V_from * Y / 2.
    """
    to_bus = branch.other_end(from_bus)
    v_from = state.voltages[from_bus]
    v_to = state.voltages[to_bus]
    return (v_from - v_to) / branch.z_series + v_from * branch.y_shunt / 2.0


def injection_current(topology: GridTopology, state: TrueState, bus: int) -> complex:
    """Net current leaving ``bus`` into the network (sum of sending-end currents)."""
    if bus not in state.voltages:
        raise UnknownBusError(f"unknown bus id {bus}")
    total = 0.0 + 0.0j
    for _, branch in adjacency_of(topology, bus):
        total += branch_current(topology, state, bus, branch)
    return total


def _current_keys(topology: GridTopology) -> list[tuple[int, int, Branch]]:
    """Canonical ordering of branch-current measurements: low end then high end."""
    keys: list[tuple[int, int, Branch]] = []
    for branch in sorted(topology.branches, key=lambda b: b.key):
        lo, hi = branch.key
        keys.append((lo, hi, branch))
        keys.append((hi, lo, branch))
    return keys


def snapshot(
    topology: GridTopology,
    state: TrueState,
    noise: NoiseModel,
    time_index: int,
    rng: np.random.Generator,
) -> MeasurementSet:
    """Measure every quantity with independent Gaussian noise per component.

    Noise is drawn in a canonical order (voltages by bus id, branch currents by
    sorted branch then sending end, injections by bus id) so a fixed seed
    yields an identical snapshot.
    """

    def perturb(value: complex) -> complex:
        if noise.sigma == 0.0:
            return value
        return value + complex(rng.normal(0.0, noise.sigma), rng.normal(0.0, noise.sigma))

    voltages = {bus: perturb(state.voltages[bus]) for bus in topology.bus_ids}
    currents: dict[tuple[int, int], complex] = {}
    for sending, receiving, branch in _current_keys(topology):
        currents[(sending, receiving)] = perturb(
            branch_current(topology, state, sending, branch)
        )
    injections = {
        bus: perturb(injection_current(topology, state, bus)) for bus in topology.bus_ids
    }
    return MeasurementSet(
        time_index=time_index,
        bus_voltages=voltages,
        branch_currents=currents,
        injection_currents=injections,
    )


def time_series(
    topology: GridTopology,
    states: Iterable[TrueState],
    noise: NoiseModel,
    rng: np.random.Generator,
) -> tuple[MeasurementSet, MeasurementSet, MeasurementSet]:
    """Three independent snapshots with time indices 1..3, one per state."""
    states = tuple(states)
    if len(states) != 3:
        raise ValueError(f"expected exactly 3 states, got {len(states)}")
    return tuple(
        snapshot(topology, state, noise, index, rng)
        for index, state in enumerate(states, start=1)
    )  # type: ignore[return-value]


def write_snapshots(snapshots: Iterable[MeasurementSet], stream: TextIO) -> None:
    """Write snapshots in the tabular text format (kind V, I, or J)."""
    stream.write(SNAPSHOT_HEADER + "\n")
    for snap in snapshots:
        t = snap.time_index
        for bus in sorted(snap.bus_voltages):
            v = snap.bus_voltages[bus]
            stream.write(f"{t},V,{bus},-,{v.real:.17g},{v.imag:.17g}\n")
        for (sending, receiving) in sorted(snap.branch_currents):
            i = snap.branch_currents[(sending, receiving)]
            stream.write(f"{t},I,{sending},{receiving},{i.real:.17g},{i.imag:.17g}\n")
        for bus in sorted(snap.injection_currents):
            j = snap.injection_currents[bus]
            stream.write(f"{t},J,{bus},-,{j.real:.17g},{j.imag:.17g}\n")


def read_snapshots(stream: TextIO) -> list[MeasurementSet]:
    """Parse the tabular snapshot format back into measurement sets."""
    header = stream.readline().strip()
    if header != SNAPSHOT_HEADER:
        raise ValueError(f"unexpected snapshot header {header!r}")
    by_time: dict[int, dict[str, dict]] = {}
    for lineno, raw in enumerate(stream, start=2):
        line = raw.strip()
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != 6:
            raise ValueError(f"line {lineno}: expected 6 fields, got {len(fields)}")
        t, kind, bus_s, neighbor_s, re_s, im_s = fields
        time_index = int(t)
        bucket = by_time.setdefault(time_index, {"V": {}, "I": {}, "J": {}})
        value = complex(float(re_s), float(im_s))
        if kind == "V":
            bucket["V"][int(bus_s)] = value
        elif kind == "I":
            bucket["I"][(int(bus_s), int(neighbor_s))] = value
        elif kind == "J":
            bucket["J"][int(bus_s)] = value
        else:
            raise ValueError(f"line {lineno}: unknown measurement kind {kind!r}")
    return [
        MeasurementSet(
            time_index=t,
            bus_voltages=bucket["V"],
            branch_currents=bucket["I"],
            injection_currents=bucket["J"],
        )
        for t, bucket in sorted(by_time.items())
    ]
