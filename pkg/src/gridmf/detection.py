"""Median-filter anomaly detection over reconstructed bus voltages.

Every bus voltage can be measured directly or back-calculated from each
neighbor's voltage and sending-end current through the pi model. The filter
window collects those values (optionally across three snapshots), takes the
magnitude-median element as the reference, and scores each bus with three
criteria: the voltage anomaly coefficient, the direct current imbalance, and
the calculated current imbalance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .grid import Branch, GridTopology, adjacency_of
from .simulate import MeasurementSet

DEGENERATE_REFERENCE = 1e-6


class DegenerateReferenceError(ValueError):
    """Raised when the median reference magnitude is too small to normalize by."""


@dataclass(frozen=True)
class Thresholds:
    """Detection thresholds: relative for voltages, per-unit for currents."""

    voltage: float = 0.05
    current: float = 0.05

    def __post_init__(self) -> None:
        if self.voltage <= 0 or self.current <= 0:
            raise ValueError("thresholds must be positive")


@dataclass(frozen=True)
class MfElement:
    """One filter-window value: measured directly (via=None) or via a neighbor."""

    value: complex
    via: int | None
    time_index: int


@dataclass(frozen=True)
class MfSequence:
    """Ordered filter window for one bus: direct first, then neighbors ascending."""

    bus: int
    elements: tuple[MfElement, ...]


@dataclass(frozen=True)
class NodeCriteria:
    """Per-bus detection quantities for one evaluation."""

    kappa_v: float
    kappa_i_direct: float
    kappa_i_calc: float
    v_hat: complex


@dataclass(frozen=True)
class ElementRecord:
    """Deviation of one window element from the median reference."""

    via: int | None
    time_index: int
    deviation: float
    flagged: bool


@dataclass(frozen=True)
class DetectionVerdict:
    """Stage-1 output: criteria, suspect flags, and per-element deviations."""

    criteria: dict[int, NodeCriteria]
    suspects: frozenset[int]
    elements: dict[int, tuple[ElementRecord, ...]]
    thresholds: Thresholds
    mode: str
    enabled: frozenset[str]

    def flagged_elements(self, bus: int) -> tuple[ElementRecord, ...]:
        return tuple(rec for rec in self.elements[bus] if rec.flagged)


def reconstruct_voltage(
    branch: Branch,
    v_neighbor: complex,
    i_from_neighbor: complex,
    truncated: bool = False,
) -> complex:
    """Back-calculate the far-end voltage from one neighbor's measurements.

    ``i_from_neighbor`` is the sending-end current leaving the neighbor into
    the branch. The pi-model identity gives
    V = V_n + Z * (V_n * Y / 2 - I_n); on clean consistent data this equals
    the far end's own measurement exactly.

    The ``truncated`` variant drops the leading V_n term. It does not satisfy
    the clean-data identity and is kept only for comparison experiments.
    """
    partial = (v_neighbor * branch.y_shunt / 2.0 - i_from_neighbor) * branch.z_series
    if truncated:
        return partial
    return v_neighbor + partial


def median_phasor(values: Sequence[complex]) -> complex:
    """Element whose magnitude is the median of the magnitudes.

    Requires an odd, non-empty sequence; ties break to the lowest index, so
    the output is always one of the inputs.
    """
    if len(values) == 0 or len(values) % 2 == 0:
        raise ValueError(f"median requires an odd, non-empty sequence, got {len(values)} values")
    return _select_median(values)


def _select_median(values: Sequence[complex]) -> complex:
    """Lower-median selection by magnitude with stable (lowest index) ties."""
    order = sorted(range(len(values)), key=lambda k: (abs(values[k]), k))
    return values[order[(len(values) - 1) // 2]]


def build_sequence_1d(
    topology: GridTopology, snapshot: MeasurementSet, bus: int, truncated: bool = False
) -> MfSequence:
    """Window for one snapshot: the direct measurement plus one reconstruction
    per neighbor, in ascending neighbor order."""
    t = snapshot.time_index
    elements = [MfElement(snapshot.bus_voltages[bus], None, t)]
    for neighbor, branch in adjacency_of(topology, bus):
        value = reconstruct_voltage(
            branch,
            snapshot.bus_voltages[neighbor],
            snapshot.branch_currents[(neighbor, bus)],
            truncated=truncated,
        )
        elements.append(MfElement(value, neighbor, t))
    return MfSequence(bus=bus, elements=tuple(elements))


def build_sequence_2d(
    topology: GridTopology,
    snapshots: Sequence[MeasurementSet],
    bus: int,
    truncated: bool = False,
) -> MfSequence:
    """Union of the per-snapshot windows across three time indices.

    For a degree-2 bus this is the classic 3 x 3 window; other degrees
    generalize to (1 + degree) x 3 values.
    """
    if len(snapshots) != 3:
        raise ValueError(f"two-dimensional window needs exactly 3 snapshots, got {len(snapshots)}")
    elements: list[MfElement] = []
    for snap in sorted(snapshots, key=lambda s: s.time_index):
        elements.extend(build_sequence_1d(topology, snap, bus, truncated=truncated).elements)
    return MfSequence(bus=bus, elements=tuple(elements))


def kappa_v(sequence: MfSequence) -> tuple[float, complex]:
    """Voltage anomaly coefficient and its median reference.

    kappa = max_n |V(n) - v_hat| / |v_hat| over the window. Even-length
    windows (odd-degree buses) use the lower median; the reference is always
    an element of the window.
    """
    if not sequence.elements:
        raise ValueError("empty filter window")
    values = [el.value for el in sequence.elements]
    v_hat = _select_median(values)
    scale = abs(v_hat)
    if scale < DEGENERATE_REFERENCE:
        raise DegenerateReferenceError(
            f"median reference magnitude {scale:.3e} pu is too small at bus {sequence.bus}"
        )
    kappa = max(abs(value - v_hat) / scale for value in values)
    return kappa, v_hat


def element_deviations(sequence: MfSequence, v_hat: complex) -> list[float]:
    """Relative deviation of every window element from the reference."""
    scale = abs(v_hat)
    return [abs(el.value - v_hat) / scale for el in sequence.elements]


def kappa_i_direct(topology: GridTopology, snapshot: MeasurementSet, bus: int) -> float:
    """Magnitude of the measured current imbalance at a bus (pu).

    Sums the measured sending-end currents of every incident branch and
    subtracts the measured injection; zero on clean consistent data.
    """
    total = 0.0 + 0.0j
    for neighbor, _ in adjacency_of(topology, bus):
        total += snapshot.branch_currents[(bus, neighbor)]
    total -= snapshot.injection_currents[bus]
    return abs(total)


def kappa_i_calc(topology: GridTopology, snapshot: MeasurementSet, bus: int) -> float:
    """Current imbalance with each branch current re-derived from voltages.

    Every incident current is replaced by (V_bus - V_neighbor)/Z + V_bus*Y/2
    computed from the measured voltages, so corrupted current channels do not
    enter this criterion at all.
    """
    total = 0.0 + 0.0j
    v_bus = snapshot.bus_voltages[bus]
    for neighbor, branch in adjacency_of(topology, bus):
        v_neighbor = snapshot.bus_voltages[neighbor]
        total += (v_bus - v_neighbor) / branch.z_series + v_bus * branch.y_shunt / 2.0
    total -= snapshot.injection_currents[bus]
    return abs(total)


def detect(
    topology: GridTopology,
    snapshots: Sequence[MeasurementSet],
    thresholds: Thresholds = Thresholds(),
    mode: str = "2d",
    criteria: Iterable[str] = ("v",),
    truncated: bool = False,
) -> DetectionVerdict:
    """Evaluate the enabled criteria per bus and flag suspects.

    Mode "1d" filters the latest snapshot only; "2d" needs three snapshots.
    Current criteria are always evaluated on the latest snapshot. A bus is
    suspect when any enabled criterion exceeds its threshold.
    """
    enabled = frozenset(criteria)
    unknown = enabled - {"v", "dci", "cci"}
    if unknown:
        raise ValueError(f"unknown criteria: {sorted(unknown)}")
    if mode not in ("1d", "2d"):
        raise ValueError(f"mode must be '1d' or '2d', got {mode!r}")
    ordered = sorted(snapshots, key=lambda s: s.time_index)
    latest = ordered[-1]

    node_criteria: dict[int, NodeCriteria] = {}
    suspects: set[int] = set()
    elements: dict[int, tuple[ElementRecord, ...]] = {}
    for bus in topology.bus_ids:
        if mode == "2d":
            sequence = build_sequence_2d(topology, ordered, bus, truncated=truncated)
        else:
            sequence = build_sequence_1d(topology, latest, bus, truncated=truncated)
        kv, v_hat = kappa_v(sequence)
        deviations = element_deviations(sequence, v_hat)
        records = tuple(
            ElementRecord(
                via=el.via,
                time_index=el.time_index,
                deviation=dev,
                flagged=dev > thresholds.voltage,
            )
            for el, dev in zip(sequence.elements, deviations)
        )
        ki = kappa_i_direct(topology, latest, bus)
        kic = kappa_i_calc(topology, latest, bus)
        node_criteria[bus] = NodeCriteria(
            kappa_v=kv, kappa_i_direct=ki, kappa_i_calc=kic, v_hat=v_hat
        )
        elements[bus] = records
        hit = ("v" in enabled and kv > thresholds.voltage) or (
            "dci" in enabled and ki > thresholds.current
        ) or ("cci" in enabled and kic > thresholds.current)
        if hit:
            suspects.add(bus)
    return DetectionVerdict(
        criteria=node_criteria,
        suspects=frozenset(suspects),
        elements=elements,
        thresholds=thresholds,
        mode=mode,
        enabled=enabled,
    )


def verdict_to_csv(verdict: DetectionVerdict) -> str:
    """Tabular form: bus,kappa_v,kappa_i,kappa_i_calc,suspect,flagged_elements."""
    lines = ["bus,kappa_v,kappa_i,kappa_i_calc,suspect,flagged_elements"]
    for bus in sorted(verdict.criteria):
        crit = verdict.criteria[bus]
        flagged = verdict.flagged_elements(bus)
        tags = "|".join(
            f"{'direct' if rec.via is None else f'via{rec.via}'}@t{rec.time_index}"
            for rec in flagged
        )
        lines.append(
            f"{bus},{crit.kappa_v:.6f},{crit.kappa_i_direct:.6f},{crit.kappa_i_calc:.6f},"
            f"{int(bus in verdict.suspects)},{tags or '-'}"
        )
    return "\n".join(lines) + "\n"
