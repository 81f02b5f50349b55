"""Stage-2 false-alarm reduction through trusted neighbor reconstructions.

A suspect bus is re-examined against neighbors that look healthy: if some
trusted neighbor's reconstruction agrees with the suspect's direct
measurement within a tolerance, the suspicion was neighborhood contamination
and the bus is cleared. Newly cleared buses become trusted references for the
next pass, so clearings propagate outward until nothing changes.
"""

from __future__ import annotations

from dataclasses import dataclass

from .detection import DetectionVerdict, reconstruct_voltage
from .grid import GridTopology, adjacency_of
from .simulate import MeasurementSet

# Default clearing tolerance. Kept slightly below the stage-1 voltage
# threshold: the smallest attack magnitude the generator produces equals the
# threshold, and the tolerance times the largest plausible reference
# magnitude must stay below it or borderline true positives could be erased.
DEFAULT_EPSILON = 0.045


@dataclass(frozen=True)
class RefinementResult:
    """Partition of the stage-1 suspects after iterative re-examination."""

    final_suspects: frozenset[int]
    cleared: dict[int, int]
    iterations: int
    unresolved: frozenset[int]


def _channel_trusted(verdict: DetectionVerdict, bus: int, neighbor: int, epsilon: float) -> bool:
    """A reconstruction channel is trusted only if it looks clean everywhere.

    Every window element obtained via this neighbor (all three snapshots in 2D
    mode) must sit within the clearing tolerance of the median reference.
    """
    return all(
        rec.deviation <= epsilon
        for rec in verdict.elements[bus]
        if rec.via == neighbor
    )


def refine(
    verdict: DetectionVerdict,
    topology: GridTopology,
    snapshot: MeasurementSet,
    epsilon: float = DEFAULT_EPSILON,
    unanimous: bool = False,
) -> RefinementResult:
    """Iteratively clear suspects that agree with a trusted reference.

    A neighbor qualifies as trusted when its own bus is not currently suspect
    and its reconstruction channel carries no anomalous element. By default a
    single consistent trusted reference clears the bus; with ``unanimous``
    every trusted reference must agree.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    suspects = set(verdict.suspects)
    cleared: dict[int, int] = {}
    iterations = 0
    while True:
        newly: dict[int, int] = {}
        for bus in sorted(suspects):
            v_hat_scale = abs(verdict.criteria[bus].v_hat)
            consistent: list[int] = []
            unanimous_ok = True
            for neighbor, branch in adjacency_of(topology, bus):
                if neighbor in suspects:
                    continue
                if not _channel_trusted(verdict, bus, neighbor, epsilon):
                    continue
                reconstruction = reconstruct_voltage(
                    branch,
                    snapshot.bus_voltages[neighbor],
                    snapshot.branch_currents[(neighbor, bus)],
                )
                gap = abs(snapshot.bus_voltages[bus] - reconstruction) / v_hat_scale
                if gap <= epsilon:
                    consistent.append(neighbor)
                else:
                    unanimous_ok = False
            if consistent and (not unanimous or unanimous_ok):
                newly[bus] = consistent[0]
        if not newly:
            break
        iterations += 1
        suspects -= newly.keys()
        cleared.update(newly)
    unresolved = frozenset(
        bus
        for bus in suspects
        if all(neighbor in suspects for neighbor, _ in adjacency_of(topology, bus))
    )
    return RefinementResult(
        final_suspects=frozenset(suspects),
        cleared=cleared,
        iterations=iterations,
        unresolved=unresolved,
    )


def refinement_to_csv(verdict: DetectionVerdict, result: RefinementResult) -> str:
    """Tabular form appended to the verdict: per-bus stage-1/stage-2 status."""
    lines = ["bus,stage1_suspect,stage2_suspect,cleared_by"]
    for bus in sorted(verdict.criteria):
        stage1 = bus in verdict.suspects
        stage2 = bus in result.final_suspects
        by = result.cleared.get(bus, "-")
        lines.append(f"{bus},{int(stage1)},{int(stage2)},{by}")
    return "\n".join(lines) + "\n"
