"""Construction and application of residual-invariant measurement attacks.

An attack perturbs the state estimate by a chosen complex vector c while
leaving the WLS residuals untouched: the injected measurement vector is
a = H c, so z + a is exactly the consistent measurement of the shifted state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .estimation import MeasurementLayout, wls_estimate
from .grid import GridTopology, UnknownBusError
from .simulate import MeasurementSet

TOUCH_TOLERANCE = 1e-12
INSTANCE_HEADER = "bus,c_re,c_im"


class LayoutMismatchError(ValueError):
    """Raised when an attack vector does not match the snapshot layout."""


@dataclass(frozen=True)
class AttackSpec:
    """Target buses and the magnitude range for their state perturbations.

    An empty target set encodes "no attack". Each targeted bus receives a
    perturbation with magnitude uniform in ``magnitude_range`` and uniformly
    random phase.
    """

    target_buses: tuple[int, ...]
    magnitude_range: tuple[float, float] = (0.05, 0.5)

    def __post_init__(self) -> None:
        low, high = self.magnitude_range
        if not 0.0 < low <= high:
            raise ValueError(f"magnitude range must satisfy 0 < low <= high, got {self.magnitude_range}")


@dataclass(frozen=True)
class AttackInstance:
    """A concrete attack: sparse state shift c, vector a = Hc, and labels.

    ``touched`` is the ground-truth set of measurement row indices where the
    attack vector is nonzero (above a 1e-12 floor).
    """

    c: dict[int, complex]
    a: np.ndarray
    touched: frozenset[int]
    attacked_buses: frozenset[int]

    def c_vector(self, bus_ids: tuple[int, ...]) -> np.ndarray:
        return np.array([self.c.get(bus, 0.0 + 0.0j) for bus in bus_ids], dtype=complex)


def make_attack(
    H: np.ndarray,
    topology: GridTopology,
    spec: AttackSpec,
    rng: np.random.Generator,
) -> AttackInstance:
    """Draw c on the target buses and materialize a = Hc with touched labels."""
    bus_ids = topology.bus_ids
    for bus in spec.target_buses:
        if bus not in bus_ids:
            raise UnknownBusError(f"attack targets unknown bus {bus}")
    c: dict[int, complex] = {}
    low, high = spec.magnitude_range
    for bus in sorted(spec.target_buses):
        magnitude = rng.uniform(low, high)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        c[bus] = magnitude * complex(np.cos(phase), np.sin(phase))
    c_vec = np.array([c.get(bus, 0.0 + 0.0j) for bus in bus_ids], dtype=complex)
    a = H @ c_vec
    touched = frozenset(int(k) for k in np.flatnonzero(np.abs(a) > TOUCH_TOLERANCE))
    return AttackInstance(
        c=c, a=a, touched=touched, attacked_buses=frozenset(spec.target_buses)
    )


def apply_attack(
    snapshot: MeasurementSet, instance: AttackInstance, layout: MeasurementLayout
) -> MeasurementSet:
    """Return a new snapshot with the attack added; the input is unmodified."""
    if len(instance.a) != len(layout):
        raise LayoutMismatchError(
            f"attack vector length {len(instance.a)} != layout size {len(layout)}"
        )
    z = layout.vector_of(snapshot)
    return layout.snapshot_of(z + instance.a, snapshot.time_index)


def verify_stealth(
    H: np.ndarray,
    W: np.ndarray,
    z: np.ndarray,
    instance: AttackInstance,
    alpha: float = 0.05,
) -> bool:
    """True iff the attack leaves the chi-square statistic unchanged (1e-9 abs).

    Both the clean and attacked measurement vectors must also agree on the
    pass/fail outcome of the test at the given confidence level.
    """
    from .estimation import chi_square_test

    clean = wls_estimate(H, W, z)
    attacked = wls_estimate(H, W, z + instance.a)
    if abs(clean.chi2 - attacked.chi2) > 1e-9:
        return False
    return chi_square_test(clean, alpha).passed == chi_square_test(attacked, alpha).passed


def write_instance(instance: AttackInstance, stream: TextIO) -> None:
    """Serialize the state-shift component of an attack for later replay."""
    stream.write(INSTANCE_HEADER + "\n")
    for bus in sorted(instance.c):
        value = instance.c[bus]
        stream.write(f"{bus},{value.real:.17g},{value.imag:.17g}\n")


def read_instance_c(stream: TextIO) -> dict[int, complex]:
    """Parse a serialized attack back into its state-shift map."""
    header = stream.readline().strip()
    if header != INSTANCE_HEADER:
        raise ValueError(f"unexpected attack header {header!r}")
    c: dict[int, complex] = {}
    for lineno, raw in enumerate(stream, start=2):
        line = raw.strip()
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != 3:
            raise ValueError(f"line {lineno}: expected 'bus,c_re,c_im'")
        c[int(fields[0])] = complex(float(fields[1]), float(fields[2]))
    return c


def instance_from_c(
    H: np.ndarray, topology: GridTopology, c: dict[int, complex]
) -> AttackInstance:
    """Rebuild a full attack instance from a stored state-shift map."""
    bus_ids = topology.bus_ids
    for bus in c:
        if bus not in bus_ids:
            raise UnknownBusError(f"stored attack references unknown bus {bus}")
    c_vec = np.array([c.get(bus, 0.0 + 0.0j) for bus in bus_ids], dtype=complex)
    a = H @ c_vec
    touched = frozenset(int(k) for k in np.flatnonzero(np.abs(a) > TOUCH_TOLERANCE))
    targets = frozenset(bus for bus, value in c.items() if abs(value) > 0.0)
    return AttackInstance(c=dict(c), a=a, touched=touched, attacked_buses=targets)
