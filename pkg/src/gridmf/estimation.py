"""Linear complex state estimation for full PMU coverage.

The state vector holds one complex voltage per bus; the measurement matrix H
encodes Ohm's law for branch currents and their Kirchhoff sums for injections,
so z = H x + e with complex Gaussian e. The weighted least-squares estimate is
solved through an orthogonal factorization of the weighted system rather than
by forming the normal-equation inverse explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.stats import chi2 as chi2_dist

from .grid import GridTopology, UnknownBusError
from .simulate import MeasurementSet, _current_keys

MeasKind = Literal["V", "I", "J"]


class ObservabilityError(RuntimeError):
    """Raised when H is rank deficient and the state cannot be estimated."""


@dataclass(frozen=True)
class MeasurementDescriptor:
    """Identifies one measurement row: kind V/I/J, bus, and neighbor for currents."""

    kind: MeasKind
    bus: int
    neighbor: int | None = None


@dataclass(frozen=True)
class MeasurementLayout:
    """Deterministic row ordering shared by z, H, W and the residual vector.

    Order: bus voltages ascending, then both ends of every branch (sorted by
    unordered pair, low end first), then injections ascending.
    """

    descriptors: tuple[MeasurementDescriptor, ...]

    @classmethod
    def for_topology(cls, topology: GridTopology) -> "MeasurementLayout":
        rows = [MeasurementDescriptor("V", bus) for bus in topology.bus_ids]
        rows += [
            MeasurementDescriptor("I", sending, receiving)
            for sending, receiving, _ in _current_keys(topology)
        ]
        rows += [MeasurementDescriptor("J", bus) for bus in topology.bus_ids]
        return cls(descriptors=tuple(rows))

    def __len__(self) -> int:
        return len(self.descriptors)

    def index_of(self, kind: MeasKind, bus: int, neighbor: int | None = None) -> int:
        target = MeasurementDescriptor(kind, bus, neighbor)
        try:
            return self.descriptors.index(target)
        except ValueError:
            raise KeyError(f"no measurement {target} in layout") from None

    def rows_of_kind(self, kind: MeasKind) -> list[int]:
        return [k for k, d in enumerate(self.descriptors) if d.kind == kind]

    def vector_of(self, snapshot: MeasurementSet) -> np.ndarray:
        """Flatten a snapshot into the complex measurement vector z."""
        z = np.empty(len(self.descriptors), dtype=complex)
        for k, d in enumerate(self.descriptors):
            if d.kind == "V":
                z[k] = snapshot.bus_voltages[d.bus]
            elif d.kind == "I":
                z[k] = snapshot.branch_currents[(d.bus, d.neighbor)]
            else:
                z[k] = snapshot.injection_currents[d.bus]
        return z

    def snapshot_of(self, z: np.ndarray, time_index: int) -> MeasurementSet:
        """Inverse of :meth:`vector_of`."""
        if len(z) != len(self.descriptors):
            raise ValueError(f"vector length {len(z)} != layout size {len(self.descriptors)}")
        voltages: dict[int, complex] = {}
        currents: dict[tuple[int, int], complex] = {}
        injections: dict[int, complex] = {}
        for k, d in enumerate(self.descriptors):
            if d.kind == "V":
                voltages[d.bus] = complex(z[k])
            elif d.kind == "I":
                currents[(d.bus, d.neighbor)] = complex(z[k])
            else:
                injections[d.bus] = complex(z[k])
        return MeasurementSet(
            time_index=time_index,
            bus_voltages=voltages,
            branch_currents=currents,
            injection_currents=injections,
        )


@dataclass(frozen=True)
class EstimationResult:
    """WLS solution with residual diagnostics."""

    x_hat: dict[int, complex]
    residuals: np.ndarray
    chi2: float
    dof: int
    normalized_residuals: np.ndarray
    weights: np.ndarray

    @property
    def x_vector(self) -> np.ndarray:
        return np.array([self.x_hat[bus] for bus in sorted(self.x_hat)], dtype=complex)


def uniform_weights(layout_size: int, sigma: float) -> np.ndarray:
    """Per-measurement weights 1/sigma^2; unit weights when sigma is zero."""
    if sigma <= 0.0:
        return np.ones(layout_size)
    return np.full(layout_size, 1.0 / sigma**2)


def build_h(topology: GridTopology, layout: MeasurementLayout) -> np.ndarray:
    """Assemble the m x n complex measurement matrix for the layout.

    Voltage rows carry a single 1; the current row for (i, j) carries
    1/Z + Y/2 on column i and -1/Z on column j; an injection row is the sum of
    the bus's incident current rows.
    """
    bus_ids = topology.bus_ids
    col = {bus: k for k, bus in enumerate(bus_ids)}
    H = np.zeros((len(layout), len(bus_ids)), dtype=complex)

    def current_row(sending: int, receiving: int) -> np.ndarray:
        branch = topology.branch_between(sending, receiving)
        row = np.zeros(len(bus_ids), dtype=complex)
        row[col[sending]] = 1.0 / branch.z_series + branch.y_shunt / 2.0
        row[col[receiving]] = -1.0 / branch.z_series
        return row

    for k, d in enumerate(layout.descriptors):
        if d.bus not in col or (d.kind == "I" and d.neighbor not in col):
            raise UnknownBusError(f"layout row {d} references an unknown bus")
        if d.kind == "V":
            H[k, col[d.bus]] = 1.0
        elif d.kind == "I":
            H[k] = current_row(d.bus, d.neighbor)
        else:
            for neighbor, _ in topology._adjacency[d.bus]:
                H[k] += current_row(d.bus, neighbor)
    return H


def wls_estimate(H: np.ndarray, W: np.ndarray, z: np.ndarray) -> EstimationResult:
    """Solve min_x sum(w_k |z_k - (Hx)_k|^2) and populate residual diagnostics.

    Degrees of freedom are counted as 2(m - n) real dimensions since every
    complex measurement contributes two real residual components.
    """
    m, n = H.shape
    sqrt_w = np.sqrt(W)
    Hw = sqrt_w[:, None] * H
    zw = sqrt_w * z
    x, _, rank, _ = np.linalg.lstsq(Hw, zw, rcond=None)
    if rank < n:
        raise ObservabilityError(f"H has rank {rank} < {n}; state not observable")
    residuals = z - H @ x
    chi2 = float(np.sum(W * np.abs(residuals) ** 2))
    dof = 2 * (m - n)

    # Residual covariance diag: 2 (W^-1 - H (H^H W H)^-1 H^H)_kk for circular
    # complex noise with per-component variance 1/w.
    G = H.conj().T @ (W[:, None] * H)
    Ginv = np.linalg.inv(G)
    leverage = np.einsum("ij,jk,ik->i", H, Ginv, H.conj()).real
    omega = 2.0 * np.clip(1.0 / W - leverage, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        normalized = np.where(omega > 1e-12, np.abs(residuals) / np.sqrt(omega), 0.0)

    x_hat = {k: complex(v) for k, v in enumerate(x)}
    return EstimationResult(
        x_hat=x_hat,
        residuals=residuals,
        chi2=chi2,
        dof=dof,
        normalized_residuals=normalized,
        weights=np.asarray(W, dtype=float),
    )


def wls_estimate_for(
    topology: GridTopology, H: np.ndarray, W: np.ndarray, z: np.ndarray
) -> EstimationResult:
    """Like :func:`wls_estimate` but keys the state by real bus ids."""
    result = wls_estimate(H, W, z)
    x_hat = {bus: result.x_hat[k] for k, bus in enumerate(topology.bus_ids)}
    return EstimationResult(
        x_hat=x_hat,
        residuals=result.residuals,
        chi2=result.chi2,
        dof=result.dof,
        normalized_residuals=result.normalized_residuals,
        weights=result.weights,
    )


@dataclass(frozen=True)
class ChiSquareOutcome:
    passed: bool
    statistic: float
    threshold: float


def chi_square_test(result: EstimationResult, alpha: float) -> ChiSquareOutcome:
    """Residual chi-square test; fail means bad data is suspected."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    threshold = float(chi2_dist.ppf(1.0 - alpha, result.dof))
    return ChiSquareOutcome(
        passed=result.chi2 <= threshold, statistic=result.chi2, threshold=threshold
    )


def largest_normalized_residual(result: EstimationResult) -> tuple[int, float]:
    """Index and value of the largest normalized residual (ties: lowest index)."""
    if result.dof <= 0:
        raise ValueError("largest normalized residual requires m > n")
    index = int(np.argmax(result.normalized_residuals))
    return index, float(result.normalized_residuals[index])
