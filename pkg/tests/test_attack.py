"""Residual-invariant attack construction, application, and stealth checks."""

import io

import numpy as np
import pytest

from gridmf.attack import (
    AttackSpec,
    LayoutMismatchError,
    apply_attack,
    instance_from_c,
    make_attack,
    read_instance_c,
    verify_stealth,
    write_instance,
)
from gridmf.estimation import uniform_weights, wls_estimate
from gridmf.grid import UnknownBusError, adjacency_of
from gridmf.simulate import NoiseModel, snapshot, synthesize_true_state


def _snapshot(grid7, seed, sigma=0.002):
    rng = np.random.default_rng(seed)
    state = synthesize_true_state(grid7, 0.05, rng)
    return snapshot(grid7, state, NoiseModel(sigma), 3, rng)


def test_empty_target_set_encodes_no_attack(grid7, h7):
    rng = np.random.default_rng(40)
    instance = make_attack(h7, grid7, AttackSpec(target_buses=()), rng)
    assert instance.c == {}
    assert np.all(instance.a == 0)
    assert instance.touched == frozenset()


def test_single_target_touched_pattern(grid7, layout7, h7):
    """One target touches its voltage, all incident currents at both ends,
    and the injections of itself and every neighbor."""
    rng = np.random.default_rng(41)
    target = 4
    instance = make_attack(h7, grid7, AttackSpec(target_buses=(target,)), rng)
    neighbors = [n for n, _ in adjacency_of(grid7, target)]
    expected = {layout7.index_of("V", target), layout7.index_of("J", target)}
    for neighbor in neighbors:
        expected.add(layout7.index_of("I", target, neighbor))
        expected.add(layout7.index_of("I", neighbor, target))
        expected.add(layout7.index_of("J", neighbor))
    assert instance.touched == frozenset(expected)


def test_attacked_voltage_count_band(grid7, h7):
    """1-3 random targets per trial put roughly a fifth of all voltage rows
    under attack across 1000 trials."""
    rng = np.random.default_rng(42)
    total = 0
    for _ in range(1000):
        count = int(rng.integers(1, 4))
        targets = tuple(int(b) for b in sorted(rng.choice(grid7.bus_ids, count, replace=False)))
        instance = make_attack(h7, grid7, AttackSpec(target_buses=targets), rng)
        total += len(instance.attacked_buses)
    assert 1400 <= total <= 2100


def test_apply_zero_attack_identity(grid7, layout7, h7):
    snap = _snapshot(grid7, 43)
    instance = make_attack(h7, grid7, AttackSpec(target_buses=()), np.random.default_rng(0))
    assert apply_attack(snap, instance, layout7) == snap


def test_apply_then_subtract_recovers(grid7, layout7, h7):
    snap = _snapshot(grid7, 44)
    rng = np.random.default_rng(45)
    instance = make_attack(h7, grid7, AttackSpec(target_buses=(2, 6)), rng)
    attacked = apply_attack(snap, instance, layout7)
    z_back = layout7.vector_of(attacked) - instance.a
    recovered = layout7.snapshot_of(z_back, snap.time_index)
    assert np.max(np.abs(layout7.vector_of(recovered) - layout7.vector_of(snap))) <= 1e-15


def test_attack_modifies_exactly_touched_rows(grid7, layout7, h7):
    snap = _snapshot(grid7, 46)
    rng = np.random.default_rng(47)
    instance = make_attack(h7, grid7, AttackSpec(target_buses=(3,)), rng)
    before = layout7.vector_of(snap)
    after = layout7.vector_of(apply_attack(snap, instance, layout7))
    changed = {int(k) for k in np.flatnonzero(np.abs(after - before) > 0)}
    assert changed == set(instance.touched)


def test_touched_set_minimal(grid7, h7):
    rng = np.random.default_rng(48)
    instance = make_attack(h7, grid7, AttackSpec(target_buses=(1, 5)), rng)
    for row in instance.touched:
        assert abs(instance.a[row]) > 1e-12


def test_verify_stealth_generated_instances(grid7, layout7, h7):
    sigma = 0.002
    W = uniform_weights(len(layout7), sigma)
    z = layout7.vector_of(_snapshot(grid7, 49, sigma))
    rng = np.random.default_rng(50)
    for _ in range(50):
        count = int(rng.integers(1, 4))
        targets = tuple(int(b) for b in sorted(rng.choice(grid7.bus_ids, count, replace=False)))
        instance = make_attack(h7, grid7, AttackSpec(target_buses=targets), rng)
        assert verify_stealth(h7, W, z, instance, 0.05)


def test_verify_stealth_rejects_off_column_space(grid7, layout7, h7):
    sigma = 0.002
    W = uniform_weights(len(layout7), sigma)
    z = layout7.vector_of(_snapshot(grid7, 51, sigma))
    rng = np.random.default_rng(52)
    instance = make_attack(h7, grid7, AttackSpec(target_buses=(2,)), rng)
    corrupted = instance.a.copy()
    corrupted[layout7.index_of("I", 1, 2)] += 0.1
    broken = instance.__class__(
        c=instance.c, a=corrupted, touched=instance.touched,
        attacked_buses=instance.attacked_buses,
    )
    assert not verify_stealth(h7, W, z, broken, 0.05)


def test_verify_stealth_zero_attack(grid7, layout7, h7):
    W = uniform_weights(len(layout7), 0.002)
    z = layout7.vector_of(_snapshot(grid7, 53))
    instance = make_attack(h7, grid7, AttackSpec(target_buses=()), np.random.default_rng(0))
    assert verify_stealth(h7, W, z, instance, 0.05)


def test_estimate_shift_equals_c(grid7, layout7, h7):
    sigma = 0.002
    W = uniform_weights(len(layout7), sigma)
    z = layout7.vector_of(_snapshot(grid7, 54, sigma))
    rng = np.random.default_rng(55)
    instance = make_attack(h7, grid7, AttackSpec(target_buses=(1, 7)), rng)
    clean = wls_estimate(h7, W, z)
    attacked = wls_estimate(h7, W, z + instance.a)
    shift = attacked.x_vector - clean.x_vector
    assert np.max(np.abs(shift - instance.c_vector(grid7.bus_ids))) <= 1e-9


def test_magnitudes_and_phases_within_spec(grid7, h7):
    rng = np.random.default_rng(56)
    spec = AttackSpec(target_buses=(1, 2, 3), magnitude_range=(0.05, 0.5))
    for _ in range(100):
        instance = make_attack(h7, grid7, spec, rng)
        for value in instance.c.values():
            assert 0.05 <= abs(value) <= 0.5


def test_layout_mismatch_raises(grid7, layout7, h7, chain3):
    from gridmf.estimation import MeasurementLayout

    snap = _snapshot(grid7, 57)
    small_layout = MeasurementLayout.for_topology(chain3)
    rng = np.random.default_rng(58)
    instance = make_attack(h7, grid7, AttackSpec(target_buses=(2,)), rng)
    with pytest.raises(LayoutMismatchError):
        apply_attack(snap, instance, small_layout)


def test_unknown_target_rejected(grid7, h7):
    with pytest.raises(UnknownBusError):
        make_attack(h7, grid7, AttackSpec(target_buses=(99,)), np.random.default_rng(0))


def test_magnitude_range_validated():
    with pytest.raises(ValueError):
        AttackSpec(target_buses=(1,), magnitude_range=(0.0, 0.5))
    with pytest.raises(ValueError):
        AttackSpec(target_buses=(1,), magnitude_range=(0.6, 0.5))


def test_instance_io_round_trip(grid7, h7):
    rng = np.random.default_rng(59)
    instance = make_attack(h7, grid7, AttackSpec(target_buses=(3, 6)), rng)
    buffer = io.StringIO()
    write_instance(instance, buffer)
    c = read_instance_c(io.StringIO(buffer.getvalue()))
    rebuilt = instance_from_c(h7, grid7, c)
    assert rebuilt.attacked_buses == instance.attacked_buses
    assert np.max(np.abs(rebuilt.a - instance.a)) <= 1e-15
    assert rebuilt.touched == instance.touched
