"""Monte Carlo experiment driver and confusion statistics.

Each trial generates three operating states with mild drift, measures them
with PMU noise, constructs a residual-invariant attack against the third
snapshot, runs the configured detection pipeline, and labels the per-bus
outcome against the ground-truth attack support.

The attacker model follows the random-compromise protocol: the attack vector
is built as a = Hc (and is verified residual-invariant as a whole), but the
intruder tampers with the voltage channels of the targeted buses and only a
random subset of the associated branch-current channels; derived injection
measurements inside the estimator's meter set are normally beyond the
intruder's reach. Setting both compromise probabilities to 1.0 applies the
vector in full, which makes the altered snapshot a perfectly valid operating
point and is useful for sensitivity studies.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import nan

import numpy as np

from .attack import AttackInstance, AttackSpec, make_attack, verify_stealth
from .detection import DetectionVerdict, Thresholds, detect
from .estimation import MeasurementLayout, build_h, uniform_weights
from .grid import GridTopology, load_grid
from .refine import DEFAULT_EPSILON, refine
from .simulate import NoiseModel, evolve_state, synthesize_true_state, time_series

CRITERION_KEYS = ("1d_mf", "2d_mf", "dci", "cci")


@dataclass(frozen=True)
class TrialConfig:
    """Full parameterization of one Monte Carlo experiment."""

    grid: str = "default7"
    trials: int = 1000
    seed: int = 0
    sigma: float = 0.002
    variation: float = 0.05
    drift_scale: float = 0.1
    targets_min: int = 1
    targets_max: int = 3
    magnitude_low: float = 0.05
    magnitude_high: float = 0.5
    current_compromise_prob: float = 0.7
    injection_compromise_prob: float = 0.0
    voltage_threshold: float = 0.05
    current_threshold: float = 0.05
    epsilon: float = DEFAULT_EPSILON
    mode: str = "2d"
    criteria: tuple[str, ...] = ("v",)
    refine: bool = False
    unanimous: bool = False
    alpha: float = 0.05
    workers: int = 1
    truncated_reconstruction: bool = False

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trial count must be >= 1")
        if self.voltage_threshold <= 0 or self.current_threshold <= 0 or self.epsilon <= 0:
            raise ValueError("thresholds and epsilon must be > 0")
        if not 0 <= self.targets_min <= self.targets_max:
            raise ValueError("target count range must satisfy 0 <= min <= max")
        if not 0.0 <= self.current_compromise_prob <= 1.0:
            raise ValueError("compromise probability must be in [0, 1]")
        if not 0.0 <= self.injection_compromise_prob <= 1.0:
            raise ValueError("injection compromise probability must be in [0, 1]")
        if self.mode not in ("1d", "2d"):
            raise ValueError(f"mode must be '1d' or '2d', got {self.mode!r}")
        unknown = set(self.criteria) - {"v", "dci", "cci"}
        if unknown:
            raise ValueError(f"unknown criteria: {sorted(unknown)}")

    @property
    def thresholds(self) -> Thresholds:
        return Thresholds(voltage=self.voltage_threshold, current=self.current_threshold)


@dataclass(frozen=True)
class TrialOutcome:
    """Per-trial truth, per-criterion predictions, and stealth verification."""

    trial_index: int
    attacked_buses: frozenset[int]
    flags: dict[str, frozenset[int]]
    kappas: dict[str, dict[int, float]]
    stealth_ok: bool


@dataclass
class TrialContext:
    """Shared read-only precomputation for all trials of one configuration."""

    config: TrialConfig
    topology: GridTopology
    layout: MeasurementLayout
    H: np.ndarray
    W: np.ndarray

    @classmethod
    def for_config(cls, config: TrialConfig) -> "TrialContext":
        topology = load_grid(config.grid)
        if config.targets_max > len(topology.bus_ids):
            raise ValueError("targets_max exceeds the number of buses")
        layout = MeasurementLayout.for_topology(topology)
        H = build_h(topology, layout)
        W = uniform_weights(len(layout), config.sigma)
        return cls(config=config, topology=topology, layout=layout, H=H, W=W)


def _trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, trial_index)))


def _applied_vector(
    context: TrialContext, instance: AttackInstance, rng: np.random.Generator
) -> np.ndarray:
    """Restrict the attack vector to the channels the intruder tampers with.

    All touched voltage rows are applied; each touched branch-current and
    injection row is applied independently with its configured probability.
    With both probabilities at 1.0 the whole vector is applied and the
    attacked snapshot is indistinguishable from a shifted operating point.
    """
    applied = np.zeros_like(instance.a)
    prob_i = context.config.current_compromise_prob
    prob_j = context.config.injection_compromise_prob
    for row in sorted(instance.touched):
        descriptor = context.layout.descriptors[row]
        if descriptor.kind == "V":
            applied[row] = instance.a[row]
        elif descriptor.kind == "I":
            if rng.uniform() < prob_i:
                applied[row] = instance.a[row]
        else:
            if rng.uniform() < prob_j:
                applied[row] = instance.a[row]
    return applied


def run_trial_in_context(context: TrialContext, trial_index: int) -> TrialOutcome:
    config = context.config
    topology = context.topology
    rng = _trial_rng(config.seed, trial_index)

    base = synthesize_true_state(topology, config.variation, rng)
    second = evolve_state(topology, base, config.variation, rng, config.drift_scale)
    third = evolve_state(topology, base, config.variation, rng, config.drift_scale)
    noise = NoiseModel(sigma=config.sigma)
    snapshots = time_series(topology, (base, second, third), noise, rng)

    stealth_ok = True
    attacked_t3 = snapshots[2]
    targets: frozenset[int] = frozenset()
    if config.targets_max >= 1:
        count = int(rng.integers(config.targets_min, config.targets_max + 1))
        if count > 0:
            chosen = rng.choice(topology.bus_ids, size=count, replace=False)
            spec = AttackSpec(
                target_buses=tuple(int(b) for b in sorted(chosen)),
                magnitude_range=(config.magnitude_low, config.magnitude_high),
            )
            instance = make_attack(context.H, topology, spec, rng)
            z3 = context.layout.vector_of(snapshots[2])
            stealth_ok = verify_stealth(context.H, context.W, z3, instance, config.alpha)
            if not stealth_ok:
                raise RuntimeError(
                    f"trial {trial_index}: constructed attack failed stealth verification"
                )
            applied = _applied_vector(context, instance, rng)
            attacked_t3 = context.layout.snapshot_of(z3 + applied, snapshots[2].time_index)
            targets = frozenset(
                context.layout.descriptors[row].bus
                for row in instance.touched
                if context.layout.descriptors[row].kind == "V"
            )

    windows = (snapshots[0], snapshots[1], attacked_t3)
    thresholds = config.thresholds
    verdict_1d = detect(
        topology, [attacked_t3], thresholds, mode="1d",
        criteria=("v",), truncated=config.truncated_reconstruction,
    )
    verdict_2d = detect(
        topology, windows, thresholds, mode="2d",
        criteria=("v",), truncated=config.truncated_reconstruction,
    )

    kappas = {
        "1d_mf": {bus: verdict_1d.criteria[bus].kappa_v for bus in topology.bus_ids},
        "2d_mf": {bus: verdict_2d.criteria[bus].kappa_v for bus in topology.bus_ids},
        "dci": {bus: verdict_2d.criteria[bus].kappa_i_direct for bus in topology.bus_ids},
        "cci": {bus: verdict_2d.criteria[bus].kappa_i_calc for bus in topology.bus_ids},
    }
    flags: dict[str, frozenset[int]] = {
        "1d_mf": verdict_1d.suspects,
        "2d_mf": verdict_2d.suspects,
        "dci": frozenset(
            bus for bus, k in kappas["dci"].items() if k > thresholds.current
        ),
        "cci": frozenset(
            bus for bus, k in kappas["cci"].items() if k > thresholds.current
        ),
    }

    pipeline_verdict = _pipeline_verdict(config, verdict_1d, verdict_2d, thresholds)
    flags["pipeline"] = pipeline_verdict.suspects
    if config.refine:
        result = refine(
            pipeline_verdict, topology, attacked_t3,
            epsilon=config.epsilon, unanimous=config.unanimous,
        )
        flags["refined"] = result.final_suspects

    return TrialOutcome(
        trial_index=trial_index,
        attacked_buses=targets,
        flags=flags,
        kappas=kappas,
        stealth_ok=stealth_ok,
    )


def _pipeline_verdict(
    config: TrialConfig,
    verdict_1d: DetectionVerdict,
    verdict_2d: DetectionVerdict,
    thresholds: Thresholds,
) -> DetectionVerdict:
    """Suspects of the configured mode/criteria combination, pre-refinement."""
    base = verdict_2d if config.mode == "2d" else verdict_1d
    enabled = frozenset(config.criteria)
    suspects = set()
    for bus, crit in base.criteria.items():
        if ("v" in enabled and crit.kappa_v > thresholds.voltage) or (
            "dci" in enabled and crit.kappa_i_direct > thresholds.current
        ) or ("cci" in enabled and crit.kappa_i_calc > thresholds.current):
            suspects.add(bus)
    return DetectionVerdict(
        criteria=base.criteria,
        suspects=frozenset(suspects),
        elements=base.elements,
        thresholds=thresholds,
        mode=base.mode,
        enabled=enabled,
    )


def run_trial(config: TrialConfig, trial_index: int) -> TrialOutcome:
    """Run one fully deterministic trial (seeded by master seed and index)."""
    return run_trial_in_context(TrialContext.for_config(config), trial_index)


@dataclass
class CriterionStats:
    """Confusion counts for one criterion, aggregate and per bus.

    Detection percentages are relative to attacked voltage measurements;
    absence/false-alarm percentages are relative to not-attacked ones within
    attacked-system trials.
    """

    detected: int = 0
    missed: int = 0
    true_clean: int = 0
    false_alarms: int = 0
    per_bus: dict[int, list[int]] = field(default_factory=dict)

    def record(self, bus: int, attacked: bool, flagged: bool) -> None:
        counts = self.per_bus.setdefault(bus, [0, 0, 0, 0])
        if attacked:
            if flagged:
                self.detected += 1
                counts[0] += 1
            else:
                self.missed += 1
                counts[1] += 1
        else:
            if flagged:
                self.false_alarms += 1
                counts[3] += 1
            else:
                self.true_clean += 1
                counts[2] += 1

    @staticmethod
    def _pct(part: int, whole: int) -> float:
        return 100.0 * part / whole if whole else nan

    @property
    def detected_pct(self) -> float:
        return self._pct(self.detected, self.detected + self.missed)

    @property
    def not_detected_pct(self) -> float:
        total = self.detected + self.missed
        return 100.0 - self.detected_pct if total else nan

    @property
    def detected_absence_pct(self) -> float:
        return self._pct(self.true_clean, self.true_clean + self.false_alarms)

    @property
    def false_alarms_pct(self) -> float:
        total = self.true_clean + self.false_alarms
        return 100.0 - self.detected_absence_pct if total else nan

    def per_bus_pcts(self) -> dict[int, tuple[float, float]]:
        """Per-bus (detected_pct, false_alarms_pct)."""
        out: dict[int, tuple[float, float]] = {}
        for bus, (det, miss, clean, fa) in sorted(self.per_bus.items()):
            out[bus] = (self._pct(det, det + miss), self._pct(fa, clean + fa))
        return out

    def detected_range(self) -> tuple[float, float]:
        values = [p for p, _ in self.per_bus_pcts().values() if not np.isnan(p)]
        return (min(values), max(values)) if values else (nan, nan)

    def false_alarms_range(self) -> tuple[float, float]:
        values = [p for _, p in self.per_bus_pcts().values() if not np.isnan(p)]
        return (min(values), max(values)) if values else (nan, nan)


@dataclass
class ConfusionStats:
    """All criterion statistics for one Monte Carlo run plus run metadata."""

    criteria: dict[str, CriterionStats]
    trials: int
    attacked_total: int
    clean_total: int
    stealth_all: bool
    meta: dict[str, str]


def aggregate_outcomes(outcomes: list[TrialOutcome], config: TrialConfig, topology: GridTopology) -> ConfusionStats:
    keys = list(CRITERION_KEYS) + ["pipeline"] + (["refined"] if config.refine else [])
    stats = {key: CriterionStats() for key in keys}
    attacked_total = 0
    clean_total = 0
    stealth_all = True
    for outcome in sorted(outcomes, key=lambda o: o.trial_index):
        stealth_all &= outcome.stealth_ok
        attacked_total += len(outcome.attacked_buses)
        clean_total += len(topology.bus_ids) - len(outcome.attacked_buses)
        for key in keys:
            flagged = outcome.flags[key]
            for bus in topology.bus_ids:
                stats[key].record(bus, bus in outcome.attacked_buses, bus in flagged)
    meta = {
        "grid": config.grid,
        "trials": str(config.trials),
        "seed": str(config.seed),
        "mode": config.mode,
        "criteria": "+".join(config.criteria),
        "refine": str(int(config.refine)),
        "sigma": f"{config.sigma:g}",
        "voltage_threshold": f"{config.voltage_threshold:g}",
        "current_threshold": f"{config.current_threshold:g}",
        "epsilon": f"{config.epsilon:g}",
        "compromise_prob": f"{config.current_compromise_prob:g}",
        "injection_prob": f"{config.injection_compromise_prob:g}",
    }
    return ConfusionStats(
        criteria=stats,
        trials=config.trials,
        attacked_total=attacked_total,
        clean_total=clean_total,
        stealth_all=stealth_all,
        meta=meta,
    )


def run_montecarlo(config: TrialConfig) -> ConfusionStats:
    """Run every trial (optionally on a thread pool) and aggregate.

    The result is independent of the worker count: trials are seeded
    individually and the reduction is a plain order-independent count.
    """
    context = TrialContext.for_config(config)
    indices = range(config.trials)
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(lambda k: run_trial_in_context(context, k), indices))
    else:
        outcomes = [run_trial_in_context(context, k) for k in indices]
    return aggregate_outcomes(outcomes, config, context.topology)
