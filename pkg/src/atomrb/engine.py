"""Seeded Monte Carlo runs of the RB, Ramsey, spin-echo and pulse-calibration
experiments on top of the pulse-level qubit model.

Randomness contract: every draw comes from a stream derived from the run seed
and the integer indices of the unit it belongs to, never from a shared
generator. Work units can therefore be executed in any order, on any number
of processes, and still reduce to bit-identical results.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import qubit
from .clifford import N_CLIFFORDS, CliffordTable, generate_group
from .noise import NoiseConfig, ShotNoise, apply_spam, rb_dephasing_time, sample_shot_noise_batch
from .pulse import (
    AXIS_X,
    AXIS_Y,
    REFERENCE_IDLE,
    REFERENCE_T_HALF_PI,
    DEFAULT_POLICY,
    PulseSchedule,
    mean_clifford_duration,
    rabi_from_t_half_pi,
    schedules,
)

REFERENCE_LENGTHS = (1, 200, 400, 600, 800, 1000, 1300)
REFERENCE_SEQUENCES = 5
REFERENCE_SHOTS = 50

# stream identifiers
SEQUENCE_STREAM = 0
NOISE_STREAM = 1
MEASURE_STREAM = 2


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``key`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class RBConfig:
    lengths: tuple[int, ...] = REFERENCE_LENGTHS
    sequences_per_length: int = REFERENCE_SEQUENCES
    shots_per_sequence: int = REFERENCE_SHOTS
    t_half_pi: float = REFERENCE_T_HALF_PI
    idle: float = REFERENCE_IDLE
    # None means the drive is perfectly calibrated: rabi_hz = 1 / (4 t_half_pi)
    rabi_hz: Optional[float] = None
    # pads the per-gate idle so the mean Clifford lasts exactly this long
    t_cg_override: Optional[float] = None
    seed: int = 0
    # seeds noise and readout streams; defaults to ``seed``
    noise_seed: Optional[int] = None
    policy: str = DEFAULT_POLICY

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(int(n) for n in self.lengths))
        if not self.lengths or min(self.lengths) < 1:
            raise ValueError("lengths must be non-empty and each >= 1")
        if self.sequences_per_length < 1 or self.shots_per_sequence < 1:
            raise ValueError("sequence and shot counts must be >= 1")
        if self.t_half_pi <= 0 or self.idle < 0:
            raise ValueError("t_half_pi must be positive and idle non-negative")
        if self.rabi_hz is not None and self.rabi_hz <= 0:
            raise ValueError("rabi_hz must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.effective_idle < 0:
            raise ValueError("t_cg_override is shorter than the pulse time of the mean Clifford")

    @property
    def rabi(self) -> float:
        """Angular Rabi frequency of the drive (rad/s)."""
        if self.rabi_hz is None:
            return rabi_from_t_half_pi(self.t_half_pi)
        return 2 * np.pi * self.rabi_hz

    @property
    def measure_seed(self) -> int:
        return self.seed if self.noise_seed is None else self.noise_seed

    @property
    def effective_idle(self) -> float:
        if self.t_cg_override is None:
            return self.idle
        mean = mean_clifford_duration(None, self.t_half_pi, self.idle, self.policy)
        return self.idle + (self.t_cg_override - mean)

    @property
    def t_cg(self) -> float:
        return mean_clifford_duration(None, self.t_half_pi, self.effective_idle, self.policy)

    def schedules(self) -> tuple[PulseSchedule, ...]:
        return schedules(self.t_half_pi, self.effective_idle, self.policy)


@dataclass
class RBDataset:
    lengths: tuple[int, ...]
    survivals: np.ndarray  # (n_lengths, n_sequences)
    shots_per_sequence: int
    expected: Optional[np.ndarray] = None  # mean SPAM-adjusted p0 per unit

    def __post_init__(self):
        self.survivals = np.asarray(self.survivals, dtype=float)
        if self.survivals.shape[0] != len(self.lengths):
            raise ValueError("one survival row per length is required")
        if np.any((self.survivals < 0) | (self.survivals > 1)):
            raise ValueError("survival estimates must lie in [0, 1]")

    @property
    def n_sequences(self) -> int:
        return self.survivals.shape[1]

    @property
    def mean(self) -> np.ndarray:
        return self.survivals.mean(axis=1)

    @property
    def sem(self) -> np.ndarray:
        k = self.n_sequences
        if k < 2:
            return np.zeros(len(self.lengths))
        return self.survivals.std(axis=1, ddof=1) / math.sqrt(k)

    @property
    def total_shots(self) -> int:
        return self.n_sequences * self.shots_per_sequence

    def rows(self):
        for li, length in enumerate(self.lengths):
            for si in range(self.n_sequences):
                yield length, si, self.survivals[li, si]

    def to_csv(self, path, header: Sequence[str] = ()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["length", "sequence", "survival"])
            for length, si, s in self.rows():
                writer.writerow([length, si, repr(float(s))])

    def summary(self) -> dict:
        return {
            "lengths": list(self.lengths),
            "mean": [float(m) for m in self.mean],
            "sem": [float(s) for s in self.sem],
            "sequences_per_length": self.n_sequences,
            "shots_per_sequence": self.shots_per_sequence,
        }


@dataclass
class ExperimentTrace:
    x: np.ndarray
    p: np.ndarray
    shots: np.ndarray
    kind: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        self.shots = np.broadcast_to(np.asarray(self.shots, dtype=int), self.x.shape).copy()
        if not (self.x.shape == self.p.shape == self.shots.shape):
            raise ValueError("trace columns must have equal length")
        if np.any((self.p < 0) | (self.p > 1)):
            raise ValueError("trace probabilities must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.x)

    def to_csv(self, path, header: Sequence[str] = ()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "p", "shots"])
            for x, p, n in zip(self.x, self.p, self.shots):
                writer.writerow([repr(float(x)), repr(float(p)), int(n)])


# ---------------------------------------------------------------------------
# RB


def clifford_superops(
    scheds: Sequence[PulseSchedule],
    rabi: np.ndarray,
    detuning: np.ndarray,
    t_coh: float,
) -> np.ndarray:
    """Noisy Liouville map of every Clifford for every shot, ``(n, 24, 4, 4)``.

    Each pulse is its full propagator followed by dephasing over its
    duration; the gate's idle time (free precession + dephasing) comes last.
    """
    rabi = np.atleast_1d(np.asarray(rabi, dtype=float))
    detuning = np.atleast_1d(np.asarray(detuning, dtype=float))
    n = max(len(rabi), len(detuning))
    cache: dict[tuple[float, float], np.ndarray] = {}

    def pulse_map(phase: float, duration: float) -> np.ndarray:
        key = (phase, duration)
        if key not in cache:
            u = qubit.pulse_propagator(rabi, detuning, phase, duration)
            lam = qubit.coherence_factor(duration, t_coh)
            cache[key] = qubit.dephasing_superop(lam) @ qubit.unitary_superop(u)
        return cache[key]

    out = np.empty((n, len(scheds), 4, 4), dtype=complex)
    for g, sched in enumerate(scheds):
        m = np.broadcast_to(np.eye(4, dtype=complex), (n, 4, 4))
        for p in sched.pulses:
            m = pulse_map(p.axis_phase, p.duration) @ m
        u_idle = qubit.free_precession(detuning, sched.idle_time)
        lam = qubit.coherence_factor(sched.idle_time, t_coh)
        out[:, g] = qubit.dephasing_superop(lam) @ qubit.unitary_superop(u_idle) @ m
    return out


def ideal_superops(table: CliffordTable, depolarizing: float = 0.0) -> np.ndarray:
    """Noiseless Clifford maps, optionally followed by depolarization of error ``p``."""
    maps = qubit.unitary_superop(table.unitaries)
    if depolarizing:
        maps = qubit.depolarizing_superop(1 - 2 * depolarizing) @ maps
    return maps[None]


def evolve_sequence(maps: np.ndarray, gates: Sequence[int]) -> np.ndarray:
    """Propagate |0><0| through ``gates`` for each shot; returns p(|0>) per shot."""
    n = maps.shape[0]
    v = np.zeros((n, 4), dtype=complex)
    v[:, 0] = 1
    rows = np.arange(n)
    for g in gates:
        v = np.einsum("nij,nj->ni", maps[rows, g], v)
    return np.clip(v[:, 0].real, 0.0, 1.0)


def simulate_shot_reference(
    gates: Sequence[int],
    scheds: Sequence[PulseSchedule],
    rabi: float,
    shot: ShotNoise,
    t_coh: float,
) -> float:
    """Pulse-by-pulse density-matrix evolution of one shot (slow oracle path)."""
    rho = qubit.ground_state()
    for g in gates:
        sched = scheds[g]
        for p in sched.pulses:
            u = qubit.pulse_propagator(shot.area_scale * rabi, shot.detuning, p.axis_phase, p.duration)
            rho = qubit.dephase(qubit.apply(u, rho), p.duration, t_coh)
        rho = qubit.apply(qubit.free_precession(shot.detuning, sched.idle_time), rho)
        rho = qubit.dephase(rho, sched.idle_time, t_coh)
    return qubit.prob_zero(rho)


def rb_sequence(cfg: RBConfig, seq_index: int, length: int, table: CliffordTable) -> list[int]:
    """Gate list (random prefix of the sequence plus recovery) for one unit.

    All lengths of one sequence index are truncations of the same random
    sequence.
    """
    full = stream(cfg.seed, SEQUENCE_STREAM, seq_index).integers(0, N_CLIFFORDS, size=max(cfg.lengths))
    gates = [int(g) for g in full[:length]]
    gates.append(table.recovery_gate(gates))
    return gates


def _rb_unit(args) -> tuple[float, float]:
    cfg, noise, li, si, depolarizing, expectation = args
    table = generate_group()
    gates = rb_sequence(cfg, si, cfg.lengths[li], table)
    shots = cfg.shots_per_sequence

    if depolarizing is not None:
        maps = ideal_superops(table, depolarizing)
        p0 = np.repeat(evolve_sequence(maps, gates), shots)
    else:
        n_draws = 1 if noise.resample_policy == "per_sequence" else shots
        rng = stream(cfg.measure_seed, NOISE_STREAM, li, si)
        detuning, area = sample_shot_noise_batch(noise, rng, n_draws)
        maps = clifford_superops(cfg.schedules(), area * cfg.rabi, detuning, rb_dephasing_time(noise))
        p0 = np.broadcast_to(evolve_sequence(maps, gates), (shots,))

    p = apply_spam(np.asarray(p0, dtype=float), noise.d_if)
    if expectation:
        return float(np.mean(p)), float(np.mean(p))
    u = stream(cfg.measure_seed, MEASURE_STREAM, li, si).random(shots)
    return float(np.count_nonzero(u < p)) / shots, float(np.mean(p))


def run_rb(
    cfg: RBConfig,
    noise: NoiseConfig,
    table: CliffordTable | None = None,
    workers: int = 1,
    depolarizing: float | None = None,
    expectation: bool = False,
) -> RBDataset:
    """Simulate an RB experiment.

    ``depolarizing`` replaces the pulse-level model by ideal Cliffords each
    followed by a depolarizing channel with error ``p`` per gate; SPAM still
    applies. ``expectation`` reports exact probabilities instead of sampled
    shot fractions. Both are test hooks.
    """
    if depolarizing is not None and not 0 <= depolarizing <= 0.5:
        raise ValueError("depolarizing error must lie in [0, 0.5]")
    units = [
        (cfg, noise, li, si, depolarizing, expectation)
        for li in range(len(cfg.lengths))
        for si in range(cfg.sequences_per_length)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_rb_unit, units, chunksize=max(1, len(units) // (4 * workers))))
    else:
        results = [_rb_unit(u) for u in units]

    shape = (len(cfg.lengths), cfg.sequences_per_length)
    survivals = np.array([r[0] for r in results]).reshape(shape)
    expected = np.array([r[1] for r in results]).reshape(shape)
    return RBDataset(cfg.lengths, survivals, cfg.shots_per_sequence, expected=expected)


# ---------------------------------------------------------------------------
# calibration experiments


def _shot_noise(noise: NoiseConfig | None, seed: int, point: int, shots: int):
    noise = noise or NoiseConfig()
    n_draws = 1 if noise.resample_policy == "per_sequence" else shots
    detuning, area = sample_shot_noise_batch(noise, stream(seed, NOISE_STREAM, point), n_draws)
    return noise, np.broadcast_to(detuning, (shots,)), np.broadcast_to(area, (shots,))


def _measure(p: np.ndarray, seed: int, point: int, salt: int = 0) -> float:
    u = stream(seed, MEASURE_STREAM, point, salt).random(len(p))
    return float(np.count_nonzero(u < p)) / len(p)


def ramsey_probability(detuning_hz, delay, envelope_t2r: float | None = None):
    """Closed-form p(|0>) for two ideal pi/2 pulses around a free evolution."""
    env = 1.0 if envelope_t2r is None else np.exp(-((np.asarray(delay) / envelope_t2r) ** 2))
    return (1 - env * np.cos(2 * np.pi * np.asarray(detuning_hz) * np.asarray(delay))) / 2


def run_ramsey(
    detuning: float,
    delays: Sequence[float],
    shots: int,
    envelope_t2r: float | None = None,
    noise: NoiseConfig | None = None,
    seed: int = 0,
    expectation: bool = False,
) -> ExperimentTrace:
    """Ramsey fringes: pi/2, free evolution at ``detuning`` Hz (+ noise), pi/2.

    Pulses are treated as instantaneous rotations; the quasi-static area
    error still scales their angle.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    p_out = []
    for i, t in enumerate(delays):
        nz, det_noise, area = _shot_noise(noise, seed, i, shots)
        half = qubit.make_rotation(AXIS_X, area * np.pi / 2)
        rho = qubit.apply(half, qubit.ground_state())
        rho = qubit.apply(qubit.free_precession(2 * np.pi * detuning + det_noise, t), rho)
        if envelope_t2r is not None:
            rho = qubit.scale_coherence(rho, np.exp(-((t / envelope_t2r) ** 2)))
        rho = qubit.apply(half, rho)
        p = apply_spam(qubit.prob_zero(rho), nz.d_if)
        p_out.append(float(np.mean(p)) if expectation else _measure(p, seed, i))
    return ExperimentTrace(delays, p_out, shots, kind="ramsey", meta={"detuning_hz": detuning})


def run_spin_echo(
    total_delays: Sequence[float],
    t2s: float,
    shots: int,
    seed: int = 0,
    noise: NoiseConfig | None = None,
    expectation: bool = False,
) -> ExperimentTrace:
    """Spin-echo visibility versus total free-evolution time.

    Sequence pi/2 - t/2 - pi - t/2 - pi/2, with the last pulse played at
    phase 0 and phase pi; visibility is the difference of the two |0>
    populations. Coherence decays by the Gaussian envelope exp(-(t/t2s)^2).
    """
    if t2s <= 0:
        raise ValueError("t2s must be positive")
    if shots < 1:
        raise ValueError("shots must be >= 1")
    vis = []
    for i, t in enumerate(total_delays):
        nz, det_noise, area = _shot_noise(noise, seed, i, shots)
        rho = qubit.apply(qubit.make_rotation(AXIS_X, area * np.pi / 2), qubit.ground_state())
        half_wait = qubit.free_precession(det_noise, t / 2)
        rho = qubit.apply(half_wait, rho)
        rho = qubit.apply(qubit.make_rotation(AXIS_X, area * np.pi), rho)
        rho = qubit.apply(half_wait, rho)
        rho = qubit.scale_coherence(rho, np.exp(-((t / t2s) ** 2)))
        # closing pulse at phase 0 (x) and at phase pi, played as x(3pi/2)
        p_plus = apply_spam(qubit.prob_zero(qubit.apply(qubit.make_rotation(AXIS_X, area * np.pi / 2), rho)), nz.d_if)
        p_minus = apply_spam(qubit.prob_zero(qubit.apply(qubit.make_rotation(AXIS_X, area * 3 * np.pi / 2), rho)), nz.d_if)
        if expectation:
            v = float(np.mean(p_plus) - np.mean(p_minus))
        else:
            v = _measure(p_plus, seed, i, 0) - _measure(p_minus, seed, i, 1)
        vis.append(min(max(v, 0.0), 1.0))
    return ExperimentTrace(total_delays, vis, shots, kind="echo", meta={"t2s": t2s})


def run_pulse_calibration(
    n_pulses: int,
    durations: Sequence[float],
    true_t_half_pi: float,
    shots: int,
    noise: NoiseConfig | None = None,
    seed: int = 0,
    expectation: bool = False,
) -> ExperimentTrace:
    """p(|0>) after ``n_pulses`` identical x pulses, scanning the pulse duration.

    The drive's Rabi frequency makes ``true_t_half_pi`` an exact pi/2 pulse,
    so the population returns to |0> there whenever ``n_pulses`` is a
    multiple of 4.
    """
    if n_pulses < 1 or shots < 1:
        raise ValueError("n_pulses and shots must be >= 1")
    meta = {"n_pulses": n_pulses, "true_t_half_pi": true_t_half_pi}
    if n_pulses % 4:
        msg = f"n_pulses={n_pulses} is not a multiple of 4; the |0> peak criterion no longer holds"
        warnings.warn(msg, stacklevel=2)
        meta["warning"] = msg
    rabi = rabi_from_t_half_pi(true_t_half_pi)
    p_out = []
    for i, t in enumerate(durations):
        nz, det_noise, area = _shot_noise(noise, seed, i, shots)
        t_coh = rb_dephasing_time(nz)
        u = qubit.pulse_propagator(area * rabi, det_noise, AXIS_X, t)
        rho = np.broadcast_to(qubit.ground_state(), (shots, 2, 2))
        for _ in range(n_pulses):
            rho = qubit.dephase(qubit.apply(u, rho), t, t_coh)
        p = apply_spam(qubit.prob_zero(rho), nz.d_if)
        p_out.append(float(np.mean(p)) if expectation else _measure(p, seed, i))
    return ExperimentTrace(durations, p_out, shots, kind="calibrate", meta=meta)
