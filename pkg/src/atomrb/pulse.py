"""Compile Clifford elements into rectangular microwave pulses.

The synthesizer only shifts the microwave phase, so every gate is built
from x- and y-axis pulses of positive area; a -pi/2 rotation is played as
3pi/2. The pulse word for each Clifford is chosen by exhaustive search over
words of at most three pulses.
"""

from __future__ import annotations

import csv
import functools
import itertools
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .clifford import CliffordElement, CliffordTable, generate_group
from .qubit import SIGMA_I, make_rotation, same_up_to_phase

AXIS_X = 0.0
AXIS_Y = np.pi / 2
ALLOWED_QUARTERS = (1, 2, 3)  # angle in units of pi/2
MAX_WORD = 3
REFERENCE_T_HALF_PI = 20.78e-6
REFERENCE_IDLE = 3e-6

Policy = Literal["min_pulses", "min_duration"]
DEFAULT_POLICY: Policy = "min_pulses"

# (axis index, quarter turns); axis index 0 = x, 1 = y
Primitive = tuple[int, int]
_PRIMITIVES: tuple[Primitive, ...] = tuple(
    (axis, q) for axis in (0, 1) for q in ALLOWED_QUARTERS
)


def rabi_from_t_half_pi(t_half_pi: float) -> float:
    """Angular Rabi frequency (rad/s) giving a pi/2 rotation in ``t_half_pi``."""
    if t_half_pi <= 0:
        raise ValueError("t_half_pi must be positive")
    return np.pi / (2 * t_half_pi)


@dataclass(frozen=True)
class PulsePrimitive:
    axis_phase: float
    angle: float
    duration: float

    @property
    def axis(self) -> str:
        return "x" if self.axis_phase == AXIS_X else "y"

    @property
    def label(self) -> str:
        quarters = round(self.angle / (np.pi / 2))
        return f"{self.axis}{90 * quarters}"

    def unitary(self) -> np.ndarray:
        return make_rotation(self.axis_phase, self.angle)


@dataclass(frozen=True)
class PulseSchedule:
    pulses: tuple[PulsePrimitive, ...]
    idle_time: float

    @property
    def pulse_time(self) -> float:
        return sum(p.duration for p in self.pulses)

    @property
    def total_duration(self) -> float:
        return self.pulse_time + self.idle_time

    @property
    def total_angle(self) -> float:
        return sum(p.angle for p in self.pulses)

    def unitary(self) -> np.ndarray:
        u = SIGMA_I.copy()
        for p in self.pulses:
            u = p.unitary() @ u
        return u

    @property
    def word(self) -> str:
        return " ".join(p.label for p in self.pulses) or "idle"


def _word_unitary(word: tuple[Primitive, ...]) -> np.ndarray:
    u = SIGMA_I.copy()
    for axis, q in word:
        u = make_rotation(AXIS_Y if axis else AXIS_X, q * np.pi / 2) @ u
    return u


def _word_key(word: tuple[Primitive, ...], policy: Policy):
    quarters = sum(q for _, q in word)
    if policy == "min_pulses":
        return (len(word), quarters, word)
    if policy == "min_duration":
        return (quarters, len(word), word)
    raise ValueError(f"unknown decomposition policy {policy!r}")


@functools.lru_cache(maxsize=None)
def decomposition_words(policy: Policy = DEFAULT_POLICY) -> tuple[tuple[Primitive, ...], ...]:
    """Best pulse word for every Clifford index under ``policy``.

    ``min_pulses`` prefers fewer pulses, then shorter total duration;
    ``min_duration`` prefers shorter duration, then fewer pulses. Remaining
    ties go to the lexicographically smallest word.
    """
    table = generate_group()
    best: dict[int, tuple] = {}
    for n in range(MAX_WORD + 1):
        for word in itertools.product(_PRIMITIVES, repeat=n):
            u = _word_unitary(word)
            idx = table.index_of(u)
            key = _word_key(word, policy)
            if idx not in best or key < best[idx]:
                best[idx] = key
    if len(best) != len(table):
        raise RuntimeError("some Cliffords have no pulse word of length <= 3")
    return tuple(best[i][-1] for i in range(len(table)))


def decompose(
    g: CliffordElement | int,
    t_half_pi: float,
    idle: float = REFERENCE_IDLE,
    policy: Policy = DEFAULT_POLICY,
) -> PulseSchedule:
    if t_half_pi <= 0:
        raise ValueError("t_half_pi must be positive")
    if idle < 0:
        raise ValueError("idle must be non-negative")
    index = g.index if isinstance(g, CliffordElement) else int(g)
    word = decomposition_words(policy)[index]
    pulses = tuple(
        PulsePrimitive(
            axis_phase=AXIS_Y if axis else AXIS_X,
            angle=q * np.pi / 2,
            duration=q * t_half_pi,
        )
        for axis, q in word
    )
    return PulseSchedule(pulses=pulses, idle_time=idle)


def schedules(
    t_half_pi: float,
    idle: float = REFERENCE_IDLE,
    policy: Policy = DEFAULT_POLICY,
    table: CliffordTable | None = None,
) -> tuple[PulseSchedule, ...]:
    table = table or generate_group()
    return tuple(decompose(i, t_half_pi, idle, policy) for i in range(len(table)))


def mean_clifford_duration(
    table: CliffordTable | None,
    t_half_pi: float,
    idle: float,
    policy: Policy = DEFAULT_POLICY,
) -> float:
    """Uniform average of the total gate time (pulses plus idle) over the group."""
    if t_half_pi <= 0 or idle < 0:
        raise ValueError("durations must be positive")
    scheds = schedules(t_half_pi, idle, policy, table)
    return float(np.mean([s.total_duration for s in scheds]))


def verify_decomposition(table: CliffordTable, policy: Policy = DEFAULT_POLICY) -> bool:
    for e, s in zip(table.elements, schedules(1.0, 0.0, policy, table)):
        if not same_up_to_phase(s.unitary(), e.unitary, tol=1e-10):
            return False
    return True


def export_decomposition_csv(
    path,
    t_half_pi: float = REFERENCE_T_HALF_PI,
    idle: float = REFERENCE_IDLE,
    policy: Policy = DEFAULT_POLICY,
) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clifford", "word", "n_pulses", "pulse_time_s", "total_s"])
        for i, s in enumerate(schedules(t_half_pi, idle, policy)):
            writer.writerow([i, s.word, len(s.pulses), repr(s.pulse_time), repr(s.total_duration)])
