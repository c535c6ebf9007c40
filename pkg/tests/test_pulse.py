import heapq
import math

import numpy as np
import pytest

from atomrb.clifford import generate_group
from atomrb.pulse import (
    AXIS_X,
    AXIS_Y,
    REFERENCE_IDLE,
    REFERENCE_T_HALF_PI,
    decompose,
    export_decomposition_csv,
    mean_clifford_duration,
    rabi_from_t_half_pi,
    schedules,
    verify_decomposition,
)
from atomrb.qubit import make_rotation, pulse_propagator, same_up_to_phase

TABLE = generate_group()
POLICIES = ("min_pulses", "min_duration")


def shortest_quarter_costs():
    """Dijkstra over the group with x/y rotation edges weighted by quarter turns."""
    moves = [(phase, q) for phase in (AXIS_X, AXIS_Y) for q in (1, 2, 3)]
    dist = {0: 0}
    heap = [(0, 0)]
    while heap:
        d, g = heapq.heappop(heap)
        if d > dist[g]:
            continue
        for phase, q in moves:
            h = TABLE.index_of(make_rotation(phase, q * math.pi / 2) @ TABLE[g].unitary)
            if d + q < dist.get(h, math.inf):
                dist[h] = d + q
                heapq.heappush(heap, (d + q, h))
    return dist


@pytest.mark.parametrize("policy", POLICIES)
def test_every_schedule_implements_its_clifford(policy):
    assert verify_decomposition(TABLE, policy)


@pytest.mark.parametrize("policy", POLICIES)
def test_physical_propagation_matches(policy):
    # driving the schedule with the calibrated Rabi rate reproduces the gate
    rabi = rabi_from_t_half_pi(REFERENCE_T_HALF_PI)
    for e, s in zip(TABLE.elements, schedules(REFERENCE_T_HALF_PI, REFERENCE_IDLE, policy)):
        u = np.eye(2, dtype=complex)
        for p in s.pulses:
            u = pulse_propagator(rabi, 0.0, p.axis_phase, p.duration) @ u
        assert same_up_to_phase(u, e.unitary, tol=1e-10)


@pytest.mark.parametrize("policy", POLICIES)
def test_only_xy_pulses_and_short_words(policy):
    for s in schedules(REFERENCE_T_HALF_PI, REFERENCE_IDLE, policy):
        assert len(s.pulses) <= 3
        for p in s.pulses:
            assert p.axis_phase in (AXIS_X, AXIS_Y)
            assert round(p.angle / (math.pi / 2)) in (1, 2, 3)


def test_identity_is_idle_only():
    s = decompose(0, REFERENCE_T_HALF_PI)
    assert s.pulses == () and s.total_duration == REFERENCE_IDLE


def test_min_duration_matches_shortest_path():
    dist = shortest_quarter_costs()
    assert len(dist) == 24
    for i, s in enumerate(schedules(1.0, 0.0, "min_duration")):
        assert round(s.total_angle / (math.pi / 2)) == dist[i]


def test_min_pulses_uses_fewest_pulses():
    quarters = {s.word: len(s.pulses) for s in schedules(1.0, 0.0, "min_pulses")}
    counts = np.bincount(list(quarters.values()), minlength=4)
    # identity, six single rotations, the rest need two or three
    assert counts[0] == 1 and counts[1] == 6
    assert counts.sum() == 24


@pytest.mark.parametrize(
    "policy,quarters", [("min_pulses", 78), ("min_duration", 74)]
)
def test_mean_duration_frozen(policy, quarters):
    mean = mean_clifford_duration(TABLE, REFERENCE_T_HALF_PI, REFERENCE_IDLE, policy)
    assert mean == pytest.approx(REFERENCE_IDLE + quarters / 24 * REFERENCE_T_HALF_PI, rel=1e-12)


@pytest.mark.parametrize("policy", POLICIES)
def test_mean_duration_is_linear(policy):
    a = mean_clifford_duration(TABLE, 10e-6, 2e-6, policy)
    b = mean_clifford_duration(TABLE, 20e-6, 2e-6, policy)
    c = mean_clifford_duration(TABLE, 10e-6, 5e-6, policy)
    assert b - 2e-6 == pytest.approx(2 * (a - 2e-6), rel=1e-12)
    assert c - a == pytest.approx(3e-6, rel=1e-9)


def test_pulse_durations_scale_with_angle():
    for s in schedules(REFERENCE_T_HALF_PI, REFERENCE_IDLE):
        for p in s.pulses:
            assert p.duration == pytest.approx(p.angle / (math.pi / 2) * REFERENCE_T_HALF_PI)


@pytest.mark.parametrize("bad", [0.0, -1e-6])
def test_invalid_durations(bad):
    with pytest.raises(ValueError):
        decompose(1, bad)
    with pytest.raises(ValueError):
        mean_clifford_duration(TABLE, bad, REFERENCE_IDLE)
    with pytest.raises(ValueError):
        decompose(1, REFERENCE_T_HALF_PI, idle=-1e-6)


def test_unknown_policy():
    with pytest.raises(ValueError):
        schedules(REFERENCE_T_HALF_PI, REFERENCE_IDLE, "fastest")


def test_rabi_from_t_half_pi():
    assert rabi_from_t_half_pi(REFERENCE_T_HALF_PI) * REFERENCE_T_HALF_PI == pytest.approx(math.pi / 2)


def test_export_csv(tmp_path):
    path = tmp_path / "dec.csv"
    export_decomposition_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "clifford,word,n_pulses,pulse_time_s,total_s"
    assert len(lines) == 25
    totals = [float(line.split(",")[-1]) for line in lines[1:]]
    assert np.mean(totals) == pytest.approx(mean_clifford_duration(TABLE, REFERENCE_T_HALF_PI, REFERENCE_IDLE))
