"""Two-level density-matrix algebra: rotations, pulse propagators, dephasing.

States are plain ``(2, 2)`` complex arrays. Most functions broadcast over
leading batch dimensions so the simulator can propagate many shots at once.
"""

from __future__ import annotations

import numpy as np

SIGMA_I = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)

KET_ZERO = np.array([1, 0], dtype=complex)
KET_ONE = np.array([0, 1], dtype=complex)

STATE_TOL = 1e-12
UNITARY_TOL = 1e-10


class InvalidParameterError(ValueError):
    """Raised when a physical parameter lies outside its allowed range."""


def projector(ket: np.ndarray) -> np.ndarray:
    ket = np.asarray(ket, dtype=complex)
    ket = ket / np.linalg.norm(ket)
    return np.outer(ket, ket.conj())


def ground_state() -> np.ndarray:
    """Return |0><0|, the optically pumped starting state."""
    return projector(KET_ZERO)


def maximally_mixed() -> np.ndarray:
    return SIGMA_I / 2


def is_valid_state(rho: np.ndarray, tol: float = STATE_TOL) -> bool:
    rho = np.asarray(rho)
    if rho.shape != (2, 2):
        return False
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        return False
    if abs(np.trace(rho) - 1) > tol:
        return False
    return bool(np.all(np.linalg.eigvalsh((rho + rho.conj().T) / 2) >= -tol))


def is_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    u = np.asarray(u)
    return u.shape == (2, 2) and np.max(np.abs(u @ u.conj().T - SIGMA_I)) <= tol


def su2(theta, nx, ny, nz) -> np.ndarray:
    """exp(-i theta/2 n.sigma) for a unit vector n, evaluated in closed form.

    All arguments broadcast; the result has shape ``broadcast + (2, 2)``.
    """
    theta, nx, ny, nz = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (theta, nx, ny, nz))
    )
    c = np.cos(theta / 2)
    s = np.sin(theta / 2)
    u = np.empty(theta.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = c - 1j * s * nz
    u[..., 0, 1] = -1j * s * (nx - 1j * ny)
    u[..., 1, 0] = -1j * s * (nx + 1j * ny)
    u[..., 1, 1] = c + 1j * s * nz
    return u


def make_rotation(axis_phase, angle) -> np.ndarray:
    """Rotation by ``angle`` about the equatorial axis at azimuth ``axis_phase``.

    Phase 0 is R_x, phase pi/2 is R_y.
    """
    axis_phase = np.asarray(axis_phase, dtype=float)
    return su2(angle, np.cos(axis_phase), np.sin(axis_phase), 0.0)


def pulse_propagator(rabi, detuning, axis_phase, duration) -> np.ndarray:
    """Rotating-frame propagator of a rectangular pulse.

    Generator is ``(rabi cos(phi) sx + rabi sin(phi) sy + detuning sz) / 2``
    with ``rabi`` and ``detuning`` in rad/s. Broadcasts over all arguments,
    which lets one call cover every shot of a batch.
    """
    rabi, detuning, axis_phase, duration = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (rabi, detuning, axis_phase, duration))
    )
    if np.any(duration < 0):
        raise InvalidParameterError("pulse duration must be non-negative")
    gen = np.hypot(rabi, detuning)
    safe = np.where(gen > 0, gen, 1.0)
    nx = np.where(gen > 0, rabi * np.cos(axis_phase) / safe, 0.0)
    ny = np.where(gen > 0, rabi * np.sin(axis_phase) / safe, 0.0)
    nz = np.where(gen > 0, detuning / safe, 1.0)
    return su2(gen * duration, nx, ny, nz)


def free_precession(detuning, duration) -> np.ndarray:
    return pulse_propagator(0.0, detuning, 0.0, duration)


def apply(u: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Return ``u rho u^dagger`` (batched over leading axes)."""
    return u @ rho @ np.conj(np.swapaxes(u, -1, -2))


def coherence_factor(duration, t_coh) -> np.ndarray:
    t_coh = np.asarray(t_coh, dtype=float)
    if np.any(t_coh <= 0):
        raise InvalidParameterError("coherence time must be positive")
    duration = np.asarray(duration, dtype=float)
    if np.any(duration < 0):
        raise InvalidParameterError("duration must be non-negative")
    return np.exp(-duration / t_coh)


def scale_coherence(rho: np.ndarray, factor) -> np.ndarray:
    out = np.array(rho, dtype=complex, copy=True)
    factor = np.asarray(factor)
    out[..., 0, 1] *= factor
    out[..., 1, 0] *= factor
    return out


def dephase(rho: np.ndarray, duration, t_coh) -> np.ndarray:
    """Markovian pure dephasing: coherences decay as exp(-duration/t_coh)."""
    return scale_coherence(rho, coherence_factor(duration, t_coh))


def depolarize(rho: np.ndarray, shrink) -> np.ndarray:
    """Shrink the Bloch vector by ``shrink`` towards the maximally mixed state."""
    shrink = np.asarray(shrink, dtype=float)[..., None, None]
    return shrink * rho + (1 - shrink) * maximally_mixed()


def prob_zero(rho: np.ndarray) -> np.ndarray | float:
    p = np.real(np.asarray(rho)[..., 0, 0])
    p = np.clip(p, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def avg_gate_fidelity(u: np.ndarray, v: np.ndarray) -> float:
    """Average gate fidelity between two qubit unitaries, (|tr u^+ v|^2 + 2) / 6."""
    overlap = np.trace(np.conj(np.swapaxes(u, -1, -2)) @ v, axis1=-2, axis2=-1)
    return (np.abs(overlap) ** 2 + 2) / 6


def same_up_to_phase(u: np.ndarray, v: np.ndarray, tol: float = 1e-9) -> bool:
    return bool(abs(np.trace(np.conj(u).T @ v)) >= 2 - tol)


# Liouville (row-major vectorisation) representation, used to fold a whole
# pulse schedule into one 4x4 map per shot.

def unitary_superop(u: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> u rho u^+`` acting on row-major ``vec(rho)``."""
    u = np.asarray(u)
    return np.einsum("...ij,...kl->...ikjl", u, u.conj()).reshape(u.shape[:-2] + (4, 4))


def dephasing_superop(factor) -> np.ndarray:
    factor = np.asarray(factor, dtype=float)
    out = np.zeros(factor.shape + (4, 4), dtype=complex)
    out[..., 0, 0] = 1
    out[..., 1, 1] = factor
    out[..., 2, 2] = factor
    out[..., 3, 3] = 1
    return out


def depolarizing_superop(shrink: float) -> np.ndarray:
    ident = np.eye(2, dtype=complex).reshape(4)
    return shrink * np.eye(4, dtype=complex) + (1 - shrink) * np.outer(ident, ident) / 2


def vec(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho)
    return rho.reshape(rho.shape[:-2] + (4,))


def unvec(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    return v.reshape(v.shape[:-1] + (2, 2))
