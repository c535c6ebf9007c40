"""Stochastic error models and the trap-depth coherence phenomenology."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from .qubit import InvalidParameterError

ResamplePolicy = Literal["per_shot", "per_sequence"]

REFERENCE_T2S = 1.72
REFERENCE_T2S_UNSTABILIZED = 1.13
REFERENCE_ETA = 1.30
REFERENCE_D_IF = 0.03
REFERENCE_DETUNING_RMS = 1.0  # Hz
REFERENCE_DETUNING_PP = 5.0  # Hz
REFERENCE_AREA_RMS = 0.0015
REFERENCE_T_CG = 75.73e-6

# Clifford twirling turns pure dephasing with coherence factor lam into a
# depolarizing channel with error per gate (1 - lam) / 3.
TWIRL_FACTOR = 3.0


@dataclass(frozen=True)
class NoiseConfig:
    detuning_rms: float = 0.0
    detuning_drift_pp: float = 0.0
    area_rms: float = 0.0
    t2s: float = math.inf
    eta: float = REFERENCE_ETA
    d_if: float = 0.0
    resample_policy: ResamplePolicy = "per_shot"

    def __post_init__(self):
        for name in ("detuning_rms", "detuning_drift_pp", "area_rms", "t2s", "eta", "d_if"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or math.isnan(value) or value < 0:
                raise InvalidParameterError(f"{name} must be a non-negative number, got {value!r}")
        if self.d_if > 1:
            raise InvalidParameterError("d_if must lie in [0, 1]")
        if math.isfinite(self.t2s) and (self.eta <= 0 or self.t2s <= 0):
            raise InvalidParameterError("finite t2s needs t2s > 0 and eta > 0")
        if self.resample_policy not in ("per_shot", "per_sequence"):
            raise InvalidParameterError(f"unknown resample_policy {self.resample_policy!r}")

    @classmethod
    def reference(cls, **overrides) -> "NoiseConfig":
        params = dict(
            detuning_rms=REFERENCE_DETUNING_RMS,
            detuning_drift_pp=REFERENCE_DETUNING_PP,
            area_rms=REFERENCE_AREA_RMS,
            t2s=REFERENCE_T2S,
            eta=REFERENCE_ETA,
            d_if=REFERENCE_D_IF,
        )
        params.update(overrides)
        return cls(**params)

    @classmethod
    def noiseless(cls) -> "NoiseConfig":
        return cls()

    @property
    def is_quiet(self) -> bool:
        return self.detuning_rms == 0 and self.area_rms == 0


@dataclass(frozen=True)
class ShotNoise:
    detuning: float = 0.0  # rad/s
    area_scale: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.detuning) and math.isfinite(self.area_scale)):
            raise InvalidParameterError("shot noise values must be finite")


def sample_shot_noise(cfg: NoiseConfig, rng: np.random.Generator) -> ShotNoise:
    """One quasi-static draw. Always consumes exactly two normals from ``rng``."""
    z = rng.standard_normal(2)
    return ShotNoise(
        detuning=float(2 * np.pi * cfg.detuning_rms * z[0]),
        area_scale=float(1 + cfg.area_rms * z[1]),
    )


def sample_shot_noise_batch(cfg: NoiseConfig, rng: np.random.Generator, n: int):
    """``n`` successive draws, identical to calling :func:`sample_shot_noise` n times."""
    z = rng.standard_normal((n, 2))
    return 2 * np.pi * cfg.detuning_rms * z[:, 0], 1 + cfg.area_rms * z[:, 1]


def coherence_time_rb(cfg: NoiseConfig) -> float:
    """Gate-relevant coherence time T_RB = eta * T_2s."""
    if not cfg.t2s > 0 or not cfg.eta > 0:
        raise InvalidParameterError("t2s and eta must be positive")
    return cfg.eta * cfg.t2s


def rb_dephasing_time(cfg: NoiseConfig) -> float:
    """Markovian coherence time used inside RB simulations.

    Chosen so that the Clifford-averaged error of one gate of length t is
    1 - exp(-t / T_RB) to first order, i.e. the dephasing-limited error model
    holds for the simulated decay.
    """
    if math.isinf(cfg.t2s):
        return math.inf
    return coherence_time_rb(cfg) / TWIRL_FACTOR


def dephasing_error_per_gate(t_cg: float, t2s: float, eta: float) -> float:
    if t_cg < 0 or t2s <= 0 or eta <= 0:
        raise InvalidParameterError("need t_cg >= 0, t2s > 0, eta > 0")
    return -math.expm1(-t_cg / (eta * t2s))


def apply_spam(p0_true, d_if: float):
    """Mix the ideal |0> probability with the SPAM depolarization ``d_if``."""
    p = np.asarray(p0_true, dtype=float)
    if not 0 <= d_if <= 1:
        raise InvalidParameterError("d_if must lie in [0, 1]")
    if np.any((p < 0) | (p > 1)):
        raise InvalidParameterError("p0_true must lie in [0, 1]")
    out = (1 - d_if) * p + d_if / 2
    return float(out) if out.ndim == 0 else out


# Curvature that takes the magic-point T_2s of 1.72 s down to ~0.6 s at
# U/U_m = 1.3. The true curve shape is not known; this is a smooth stand-in.
DEFAULT_CURVATURE = (REFERENCE_T2S / 0.6 - 1) / 0.3**2


@dataclass(frozen=True)
class TrapDepthModel:
    """T_2s as a function of trap depth relative to the magic depth.

    Either the Lorentzian-in-ratio form ``t2s_magic / (1 + curvature (r-1)^2)``
    or a monotone (PCHIP) interpolation through a user table whose peak sits
    at ``r = 1``.
    """

    t2s_magic: float = REFERENCE_T2S
    curvature: float = DEFAULT_CURVATURE
    table: Optional[tuple[tuple[float, float], ...]] = None
    _interp: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.table is None:
            if self.t2s_magic <= 0 or self.curvature <= 0:
                raise InvalidParameterError("t2s_magic and curvature must be positive")
            return
        pts = sorted((float(r), float(t)) for r, t in self.table)
        ratios = np.array([p[0] for p in pts])
        t2s = np.array([p[1] for p in pts])
        if len(pts) < 3 or np.any(np.diff(ratios) <= 0) or np.any(ratios <= 0):
            raise InvalidParameterError("trap table needs >= 3 distinct positive ratios")
        if not np.any(np.isclose(ratios, 1.0)):
            raise InvalidParameterError("trap table must contain the magic ratio 1")
        left, right = ratios <= 1, ratios >= 1
        if np.any(np.diff(t2s[left]) <= 0) or np.any(np.diff(t2s[right]) >= 0):
            raise InvalidParameterError("trap table must peak at ratio 1 and fall away from it")
        object.__setattr__(self, "table", tuple(pts))
        object.__setattr__(self, "t2s_magic", float(t2s[np.isclose(ratios, 1.0)][0]))
        object.__setattr__(self, "_interp", PchipInterpolator(ratios, t2s, extrapolate=False))

    def t2s(self, ratio: float) -> float:
        return t2s_of_depth(self, ratio)


def t2s_of_depth(model: TrapDepthModel, ratio: float) -> float:
    if not ratio > 0:
        raise InvalidParameterError("depth ratio must be positive")
    if model.table is None:
        return model.t2s_magic / (1 + model.curvature * (ratio - 1) ** 2)
    lo, hi = model.table[0][0], model.table[-1][0]
    if not lo <= ratio <= hi:
        raise InvalidParameterError(f"ratio {ratio} outside table range [{lo}, {hi}]")
    return float(model._interp(ratio))


def load_trap_table(path) -> TrapDepthModel:
    """Read a two-column ``ratio,t2s`` CSV (header optional, # comments allowed)."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].lstrip().startswith("#"):
                continue
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except ValueError:
                if rows:
                    raise
    return TrapDepthModel(table=tuple(rows))
