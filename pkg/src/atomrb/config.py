"""Run configuration: a strict, versioned INI-style key/value file.

Every section and key is known in advance; anything else is an error, so a
typo in a noise parameter cannot silently fall back to a default.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from .engine import REFERENCE_LENGTHS, REFERENCE_SEQUENCES, REFERENCE_SHOTS, RBConfig
from .noise import (
    REFERENCE_T_CG,
    NoiseConfig,
    TrapDepthModel,
    DEFAULT_CURVATURE,
    REFERENCE_T2S,
    load_trap_table,
)
from .pulse import REFERENCE_IDLE, REFERENCE_T_HALF_PI

FORMAT_VERSION = 1
KINDS = ("rb", "ramsey", "echo", "calibrate", "budget", "sweep")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RBSection:
    lengths: tuple[int, ...] = REFERENCE_LENGTHS
    sequences_per_length: int = REFERENCE_SEQUENCES
    shots_per_sequence: int = REFERENCE_SHOTS
    t_half_pi: float = REFERENCE_T_HALF_PI
    idle: float = REFERENCE_IDLE
    rabi_hz: Optional[float] = None
    t_cg_override: Optional[float] = None
    policy: str = "min_pulses"


@dataclass(frozen=True)
class TrapSection:
    t2s_magic: float = REFERENCE_T2S
    curvature: float = DEFAULT_CURVATURE
    table: Optional[str] = None
    ratios: tuple[float, ...] = (1.0, 1.1, 1.2, 1.3, 1.4)


@dataclass(frozen=True)
class RamseySection:
    detuning_hz: float = 17.0
    delay_start: float = 0.0
    delay_stop: float = 0.12
    n_delays: int = 61
    shots: int = 50
    envelope_t2r: Optional[float] = None


@dataclass(frozen=True)
class EchoSection:
    t2s: float = REFERENCE_T2S
    delay_start: float = 0.0
    delay_stop: float = 3.0
    n_delays: int = 31
    shots: int = 200


@dataclass(frozen=True)
class CalibrateSection:
    n_pulses: int = 100
    true_t_half_pi: float = REFERENCE_T_HALF_PI
    scan_center: float = REFERENCE_T_HALF_PI
    scan_halfwidth: float = 0.38e-6
    n_durations: int = 39
    shots: int = 50


@dataclass(frozen=True)
class BudgetSection:
    t_cg: Optional[float] = REFERENCE_T_CG
    measured_eps: Optional[float] = None


@dataclass(frozen=True)
class RunConfig:
    kind: str = "rb"
    seed: int = 0
    out: Optional[str] = None
    rb: RBSection = field(default_factory=RBSection)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    trap: TrapSection = field(default_factory=TrapSection)
    ramsey: RamseySection = field(default_factory=RamseySection)
    echo: EchoSection = field(default_factory=EchoSection)
    calibrate: CalibrateSection = field(default_factory=CalibrateSection)
    budget: BudgetSection = field(default_factory=BudgetSection)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        # surfaces invalid RB settings before any run starts
        try:
            self.rb_config()
            self.trap_model()
        except (ValueError, OSError) as exc:
            raise ConfigError(str(exc)) from exc

    def rb_config(self, seed: int | None = None) -> RBConfig:
        s = self.rb
        return RBConfig(
            lengths=s.lengths,
            sequences_per_length=s.sequences_per_length,
            shots_per_sequence=s.shots_per_sequence,
            t_half_pi=s.t_half_pi,
            idle=s.idle,
            rabi_hz=s.rabi_hz,
            t_cg_override=s.t_cg_override,
            seed=self.seed if seed is None else seed,
            policy=s.policy,
        )

    def trap_model(self) -> TrapDepthModel:
        if self.trap.table:
            return load_trap_table(self.trap.table)
        return TrapDepthModel(t2s_magic=self.trap.t2s_magic, curvature=self.trap.curvature)

    def to_text(self, include_out: bool = True) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        run = {"format_version": str(FORMAT_VERSION), "kind": self.kind, "seed": str(self.seed)}
        if include_out and self.out is not None:
            run["out"] = self.out
        cp["run"] = run
        for name in _SECTIONS:
            section = getattr(self, name)
            cp[name] = {f.name: _format(getattr(section, f.name)) for f in fields(section)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue().rstrip("\n") + "\n"

    def header_lines(self) -> list[str]:
        """Config echo for output files. Leaves out the output directory."""
        return self.to_text(include_out=False).splitlines()


_SECTIONS = {
    "rb": RBSection,
    "noise": NoiseConfig,
    "trap": TrapSection,
    "ramsey": RamseySection,
    "echo": EchoSection,
    "calibrate": CalibrateSection,
    "budget": BudgetSection,
}


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return "inf" if math.isinf(value) else repr(value)
    return str(value)


def _annotation_kind(cls, name: str) -> str:
    return str({f.name: f.type for f in fields(cls)}[name])


def _parse_value(cls, name: str, raw: str):
    kind = _annotation_kind(cls, name)
    raw = raw.strip()
    optional = "Optional" in kind or "None" in kind
    if optional and raw.lower() == "none":
        return None
    try:
        if "tuple[int" in kind:
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if "tuple[float" in kind:
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if "int" in kind:
            return int(raw)
        if "float" in kind:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return raw


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc

    unknown = set(cp.sections()) - {"run", *_SECTIONS}
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    if "run" not in cp:
        raise ConfigError("missing [run] section")
    run = dict(cp["run"])
    extra = set(run) - {"format_version", "kind", "seed", "out"}
    if extra:
        raise ConfigError(f"unknown keys in [run]: {sorted(extra)}")
    version = run.get("format_version")
    if version is None or version.strip() != str(FORMAT_VERSION):
        raise ConfigError(f"format_version must be {FORMAT_VERSION}, got {version!r}")

    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name not in cp:
            continue
        allowed = {f.name for f in fields(cls)}
        values = dict(cp[name])
        bad = set(values) - allowed
        if bad:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
        parsed = {k: _parse_value(cls, k, v) for k, v in values.items()}
        try:
            kwargs[name] = cls(**parsed)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid [{name}] section: {exc}") from exc
    try:
        seed = int(run.get("seed", "0"))
    except ValueError as exc:
        raise ConfigError("seed must be an integer") from exc
    return RunConfig(kind=run.get("kind", "rb").strip(), seed=seed, out=run.get("out"), **kwargs)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})
