"""Experiment configuration: file format, presets, validation, hashing.

The on-disk format is plain ``key = value`` lines under ``[section]``
headers.  Parsing is strict: unknown sections or keys are errors, and a
malformed value reports the key, the line number, and the expected
type.  Serialization emits every field in a fixed order so that the
canonical text (and hence the config hash) is reproducible.
"""

from __future__ import annotations

import hashlib
import logging
import math
import re
from dataclasses import dataclass, fields, replace

import numpy as np

logger = logging.getLogger(__name__)

PRESET_NAMES = (
    "thm1_rate",
    "thm2_h2_rate",
    "thm51_rate",
    "energy_identity",
    "layer_profile",
    "initial_layer_decay",
    "custom",
)

# presets whose grids must resolve the O(eps) wall layer
LAYER_PRESETS = ("thm2_h2_rate", "thm51_rate", "layer_profile")

# presets that sweep eps and write sweep.csv / report.json
RATE_PRESETS = ("thm1_rate", "thm2_h2_rate", "thm51_rate", "custom")


class ConfigError(ValueError):
    """Raised for unparseable or inconsistent experiment configs."""


_NUM = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_TRACE_RE = re.compile(
    rf"^\s*({_NUM})\s*(?:\+\s*({_NUM})\s*\*\s*(cos|sin)\s*\(\s*(\d+)\s*\*\s*pi\s*\*\s*x\s*\)\s*)?$"
)


def parse_trace(text: str) -> tuple[float, float, str, int]:
    """Parse a wall-trace expression into (const, amplitude, kind, mode).

    Accepted forms are a bare constant like ``2.0`` or a single low
    Fourier mode like ``2.0 + 0.5*cos(2*pi*x)``.  The mode multiplier
    must be even so the trace is periodic on the unit torus.
    """
    m = _TRACE_RE.match(text)
    if m is None:
        raise ConfigError(
            f"expected a constant or 'C + A*cos(k*pi*x)' trace, got {text!r}"
        )
    const = float(m.group(1))
    if m.group(2) is None:
        return const, 0.0, "", 0
    amp = float(m.group(2))
    kind = m.group(3)
    mode = int(m.group(4))
    if mode % 2 != 0:
        raise ConfigError(
            f"trace mode {mode} is odd; only even multiples of pi are periodic on the torus"
        )
    return const, amp, kind, mode


def format_trace(spec: tuple[float, float, str, int]) -> str:
    const, amp, kind, mode = spec
    if kind == "":
        return repr(float(const))
    return f"{float(const)!r} + {float(amp)!r}*{kind}({int(mode)}*pi*x)"


def evaluate_trace(text: str, x: np.ndarray, d: int) -> np.ndarray:
    """Evaluate a trace expression on the periodic x nodes."""
    const, amp, kind, mode = parse_trace(text)
    if kind == "" or amp == 0.0:
        return np.full_like(np.asarray(x, dtype=float), const)
    if d == 1:
        raise ConfigError("boundary traces must be constant when d = 1")
    fn = np.cos if kind == "cos" else np.sin
    return const + amp * fn(mode * math.pi * np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat, picklable description of one experiment.

    Everything a run needs is in here: physical parameters, wall data
    as trace expressions, grid and time discretization, the eps sweep,
    and output plumbing.  Fixture shapes shared by all presets: the
    limit initial concentration is the linear interpolant of the wall
    values plus ``ic_bump * sin(pi y)``, and the finite-eps run starts
    from that plus ``ic_eps_amp * eps * sin(pi y)`` (charge-paired, so
    rho(0) = 0 bitwise).  ``rho0_amp`` scales the seed charge of the
    initial-layer preset and is ignored elsewhere.
    """

    preset: str = "custom"
    # [params]
    z1: float = 1.0
    z2: float = -1.0
    D1: float = 2.0
    D2: float = 1.0
    nu: float = 1.0
    eps: float = 0.125
    ic_bump: float = 0.5
    ic_eps_amp: float = 0.25
    rho0_amp: float = 1.0
    # [boundary] wall traces, row order (y=0, y=1)
    gamma1_lower: str = "2.0"
    gamma1_upper: str = "2.0"
    w_lower: str = "0.0"
    w_upper: str = "0.25"
    # [grid]
    d: int = 1
    nx: int = 1
    ny: int = 129
    # [time]
    dt: float = 1e-3
    t_end: float = 0.02
    save_every: int = 2
    # [sweep]
    eps_list: tuple[float, ...] = (0.125, 0.0625, 0.03125)
    # [output]
    output_dir: str = "out"
    seed: int = 0
    strict: bool = False

    def validate(self) -> "ExperimentConfig":
        if self.preset not in PRESET_NAMES:
            raise ConfigError(
                f"unknown preset {self.preset!r}; valid presets: {', '.join(PRESET_NAMES)}"
            )
        if self.z1 <= 0.0:
            raise ConfigError(f"z1 must be positive, got {self.z1}")
        if self.z2 >= 0.0:
            raise ConfigError(f"z2 must be negative, got {self.z2}")
        if not self.D1 >= self.D2 > 0.0:
            raise ConfigError(f"diffusivities must satisfy D1 >= D2 > 0, got ({self.D1}, {self.D2})")
        if self.nu <= 0.0:
            raise ConfigError(f"nu must be positive, got {self.nu}")
        if self.eps <= 0.0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if self.d not in (1, 2):
            raise ConfigError(f"d must be 1 or 2, got {self.d}")
        if self.d == 1 and self.nx != 1:
            raise ConfigError(f"nx must be 1 when d = 1, got {self.nx}")
        if self.d == 2 and (self.nx < 4 or self.nx & (self.nx - 1)):
            raise ConfigError(f"nx must be a power of two >= 4 when d = 2, got {self.nx}")
        if self.ny != 0 and self.ny < 9:
            raise ConfigError(f"ny must be at least 9, got {self.ny}")
        if self.ny == 0 and self.preset not in LAYER_PRESETS:
            raise ConfigError(f"ny = 0 (auto grading) is only valid for presets {LAYER_PRESETS}")
        if self.dt <= 0.0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.t_end <= 0.0:
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if self.save_every < 1:
            raise ConfigError(f"save_every must be >= 1, got {self.save_every}")
        if len(self.eps_list) == 0:
            raise ConfigError("eps_list must not be empty")
        if any(e <= 0.0 for e in self.eps_list):
            raise ConfigError(f"eps_list entries must be positive, got {self.eps_list}")
        if any(b >= a for a, b in zip(self.eps_list, self.eps_list[1:])):
            raise ConfigError(f"eps_list must be strictly decreasing, got {self.eps_list}")
        if self.preset in LAYER_PRESETS and self.ny != 0:
            need = 8.0 / min(self.eps_list)
            if self.ny < need:
                raise ConfigError(
                    f"layer presets require ny >= 8/eps_min = {need:.0f}, got ny={self.ny}"
                )
        for key in ("gamma1_lower", "gamma1_upper", "w_lower", "w_upper"):
            text = getattr(self, key)
            try:
                const, amp, kind, mode = parse_trace(text)
            except ConfigError as exc:
                raise ConfigError(f"{key}: {exc}") from exc
            if self.d == 1 and kind != "":
                raise ConfigError(f"{key}: boundary traces must be constant when d = 1")
            if key.startswith("gamma") and const - abs(amp) <= 0.0:
                raise ConfigError(f"{key}: concentration trace must stay positive, got {text!r}")
        return self

    def canonical(self) -> str:
        """Round-trippable text form with every field explicit."""
        return serialize_config(self)

    def hash(self) -> str:
        # output_dir is plumbing, not identity: the same experiment written
        # to two directories must carry the same hash
        fixed = replace(self, output_dir="out")
        return hashlib.sha256(fixed.canonical().encode()).hexdigest()[:12]


# section -> key -> (attribute, type tag, converter)
def _float(v: str) -> float:
    return float(v)


def _int(v: str) -> int:
    if not re.fullmatch(r"[+-]?\d+", v.strip()):
        raise ValueError(v)
    return int(v)


def _bool(v: str) -> bool:
    if v.strip() not in ("true", "false"):
        raise ValueError(v)
    return v.strip() == "true"


def _float_list(v: str) -> tuple[float, ...]:
    parts = [p.strip() for p in v.split(",") if p.strip()]
    if not parts:
        raise ValueError(v)
    return tuple(float(p) for p in parts)


def _trace(v: str) -> str:
    return format_trace(parse_trace(v))  # canonicalize early, errors surface here


def _str(v: str) -> str:
    return v.strip()


def _preset(v: str) -> str:
    v = v.strip()
    if v not in PRESET_NAMES:
        raise ValueError(v)
    return v


_SCHEMA: dict[str, dict[str, tuple[str, str, object]]] = {
    "params": {
        "z1": ("z1", "float", _float),
        "z2": ("z2", "float", _float),
        "D1": ("D1", "float", _float),
        "D2": ("D2", "float", _float),
        "nu": ("nu", "float", _float),
        "eps": ("eps", "float", _float),
        "ic_bump": ("ic_bump", "float", _float),
        "ic_eps_amp": ("ic_eps_amp", "float", _float),
        "rho0_amp": ("rho0_amp", "float", _float),
    },
    "boundary": {
        "gamma1_lower": ("gamma1_lower", "trace expression", _trace),
        "gamma1_upper": ("gamma1_upper", "trace expression", _trace),
        "w_lower": ("w_lower", "trace expression", _trace),
        "w_upper": ("w_upper", "trace expression", _trace),
    },
    "grid": {
        "d": ("d", "int", _int),
        "nx": ("nx", "int", _int),
        "ny": ("ny", "int", _int),
    },
    "time": {
        "dt": ("dt", "float", _float),
        "t_end": ("t_end", "float", _float),
        "save_every": ("save_every", "int", _int),
    },
    "sweep": {
        "preset": ("preset", f"one of {PRESET_NAMES}", _preset),
        "eps_list": ("eps_list", "comma-separated floats", _float_list),
    },
    "output": {
        "output_dir": ("output_dir", "string", _str),
        "seed": ("seed", "int", _int),
        "strict": ("strict", "bool (true|false)", _bool),
    },
}

_SECTION_OF = {attr: sec for sec, keys in _SCHEMA.items() for _, (attr, _, _) in keys.items()}


def preset_defaults(preset: str) -> ExperimentConfig:
    """The full fixture each preset runs when the file sets nothing else."""
    if preset not in PRESET_NAMES:
        raise ConfigError(
            f"unknown preset {preset!r}; valid presets: {', '.join(PRESET_NAMES)}"
        )
    base = ExperimentConfig(preset=preset)
    table = {
        "custom": {},
        "thm1_rate": dict(
            ny=2048, dt=5e-4, t_end=0.1, save_every=4,
            gamma1_lower="2.0", gamma1_upper="2.0", w_lower="0.0", w_upper="0.5",
            ic_bump=0.5, ic_eps_amp=0.25,
            eps_list=(0.125, 0.0625, 0.03125, 0.015625, 0.0078125),
        ),
        "thm51_rate": dict(
            ny=0, dt=5e-4, t_end=0.05, save_every=2,
            gamma1_lower="2.0", gamma1_upper="4.0", w_lower="0.0", w_upper="0.5",
            ic_bump=0.0, ic_eps_amp=0.0,
            eps_list=(0.125, 0.0625, 0.03125, 0.015625),
        ),
        "thm2_h2_rate": dict(
            ny=0, dt=5e-4, t_end=0.05, save_every=2,
            gamma1_lower="2.0", gamma1_upper="4.0", w_lower="0.0", w_upper="0.5",
            ic_bump=0.0, ic_eps_amp=0.0,
            eps_list=(0.125, 0.0625, 0.03125, 0.015625),
        ),
        "layer_profile": dict(
            ny=0, dt=5e-4, t_end=0.02, save_every=8,
            gamma1_lower="2.0", gamma1_upper="4.0", w_lower="0.0", w_upper="0.5",
            ic_bump=0.0, ic_eps_amp=0.0,
            eps_list=(0.0625, 0.03125, 0.015625),
        ),
        "energy_identity": dict(
            ny=257, dt=1e-3, t_end=0.2, save_every=1, eps=0.125,
            gamma1_lower="2.0", gamma1_upper="2.0", w_lower="0.0", w_upper="0.5",
            ic_bump=0.5, ic_eps_amp=0.0, eps_list=(0.125,),
        ),
        "initial_layer_decay": dict(
            ny=257, dt=0.0025, t_end=4.0, save_every=4, eps=0.125,
            gamma1_lower="2.0", gamma1_upper="2.0", w_lower="0.0", w_upper="0.0",
            ic_bump=0.5, rho0_amp=1.0, eps_list=(0.125,),
        ),
    }
    return replace(base, **table[preset])


def _scan_lines(text: str):
    """Yield (line_number, section, key, value) for every assignment."""
    section = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        hash_at = line.find(" #")
        if hash_at >= 0:
            line = line[:hash_at].rstrip()
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(
                    f"line {n}: unknown section [{section}]; valid: {', '.join(_SCHEMA)}"
                )
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {raw.rstrip()!r}")
        if section is None:
            raise ConfigError(f"line {n}: key before any [section] header")
        key, _, value = line.partition("=")
        yield n, section, key.strip(), value.strip()


def parse_config_text(text: str) -> ExperimentConfig:
    entries = list(_scan_lines(text))

    preset = "custom"
    for n, sec, key, value in entries:
        if sec == "sweep" and key == "preset":
            try:
                preset = _preset(value)
            except ValueError:
                raise ConfigError(
                    f"line {n}: preset: expected one of {PRESET_NAMES}, got {value!r}"
                ) from None

    cfg = preset_defaults(preset)
    seen: dict[str, int] = {}
    overrides: dict[str, object] = {}
    for n, sec, key, value in entries:
        keys = _SCHEMA[sec]
        if key not in keys:
            raise ConfigError(f"line {n}: unknown key {key!r} in section [{sec}]")
        attr, tag, conv = keys[key]
        if attr in seen:
            raise ConfigError(f"line {n}: duplicate key {key!r} (first set on line {seen[attr]})")
        seen[attr] = n
        try:
            overrides[attr] = conv(value)
        except (ValueError, ConfigError):
            raise ConfigError(f"line {n}: {key}: expected {tag}, got {value!r}") from None
    cfg = replace(cfg, **overrides)

    try:
        return cfg.validate()
    except ConfigError as exc:
        raise ConfigError(f"invalid config: {exc}") from None


def parse_config(path) -> ExperimentConfig:
    """Parse and validate an experiment config file."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        return parse_config_text(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def serialize_config(cfg: ExperimentConfig) -> str:
    """Emit the full config in section order; parses back to an equal config."""
    fmt: dict[type, object] = {float: lambda v: repr(float(v)), int: str, str: str}
    out = []
    for section, keys in _SCHEMA.items():
        out.append(f"[{section}]")
        for key, (attr, _, _) in keys.items():
            v = getattr(cfg, attr)
            if isinstance(v, bool):
                out.append(f"{key} = {'true' if v else 'false'}")
            elif isinstance(v, tuple):
                out.append(f"{key} = {', '.join(repr(float(e)) for e in v)}")
            else:
                out.append(f"{key} = {fmt[type(v)](v)}")
        out.append("")
    return "\n".join(out)


def apply_overrides(cfg: ExperimentConfig, *, preset: str | None = None,
                    eps_list: tuple[float, ...] | None = None,
                    output_dir: str | None = None,
                    strict: bool | None = None) -> ExperimentConfig:
    """Command-line overrides, applied after the file and re-validated.

    Changing the preset re-bases onto that preset's defaults; explicit
    file values are not tracked through a preset switch, so the switch
    is only allowed when the rest of the config is still the old
    preset's defaults.
    """
    if preset is not None and preset != cfg.preset:
        old_defaults = preset_defaults(cfg.preset)
        if cfg != old_defaults:
            raise ConfigError(
                "cannot override the preset of a config that customizes other keys; "
                "set preset in the file instead"
            )
        cfg = preset_defaults(preset)
    changes: dict[str, object] = {}
    if eps_list is not None:
        changes["eps_list"] = tuple(float(e) for e in eps_list)
    if output_dir is not None:
        changes["output_dir"] = output_dir
    if strict is not None:
        changes["strict"] = strict
    if changes:
        cfg = replace(cfg, **changes)
    return cfg.validate()
