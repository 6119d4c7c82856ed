"""Scenario files: TOML with dotted sections, strict key checking, defaults.

Schema (every key optional unless noted)::

    [shape]        preset (required), n = 128, file, radius, center, a, b, eps, m
    [kernel]       variant = "biot_savart", strength = 1.0,
                   fourier = {c1sin, c1cos, c2sin, c2cos} (angular_fourier; also
                   written as a [kernel.fourier] table or kernel.fourier.c1sin = [...]),
                   members = [{weight, variant, strength, fourier}] (linear_combination)
    [evolution]    dt, t_final (both required for simulate), record_every = 1,
                   snapshot_every = 0, b_collapse = 1e-3, max_speed = inf,
                   cfl = 0.25, resample_ratio = 0
    [diagnostics]  gamma = 0.5, probe_spacings = 3.0, tstar_angles = 4096,
                   tstar_boundary_points = 4096, commutator_level = 1.0,
                   commutator_stride = 4, commutator_tol = 5e-2,
                   whitney_depth = 12, whitney_refine = 4
    [output]       directory = "out", plots = false
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import kernel as kern
from .curve import CurveError, preset_shape, read_curve_csv

SHAPES = ("circle", "ellipse", "perturbed_circle", "file")


class ConfigError(ValueError):
    """Invalid scenario file; ``key`` names the offending dotted key."""

    def __init__(self, message, key=None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


@dataclass
class ShapeConfig:
    preset: str = "circle"
    n: int = 128
    file: str | None = None
    radius: float | None = None
    center: list | None = None
    a: float | None = None
    b: float | None = None
    eps: float | None = None
    m: int | None = None


@dataclass
class KernelConfig:
    variant: str = "biot_savart"
    strength: float = 1.0
    fourier: dict = field(default_factory=dict)
    members: list = field(default_factory=list)


@dataclass
class EvolutionConfig:
    dt: float | None = None
    t_final: float | None = None
    record_every: int = 1
    snapshot_every: int = 0
    b_collapse: float = 1e-3
    max_speed: float = math.inf
    cfl: float = 0.25
    resample_ratio: float = 0.0


@dataclass
class DiagnosticsConfig:
    gamma: float = 0.5
    probe_spacings: float = 3.0
    tstar_angles: int = 4096
    tstar_boundary_points: int = 4096
    commutator_level: float = 1.0
    commutator_stride: int = 4
    commutator_tol: float = 5e-2
    whitney_depth: int = 12
    whitney_refine: int = 4


@dataclass
class OutputConfig:
    directory: str = "out"
    plots: bool = False


@dataclass
class ScenarioConfig:
    shape: ShapeConfig = field(default_factory=ShapeConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    source: str | None = None

    def echo(self):
        """Plain dict of every setting (defaults included), JSON-serializable."""
        out = asdict(self)
        out.pop("source")
        if math.isinf(out["evolution"]["max_speed"]):
            out["evolution"]["max_speed"] = "inf"
        return out


SECTIONS = {
    "shape": ShapeConfig,
    "kernel": KernelConfig,
    "evolution": EvolutionConfig,
    "diagnostics": DiagnosticsConfig,
    "output": OutputConfig,
}
_MEMBER_KEYS = {"weight", "variant", "strength", "fourier", "members"}


def _coerce(key, value, default):
    """Check the TOML value type against the field default's type."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", key)
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", key)
        return value
    if isinstance(default, float) or default is None and isinstance(value, (int, float)):
        if isinstance(value, bool):
            raise ConfigError(f"expected a number, got {value!r}", key)
        if isinstance(value, str) and value.lower() == "inf":
            return math.inf
        if not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", key)
        return float(value)
    return value


def from_dict(data, source=None):
    """Validate a parsed mapping and fill defaults."""
    if not isinstance(data, dict):
        raise ConfigError("top level must be a table")
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s) {sorted(unknown)}; expected {sorted(SECTIONS)}")
    parts = {}
    for name, cls in SECTIONS.items():
        block = data.get(name, {})
        if not isinstance(block, dict):
            raise ConfigError("must be a table", name)
        obj = cls()
        for key, value in block.items():
            dotted = f"{name}.{key}"
            if not hasattr(obj, key):
                raise ConfigError("unknown key", dotted)
            setattr(obj, key, _coerce(dotted, value, getattr(obj, key)))
        parts[name] = obj
    cfg = ScenarioConfig(**parts, source=source)
    validate(cfg)
    return cfg


def parse_config(path):
    """Read and validate a TOML scenario file."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return from_dict(data, source=str(path))


def _positive(value, key, allow_none=False):
    if value is None and allow_none:
        return
    if value is None or not value > 0:
        raise ConfigError(f"must be positive, got {value!r}", key)


def validate(cfg):
    s = cfg.shape
    if s.preset not in SHAPES:
        raise ConfigError(f"unknown preset {s.preset!r}; expected one of {SHAPES}", "shape.preset")
    if s.n < 16 or s.n % 2:
        raise ConfigError(f"must be even and >= 16, got {s.n}", "shape.n")
    if s.preset == "file" and not s.file:
        raise ConfigError("required when preset = 'file'", "shape.file")
    allowed = {
        "circle": {"radius", "center"},
        "ellipse": {"a", "b", "center"},
        "perturbed_circle": {"eps", "m", "center"},
        "file": {"file"},
    }[s.preset]
    for key in ("radius", "center", "a", "b", "eps", "m", "file"):
        if getattr(s, key) is not None and key not in allowed:
            raise ConfigError(f"not a parameter of preset {s.preset!r}", f"shape.{key}")
    _positive(s.radius, "shape.radius", allow_none=True)
    _positive(s.a, "shape.a", allow_none=True)
    _positive(s.b, "shape.b", allow_none=True)

    k = cfg.kernel
    if k.variant not in kern.VARIANTS:
        raise ConfigError(f"unknown variant {k.variant!r}; expected one of {kern.VARIANTS}", "kernel.variant")
    if k.variant == "linear_combination" and not k.members:
        raise ConfigError("linear_combination needs at least one member", "kernel.members")
    _check_kernel_block(asdict(k), "kernel")
    try:
        build_kernel(k)
    except kern.KernelError as exc:
        raise ConfigError(str(exc), "kernel") from exc

    e = cfg.evolution
    _positive(e.dt, "evolution.dt", allow_none=True)
    _positive(e.t_final, "evolution.t_final", allow_none=True)
    if e.record_every < 1:
        raise ConfigError("must be >= 1", "evolution.record_every")
    if e.snapshot_every < 0:
        raise ConfigError("must be >= 0", "evolution.snapshot_every")
    if not 0.0 < e.b_collapse < 1.0:
        raise ConfigError("must lie in (0, 1)", "evolution.b_collapse")
    _positive(e.max_speed, "evolution.max_speed")
    if not 0.0 < e.cfl <= 1.0:
        raise ConfigError("must lie in (0, 1]", "evolution.cfl")
    if e.resample_ratio and e.resample_ratio <= 1.0:
        raise ConfigError("must be 0 (disabled) or > 1", "evolution.resample_ratio")

    d = cfg.diagnostics
    if not 0.0 < d.gamma < 1.0:
        raise ConfigError(f"must lie in (0, 1), got {d.gamma}", "diagnostics.gamma")
    for key in ("probe_spacings", "tstar_angles", "tstar_boundary_points", "commutator_level",
                "commutator_stride", "commutator_tol", "whitney_depth", "whitney_refine"):
        _positive(getattr(d, key), f"diagnostics.{key}")
    return cfg


def _check_kernel_block(block, where):
    four = block.get("fourier") or {}
    if not isinstance(four, dict):
        raise ConfigError("must be a table", f"{where}.fourier")
    for key, value in four.items():
        if key not in kern.FOURIER_KEYS:
            raise ConfigError(f"unknown key; expected one of {kern.FOURIER_KEYS}", f"{where}.fourier.{key}")
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError("expected a list of numbers", f"{where}.fourier.{key}")
    if four and block.get("variant") != "angular_fourier":
        raise ConfigError("only used by variant 'angular_fourier'", f"{where}.fourier")
    for i, mem in enumerate(block.get("members") or []):
        name = f"{where}.members[{i}]"
        if not isinstance(mem, dict):
            raise ConfigError("must be a table", name)
        bad = set(mem) - _MEMBER_KEYS
        if bad:
            raise ConfigError(f"unknown key(s) {sorted(bad)}", name)
        _check_kernel_block(mem, name)


def require_evolution(cfg):
    e = cfg.evolution
    if e.dt is None or e.t_final is None:
        raise ConfigError("simulate needs evolution.dt and evolution.t_final", "evolution")
    n = round(e.t_final / e.dt)
    if not math.isclose(n * e.dt, e.t_final, rel_tol=1e-9):
        raise ConfigError("must be an integer multiple of evolution.dt", "evolution.t_final")


def _kernel_from_block(block):
    variant = block.get("variant", "biot_savart")
    strength = float(block.get("strength", 1.0))
    if variant == "angular_fourier":
        four = {key: list(v) for key, v in (block.get("fourier") or {}).items()}
        return kern.KernelSpec("angular_fourier", strength=strength, fourier=four)
    if variant == "linear_combination":
        members = tuple((float(m.get("weight", 1.0)), _kernel_from_block(m)) for m in block.get("members", []))
        return kern.KernelSpec("linear_combination", strength=strength, members=members)
    return kern.KernelSpec(variant, strength=strength)


def build_kernel(kcfg):
    return _kernel_from_block(asdict(kcfg))


def build_curve(scfg, gamma):
    if scfg.preset == "file":
        try:
            return read_curve_csv(scfg.file, gamma=gamma)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load curve: {exc}", "shape.file") from exc
    params = {k: getattr(scfg, k) for k in ("radius", "center", "a", "b", "eps", "m") if getattr(scfg, k) is not None}
    try:
        return preset_shape(scfg.preset, n=scfg.n, gamma=gamma, **params)
    except CurveError as exc:
        raise ConfigError(str(exc), "shape") from exc


def parse_kernel_expression(text):
    """'biot_savart', 'grad_N' or weighted sums like '0.5*biot_savart+0.5*grad_N'."""
    terms = []
    for raw in text.replace(" ", "").split("+"):
        if not raw:
            raise ConfigError(f"malformed kernel expression {text!r}", "kernel")
        weight, _, name = raw.rpartition("*")
        if name not in ("biot_savart", "grad_N"):
            raise ConfigError(f"unknown kernel {name!r} in {text!r}", "kernel")
        try:
            w = float(weight) if weight else 1.0
        except ValueError as exc:
            raise ConfigError(f"bad weight {weight!r} in {text!r}", "kernel") from exc
        terms.append((w, kern.KernelSpec(name)))
    if len(terms) == 1 and terms[0][0] == 1.0:
        return terms[0][1]
    return kern.combination(*terms)
