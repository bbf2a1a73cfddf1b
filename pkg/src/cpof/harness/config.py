"""Experiment configuration and its flat ``key = value`` file format.

One key per line, ``#`` starts a comment, blank lines are ignored. Keys are
the field names of :class:`ExperimentConfig`; unknown keys are rejected.
Lists are comma separated, ``inf`` is accepted for reals and ``auto``
stands for an unset optional value::

    side = 128
    dictionary = target
    rho_grid = 1, 4, 16, 64
    snr_db = inf
"""

from dataclasses import dataclass, fields, replace
import math
from typing import Optional

from ..errors import ParameterError
from ..xforms import BasisKind, is_power_of_two

__all__ = ["ExperimentConfig", "ConfigError", "parse_config", "load_config", "format_config"]


class ConfigError(ParameterError):
    """Malformed configuration text; ``line`` is 1-based (0 when unknown)."""

    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a detection-probability curve.

    Scene family: ``objects`` are pasted at random non-overlapping positions;
    with ``random_count=(lo, hi)`` a uniform number of objects in that range
    is drawn instead, each with a label chosen uniformly from ``objects``.
    Only the ground-truth objects whose label is in ``dictionary`` have to be
    found; with ``count_known`` their number is given to the detector.

    Residual target of the solver: ``tau`` fixes the l1 radius; otherwise
    ``sigma`` is used when given, else ``sqrt(m) * noise_std`` for noisy runs
    and the same rule evaluated at ``noiseless_floor_db`` for noiseless ones.
    """

    side: int = 128
    background: str = "textured"
    background_level: float = 50.0
    texture_amplitude: float = 10.0
    correlation_length: float = 3.0
    target_length: int = 20
    target_beam: int = 7
    objects: tuple = ("target", "decoy")
    random_count: Optional[tuple] = None
    dictionary: tuple = ("target",)
    basis: BasisKind = BasisKind.WALSH_HADAMARD
    mode: str = "pof"
    rho_grid: tuple = (1.0, 4.0, 16.0, 64.0)
    snr_db: float = math.inf
    trials_per_point: int = 1000
    base_seed: int = 0
    radius: float = 5.0
    exclusion_radius: Optional[float] = None
    count_known: bool = True
    min_score_ratio: float = 0.5
    tau: Optional[float] = None
    sigma: Optional[float] = None
    noiseless_floor_db: float = 20.0
    sigma_tol: float = 1e-2
    max_iter: int = 500
    binary_differential: bool = False
    workers: int = 1

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("basis", BasisKind.parse(self.basis))
        set_("objects", tuple(self.objects))
        set_("dictionary", tuple(self.dictionary))
        set_("rho_grid", tuple(float(r) for r in self.rho_grid))
        if self.random_count is not None:
            set_("random_count", tuple(int(c) for c in self.random_count))
        self.validate()

    def validate(self) -> None:
        if not is_power_of_two(self.side):
            raise ParameterError(f"side must be a power of two, got {self.side}")
        if self.background not in ("textured", "flat"):
            raise ParameterError("background must be 'textured' or 'flat'")
        if self.mode not in ("pof", "ppc"):
            raise ParameterError("mode must be 'pof' or 'ppc'")
        if not self.objects or not self.dictionary:
            raise ParameterError("objects and dictionary must be non-empty")
        if len(set(self.dictionary)) != len(self.dictionary):
            raise ParameterError("dictionary labels must be unique")
        if not set(self.objects) & set(self.dictionary):
            raise ParameterError("no scene object is in the dictionary")
        if self.random_count is not None:
            if len(self.random_count) != 2 or not 1 <= self.random_count[0] <= self.random_count[1]:
                raise ParameterError("random_count must be 'lo, hi' with 1 <= lo <= hi")
        if not self.rho_grid or any(not r >= 1 for r in self.rho_grid):
            raise ParameterError("rho_grid values must be >= 1")
        if any(self.side * self.side / r < 1 for r in self.rho_grid):
            raise ParameterError("rho_grid value leaves no measurement")
        if self.trials_per_point < 1:
            raise ParameterError("trials_per_point must be >= 1")
        if self.workers < 1:
            raise ParameterError("workers must be >= 1")
        if not self.radius >= 0:
            raise ParameterError("radius must be non-negative")
        if self.tau is not None and not self.tau >= 0:
            raise ParameterError("tau must be non-negative")
        if self.sigma is not None and not self.sigma >= 0:
            raise ParameterError("sigma must be non-negative")
        if self.binary_differential and self.basis is not BasisKind.WALSH_HADAMARD:
            raise ParameterError("binary_differential needs the wh basis")
        if self.binary_differential and self.mode == "ppc":
            raise ParameterError("binary_differential cannot measure a whitened scene")

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _real(text):
    return float(text)


def _optional(conv):
    def parse(text):
        return None if text.lower() in ("auto", "none", "") else conv(text)
    return parse


def _list(conv):
    def parse(text):
        items = [t.strip() for t in text.split(",")]
        if any(not t for t in items):
            raise ValueError("empty list item")
        return tuple(conv(t) for t in items)
    return parse


def _pair(text):
    values = _list(int)(text.replace("-", ","))
    if len(values) == 1:
        values = values * 2
    return values


_PARSERS = {
    "side": int,
    "background": str,
    "background_level": _real,
    "texture_amplitude": _real,
    "correlation_length": _real,
    "target_length": int,
    "target_beam": int,
    "objects": _list(str),
    "random_count": _optional(_pair),
    "dictionary": _list(str),
    "basis": BasisKind.parse,
    "mode": str,
    "rho_grid": _list(_real),
    "snr_db": _real,
    "trials_per_point": int,
    "base_seed": int,
    "radius": _real,
    "exclusion_radius": _optional(_real),
    "count_known": _bool,
    "min_score_ratio": _real,
    "tau": _optional(_real),
    "sigma": _optional(_real),
    "noiseless_floor_db": _real,
    "sigma_tol": _real,
    "max_iter": int,
    "binary_differential": _bool,
    "workers": int,
}
assert set(_PARSERS) == {f.name for f in fields(ExperimentConfig)}


def parse_config(text: str, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Build a config from ``key = value`` lines on top of ``base``."""
    values = {}
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first on line {seen[key]})", lineno)
        seen[key] = lineno
        try:
            values[key] = _PARSERS[key](value)
        except (ValueError, ParameterError) as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno) from None
    try:
        return replace(base, **values) if base is not None else ExperimentConfig(**values)
    except ParameterError as exc:
        # attribute the failure to the first offending key we can name
        line = next((seen[k] for k in seen if k in str(exc)), 0)
        raise ConfigError(str(exc), line) from None


def load_config(path, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base)


def _format_value(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, BasisKind):
        return value.value
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else ("inf" if value > 0 else "-inf")
    return str(value)


def format_config(config: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config`: every field, one per line."""
    return "".join(f"{f.name} = {_format_value(getattr(config, f.name))}\n"
                   for f in fields(ExperimentConfig))
