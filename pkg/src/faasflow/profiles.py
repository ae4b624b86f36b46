"""Engine capability profiles and calibration profile files.

A profile file is plain ``key = value`` text with optional ``[section]``
headers and ``#`` comments. Latency keys live at the top level (or under
``[latency]``); engine capability overrides and engine-specific knobs live
under ``[engine]``; function definitions for the CLI under ``[functions]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .runtime import LatencyModel

ENGINE_IDS = ("asf", "composer", "sequences", "adf", "suspend", "inline")

LATENCY_KEYS = (
    "invoke_latency_ms",
    "queue_latency_ms",
    "log_write_ms",
    "per_kb_transfer_ms",
    "active_ack_bypass",
    "cliff_threshold_bytes",
    "cliff_delay_ms",
)


@dataclass
class EngineProfile:
    """Capability limits of one orchestration architecture."""

    name: str
    max_state_bytes: int | None = None
    max_actions: int | None = None
    supports_parallel: bool = True
    composition_is_function: bool = True
    transition_rate_limit: tuple[int, int] | None = None  # (steady per second, burst)
    compression_threshold_bytes: int | None = None
    compression_ratio: float = 0.5


_DEFAULT_PROFILES = {
    "asf": EngineProfile(
        name="ClientScheduler",
        max_state_bytes=32_768,
        max_actions=None,
        supports_parallel=True,
        composition_is_function=False,
        transition_rate_limit=(1000, 5000),
    ),
    "composer": EngineProfile(
        name="ReactiveConductor",
        max_state_bytes=5_242_880,
        max_actions=50,
        supports_parallel=False,
        composition_is_function=True,
    ),
    "sequences": EngineProfile(
        name="ReactiveConductor",
        max_state_bytes=5_242_880,
        max_actions=50,
        supports_parallel=False,
        composition_is_function=True,
    ),
    "adf": EngineProfile(
        name="EventSourcing",
        max_state_bytes=None,
        supports_parallel=True,
        composition_is_function=True,
        compression_threshold_bytes=61_440,
    ),
    "suspend": EngineProfile(
        name="SuspendOrchestrator",
        max_state_bytes=None,
        supports_parallel=True,
        composition_is_function=True,
    ),
    "inline": EngineProfile(
        name="InlineOrchestrator",
        max_state_bytes=None,
        supports_parallel=True,
        composition_is_function=True,
    ),
}


def default_profile(engine_id: str) -> EngineProfile:
    try:
        return replace(_DEFAULT_PROFILES[engine_id])
    except KeyError:
        raise ConfigError(f"unknown engine {engine_id!r}; expected one of {', '.join(ENGINE_IDS)}") from None


@dataclass
class CalibrationProfile:
    """Latency model plus engine overrides loaded from one profile file."""

    name: str = ""
    engine_id: str | None = None
    latency: LatencyModel = field(default_factory=LatencyModel)
    engine_overrides: dict[str, Any] = field(default_factory=dict)
    extras: dict[str, Any] = field(default_factory=dict)
    functions: dict[str, str] = field(default_factory=dict)
    provenance: str = ""

    def engine_profile(self, engine_id: str | None = None) -> EngineProfile:
        """Engine defaults with this profile's overrides applied."""
        engine_id = engine_id or self.engine_id
        if engine_id is None:
            raise ConfigError("profile does not name an engine")
        prof = default_profile(engine_id)
        ov = dict(self.engine_overrides)
        steady = ov.pop("transition_rate_steady", None)
        burst = ov.pop("transition_rate_burst", None)
        if steady is not None or burst is not None:
            base = prof.transition_rate_limit or (1000, 5000)
            prof.transition_rate_limit = (
                int(steady if steady is not None else base[0]),
                int(burst if burst is not None else base[1]),
            )
        for key, value in ov.items():
            if not hasattr(prof, key):
                raise ConfigError(f"unknown engine profile key {key!r}")
            setattr(prof, key, value)
        return prof


def parse_config_text(text: str) -> dict[str, dict[str, Any]]:
    """Parse sectioned key=value text into {section: {key: value}}.

    Keys before any section header land in section "".
    """
    sections: dict[str, dict[str, Any]] = {"": {}}
    current = ""
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw_line!r}")
        key, _, value = line.partition("=")
        sections[current][key.strip()] = _coerce(value.split("#", 1)[0].strip())
    return sections


def _coerce(value: str) -> Any:
    low = value.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", "unbounded"):
        return None
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        pass
    return value


def latency_from_mapping(mapping: dict[str, Any]) -> LatencyModel:
    model = LatencyModel()
    for key, value in mapping.items():
        if key not in LATENCY_KEYS:
            raise ConfigError(f"unknown latency key {key!r}")
        if key == "cliff_threshold_bytes":
            model.cliff_threshold_bytes = None if value is None else int(value)
        elif key == "active_ack_bypass":
            model.active_ack_bypass = bool(value)
        elif key == "per_kb_transfer_ms":
            model.per_kb_transfer_ms = float(value)
        else:
            setattr(model, key, int(value))
    return model


def load_profile_text(text: str, name: str = "") -> CalibrationProfile:
    sections = parse_config_text(text)
    top = dict(sections.get("", {}))
    latency_map = {k: top.pop(k) for k in list(top) if k in LATENCY_KEYS}
    latency_map.update(sections.get("latency", {}))
    profile = CalibrationProfile(
        name=str(top.pop("name", name)),
        engine_id=top.pop("engine", None),
        latency=latency_from_mapping(latency_map),
        provenance=str(top.pop("provenance", "")),
        functions={k: str(v) for k, v in sections.get("functions", {}).items()},
    )
    if top:
        raise ConfigError(f"unknown top-level keys: {', '.join(sorted(top))}")
    engine_section = dict(sections.get("engine", {}))
    profile_keys = {
        "max_state_bytes", "max_actions", "supports_parallel",
        "composition_is_function", "transition_rate_steady",
        "transition_rate_burst", "compression_threshold_bytes", "compression_ratio",
    }
    for key, value in engine_section.items():
        if key in profile_keys:
            profile.engine_overrides[key] = value
        else:
            profile.extras[key] = value
    return profile


def load_profile(path) -> CalibrationProfile:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read profile {path}: {err}") from None
    profile = load_profile_text(text, name=path.stem)
    return profile


def builtin_profile(name: str) -> CalibrationProfile:
    """Load one of the calibration profiles shipped with the package."""
    ref = resources.files("faasflow").joinpath(f"profiles/{name}.cfg")
    if not ref.is_file():
        raise ConfigError(f"no built-in profile named {name!r}")
    return load_profile_text(ref.read_text(encoding="utf-8"), name=name)


#: profile file shipped for each engine id
DEFAULT_PROFILE_FOR_ENGINE = {
    "asf": "asf",
    "composer": "composer",
    "sequences": "ibmseq",
    "adf": "adf",
    "suspend": "suspend",
    "inline": "inline",
}


def profile_for_engine(engine_id: str) -> CalibrationProfile:
    if engine_id not in DEFAULT_PROFILE_FOR_ENGINE:
        raise ConfigError(f"unknown engine {engine_id!r}")
    return builtin_profile(DEFAULT_PROFILE_FOR_ENGINE[engine_id])
