"""Run configuration: defaults, YAML run files and their validation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any

import chardet
import yaml

from .errors import InvalidConfigError, UsageError
from .normalizer import QuantizationConfig
from .partitioner import CostWeights
from .resources import Compression, Sharing, SynapseCostModel

logger = logging.getLogger(__name__)

_MIN_CONFIDENCE = 0.7


class Subcommand(str, Enum):
    """Pipeline stages reachable from the command line."""

    COMPILE = "compile"
    RUN = "run"
    SWEEP = "sweep"


class SweepKind(str, Enum):
    """Kinds of parameter sweeps."""

    TIME = "time"
    SCALING = "scaling"
    DEPTHWISE = "depthwise"


_PATH_KEYS = ("model", "blob", "calib", "inputs", "labels", "image", "out")
_MAPPABLE_SHARING = (Sharing.ON, Sharing.OFF)


@dataclass(frozen=True)
class RunConfig:
    """Everything one invocation of the pipeline needs.

    Parameters
    ----------
    subcommand
        Which stage to run.
    model, blob
        Network manifest and weight blob.
    calib
        Calibration batch; when given the network is normalized first.
    inputs, labels
        Labeled input set for ``run`` and the time sweep.
    image
        A compiled deployment image to run instead of compiling the model.
    chips
        Chips available to placement.
    beam
        Beam width of the partitioner.
    alpha
        Weights of the cost terms.
    sharing
        Axon and synapse sharing mode.
    compression
        Synapse encoding scheme.
    timesteps
        Steps to simulate; the network's own value when omitted.
    seed
        Seed of every random choice.
    out
        Output directory.
    percentile, weight_bits, bias_bits
        Normalization settings.
    soft_reset
        Use soft-reset neurons when normalizing.
    kind, widths, input_size, t_values
        Sweep settings.
    workers
        Threads that run simulations and sweep points.

    """

    subcommand: Subcommand = Subcommand.COMPILE
    model: Path | None = None
    blob: Path | None = None
    calib: Path | None = None
    inputs: Path | None = None
    labels: Path | None = None
    image: Path | None = None
    chips: int = 1
    beam: int = 4
    alpha: CostWeights = field(default_factory=CostWeights)
    sharing: Sharing = Sharing.ON
    compression: Compression = Compression.AUTO
    timesteps: int | None = None
    seed: int = 0
    out: Path = Path("out")
    percentile: float = 99.9
    weight_bits: int = 8
    bias_bits: int = 13
    soft_reset: bool = False
    kind: SweepKind = SweepKind.TIME
    widths: tuple[int, ...] = (8, 16, 32)
    input_size: int = 16
    t_values: tuple[int, ...] | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if self.chips < 1:
            msg = f"'chips' must be at least 1, got {self.chips}."
            raise InvalidConfigError(msg)
        if self.workers < 1:
            msg = f"'workers' must be at least 1, got {self.workers}."
            raise InvalidConfigError(msg)
        if self.beam < 1:
            msg = f"'beam' must be at least 1, got {self.beam}."
            raise InvalidConfigError(msg)
        if self.timesteps is not None and self.timesteps < 0:
            msg = f"'timesteps' must be non-negative, got {self.timesteps}."
            raise InvalidConfigError(msg)
        if self.sharing not in _MAPPABLE_SHARING:
            msg = f"'sharing' must be 'on' or 'off', got '{self.sharing.value}'."
            raise InvalidConfigError(msg)
        if self.input_size < 1 or any(w < 1 for w in self.widths):
            msg = "'input_size' and every entry of 'widths' must be positive."
            raise InvalidConfigError(msg)
        if self.t_values is not None and any(t < 0 for t in self.t_values):
            msg = f"'t_values' must be non-negative, got {list(self.t_values)}."
            raise InvalidConfigError(msg)

    @property
    def quantization(self) -> QuantizationConfig:
        """Normalization settings."""
        return QuantizationConfig(
            weight_bits=self.weight_bits,
            bias_bits=self.bias_bits,
            percentile=self.percentile,
        )

    @property
    def cost_model(self) -> SynapseCostModel:
        """Synapse cost model with the configured encoding scheme."""
        return SynapseCostModel(scheme=self.compression)

    def require(self, *keys: str) -> tuple[Path, ...]:
        """The given path settings, which must be set and exist."""
        paths = []
        for key in keys:
            path = getattr(self, key)
            if path is None:
                msg = f"`{self.subcommand.value}` needs '--{key}'."
                raise UsageError(msg)
            if not path.exists():
                msg = f"The {key} file does not exist: {path}"
                raise UsageError(msg)
            paths.append(path)
        return tuple(paths)


ALLOWED_KEYS = tuple(f.name for f in fields(RunConfig) if f.name != "subcommand")


def _int_list(key: str, value: Any) -> tuple[int, ...]:
    items = value.split(",") if isinstance(value, str) else value
    if not isinstance(items, list | tuple):
        msg = f"'{key}' must be a list of integers, got {value!r}."
        raise InvalidConfigError(msg)
    try:
        return tuple(int(item) for item in items)
    except (TypeError, ValueError) as e:
        msg = f"'{key}' must be a list of integers, got {value!r}."
        raise InvalidConfigError(msg) from e


def _choice(key: str, value: Any, enum: type[Enum]) -> Enum:
    try:
        return enum(value)
    except ValueError as e:
        allowed = ", ".join(member.value for member in enum)
        msg = f"Invalid value {value!r} for '{key}'. Must be one of: {allowed}"
        raise InvalidConfigError(msg) from e


def _coerce(key: str, value: Any, base: Path | None) -> Any:  # noqa: PLR0911
    match key:
        case _ if key in _PATH_KEYS:
            path = Path(value).expanduser()
            return base / path if base is not None and not path.is_absolute() else path
        case "alpha":
            text = ",".join(str(v) for v in value) if isinstance(value, list) else str(value)
            try:
                return CostWeights.parse(text)
            except UsageError as e:
                raise InvalidConfigError(str(e)) from e
        case "sharing":
            if isinstance(value, bool):
                value = "on" if value else "off"
            return _choice(key, value, Sharing)
        case "compression":
            return _choice(key, value, Compression)
        case "kind":
            return _choice(key, value, SweepKind)
        case "widths" | "t_values":
            return _int_list(key, value)
        case "soft_reset":
            if not isinstance(value, bool):
                msg = f"'soft_reset' must be true or false, got {value!r}."
                raise InvalidConfigError(msg)
            return value
        case "percentile":
            try:
                return float(value)
            except (TypeError, ValueError) as e:
                msg = f"'percentile' must be a number, got {value!r}."
                raise InvalidConfigError(msg) from e
    if isinstance(value, bool) or not isinstance(value, int):
        msg = f"'{key}' must be an integer, got {value!r}."
        raise InvalidConfigError(msg)
    return value


def _validate_config_data(data: Any) -> None:
    if not isinstance(data, dict):
        msg = f"A run configuration must be a mapping, got {type(data).__name__}."
        raise InvalidConfigError(msg)
    for key in data:
        if key not in ALLOWED_KEYS:
            allowed = ", ".join(ALLOWED_KEYS)
            msg = f"Invalid key '{key}' in run configuration. Allowed keys are: {allowed}"
            raise InvalidConfigError(msg)


def _detect_encoding(file_path: Path) -> str:
    """Detects the encoding of a file using chardet, defaulting to UTF-8."""
    result = chardet.detect(file_path.read_bytes())
    encoding = result["encoding"]
    confidence = result["confidence"]
    if confidence < _MIN_CONFIDENCE:
        logger.warning(
            "Low confidence (%.2f) in detected encoding (%s) for %s, using UTF-8",
            confidence,
            encoding,
            file_path,
        )
        return "utf-8"
    return encoding or "utf-8"


def load_config_file(yaml_file: str | Path) -> dict[str, Any]:
    """Read a YAML run file into validated settings.

    Relative paths in the file resolve against the file's directory.
    """
    yaml_file = Path(yaml_file)
    try:
        encoding = _detect_encoding(yaml_file)
        with yaml_file.open(encoding=encoding) as f:
            data = yaml.safe_load(f)
    except FileNotFoundError as e:
        msg = f"Run configuration not found: {yaml_file}"
        raise InvalidConfigError(msg) from e
    except yaml.YAMLError as e:
        msg = f"Error parsing YAML file {yaml_file}: {e}"
        raise InvalidConfigError(msg) from e
    data = {} if data is None else data
    _validate_config_data(data)
    base = yaml_file.parent
    return {key: _coerce(key, value, base) for key, value in data.items()}


def build_config(
    subcommand: str | Subcommand,
    overrides: dict[str, Any] | None = None,
    config_file: str | Path | None = None,
) -> RunConfig:
    """Combine a YAML run file with explicit settings; explicit settings win.

    ``None`` values in ``overrides`` are treated as unset.
    """
    settings = load_config_file(config_file) if config_file is not None else {}
    explicit = {key: value for key, value in (overrides or {}).items() if value is not None}
    _validate_config_data(explicit)
    settings.update({key: _coerce(key, value, None) for key, value in explicit.items()})
    config = RunConfig(subcommand=Subcommand(subcommand), **settings)
    logger.debug("Run configuration: %s", config)
    return config

