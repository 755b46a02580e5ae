"""Experiment configuration: a small brace-block text format.

Syntax, one item per line:

    # comment
    block {
      key value
      key value
    }

Blocks hold key/value leaves; values are typed by a fixed per-block
schema. Unknown blocks or keys are errors, as are duplicates: silent
misconfiguration is worse than a loud one.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

from .errors import ConfigError

_PHANTOM_KINDS = ("gaussian-bumps", "resolution-target")
_NOISE_MODELS = ("gaussian", "poisson", "none")
_POLICIES = ("background-noise", "explicit")
_PATH_KEYS = (
    "simulate_dir",
    "recon_dir",
    "preprocess_dir",
    "train_dir",
    "predict_dir",
    "analyze_dir",
)

@dataclass(frozen=True)
class GeometryBlock:
    rows: int
    cols: int
    pitch_led: float
    height: float
    wavelength: float
    center_row: int
    center_col: int


@dataclass(frozen=True)
class OpticsBlock:
    na_obj: float
    na_max: float
    n_detector: int
    n_hires: int
    pitch_detector: float


@dataclass(frozen=True)
class PhantomBlock:
    kind: str
    amplitude_lo: float
    amplitude_hi: float
    count: int = 8
    seed: int = 0


@dataclass(frozen=True)
class NoiseBlock:
    model: str = "none"
    level: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class SfpmBlock:
    epochs: int = 50
    step: float = 1.0
    order: str = "ascending-na"
    init: str = "upsampled-brightfield"


@dataclass(frozen=True)
class TrainBlock:
    lr: float = 1e-3
    epochs: int = 200
    batch_size: int = 16
    dropout_rate: float = 0.1
    seed: int = 0
    ensemble_size: int = 8
    patch: int = 16
    stride: int = 8


@dataclass(frozen=True)
class AnalysisBlock:
    policy: str = "background-noise"
    epsilon: float = 0.0
    target_p: float = 0.95
    delta_p: float = 0.04
    background_threshold: float = 0.1


@dataclass(frozen=True)
class PathsBlock:
    simulate_dir: str = ""
    recon_dir: str = ""
    preprocess_dir: str = ""
    train_dir: str = ""
    predict_dir: str = ""
    analyze_dir: str = ""


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: GeometryBlock | None = None
    optics: OpticsBlock | None = None
    phantom: PhantomBlock | None = None
    noise: NoiseBlock = NoiseBlock()
    sfpm: SfpmBlock = SfpmBlock()
    train: TrainBlock = TrainBlock()
    analysis: AnalysisBlock = AnalysisBlock()
    paths: PathsBlock = PathsBlock()


_BLOCK_TYPES = {
    "geometry": GeometryBlock,
    "optics": OpticsBlock,
    "phantom": PhantomBlock,
    "noise": NoiseBlock,
    "sfpm": SfpmBlock,
    "train": TrainBlock,
    "analysis": AnalysisBlock,
    "paths": PathsBlock,
}

_ENUMS = {
    ("phantom", "kind"): _PHANTOM_KINDS,
    ("noise", "model"): _NOISE_MODELS,
    ("analysis", "policy"): _POLICIES,
    ("sfpm", "order"): ("ascending-na", "raster"),
    ("sfpm", "init"): ("upsampled-brightfield", "flat"),
}


def parse_blocks(text: str) -> dict:
    """Raw nested dict of the brace-block syntax; values stay strings."""
    root: dict = {}
    stack = [("", root)]
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "}":
            if len(stack) == 1:
                raise ConfigError(f"line {lineno}: unmatched '}}'")
            stack.pop()
            continue
        if line.endswith("{"):
            name = line[:-1].strip()
            if not name:
                raise ConfigError(f"line {lineno}: block needs a name")
            scope = stack[-1][1]
            if name in scope:
                raise ConfigError(f"line {lineno}: duplicate block {name!r}")
            child: dict = {}
            scope[name] = child
            stack.append((name, child))
            continue
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise ConfigError(f"line {lineno}: expected 'key value', got {line!r}")
        key, value = parts
        scope = stack[-1][1]
        if key in scope:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        scope[key] = value
    if len(stack) != 1:
        raise ConfigError(f"unclosed block {stack[-1][0]!r}")
    return root


def _convert(block: str, key: str, kind: type, raw: str):
    enum = _ENUMS.get((block, key))
    if enum is not None:
        if raw not in enum:
            raise ConfigError(
                f"{block}.{key}: {raw!r} is not one of {', '.join(enum)}"
            )
        return raw
    if kind is str:
        return raw
    try:
        if kind is int:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"{block}.{key}: cannot read {raw!r} as {kind.__name__}")


_FIELD_TYPES = {"int": int, "float": float, "str": str}


def _build_block(name: str, raw: dict):
    import dataclasses

    cls = _BLOCK_TYPES[name]
    field_map = {f.name: f for f in fields(cls)}
    values = {}
    for key, value in raw.items():
        if isinstance(value, dict):
            raise ConfigError(f"{name}.{key}: nested blocks are not allowed here")
        if key not in field_map:
            raise ConfigError(f"unknown key {name}.{key}")
        values[key] = _convert(name, key, _FIELD_TYPES[field_map[key].type], value)
    for key, f in field_map.items():
        required = f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
        if key not in values and required:
            raise ConfigError(f"missing required key {name}.{key}")
    return cls(**values)


def parse_config(text: str) -> ExperimentConfig:
    raw = parse_blocks(text)
    blocks = {}
    for name, body in raw.items():
        if name not in _BLOCK_TYPES:
            raise ConfigError(f"unknown block {name!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"{name!r} must be a block, not a key/value pair")
        blocks[name] = _build_block(name, body)
    return ExperimentConfig(**blocks)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    return parse_config(text)


def canonical_text(cfg: ExperimentConfig) -> str:
    """Deterministic serialization used for hashing and manifests."""
    out = []
    for name in _BLOCK_TYPES:
        block = getattr(cfg, name)
        if block is None:
            continue
        out.append(f"{name} {{")
        for f in fields(block):
            value = getattr(block, f.name)
            if isinstance(value, str) and not value:
                continue  # empty path entries have no text form
            out.append(f"  {f.name} {value}")
        out.append("}")
    return "\n".join(out) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_text(cfg).encode("utf-8")).hexdigest()
