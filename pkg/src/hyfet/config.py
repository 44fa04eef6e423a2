"""Run configuration: INI files with one section per concern.

Sections and their keys (all optional; defaults shown by ``hyfet train
--help``):

- ``[manifold]``: ``model`` (hyperboloid | poincare), ``curvature`` (K > 0)
- ``[encoder]``: ``char_hidden``, ``context_hidden``, ``position_hidden``,
  ``word_embedding_dim``, ``char_embedding_dim``, ``position_embedding_dim``,
  ``window``
- ``[graph]``: ``delta``, ``variant`` (random | plain | attentive),
  ``universe`` (train_only | transductive), ``vector_dim``
- ``[trainer]``: ``lr``, ``epochs``, ``batch_size``, ``seed``, ``layers``,
  ``layer_dim`` (0 = same width as the encoder output), ``basepoint``
  (origin | self_point)
- ``[score]``: ``space`` (tangent | ambient), ``inner``
  (euclidean | minkowski)

Unknown sections or keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import configparser
import dataclasses
import enum
import io
from dataclasses import dataclass, field

from hyfet.encoder import EncoderConfig
from hyfet.graphbuild import GraphVariant
from hyfet.hyperlayer import Basepoint
from hyfet.manifolds import Model
from hyfet.typer import AmbientInner, ScoreSpace


class ConfigError(ValueError):
    """Invalid or malformed run configuration."""


class Universe(str, enum.Enum):
    TRAIN_ONLY = "train_only"
    TRANSDUCTIVE = "transductive"


@dataclass(frozen=True)
class ManifoldConfig:
    model: Model = Model.HYPERBOLOID
    curvature: float = 1.0

    def __post_init__(self):
        if not self.curvature > 0:
            raise ConfigError(f"curvature must be positive, got {self.curvature}")


@dataclass(frozen=True)
class GraphConfig:
    delta: float = 0.5
    variant: GraphVariant = GraphVariant.ATTENTIVE
    universe: Universe = Universe.TRANSDUCTIVE
    vector_dim: int = 64

    def __post_init__(self):
        if not (-1.0 <= self.delta <= 1.0):
            raise ConfigError(f"delta is a cosine threshold in [-1, 1], got {self.delta}")
        if self.vector_dim < 1:
            raise ConfigError("vector_dim must be positive")


@dataclass(frozen=True)
class TrainerConfig:
    lr: float = 0.001
    epochs: int = 20
    batch_size: int = 256
    seed: int = 0
    layers: int = 2
    layer_dim: int = 0
    basepoint: Basepoint = Basepoint.ORIGIN

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.layers < 0:
            raise ConfigError("layers must be >= 0")
        if self.layer_dim < 0:
            raise ConfigError("layer_dim must be >= 0 (0 = encoder output width)")


@dataclass(frozen=True)
class ScoreConfig:
    space: ScoreSpace = ScoreSpace.TANGENT
    inner: AmbientInner = AmbientInner.EUCLIDEAN


@dataclass(frozen=True)
class Config:
    manifold: ManifoldConfig = field(default_factory=ManifoldConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    score: ScoreConfig = field(default_factory=ScoreConfig)

    def __post_init__(self):
        if self.score.inner is AmbientInner.MINKOWSKI:
            if self.score.space is not ScoreSpace.AMBIENT:
                raise ConfigError("inner=minkowski requires space=ambient")
            if self.manifold.model is not Model.HYPERBOLOID:
                raise ConfigError("inner=minkowski requires model=hyperboloid")

    def replace(self, section: str, **kwargs) -> "Config":
        """A copy with one section's fields overridden."""
        current = getattr(self, section)
        return dataclasses.replace(self, **{section: dataclasses.replace(current, **kwargs)})


_SECTIONS = {
    "manifold": ManifoldConfig,
    "encoder": EncoderConfig,
    "graph": GraphConfig,
    "trainer": TrainerConfig,
    "score": ScoreConfig,
}

_ENUMS = {
    "model": Model,
    "variant": GraphVariant,
    "universe": Universe,
    "basepoint": Basepoint,
    "space": ScoreSpace,
    "inner": AmbientInner,
}


def _convert(section: str, key: str, text: str, target_type):
    if key in _ENUMS:
        enum_cls = _ENUMS[key]
        try:
            return enum_cls(text)
        except ValueError:
            valid = ", ".join(m.value for m in enum_cls)
            raise ConfigError(
                f"[{section}] {key} = {text!r}: expected one of {valid}"
            ) from None
    try:
        if target_type is int:
            return int(text)
        if target_type is float:
            return float(text)
    except ValueError:
        raise ConfigError(
            f"[{section}] {key} = {text!r}: expected {target_type.__name__}"
        ) from None
    return text


def load_config(path) -> Config:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    return _from_parser(parser, str(path))


def parse_config(text: str) -> Config:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return _from_parser(parser, "<string>")


def _from_parser(parser: configparser.ConfigParser, origin: str) -> Config:
    kwargs = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(
                f"{origin}: unknown section [{section}]; expected one of "
                + ", ".join(_SECTIONS)
            )
        cls = _SECTIONS[section]
        fields = {f.name: f.type for f in dataclasses.fields(cls)}
        types = {f.name: type(getattr(cls(), f.name)) for f in dataclasses.fields(cls)}
        values = {}
        for key, text in parser.items(section):
            if key not in fields:
                raise ConfigError(
                    f"{origin}: unknown key {key!r} in [{section}]; expected one of "
                    + ", ".join(fields)
                )
            values[key] = _convert(section, key, text, types[key])
        kwargs[section] = cls(**values)
    return Config(**kwargs)


def dump_config(config: Config) -> str:
    """Render the resolved configuration as INI text (stable key order)."""
    parser = configparser.ConfigParser()
    for section, cls in _SECTIONS.items():
        parser.add_section(section)
        value = getattr(config, section)
        for f in dataclasses.fields(cls):
            raw = getattr(value, f.name)
            out = raw.value if isinstance(raw, enum.Enum) else repr(raw) if isinstance(raw, float) else str(raw)
            parser.set(section, f.name, out)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
