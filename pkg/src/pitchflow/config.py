"""Typed INI configuration for the command-line tools.

Flat key=value sections, parsed with the standard library.  Every key is
declared in a schema with its type and default; unknown sections or keys
are rejected by name so typos fail loudly instead of silently using a
default.  Paths in [data] resolve relative to the config file.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path

from .corpus import CorpusSpec, SpeakerSpec
from .model import ModelConfig, ModelError


class ConfigError(ValueError):
    pass


def _boolean(text):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_MODEL_KEYS = {
    "variant": str,
    "encoder_dim": int,
    "encoder_layers": int,
    "decoder_blocks": int,
    "decoder_hidden": int,
    "wn_layers": int,
    "kernel_size": int,
    "squeeze_ratio": int,
    "duration_flows": int,
    "duration_post_flows": int,
    "duration_filter": int,
    "pitch_blocks": int,
    "pitch_filter": int,
    "dds_depth": int,
    "spline_bins": int,
    "spline_bound": float,
    "pitch_padding": int,
    "init_seed": int,
}

_TRAINING_KEYS = {
    "batch_size": int,
    "steps": int,
    "peak_lr": float,
    "warmup_steps": int,
    "seed": int,
    "log_interval": int,
    "val_interval": int,
    "grad_clip": float,
}

_INFERENCE_KEYS = {"t_prior": float, "t_duration": float, "t_pitch": float}

_DATA_KEYS = {"train_manifest": str, "val_manifest": str, "ground_truth": str}

_CORPUS_KEYS = {
    "utterances_per_speaker": int,
    "alphabet": str,
    "seed": int,
    "blank_frames": int,
    "noise_amplitude": float,
    "words_min": int,
    "words_max": int,
    "word_length_min": int,
    "word_length_max": int,
    "validation_fraction": float,
}

_SPEAKER_KEYS = {
    "f0_hz": float,
    "log_f0_std": float,
    "duration_mean": int,
    "timbre_seed": int,
}


@dataclass(frozen=True)
class TrainingConfig:
    batch_size: int = 3
    steps: int = 2000
    peak_lr: float = 1e-3
    warmup_steps: int = 100
    seed: int = 0
    log_interval: int = 50
    val_interval: int = 200
    grad_clip: float = 5.0

    def __post_init__(self):
        if self.batch_size < 1 or self.steps < 1:
            raise ConfigError("batch_size and steps must be >= 1")
        if self.peak_lr <= 0:
            raise ConfigError("peak_lr must be positive")
        if not 0 <= self.warmup_steps <= self.steps:
            raise ConfigError("warmup_steps must lie in [0, steps]")


@dataclass(frozen=True)
class InferenceConfig:
    t_prior: float = 0.667
    t_duration: float = 0.8
    t_pitch: float = 0.8

    def __post_init__(self):
        for name in ("t_prior", "t_duration", "t_pitch"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")


@dataclass(frozen=True)
class DataConfig:
    train_manifest: Path
    val_manifest: Path
    ground_truth: Path = None


@dataclass(frozen=True)
class Config:
    model: ModelConfig = None
    training: TrainingConfig = None
    inference: InferenceConfig = None
    data: DataConfig = None
    corpus: CorpusSpec = None
    explicit: frozenset = frozenset()  # (section, key) pairs present in the file

    def require(self, *sections):
        for name in sections:
            if getattr(self, name) is None:
                raise ConfigError(f"config is missing the [{name}] section")
        return self


def _parse_section(parser, section, schema):
    values = {}
    for key in parser.options(section):
        if key not in schema:
            known = ", ".join(sorted(schema))
            raise ConfigError(
                f"unknown key {key!r} in section [{section}] (known keys: {known})")
        raw = parser.get(section, key)
        try:
            values[key] = schema[key](raw)
        except ValueError as exc:
            raise ConfigError(
                f"bad value for {key!r} in section [{section}]: {exc}") from exc
    return values


def _build_corpus_spec(corpus_values, speaker_sections):
    if not speaker_sections:
        raise ConfigError("a [corpus] section needs at least one [speaker <id>] section")
    speakers = []
    for name, values in speaker_sections:
        speaker_id = name[len("speaker"):].strip()
        if not speaker_id:
            raise ConfigError("speaker section header must name the speaker: [speaker <id>]")
        if "f0_hz" not in values:
            raise ConfigError(f"section [{name}] is missing the f0_hz key")
        speakers.append(SpeakerSpec(
            speaker_id=speaker_id,
            log_f0_mean=math.log(values["f0_hz"]),
            log_f0_std=values.get("log_f0_std", 0.1),
            duration_mean=values.get("duration_mean", 8),
            timbre_seed=values.get("timbre_seed", 0),
        ))
    kwargs = dict(corpus_values)
    words = (kwargs.pop("words_min", 1), kwargs.pop("words_max", 2))
    lengths = (kwargs.pop("word_length_min", 2), kwargs.pop("word_length_max", 4))
    if words[0] > words[1] or lengths[0] > lengths[1]:
        raise ConfigError("word count/length ranges must have min <= max")
    return CorpusSpec(speakers=tuple(speakers), words_range=words,
                      word_length_range=lengths, **kwargs)


# Pipeline-fixed dims are not part of the user schema but are still stored
# in checkpoints, where the full architecture must be reconstructible.
_MODEL_EXTRA_KEYS = {"vocab_size": int, "mel_channels": int, "speaker_dim": int}


def model_config_to_text(model_config):
    """Serialize a ModelConfig as a [model] section for checkpoint embedding."""
    lines = ["[model]"]
    for key in (*_MODEL_KEYS, *_MODEL_EXTRA_KEYS):
        lines.append(f"{key} = {getattr(model_config, key)}")
    return "\n".join(lines) + "\n"


def model_config_from_text(text):
    """Rebuild the ModelConfig stored in a checkpoint's config block."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    try:
        parser.read_string(text)
        values = _parse_section(parser, "model",
                                {**_MODEL_KEYS, **_MODEL_EXTRA_KEYS})
        return ModelConfig(**values)
    except (configparser.Error, ValueError, ModelError) as exc:
        raise ConfigError(f"unreadable model config block: {exc}") from exc


def load_config(path):
    """Parse and validate a config file; raises ConfigError with the culprit."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                       inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(path.read_text(encoding="utf-8"), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"config syntax error: {exc}") from exc

    known = {"model": _MODEL_KEYS, "training": _TRAINING_KEYS,
             "inference": _INFERENCE_KEYS, "data": _DATA_KEYS,
             "corpus": _CORPUS_KEYS}
    sections = {}
    speaker_sections = []
    explicit = set()
    for section in parser.sections():
        if section in known:
            sections[section] = _parse_section(parser, section, known[section])
        elif section.startswith("speaker"):
            speaker_sections.append(
                (section, _parse_section(parser, section, _SPEAKER_KEYS)))
        else:
            names = ", ".join(sorted(known) + ["speaker <id>"])
            raise ConfigError(
                f"unknown section [{section}] (known sections: {names})")
        for key in parser.options(section):
            explicit.add((section, key))
    if speaker_sections and "corpus" not in sections:
        raise ConfigError("[speaker] sections need a [corpus] section")

    model = None
    if "model" in sections:
        try:
            model = ModelConfig(**sections["model"])
        except (ValueError, ModelError) as exc:
            raise ConfigError(f"bad [model] section: {exc}") from exc

    training = TrainingConfig(**sections["training"]) if "training" in sections else None
    inference = InferenceConfig(**sections["inference"]) if "inference" in sections else None

    if (model is not None and model.variant == "baseline"
            and ("inference", "t_pitch") in explicit):
        raise ConfigError(
            "variant 'baseline' has no pitch predictor; remove the t_pitch key")

    data = None
    if "data" in sections:
        values = sections["data"]
        for key in ("train_manifest", "val_manifest"):
            if key not in values:
                raise ConfigError(f"[data] section is missing the {key} key")
        base = path.parent
        gt = values.get("ground_truth")
        data = DataConfig(
            train_manifest=(base / values["train_manifest"]).resolve(),
            val_manifest=(base / values["val_manifest"]).resolve(),
            ground_truth=(base / gt).resolve() if gt else None,
        )

    corpus = None
    if "corpus" in sections:
        try:
            corpus = _build_corpus_spec(sections["corpus"], speaker_sections)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    return Config(model=model, training=training, inference=inference,
                  data=data, corpus=corpus, explicit=frozenset(explicit))
