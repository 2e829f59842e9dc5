"""INI-style run configuration: sections for corpus grid, synthesis, window
plan, architecture, training, and output paths. Unknown sections or keys are
rejected so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace

from .errors import ConfigurationError
from .features import WindowPlan
from .modem import CorpusSpec, ModulationClass, SynthesisConfig
from .network import MODE_ATTENTION, MODE_FLATTEN, ArchitectureConfig
from .training import TrainConfig

ENV_OUT_DIR = "AMCBENCH_OUT"

_CLEAN_WORDS = {"clean", "inf", "+inf"}


@dataclass
class RunConfig:
    corpus: CorpusSpec = field(default_factory=CorpusSpec)
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    window: WindowPlan = field(default_factory=WindowPlan)
    architecture: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    output_dir: str = "amcbench_out"


def _parse_classes(raw: str) -> tuple:
    names = [part.strip() for part in raw.split(",") if part.strip()]
    classes = []
    for name in names:
        try:
            classes.append(ModulationClass[name])
        except KeyError:
            known = ", ".join(c.name for c in ModulationClass)
            raise ConfigurationError(f"unknown modulation class {name!r}; known: {known}")
    return tuple(classes)


def _parse_snr_grid(raw: str) -> tuple:
    values = []
    for part in raw.split(","):
        word = part.strip()
        if not word:
            continue
        if word.lower() in _CLEAN_WORDS:
            values.append(math.inf)
        else:
            values.append(_parse_float(word, "snr_grid"))
    return tuple(values)


def _parse_split(raw: str) -> tuple:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 3:
        raise ConfigurationError(f"split must be three comma-separated fractions, got {raw!r}")
    return tuple(_parse_float(p, "split") for p in parts)


def _parse_int(raw: str, key: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigurationError(f"{key}: expected an integer, got {raw!r}")


def _parse_float(raw: str, key: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigurationError(f"{key}: expected a number, got {raw!r}")


def _parse_bool(raw: str, key: str) -> bool:
    word = raw.strip().lower()
    if word in ("1", "true", "yes", "on"):
        return True
    if word in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"{key}: expected a boolean, got {raw!r}")


# section -> key -> (attribute, parser)
_SCHEMA = {
    "corpus": {
        "classes": ("classes", _parse_classes),
        "snr_grid": ("snr_grid", _parse_snr_grid),
        "frames_per_cell": ("frames_per_cell", lambda r: _parse_int(r, "frames_per_cell")),
        "seed": ("seed", lambda r: _parse_int(r, "seed")),
    },
    "synthesis": {
        "samples_per_symbol": ("samples_per_symbol", lambda r: _parse_int(r, "samples_per_symbol")),
        "rrc_rolloff": ("rrc_rolloff", lambda r: _parse_float(r, "rrc_rolloff")),
        "rrc_span_symbols": ("rrc_span_symbols", lambda r: _parse_int(r, "rrc_span_symbols")),
        "fm_deviation": ("fm_deviation", lambda r: _parse_float(r, "fm_deviation")),
        "gmsk_bt": ("gmsk_bt", lambda r: _parse_float(r, "gmsk_bt")),
        "am_message_tones": ("am_message_tones", lambda r: _parse_int(r, "am_message_tones")),
        "rng_seed": ("rng_seed", lambda r: _parse_int(r, "rng_seed")),
        "rectangular_pulse": ("rectangular_pulse", lambda r: _parse_bool(r, "rectangular_pulse")),
    },
    "window": {
        "window_len": ("window_len", lambda r: _parse_int(r, "window_len")),
        "stride": ("stride", lambda r: _parse_int(r, "stride")),
        "count": ("count", lambda r: _parse_int(r, "count")),
    },
    "architecture": {
        "input_side": ("input_side", lambda r: _parse_int(r, "input_side")),
        "lstm_hidden": ("lstm_hidden", lambda r: _parse_int(r, "lstm_hidden")),
        "windows": ("windows", lambda r: _parse_int(r, "windows")),
        "head_l1": ("head_l1", lambda r: _parse_int(r, "head_l1")),
        "head_l2": ("head_l2", lambda r: _parse_int(r, "head_l2")),
        "classes": ("classes", lambda r: _parse_int(r, "classes")),
        "drop_factor": ("drop_factor", lambda r: _parse_float(r, "drop_factor")),
        "temporal_mode": ("temporal_mode", str.strip),
    },
    "training": {
        "batch_size": ("batch_size", lambda r: _parse_int(r, "batch_size")),
        "learning_rate": ("learning_rate", lambda r: _parse_float(r, "learning_rate")),
        "drop_factor": ("drop_factor", lambda r: _parse_float(r, "drop_factor")),
        "head_l1": ("head_l1", lambda r: _parse_int(r, "head_l1")),
        "max_epochs": ("max_epochs", lambda r: _parse_int(r, "max_epochs")),
        "patience": ("patience", lambda r: _parse_int(r, "patience")),
        "split": ("split", _parse_split),
        "seed": ("seed", lambda r: _parse_int(r, "seed")),
    },
    "output": {
        "dir": ("output_dir", str.strip),
    },
}

_SECTION_TARGETS = {
    "corpus": "corpus",
    "synthesis": "synthesis",
    "window": "window",
    "architecture": "architecture",
    "training": "training",
}


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}")

    config = RunConfig()
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigurationError(f"unknown config section [{section}]")
        schema = _SCHEMA[section]
        updates = {}
        for key, raw in parser.items(section):
            if key not in schema:
                known = ", ".join(sorted(schema))
                raise ConfigurationError(f"unknown key {key!r} in [{section}]; known: {known}")
            attr, parse = schema[key]
            updates[attr] = parse(raw)
        if section == "output":
            config.output_dir = updates.get("output_dir", config.output_dir)
        else:
            target = _SECTION_TARGETS[section]
            setattr(config, target, replace(getattr(config, target), **updates))

    config.corpus = replace(config.corpus, cfg=config.synthesis)
    if config.architecture.temporal_mode not in (MODE_FLATTEN, MODE_ATTENTION):
        raise ConfigurationError(f"temporal_mode must be flatten or attention,"
                                 f" got {config.architecture.temporal_mode!r}")
    return config


def load_config(path) -> RunConfig:
    with open(path, "r") as fh:
        return parse_config(fh.read())


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def defaults_ini() -> str:
    """Canonical default config (also documents every recognized key)."""
    corpus = CorpusSpec()
    synth = SynthesisConfig()
    window = WindowPlan()
    arch = ArchitectureConfig()
    train = TrainConfig()
    lines = [
        "[corpus]",
        f"classes = {','.join(c.name for c in corpus.classes)}",
        f"snr_grid = {','.join('clean' if math.isinf(s) else _fmt(s) for s in corpus.snr_grid)}",
        f"frames_per_cell = {corpus.frames_per_cell}",
        f"seed = {corpus.seed}",
        "",
        "[synthesis]",
        f"samples_per_symbol = {synth.samples_per_symbol}",
        f"rrc_rolloff = {_fmt(synth.rrc_rolloff)}",
        f"rrc_span_symbols = {synth.rrc_span_symbols}",
        f"fm_deviation = {_fmt(synth.fm_deviation)}",
        f"gmsk_bt = {_fmt(synth.gmsk_bt)}",
        f"am_message_tones = {synth.am_message_tones}",
        f"rng_seed = {synth.rng_seed}",
        f"rectangular_pulse = {str(synth.rectangular_pulse).lower()}",
        "",
        "[window]",
        f"window_len = {window.window_len}",
        f"stride = {window.stride}",
        f"count = {window.count}",
        "",
        "[architecture]",
        f"input_side = {arch.input_side}",
        f"lstm_hidden = {arch.lstm_hidden}",
        f"windows = {arch.windows}",
        f"head_l1 = {arch.head_l1}",
        f"head_l2 = {arch.head_l2}",
        f"classes = {arch.classes}",
        f"drop_factor = {_fmt(arch.drop_factor)}",
        f"temporal_mode = {arch.temporal_mode}",
        "",
        "[training]",
        f"batch_size = {train.batch_size}",
        f"learning_rate = {_fmt(train.learning_rate)}",
        f"drop_factor = {_fmt(train.drop_factor)}",
        f"head_l1 = {train.head_l1}",
        f"max_epochs = {train.max_epochs}",
        f"patience = {train.patience}",
        f"split = {','.join(_fmt(f) for f in train.split)}",
        f"seed = {train.seed}",
        "",
        "[output]",
        "dir = amcbench_out",
        "",
    ]
    return "\n".join(lines)
