"""
Run configuration: a flat KEY=VALUE file with dotted keys, overridden by flags
"""

import logging
import os
from dataclasses import dataclass, field, fields
from typing import Callable, Dict, Iterable, Optional, Set

from dotenv import dotenv_values

from network.trainer import TrainConfig
from selection.baselines import BaselineConfig
from selection.nss import SelectionConfig
from selection.report import parse_budget
from selection.runner import SELECTOR_NAMES

logger = logging.getLogger(__name__)

DEFAULT_OUTPUT_DIR = 'nss_output'
OUTPUT_DIR_ENV = 'NSS_OUTPUT_DIR'
WORKERS_ENV = 'NSS_WORKERS'


class ConfigError(ValueError):
    """Raised for unknown keys, unparsable values or unresolvable paths"""


def _optional_int(text: str) -> Optional[int]:
    text = text.strip().lower()
    return None if text in ('', 'none', 'last-encoder') else int(text)


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ('1', 'true', 'yes', 'on'):
        return True
    if value in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_tuple(text: str) -> tuple:
    return tuple(int(v) for v in text.split(',') if v.strip())


@dataclass
class PathConfig:
    """Input and output locations (empty string when not given)"""

    bundle: str = ''
    images: str = ''
    labels: str = ''
    train_images: str = ''
    train_labels: str = ''
    test_images: str = ''
    test_labels: str = ''
    candidates: str = ''
    output_dir: str = ''


# dotted key -> parser
SECTION_KEYS: Dict[str, Callable[[str], object]] = {
    'selection.k': float,
    'selection.budget': parse_budget,
    'selection.layer': _optional_int,
    'selection.identify_fraction': float,
    'baseline.nac_threshold': float,
    'baseline.kmnc_bins': int,
    'baseline.dsa_train_cap': int,
    'train.epochs': int,
    'train.batch_size': int,
    'train.lr': float,
    'train.decay_epochs': _int_tuple,
    'train.decay_factor': float,
    'train.momentum': float,
    'train.nesterov': _bool,
}


@dataclass
class RunConfig:
    """Everything one CLI invocation needs; explicit holds the keys set by a file or flag"""

    paths: PathConfig = field(default_factory=PathConfig)
    selector: str = 'nss'
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    workers: Optional[int] = None
    explicit: Set[str] = field(default_factory=set, repr=False)

    def set(self, key: str, raw) -> None:
        """
        Set one dotted key from its text (or already typed) value

        Raises:
            ConfigError: unknown key or unparsable value
        """
        try:
            if key.startswith('paths.'):
                name = key.split('.', 1)[1]
                if name not in {f.name for f in fields(PathConfig)}:
                    raise ConfigError(f"Unknown config key: {key}")
                setattr(self.paths, name, str(raw))
            elif key in SECTION_KEYS:
                section, name = key.split('.', 1)
                value = SECTION_KEYS[key](raw) if isinstance(raw, str) else raw
                setattr(getattr(self, section), name, value)
            elif key == 'selector':
                self.selector = str(raw)
            elif key == 'seed':
                self.seed = int(raw)
            elif key == 'workers':
                self.workers = _optional_int(raw) if isinstance(raw, str) else raw
            else:
                raise ConfigError(f"Unknown config key: {key}")
            self.explicit.add(key)
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"Invalid value for {key}: {raw!r} ({e})") from e

    def update(self, values: Dict[str, object]) -> 'RunConfig':
        for key, value in values.items():
            if value is not None:
                self.set(key, value)
        return self

    def finalize(self) -> 'RunConfig':
        """Propagate the master seed, fill env defaults and validate"""
        self.selection.seed = self.seed
        self.baseline.seed = self.seed
        self.train.seed = self.seed
        if not self.paths.output_dir:
            self.paths.output_dir = os.getenv(OUTPUT_DIR_ENV, DEFAULT_OUTPUT_DIR)
        if self.workers is None and os.getenv(WORKERS_ENV):
            self.set('workers', os.getenv(WORKERS_ENV))
        self.validate()
        return self

    def validate(self) -> None:
        if self.selector not in SELECTOR_NAMES:
            raise ConfigError(f"Unknown selector: {self.selector!r} (expected one of {', '.join(SELECTOR_NAMES)})")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if self.workers is not None and self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        try:
            self.selection.validate()
            self.baseline.validate()
            self.train.validate()
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def require_paths(self, names: Iterable[str]) -> None:
        """Check that the named path settings are given and exist"""
        for name in names:
            value = getattr(self.paths, name)
            if not value:
                raise ConfigError(f"missing required path: paths.{name}")
            if not os.path.exists(value):
                raise ConfigError(f"paths.{name} does not exist: {value}")

    def to_dict(self) -> Dict:
        return {
            'selector': self.selector,
            'seed': self.seed,
            'selection': self.selection.to_dict(),
            'baseline': self.baseline.to_dict(),
            'train': self.train.to_dict(),
        }


def load_run_config(path: Optional[str] = None, overrides: Optional[Dict[str, object]] = None) -> RunConfig:
    """
    Build a RunConfig from an optional KEY=VALUE file plus flag overrides

    Args:
        path: Config file with dotted keys (selection.k=0.1, train.epochs=10, ...)
        overrides: Dotted key -> value from command-line flags; None values are skipped

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: unknown key, bad value or missing file
    """
    config = RunConfig()
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        values = dotenv_values(path)
        logger.info(f"Loaded {len(values)} settings from {path}")
        config.update({k: v for k, v in values.items() if v is not None})
    if overrides:
        config.update(overrides)
    return config.finalize()
