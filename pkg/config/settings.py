"""
Configuration Module for TrajGuard

Centralizes all run configuration including:
- Environment settings (seed, output directory, workers, logging)
- Synthetic dataset parameters
- Classifier and detector training hyper-parameters
- Attack grids and solver budgets
- Verification and acceptance-suite settings

Profiles follow a class hierarchy (desk, quick, testing); a JSON run file
can override any hyper-parameter on top of the chosen profile.

Author: TrajGuard Development Team
"""

import json
import os
from dataclasses import dataclass, field, fields, is_dataclass, replace

from utils.errors import ConfigError

# Load environment variables
try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    pass


@dataclass(frozen=True)
class SyntheticDatasetConfig:
    """Seeded Gaussian-blob identities standing in for face crops."""
    num_classes: int = 10
    images_per_class: int = 60
    image_size: int = 32
    blobs_per_class: int = 3
    blob_scale_range: tuple = (2.0, 5.0)
    blob_amplitude_range: tuple = (0.5, 1.0)
    blob_margin: float = 6.0
    position_jitter: float = 1.5
    pixel_noise: float = 0.05
    min_prototype_distance: float = 4.0
    natural_per_class: int = 10
    adversarial_per_class: int = 10
    split_fractions: tuple = (0.70, 0.15, 0.15)


@dataclass(frozen=True)
class ClassifierSettings:
    channels: tuple = (8, 16, 32, 64)
    epochs: int = 40
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    plateau_patience: int = 5
    plateau_factor: float = 0.5
    plateau_threshold: float = 1e-4


@dataclass(frozen=True)
class AttackSettings:
    eps_grid: tuple = (0.03, 0.07, 0.1, 0.3)
    iteration_grid: tuple = (30, 50)
    momentum_decay: float = 1.0
    classifier_kinds: tuple = ("BIM", "MIFGSM", "CWL2")
    extra_kinds: tuple = ("FGSM",)
    cw_binary_steps: int = 5
    cw_max_iterations: int = 1000
    cw_initial_const: float = 1e-2
    cw_learning_rate: float = 0.01
    cw_confidence: float = 0.0
    cw_abort_early: bool = True
    cw_linf_tau0: float = 1.0
    cw_linf_tau_decay: float = 0.9
    cw_linf_max_iterations: int = 1000
    lbfgs_search_steps: int = 20
    lbfgs_initial_const: float = 1e-2
    lbfgs_max_iterations: int = 100
    df_deltas: tuple = (5.0, 7.0, 10.0)
    df_max_iterations: int = 700
    knn_k: int = 1


@dataclass(frozen=True)
class RepresentativeSettings:
    kinds: tuple = ("centroid", "medoid")
    metrics: tuple = ("L2", "cosine")


@dataclass(frozen=True)
class DetectorSettings:
    archs: tuple = ("MLP", "LSTM")
    hidden_units: int = 100
    dropout: float = 0.5
    epochs: int = 150
    batch_size: int = 256
    learning_rate: float = 1e-3
    plateau_patience: int = 5
    plateau_factor: float = 0.1
    plateau_threshold: float = 1e-4
    test_fraction: float = 0.3


@dataclass(frozen=True)
class VerificationSettings:
    positive_pairs: int = 1000
    negative_pairs: int = 1000


@dataclass(frozen=True)
class AcceptanceSettings:
    seeds: tuple = (0, 1, 2)
    gradient_inputs: int = 10
    gradient_image_size: int = 16
    roc_sets: int = 50
    box_runs: int = 500


@dataclass(frozen=True)
class ExperimentSettings:
    """Every hyper-parameter of a run."""
    seed: int = 0
    workers: int = 1
    data: SyntheticDatasetConfig = field(default_factory=SyntheticDatasetConfig)
    classifier: ClassifierSettings = field(default_factory=ClassifierSettings)
    attacks: AttackSettings = field(default_factory=AttackSettings)
    representatives: RepresentativeSettings = field(default_factory=RepresentativeSettings)
    detector: DetectorSettings = field(default_factory=DetectorSettings)
    verification: VerificationSettings = field(default_factory=VerificationSettings)
    acceptance: AcceptanceSettings = field(default_factory=AcceptanceSettings)

    def as_dict(self):
        return to_plain(self)


class Config:
    """Base configuration class"""

    # Environment
    TRAJGUARD_ENV = os.environ.get('TRAJGUARD_ENV', 'desk')
    SEED = int(os.environ.get('TRAJGUARD_SEED', '0'))
    OUT_DIR = os.environ.get('TRAJGUARD_OUT', os.path.join(os.getcwd(), 'runs', 'default'))
    WORKERS = int(os.environ.get('TRAJGUARD_WORKERS', '1'))

    # Logging
    LOG_LEVEL = os.environ.get('TRAJGUARD_LOG_LEVEL', 'INFO')
    LOG_FILE = os.environ.get('TRAJGUARD_LOG_FILE', '')

    def settings(self):
        """Hyper-parameters for this profile."""
        return ExperimentSettings(seed=self.SEED, workers=self.WORKERS)


class DeskConfig(Config):
    """Full desk-scale run (defaults everywhere)."""
    pass


class QuickConfig(Config):
    """Smaller budgets for a fast smoke run of the whole pipeline."""

    def settings(self):
        base = super().settings()
        return replace(
            base,
            data=replace(base.data, images_per_class=40),
            classifier=replace(base.classifier, epochs=20),
            attacks=replace(base.attacks, iteration_grid=(30,), cw_max_iterations=200, cw_linf_max_iterations=200,
                            df_max_iterations=300),
            detector=replace(base.detector, epochs=40, batch_size=64),
            verification=replace(base.verification, positive_pairs=300, negative_pairs=300),
        )


class TestingConfig(Config):
    """Tiny budgets used by the test suite."""
    LOG_LEVEL = 'WARNING'

    def settings(self):
        base = super().settings()
        return replace(
            base,
            data=replace(base.data, num_classes=3, images_per_class=26, image_size=16,
                         natural_per_class=10, adversarial_per_class=10),
            classifier=replace(base.classifier, channels=(4, 4, 8, 8), epochs=6, batch_size=16),
            attacks=replace(base.attacks, eps_grid=(0.1, 0.3), iteration_grid=(30,), cw_binary_steps=2,
                            cw_max_iterations=30, cw_linf_max_iterations=30, lbfgs_search_steps=6,
                            lbfgs_max_iterations=20, df_deltas=(10.0,), df_max_iterations=40),
            representatives=replace(base.representatives, kinds=("centroid",), metrics=("L2",)),
            detector=replace(base.detector, archs=("MLP",), hidden_units=8, epochs=5, batch_size=16),
            verification=replace(base.verification, positive_pairs=20, negative_pairs=20),
            acceptance=replace(base.acceptance, seeds=(0,), gradient_inputs=2, roc_sets=3, box_runs=10),
        )


# Configuration factory
config_map = {
    'desk': DeskConfig,
    'quick': QuickConfig,
    'testing': TestingConfig,
    'default': DeskConfig
}


def get_config(env=None):
    """Get configuration based on environment"""
    env = env or os.environ.get('TRAJGUARD_ENV', 'desk')
    return config_map.get(env, config_map['default'])()


def to_plain(value):
    if is_dataclass(value):
        return {f.name: to_plain(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, tuple):
        return [to_plain(v) for v in value]
    return value


def apply_overrides(settings, overrides, path="settings"):
    """
    Return a copy of a settings dataclass with values from a nested dict.

    Args:
        settings: Dataclass instance (any level of ExperimentSettings)
        overrides: dict of field name -> value or nested dict
        path: Dotted location used in error messages

    Returns:
        New dataclass instance

    Raises:
        ConfigError: on unknown keys or type mismatches
    """
    if not isinstance(overrides, dict):
        raise ConfigError(f"{path}: expected an object, got {type(overrides).__name__}")
    known = {f.name: f for f in fields(settings)}
    changes = {}
    for key, value in overrides.items():
        if key not in known:
            raise ConfigError(f"{path}: unknown key '{key}'")
        current = getattr(settings, key)
        where = f"{path}.{key}"
        if is_dataclass(current):
            changes[key] = apply_overrides(current, value, where)
        elif isinstance(current, tuple):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{where}: expected a list")
            changes[key] = tuple(value)
        elif isinstance(current, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{where}: expected true/false")
            changes[key] = value
        elif isinstance(current, (int, float)):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{where}: expected a number")
            changes[key] = type(current)(value) if isinstance(current, float) else value
        else:
            changes[key] = value
    return replace(settings, **changes)


def load_settings(path=None, env=None, seed=None, workers=None):
    """
    Build the settings for a run.

    Args:
        path: Optional JSON run file with overrides
        env: Profile name (desk, quick, testing)
        seed: Optional master seed overriding file and environment
        workers: Optional worker count override

    Returns:
        ExperimentSettings
    """
    settings = get_config(env).settings()
    if path:
        try:
            with open(path, 'r', encoding='utf-8') as fh:
                overrides = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        except ValueError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        settings = apply_overrides(settings, overrides)
    if seed is not None:
        settings = replace(settings, seed=int(seed))
    if workers is not None:
        settings = replace(settings, workers=int(workers))
    return settings
