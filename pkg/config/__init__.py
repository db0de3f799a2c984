# Configuration Package
from config.settings import (
    Config, get_config, load_settings, apply_overrides,
    ExperimentSettings, SyntheticDatasetConfig, ClassifierSettings, AttackSettings,
    RepresentativeSettings, DetectorSettings, VerificationSettings, AcceptanceSettings,
)
