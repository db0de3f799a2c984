# Utils Package
from utils.errors import (
    TrajGuardError, StructuralError, NumericError, DataError,
    PreconditionError, ConfigError, DependencyError, ContainerFormatError,
)
from utils.validators import ensure_finite, ensure_same_shape, ensure_shape, ensure_pixel_range, ensure_class_id
from utils.seeding import derive_seed, rng_for
from utils.cache import config_hash, cache_get, cache_set, cache_delete, stage_key
