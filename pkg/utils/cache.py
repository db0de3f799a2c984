"""
Stage Cache Utilities

Content-addressed bookkeeping for pipeline stages. A stage records the hash
of its inputs next to its outputs; re-running it with the same hash is a no-op.

Author: TrajGuard Development Team
"""

import hashlib
import json
import os
from threading import Lock


# Thread-safe lock for marker file operations
_cache_lock = Lock()

MARKER_NAME = ".stage.json"


def config_hash(*parts):
    """
    Hash any JSON-serialisable values into a stable hex digest.

    Args:
        *parts: Values to hash (dicts are key-sorted)

    Returns:
        str: sha256 hex digest
    """
    payload = json.dumps(parts, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def cache_get(stage_dir, key):
    """
    Look up a completed stage.

    Args:
        stage_dir: Directory holding the stage's outputs
        key: Expected input hash

    Returns:
        dict: Stored marker record if the hash matches and every listed
        output still exists, otherwise None
    """
    marker = os.path.join(stage_dir, MARKER_NAME)
    with _cache_lock:
        if not os.path.exists(marker):
            return None
        try:
            with open(marker, "r", encoding="utf-8") as fh:
                record = json.load(fh)
        except (OSError, ValueError):
            return None

    if record.get("key") != key:
        return None
    for name in record.get("outputs", []):
        if not os.path.exists(os.path.join(stage_dir, name)):
            return None
    return record


def cache_set(stage_dir, key, outputs, extra=None):
    """
    Mark a stage as completed.

    Args:
        stage_dir: Directory holding the stage's outputs
        key: Input hash
        outputs: Relative file names produced by the stage
        extra: Optional JSON-serialisable summary kept with the marker
    """
    os.makedirs(stage_dir, exist_ok=True)
    record = {"key": key, "outputs": sorted(outputs), "extra": extra or {}}
    with _cache_lock:
        with open(os.path.join(stage_dir, MARKER_NAME), "w", encoding="utf-8") as fh:
            json.dump(record, fh, sort_keys=True, indent=2)


def cache_delete(stage_dir):
    """
    Forget a stage's marker so the next run recomputes it.

    Returns:
        bool: True if a marker was removed
    """
    marker = os.path.join(stage_dir, MARKER_NAME)
    with _cache_lock:
        if os.path.exists(marker):
            os.remove(marker)
            return True
        return False


def stage_key(stage_dir):
    """Return the hash recorded for a completed stage, or None."""
    marker = os.path.join(stage_dir, MARKER_NAME)
    try:
        with open(marker, "r", encoding="utf-8") as fh:
            return json.load(fh).get("key")
    except (OSError, ValueError):
        return None
