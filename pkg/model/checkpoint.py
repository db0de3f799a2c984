"""
Tensor Container (TGMODEL1)

Binary layout shared by model checkpoints, dataset images and embedding
stores:

    magic "TGMODEL1"
    repeated until EOF:
        u32 name length, name bytes (utf-8)
        u32 rank, rank x u32 dims
        prod(dims) x float32 data

All integers and floats are little-endian.

Author: TrajGuard Development Team
"""

import logging
import os
import struct

import numpy as np

from model.extractor import FeatureExtractor
from utils.errors import ContainerFormatError

logger = logging.getLogger(__name__)

MAGIC = b"TGMODEL1"
IMAGE_SIZE_KEY = "meta.image_size"


def write_tensors(path, tensors):
    """
    Write an ordered mapping of name -> array.

    Args:
        path: Destination file
        tensors: dict (insertion order is preserved in the file)
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp_path = f"{path}.tmp"
    with open(tmp_path, "wb") as fh:
        fh.write(MAGIC)
        for name, value in tensors.items():
            array = np.asarray(value, dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", array.ndim))
            if array.ndim:
                fh.write(struct.pack(f"<{array.ndim}I", *array.shape))
            fh.write(np.ascontiguousarray(array).tobytes())
    os.replace(tmp_path, path)


def read_tensors(path):
    """
    Read every tensor of a container.

    Returns:
        dict: name -> float32 array, in file order

    Raises:
        ContainerFormatError: on a bad magic string or truncated record
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(MAGIC):
        raise ContainerFormatError(f"{path}: not a TGMODEL1 container")

    tensors = {}
    offset = len(MAGIC)
    try:
        while offset < len(data):
            (name_len,) = struct.unpack_from("<I", data, offset)
            offset += 4
            name = data[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", data, offset)
            offset += 4
            dims = struct.unpack_from(f"<{rank}I", data, offset) if rank else ()
            offset += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            end = offset + 4 * count
            if end > len(data):
                raise ContainerFormatError(f"{path}: tensor '{name}' is truncated")
            tensors[name] = np.frombuffer(data[offset:end], dtype="<f4").reshape(dims).copy()
            offset = end
    except struct.error as e:
        raise ContainerFormatError(f"{path}: truncated record header") from e
    return tensors


def save_checkpoint(model, path):
    """Write a FeatureExtractor's parameters (float32) to path."""
    tensors = {IMAGE_SIZE_KEY: np.array([model.image_size], dtype=np.float32)}
    tensors.update(model.params)
    write_tensors(path, tensors)
    logger.info(f"Saved checkpoint with {len(model.params)} tensors to {path}")


def load_checkpoint(path):
    """Read a FeatureExtractor written by save_checkpoint."""
    tensors = read_tensors(path)
    if IMAGE_SIZE_KEY not in tensors:
        raise ContainerFormatError(f"{path}: checkpoint lacks {IMAGE_SIZE_KEY}")
    image_size = int(tensors.pop(IMAGE_SIZE_KEY)[0])
    return FeatureExtractor(tensors, image_size)
