"""
Format binaire plat des tenseurs : en-tête int32 little-endian
[ndim, dims...] puis les valeurs float64 little-endian en ordre ligne.
"""
import logging
from pathlib import Path

import numpy as np
from django.conf import settings

from config.exceptions import ShapeError

logger = logging.getLogger(__name__)

HEADER_DTYPE = np.dtype('<i4')
VALUE_DTYPE = np.dtype('<f8')


def write_tensor(stream, tensor):
    tensor = np.ascontiguousarray(tensor, dtype=VALUE_DTYPE)
    header = np.array([tensor.ndim, *tensor.shape], dtype=HEADER_DTYPE)
    stream.write(header.tobytes())
    stream.write(tensor.tobytes())


def read_tensor(stream):
    ndim = np.frombuffer(stream.read(HEADER_DTYPE.itemsize), dtype=HEADER_DTYPE)
    if ndim.size != 1 or ndim[0] < 0:
        raise ShapeError("Truncated or invalid tensor header")
    shape = tuple(int(dim) for dim in np.frombuffer(
        stream.read(HEADER_DTYPE.itemsize * int(ndim[0])), dtype=HEADER_DTYPE
    ))
    if len(shape) != ndim[0] or any(dim < 0 for dim in shape):
        raise ShapeError("Truncated or invalid tensor header")
    count = int(np.prod(shape, dtype=np.int64))
    values = np.frombuffer(stream.read(VALUE_DTYPE.itemsize * count), dtype=VALUE_DTYPE)
    if values.size != count:
        raise ShapeError(f"Expected {count} values for shape {shape}, got {values.size}")
    return values.reshape(shape).astype(np.float64)


def dump_tensor(name, tensor):
    """Vidage de débogage dans ABANDIT['DUMP_DIR'] ; sans effet si le réglage est vide"""
    dump_dir = settings.ABANDIT.get('DUMP_DIR')
    if not dump_dir:
        return None
    path = Path(dump_dir) / f"{name}.bin"
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('wb') as stream:
        write_tensor(stream, tensor)
    logger.debug("Dumped %s %s to %s", name, np.shape(tensor), path)
    return path
