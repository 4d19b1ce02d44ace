"""Shared constants for the kernel pair (numba + numpy)."""

import numpy as np

# closest-feature kind codes
KIND_VERTEX = 0
KIND_EDGE = 1
KIND_FACE = 2

# spatial-hash key packing: 21 bits per axis on a signed 64-bit key
KEY_BITS = 21
KEY_MASK = (1 << KEY_BITS) - 1

# elastic energy barrier for inverted deformation gradients
DET_EPS = 1e-8
DET_BARRIER = 1e8


def pack_keys(cells: np.ndarray) -> np.ndarray:
    """Pack integer cell coordinates (n, d) into scalar int64 keys."""
    cells = np.asarray(cells, dtype=np.int64)
    key = cells[:, 0] & KEY_MASK
    for axis in range(1, cells.shape[1]):
        key = (key << KEY_BITS) | (cells[:, axis] & KEY_MASK)
    return key
