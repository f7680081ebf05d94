"""Voxel raster files and synthetic porous bodies.

File layout: one text line with six integers ``nx ny nz gx gy gz`` (voxel
dimensions and voxels per finite element along each axis), a newline, then
``nx * ny * nz`` bytes of 8-bit occupancy in C order (non-zero = material).
The raster spans ``[0, nx] x [0, ny] x [0, nz]`` in voxel units.
"""
from __future__ import annotations

import numpy as np

from .geometry import ConfigurationError, VoxelRaster


def write_raster(path, occupancy, grouping=(1, 1, 1)):
    occ = np.asarray(occupancy)
    if occ.ndim != 3:
        raise ConfigurationError("voxel rasters are three dimensional")
    header = " ".join(str(int(v)) for v in (*occ.shape, *grouping))
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        fh.write((occ != 0).astype(np.uint8).tobytes(order="C"))


def read_raster_data(path):
    """Return ``(occupancy bool array, grouping)``."""
    try:
        with open(path, "rb") as fh:
            header = fh.readline().decode("ascii").split()
            payload = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read voxel raster {path}: {exc}") from exc
    if len(header) != 6:
        raise ConfigurationError(f"{path}: header must hold 6 integers")
    dims = tuple(int(v) for v in header[:3])
    grouping = tuple(int(v) for v in header[3:])
    if len(payload) != int(np.prod(dims)):
        raise ConfigurationError(f"{path}: expected {np.prod(dims)} voxels, found {len(payload)}")
    occ = np.frombuffer(payload, dtype=np.uint8).reshape(dims) != 0
    return occ, grouping


def read_raster(path):
    occ, _ = read_raster_data(path)
    return VoxelRaster(occ, (0.0, 0.0, 0.0), tuple(float(n) for n in occ.shape))


def synthetic_pores(dims=(32, 32, 32), n_pores=6, radius=(2.0, 5.0), seed=0):
    """Solid block with randomly placed spherical pores (seeded)."""
    rng = np.random.default_rng(seed)
    dims = tuple(int(n) for n in dims)
    grid = np.stack(np.meshgrid(*(np.arange(n) + 0.5 for n in dims), indexing="ij"), axis=-1)
    occ = np.ones(dims, dtype=bool)
    for _ in range(n_pores):
        c = rng.uniform(0, 1, 3) * np.array(dims)
        r = rng.uniform(*radius)
        occ &= np.sum((grid - c) ** 2, axis=-1) > r * r
    return occ
