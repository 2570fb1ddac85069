"""Volumetric scalar fields: construction, raw-file I/O, synthetic generators.

A :class:`Volume` stores a 3D scalar field as a flat float64 array in
row-major order with x fastest (the layout of common headerless raw
dumps). Samples are validated finite at construction; every downstream
stage relies on that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NonFiniteSampleError, ParameterError, RawSizeMismatchError

DTYPE_TAGS = {"f32": 0, "f64": 1}
DTYPE_WIDTHS = {"f32": 4, "f64": 8}
_NUMPY_DTYPES = {
    ("f32", "little"): "<f4",
    ("f32", "big"): ">f4",
    ("f64", "little"): "<f8",
    ("f64", "big"): ">f8",
}


def _check_dims(dims) -> tuple[int, int, int]:
    if len(dims) != 3 or any(int(d) != d or d < 1 for d in dims):
        raise ParameterError(f"dims must be three positive integers, got {dims!r}")
    return tuple(int(d) for d in dims)


@dataclass(frozen=True)
class Volume:
    """Immutable 3D scalar field.

    Attributes:
        dims: (nx, ny, nz) sample counts.
        spacing: (dx, dy, dz) world-unit sample spacing.
        values: flat float64 samples, x fastest, read-only.
        value_range: cached (min, max) over all samples.
        source_dtype: width tag of the data as ingested ("f32"/"f64");
            generated fields are "f64". Used for byte accounting only.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    values: np.ndarray = field(default=None, repr=False)
    value_range: tuple[float, float] = field(init=False)
    source_dtype: str = "f64"

    def __post_init__(self):
        dims = _check_dims(self.dims)
        object.__setattr__(self, "dims", dims)
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise ParameterError(f"spacing must be three positive reals, got {self.spacing!r}")
        object.__setattr__(self, "spacing", spacing)
        if self.source_dtype not in DTYPE_TAGS:
            raise ParameterError(f"unknown dtype tag {self.source_dtype!r}")
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        n = dims[0] * dims[1] * dims[2]
        if values.size != n:
            raise ParameterError(
                f"values has {values.size} samples, dims {dims} require {n}"
            )
        finite = np.isfinite(values)
        if not finite.all():
            idx = int(np.argmin(finite))
            raise NonFiniteSampleError(idx, float(values[idx]))
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(
            self, "value_range", (float(values.min()), float(values.max()))
        )

    @property
    def nsamples(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def grid(self) -> np.ndarray:
        """Read-only (nx, ny, nz) view indexed [x, y, z], x fastest in memory."""
        return self.values.reshape(self.dims, order="F")

    @property
    def nbytes_original(self) -> int:
        """Size of the field at its ingested sample width."""
        return self.nsamples * DTYPE_WIDTHS[self.source_dtype]


def load_raw(path, dims, dtype: str = "f32", endianness: str = "little") -> Volume:
    """Load a headerless raw volume.

    The file must hold exactly nx*ny*nz samples of the given dtype, in
    row-major order with x fastest. f32 inputs are widened to float64.
    """
    dims = _check_dims(dims)
    key = (dtype, endianness)
    if key not in _NUMPY_DTYPES:
        raise ParameterError(f"unsupported dtype/endianness: {dtype}/{endianness}")
    path = Path(path)
    expected = dims[0] * dims[1] * dims[2] * DTYPE_WIDTHS[dtype]
    actual = path.stat().st_size
    if actual != expected:
        raise RawSizeMismatchError(path, expected, actual)
    raw = np.fromfile(path, dtype=np.dtype(_NUMPY_DTYPES[key]))
    return Volume(dims=dims, values=raw, source_dtype=dtype)


def save_raw(volume: Volume, path, dtype: str = "f32", endianness: str = "little") -> None:
    """Write a volume as a headerless raw file, the exact inverse of load_raw."""
    key = (dtype, endianness)
    if key not in _NUMPY_DTYPES:
        raise ParameterError(f"unsupported dtype/endianness: {dtype}/{endianness}")
    try:
        volume.values.astype(np.dtype(_NUMPY_DTYPES[key])).tofile(path)
    except OSError as exc:
        raise OSError(f"failed writing raw volume to {path}: {exc}") from exc


def gen_sphere(dims, center=None, radius: float = None, spacing=(1.0, 1.0, 1.0)) -> Volume:
    """Signed-distance sphere: value = ||p - center|| - radius.

    The zero isosurface is the sphere itself. With the default center,
    the lattice midpoint ((nx-1)/2, ...), no lattice point lands
    exactly on the surface for even dims.
    """
    dims = _check_dims(dims)
    if radius is None:
        radius = min(dims) / 4.0
    if radius <= 0:
        raise ParameterError(f"radius must be positive, got {radius}")
    if center is None:
        center = tuple((d - 1) / 2.0 for d in dims)
    cx, cy, cz = (float(c) for c in center)
    dx, dy, dz = spacing
    x = (np.arange(dims[0], dtype=np.float64) - cx) * dx
    y = (np.arange(dims[1], dtype=np.float64) - cy) * dy
    z = (np.arange(dims[2], dtype=np.float64) - cz) * dz
    dist = np.sqrt(
        x[:, None, None] ** 2 + y[None, :, None] ** 2 + z[None, None, :] ** 2
    )
    values = (dist - float(radius)).ravel(order="F")
    return Volume(dims=dims, spacing=spacing, values=values)


_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    # SplitMix64: fixed, platform-independent 64-bit PRNG
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    z = z ^ (z >> 31)
    return state, z


def _unit_uniform(state: int) -> tuple[int, float]:
    state, z = _splitmix64(state)
    return state, (z >> 11) / float(1 << 53)


def gen_smooth_random(dims, seed: int, num_modes: int = 4, spacing=(1.0, 1.0, 1.0)) -> Volume:
    """Smooth random field: sum of unit-amplitude random-phase sinusoids.

    Wave parameters come from SplitMix64 seeded with ``seed``, so equal
    (seed, dims, num_modes) always yield the same field. Values are
    bounded by +-num_modes. Each mode spans 0.5..3 cycles per axis.
    """
    dims = _check_dims(dims)
    if num_modes < 1:
        raise ParameterError(f"num_modes must be >= 1, got {num_modes}")
    nx, ny, nz = dims
    x = np.arange(nx, dtype=np.float64)[:, None, None]
    y = np.arange(ny, dtype=np.float64)[None, :, None]
    z = np.arange(nz, dtype=np.float64)[None, None, :]
    state = int(seed) & _MASK64
    total = np.zeros(dims, dtype=np.float64)
    for _ in range(num_modes):
        state, ux = _unit_uniform(state)
        state, uy = _unit_uniform(state)
        state, uz = _unit_uniform(state)
        state, uphase = _unit_uniform(state)
        kx = 2.0 * math.pi * (0.5 + 2.5 * ux) / nx
        ky = 2.0 * math.pi * (0.5 + 2.5 * uy) / ny
        kz = 2.0 * math.pi * (0.5 + 2.5 * uz) / nz
        phase = 2.0 * math.pi * uphase
        total += np.sin(kx * x + ky * y + kz * z + phase)
    return Volume(dims=dims, spacing=spacing, values=total.ravel(order="F"))
