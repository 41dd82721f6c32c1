"""Uniform-grid field containers and truncated 2D real FFTs.

Fields live on a vertex-centered grid over [0,1]**2: an nx-by-ny grid
includes both endpoints, so dx = 1/(nx-1) and dy = 1/(ny-1). The FFT
treats each axis as a periodic sequence as-is (no endpoint
deduplication); any seam mismatch is part of the discrete operator.

Transform convention (fixed for the whole package):
  * data is laid out (channels, ny, nx); the transform is a real 2D FFT
    over the last two axes, so axis 1 of a SpectralTensor indexes
    y-frequency rows 0..k1-1 of the full spectrum and axis 2 indexes
    x-frequency columns 0..k2-1 of the half spectrum (length nx//2+1).
  * the forward transform is unnormalized; the inverse divides by nx*ny.
  * only the single low-frequency corner block is retained; negative
    y-frequency rows are not stored. On inversion the half spectrum is
    Hermitian-completed, which averages the self-conjugate columns
    (x-frequency 0, and nx/2 when nx is even) with their mirrored
    conjugates. This matches numpy's rfft2/irfft2 pair exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class GridField2D:
    """Real multichannel field on a vertex-centered uniform grid.

    data has shape (channels, ny, nx): channel-major, rows over y,
    columns over x. Values are float64 and frozen after construction.
    """

    nx: int
    ny: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise InvalidArgumentError(f"grid must be at least 2x2, got {self.nx}x{self.ny}")
        if self.channels < 1:
            raise InvalidArgumentError("channels must be >= 1")
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.size != self.channels * self.ny * self.nx:
            raise InvalidArgumentError(
                f"data has {arr.size} entries, expected {self.channels * self.ny * self.nx}"
            )
        arr = np.ascontiguousarray(arr.reshape(self.channels, self.ny, self.nx))
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "GridField2D":
        """Wrap a (channels, ny, nx) array."""
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3:
            raise InvalidArgumentError(f"expected a (channels, ny, nx) array, got shape {arr.shape}")
        c, ny, nx = arr.shape
        return cls(nx=nx, ny=ny, channels=c, data=arr)

    @property
    def dx(self) -> float:
        return 1.0 / (self.nx - 1)

    @property
    def dy(self) -> float:
        return 1.0 / (self.ny - 1)

    def x_coords(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.nx)

    def y_coords(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.ny)


@dataclass(frozen=True)
class SpectralTensor:
    """Truncated complex Fourier coefficients of a multichannel field.

    coeffs has shape (channels, k1, k2): k1 y-frequency rows of the full
    spectrum, k2 x-frequency columns of the half spectrum.
    """

    k1: int
    k2: int
    channels: int
    coeffs: np.ndarray

    def __post_init__(self):
        if self.k1 < 1 or self.k2 < 1:
            raise InvalidArgumentError("retained mode counts must be >= 1")
        if self.channels < 1:
            raise InvalidArgumentError("channels must be >= 1")
        arr = np.asarray(self.coeffs, dtype=np.complex128)
        if arr.shape != (self.channels, self.k1, self.k2):
            raise InvalidArgumentError(
                f"coeffs shape {arr.shape} != {(self.channels, self.k1, self.k2)}"
            )
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)


def _check_modes(nx: int, ny: int, k1: int, k2: int) -> None:
    if not (1 <= k1 <= ny):
        raise InvalidArgumentError(f"k1={k1} out of range for ny={ny}")
    if not (1 <= k2 <= nx // 2 + 1):
        raise InvalidArgumentError(f"k2={k2} out of range for nx={nx} (half spectrum)")


def fft2_truncated(field: GridField2D, k1: int, k2: int) -> SpectralTensor:
    """Real 2D FFT restricted to the low-frequency corner block.

    Returns, per channel, the unnormalized transform at y-frequency rows
    0..k1-1 and half-spectrum x-frequency columns 0..k2-1.
    """
    _check_modes(field.nx, field.ny, k1, k2)
    coeffs = np.fft.rfft2(field.data, axes=(-2, -1))[:, :k1, :k2]
    return SpectralTensor(k1=k1, k2=k2, channels=field.channels, coeffs=coeffs)


def ifft2_from_truncated(spec: SpectralTensor, nx: int, ny: int) -> GridField2D:
    """Inverse transform after zero-padding the unretained modes.

    Hermitian symmetry is enforced as required for a real-valued output
    (self-conjugate columns are averaged with their conjugate mirror).
    """
    _check_modes(nx, ny, spec.k1, spec.k2)
    half = np.zeros((spec.channels, ny, nx // 2 + 1), dtype=np.complex128)
    half[:, : spec.k1, : spec.k2] = spec.coeffs
    data = np.fft.irfft2(half, s=(ny, nx), axes=(-2, -1))
    return GridField2D(nx=nx, ny=ny, channels=spec.channels, data=data)


def boundary_node_mask(nx: int, ny: int) -> np.ndarray:
    """Boolean (ny, nx) mask that is True on boundary nodes."""
    mask = np.zeros((ny, nx), dtype=bool)
    mask[0, :] = mask[-1, :] = True
    mask[:, 0] = mask[:, -1] = True
    return mask


def zero_pad_boundary(
    boundary_values: Mapping[tuple[int, int], Sequence[float] | float],
    nx: int,
    ny: int,
    channels: int = 1,
) -> GridField2D:
    """Extend boundary-only data to the full grid with zeros inside.

    boundary_values maps (ix, iy) node indices to per-channel values;
    unspecified boundary nodes and all interior nodes are exactly 0.
    """
    data = np.zeros((channels, ny, nx), dtype=np.float64)
    for (ix, iy), vals in boundary_values.items():
        if not (0 <= ix < nx and 0 <= iy < ny):
            raise InvalidArgumentError(f"node ({ix},{iy}) outside {nx}x{ny} grid")
        if not (ix in (0, nx - 1) or iy in (0, ny - 1)):
            raise InvalidArgumentError(f"node ({ix},{iy}) is interior, not boundary")
        vec = np.atleast_1d(np.asarray(vals, dtype=np.float64))
        if vec.shape != (channels,):
            raise InvalidArgumentError(
                f"value for node ({ix},{iy}) has {vec.size} entries, expected {channels}"
            )
        data[:, iy, ix] = vec
    return GridField2D(nx=nx, ny=ny, channels=channels, data=data)
