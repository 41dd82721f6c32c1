"""Seeded random fields and scalars for the porous-medium benchmarks.

Reproducibility contract: every sampler is a pure function of
(seed, stream_index, shape parameters). The base generator is
SplitMix64: the stream state is derived as

    state = seed XOR (stream_index * 0xD1342543DE82EF95)   (mod 2**64)

and the k-th raw draw (k = 0, 1, ...) is

    mix64(state + (k+1) * 0x9E3779B97F4A7C15)              (mod 2**64)

with mix64 the standard SplitMix64 finalizer. Uniform doubles take the
top 53 bits; normal variates are Box-Muller pairs built from
consecutive draws (2k, 2k+1), with the first uniform shifted into
(0, 1] to keep the logarithm finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .grid import GridField2D

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_STREAM_MULT = np.uint64(0xD1342543DE82EF95)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = 2.0**-53


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class RngStream:
    """Addressable deterministic random stream (seed, stream_index)."""

    seed: int
    stream_index: int = 0

    def state(self) -> np.uint64:
        with np.errstate(over="ignore"):
            return np.uint64(self.seed % 2**64) ^ (
                np.uint64(self.stream_index % 2**64) * _STREAM_MULT
            )

    def cursor(self) -> "DrawCursor":
        return DrawCursor(self)


class DrawCursor:
    """Sequential draw reader over one RngStream."""

    def __init__(self, stream: RngStream):
        self._state = stream.state()
        self._pos = 0

    def u64(self, count: int) -> np.ndarray:
        idx = np.arange(self._pos + 1, self._pos + count + 1, dtype=np.uint64)
        self._pos += count
        with np.errstate(over="ignore"):
            return _mix64(self._state + idx * _GOLDEN)

    def uniform01(self, count: int) -> np.ndarray:
        """Uniform doubles in [0, 1)."""
        return (self.u64(count) >> np.uint64(11)).astype(np.float64) * _U53

    def normals(self, count: int) -> np.ndarray:
        """Standard normals via Box-Muller on consecutive draw pairs."""
        pairs = (count + 1) // 2
        raw = self.u64(2 * pairs)
        u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _U53  # (0, 1]
        u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * _U53  # [0, 1)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:count]


def sample_permeability(rng: RngStream, n: int) -> GridField2D:
    """Two-phase permeability field on an n-by-n grid.

    Draws a mean-zero Gaussian field with covariance (-Lap + 9 I)^-2
    (zero-Neumann Laplacian, cosine eigenbasis truncated at n-1 per
    axis) and thresholds it: positive -> 12, non-positive -> 3.
    """
    if n < 8:
        raise InvalidArgumentError("permeability sampler needs n >= 8")
    cur = rng.cursor()
    xi = cur.normals(n * n).reshape(n, n)  # rows: y-frequency, cols: x-frequency
    freq = np.arange(n)
    lam = 1.0 / (np.pi**2 * (freq[:, None] ** 2 + freq[None, :] ** 2) + 9.0)
    lam[0, 0] = 0.0  # drop the constant mode; keeps microstructures two-phase
    coef = xi * lam
    nodes = np.linspace(0.0, 1.0, n)
    cosines = np.cos(np.outer(nodes, freq * np.pi))  # (node, frequency)
    latent = cosines @ coef @ cosines.T  # (y node, x node)
    data = np.where(latent > 0.0, 12.0, 3.0)
    return GridField2D(nx=n, ny=n, channels=1, data=data[None])


def sample_source_setting2(
    rng: RngStream, n: int, force: tuple[float, float] | None = None
) -> tuple[GridField2D, dict]:
    """Product-of-cosines source with random frequencies a_x, a_y ~ U(0.5, 2).

    force=(a_x, a_y) pins the frequencies (test hook).
    """
    if n < 2:
        raise InvalidArgumentError("source sampler needs n >= 2")
    if force is not None:
        a_x, a_y = force
    else:
        cur = rng.cursor()
        u = cur.uniform01(2)
        a_x = 0.5 + 1.5 * u[0]
        a_y = 0.5 + 1.5 * u[1]
    nodes = np.linspace(0.0, 1.0, n)
    gx = np.cos(2.0 * np.pi * a_x * nodes)
    gy = np.cos(2.0 * np.pi * a_y * nodes)
    data = gy[:, None] * gx[None, :]
    return (
        GridField2D(nx=n, ny=n, channels=1, data=data[None]),
        {"a_x": float(a_x), "a_y": float(a_y)},
    )


def sample_boundary_setting2(rng: RngStream, n: int) -> tuple[GridField2D, dict]:
    """Dirichlet pressure data, zero-padded to the interior.

    The top edge (y = 1) carries U0*(t1 sin(2 pi x) + t2 sin(4 pi x))/(t1+t2),
    including its corners (which are 0 since sin vanishes there); the
    left, right and bottom edges carry the constant U0.
    """
    if n < 2:
        raise InvalidArgumentError("boundary sampler needs n >= 2")
    cur = rng.cursor()
    u0 = -0.001 + 0.002 * cur.uniform01(1)[0]
    t1, t2 = cur.uniform01(2)
    while t1 + t2 == 0.0:
        t1, t2 = cur.uniform01(2)
    data = np.zeros((1, n, n))
    data[0, :, 0] = u0
    data[0, :, -1] = u0
    data[0, 0, :] = u0
    x = np.linspace(0.0, 1.0, n)
    data[0, -1, :] = u0 * (t1 * np.sin(2.0 * np.pi * x) + t2 * np.sin(4.0 * np.pi * x)) / (t1 + t2)
    return (
        GridField2D(nx=n, ny=n, channels=1, data=data),
        {"u0": float(u0), "t1": float(t1), "t2": float(t2)},
    )


def sample_correlated_field(rng: RngStream, n: int, exponent: float = -1.25) -> GridField2D:
    """Spectrally correlated Gaussian field.

    White noise is filtered in Fourier space by (w1^2 + w2^2)^(exponent/2)
    with the zero-frequency weight set to 0, so every sample has zero mean.
    """
    if n < 8:
        raise InvalidArgumentError("correlated field sampler needs n >= 8")
    cur = rng.cursor()
    noise = cur.normals(n * n).reshape(n, n)
    w = np.fft.fftfreq(n, d=1.0 / n)
    s = w[:, None] ** 2 + w[None, :] ** 2
    with np.errstate(divide="ignore"):
        weight = s ** (exponent / 2.0)
    weight[0, 0] = 0.0
    data = np.real(np.fft.ifft2(np.fft.fft2(noise) * weight))
    return GridField2D(nx=n, ny=n, channels=1, data=data[None])
