"""Brute-force reference implementations used as independent test oracles.

Everything here is deliberately slow and explicit: coefficient-by-
coefficient DFT double sums and node-by-node evaluations, never calling
the library's transform code or numpy.fft.
"""

import numpy as np


def dft2_corner(data: np.ndarray, k1: int, k2: int) -> np.ndarray:
    """O(n^4) double-sum DFT of (c, ny, nx) data, cropped to the corner block."""
    c, ny, nx = data.shape
    out = np.zeros((c, k1, k2), dtype=complex)
    yy = np.arange(ny)[:, None]
    xx = np.arange(nx)[None, :]
    for ky in range(k1):
        for kx in range(k2):
            phase = np.exp(-2j * np.pi * (ky * yy / ny + kx * xx / nx))
            out[:, ky, kx] = (data * phase).sum(axis=(1, 2))
    return out


def hermitian_embed(coeffs: np.ndarray, ny: int, nx: int) -> np.ndarray:
    """Zero-pad a corner block into a full Hermitian spectrum.

    Self-conjugate columns (x-frequency 0, and nx/2 for even nx) are
    averaged with their conjugate mirror, matching the convention of a
    real-output inverse transform fed a half spectrum.
    """
    c, k1, k2 = coeffs.shape
    full = np.zeros((c, ny, nx), dtype=complex)
    for ky in range(k1):
        for kx in range(k2):
            v = coeffs[:, ky, kx]
            if kx == 0 or (nx % 2 == 0 and kx == nx // 2):
                full[:, ky, kx] += v / 2.0
                full[:, (-ky) % ny, kx] += np.conj(v) / 2.0
            else:
                full[:, ky, kx] += v
                full[:, (-ky) % ny, (nx - kx) % nx] += np.conj(v)
    return full


def idft2_full(spectrum: np.ndarray) -> np.ndarray:
    """O(n^4) double-sum inverse DFT (normalized by nx*ny), real part."""
    c, ny, nx = spectrum.shape
    out = np.zeros((c, ny, nx))
    yy = np.arange(ny)[:, None]
    xx = np.arange(nx)[None, :]
    for y in range(ny):
        for x in range(nx):
            phase = np.exp(2j * np.pi * (yy * y / ny + xx * x / nx))
            out[:, y, x] = np.real((spectrum * phase).sum(axis=(1, 2))) / (nx * ny)
    return out


def truncate_and_invert(data: np.ndarray, k1: int, k2: int) -> np.ndarray:
    """Low-pass filter: corner-block DFT, Hermitian embed, inverse DFT."""
    c, ny, nx = data.shape
    return idft2_full(hermitian_embed(dft2_corner(data, k1, k2), ny, nx))


def spectral_conv_oracle(data: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Dense-DFT realization of the truncated spectral convolution."""
    d_out, d_in, k1, k2 = R.shape
    c, ny, nx = data.shape
    assert c == d_in
    z = dft2_corner(data, k1, k2)
    y = np.einsum("oikl,ikl->okl", R, z)
    return idft2_full(hermitian_embed(y, ny, nx))


def pointwise_affine_oracle(M: np.ndarray, bias: np.ndarray, data: np.ndarray) -> np.ndarray:
    """Node-by-node matrix multiply plus bias."""
    c_out, c_in = M.shape
    _, ny, nx = data.shape
    out = np.zeros((c_out, ny, nx))
    for y in range(ny):
        for x in range(nx):
            out[:, y, x] = M @ data[:, y, x] + bias
    return out


def relu(a: np.ndarray) -> np.ndarray:
    return np.where(a > 0, a, 0.0)


def bandlimited_field(rng, channels: int, n: int, k1: int, k2: int) -> np.ndarray:
    """Real field whose spectrum lies exactly in the retained block.

    Only modes with x-frequency 1..k2-1 plus a real constant are used,
    so the truncate-and-invert roundtrip reproduces the field exactly
    (positive-y modes of the self-conjugate columns are intentionally
    avoided: the single-corner-block convention halves them).
    """
    assert k2 >= 2 and k2 - 1 <= (n - 1) // 2 and k1 <= n - k1
    spec = np.zeros((channels, n, n), dtype=complex)
    spec[:, 0, 0] = n * n * rng.normal(size=channels)
    for ky in range(k1):
        for kx in range(1, k2):
            v = rng.normal(size=channels) + 1j * rng.normal(size=channels)
            spec[:, ky, kx] += v
            spec[:, (-ky) % n, n - kx] += np.conj(v)
    return idft2_full(spec) * (n * n)
