"""Forward evaluation of explicit (FNO) and weight-tied implicit (IFNO)
Fourier neural operators.

Both variants share the structure lift -> L iterative layers -> project.
An FNO layer is ReLU(W h + spectral_conv(h) + c) with per-layer
parameters; an IFNO layer is h + dt * ReLU(W h + spectral_conv(h) + c)
with one shared parameter block and dt = 1/L. Spectral convolution
multiplies each retained Fourier mode by a learned complex d-by-d
matrix (see grid module for the truncation convention).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgumentError
from .grid import GridField2D, _check_modes
from .randfield import RngStream

VARIANTS = ("fno", "ifno")
_CKPT_MAGIC = b"NOPCKPT1"
_CKPT_VERSION = 1


@dataclass(frozen=True)
class HyperParams:
    d: int  # lifted channel width
    d_F: int  # input channels (coordinates included)
    d_u: int  # output channels
    d_Q: int  # projection hidden width
    k1: int  # retained y-frequency rows
    k2: int  # retained x-frequency columns (half spectrum)
    L: int  # iterative layers
    variant: str  # "fno" | "ifno"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidArgumentError(f"variant must be one of {VARIANTS}")
        for name in ("d", "d_F", "d_u", "d_Q", "k1", "k2"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1")
        if self.L < 0:
            raise InvalidArgumentError("L must be >= 0")

    @property
    def k(self) -> int:
        return self.k1 * self.k2

    @property
    def dt(self) -> float:
        """Time step of the implicit variant (total time fixed at 1)."""
        if self.L == 0:
            raise InvalidArgumentError("dt undefined for L = 0")
        return 1.0 / self.L


@dataclass
class LayerBlock:
    """Parameters of one iterative layer (complex kernel split in re/im)."""

    W: np.ndarray  # (d, d)
    R_re: np.ndarray  # (d, d, k1, k2)
    R_im: np.ndarray  # (d, d, k1, k2)
    c: np.ndarray  # (d,)

    @property
    def R(self) -> np.ndarray:
        return self.R_re + 1j * self.R_im

    def copy(self) -> "LayerBlock":
        return LayerBlock(self.W.copy(), self.R_re.copy(), self.R_im.copy(), self.c.copy())


@dataclass
class NormStats:
    """Per-channel affine standardization, fit on the training split."""

    in_mean: np.ndarray
    in_std: np.ndarray
    out_mean: np.ndarray
    out_std: np.ndarray

    @classmethod
    def identity(cls, d_F: int, d_u: int) -> "NormStats":
        return cls(np.zeros(d_F), np.ones(d_F), np.zeros(d_u), np.ones(d_u))

    @classmethod
    def fit(cls, inputs: np.ndarray, outputs: np.ndarray) -> "NormStats":
        """Channel statistics over samples and nodes; std floored at 1e-12."""
        in_mean = inputs.mean(axis=(0, 2, 3))
        in_std = np.maximum(inputs.std(axis=(0, 2, 3)), 1e-12)
        out_mean = outputs.mean(axis=(0, 2, 3))
        out_std = np.maximum(outputs.std(axis=(0, 2, 3)), 1e-12)
        return cls(in_mean, in_std, out_mean, out_std)

    def copy(self) -> "NormStats":
        return NormStats(
            self.in_mean.copy(), self.in_std.copy(), self.out_mean.copy(), self.out_std.copy()
        )


@dataclass
class OperatorModel:
    """All trainable parameters plus hyperparameters and normalization."""

    hyper: HyperParams
    P: np.ndarray  # (d, d_F)
    p: np.ndarray  # (d,)
    blocks: list[LayerBlock]  # one block (ifno) or L blocks (fno)
    Q1: np.ndarray  # (d_Q, d)
    q1: np.ndarray  # (d_Q,)
    Q2: np.ndarray  # (d_u, d_Q)
    q2: np.ndarray  # (d_u,)
    norm: NormStats

    def __post_init__(self):
        expected = 1 if self.hyper.variant == "ifno" else self.hyper.L
        if len(self.blocks) != expected:
            raise InvalidArgumentError(
                f"{self.hyper.variant} with L={self.hyper.L} needs {expected} blocks, "
                f"got {len(self.blocks)}"
            )

    def block(self, layer: int) -> LayerBlock:
        return self.blocks[0] if self.hyper.variant == "ifno" else self.blocks[layer]

    def copy(self) -> "OperatorModel":
        return OperatorModel(
            hyper=self.hyper,
            P=self.P.copy(),
            p=self.p.copy(),
            blocks=[b.copy() for b in self.blocks],
            Q1=self.Q1.copy(),
            q1=self.q1.copy(),
            Q2=self.Q2.copy(),
            q2=self.q2.copy(),
            norm=self.norm.copy(),
        )

    def param_items(self):
        """Fixed traversal of (name, array) pairs over all parameters."""
        items = [("P", self.P), ("p", self.p)]
        for i, blk in enumerate(self.blocks):
            items += [
                (f"b{i}.W", blk.W),
                (f"b{i}.R_re", blk.R_re),
                (f"b{i}.R_im", blk.R_im),
                (f"b{i}.c", blk.c),
            ]
        items += [("Q1", self.Q1), ("q1", self.q1), ("Q2", self.Q2), ("q2", self.q2)]
        return items


def count_params(hyper: HyperParams) -> int:
    """Closed-form trainable-parameter count (complex entries count as 2)."""
    d, d_F, d_u, d_Q, k = hyper.d, hyper.d_F, hyper.d_u, hyper.d_Q, hyper.k
    lift = d * (1 + d_F)
    block = d + d * d + 2 * d * d * k
    proj = d_Q * (d + d_u + 1) + d_u
    layers = block if hyper.variant == "ifno" else hyper.L * block
    return lift + layers + proj


def model_param_count(model: OperatorModel) -> int:
    """Number of scalar entries actually materialized in the model."""
    return sum(arr.size for _, arr in model.param_items())


def _uniform(cur, shape, bound: float) -> np.ndarray:
    return bound * (2.0 * cur.uniform01(int(np.prod(shape))).reshape(shape) - 1.0)


def init_model(hyper: HyperParams, seed: int) -> OperatorModel:
    """Random initialization.

    Weight matrices draw uniform +-sqrt(6/(fan_in+fan_out)); biases are
    zero; kernel entries draw uniform +-1/d^2 in both real and imaginary
    parts, keeping the initial spectral increments small.
    """
    cur = RngStream(seed, 0).cursor()
    d, d_F, d_u, d_Q = hyper.d, hyper.d_F, hyper.d_u, hyper.d_Q
    kshape = (d, d, hyper.k1, hyper.k2)
    P = _uniform(cur, (d, d_F), np.sqrt(6.0 / (d_F + d)))
    n_blocks = 1 if hyper.variant == "ifno" else hyper.L
    blocks = []
    for _ in range(n_blocks):
        W = _uniform(cur, (d, d), np.sqrt(6.0 / (d + d)))
        R_re = _uniform(cur, kshape, 1.0 / (d * d))
        R_im = _uniform(cur, kshape, 1.0 / (d * d))
        blocks.append(LayerBlock(W=W, R_re=R_re, R_im=R_im, c=np.zeros(d)))
    Q1 = _uniform(cur, (d_Q, d), np.sqrt(6.0 / (d + d_Q)))
    Q2 = _uniform(cur, (d_u, d_Q), np.sqrt(6.0 / (d_Q + d_u)))
    return OperatorModel(
        hyper=hyper,
        P=P,
        p=np.zeros(d),
        blocks=blocks,
        Q1=Q1,
        q1=np.zeros(d_Q),
        Q2=Q2,
        q2=np.zeros(d_u),
        norm=NormStats.identity(d_F, d_u),
    )


# ---------------------------------------------------------------------------
# Array-level compute (batched (B, C, ny, nx) float arrays)

def _chan_matmul(M: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Pointwise channel mixing: out[b,o] = sum_i M[o,i] h[b,i]."""
    b, c, ny, nx = h.shape
    out = np.matmul(M.astype(h.dtype, copy=False), h.reshape(b, c, ny * nx))
    return out.reshape(b, M.shape[0], ny, nx)


def synthesis_col_weights(nx: int, k2: int, dtype=np.float64) -> np.ndarray:
    """Per-column weights of the Hermitian completion.

    Retained half-spectrum columns paired with a distinct conjugate
    mirror contribute twice to the real inverse; the self-conjugate
    columns (x-frequency 0, and nx/2 for even nx) contribute once.
    """
    w = np.full(k2, 2.0, dtype=dtype)
    w[0] = 1.0
    if nx % 2 == 0 and k2 == nx // 2 + 1:
        w[-1] = 1.0
    return w


# Real partial-DFT basis. With only a small corner block retained, one
# dgemm each way beats a full FFT (sizes like 31 also hit the slow
# prime-length FFT path), and the analysis adjoint is exactly the
# transposed basis. Columns 0..K-1 hold cos(theta), K..2K-1 hold
# -sin(theta) for theta = 2*pi*(ky*y/ny + kx*x/nx), modes ky-major.
_BASIS_CACHE: dict = {}


def _mode_basis(ny: int, nx: int, k1: int, k2: int, dtype) -> tuple[np.ndarray, np.ndarray]:
    key = (ny, nx, k1, k2, np.dtype(dtype).name)
    got = _BASIS_CACHE.get(key)
    if got is None:
        y = np.arange(ny)[:, None] * (2.0 * np.pi / ny)
        x = np.arange(nx)[None, :] * (2.0 * np.pi / nx)
        ky = np.arange(k1)
        kx = np.arange(k2)
        theta = (
            ky[:, None, None, None] * y[None, None, :, :]
            + kx[None, :, None, None] * x[None, None, :, :]
        ).reshape(k1 * k2, ny * nx)
        basis = np.concatenate([np.cos(theta), -np.sin(theta)], axis=0).T  # (N, 2K)
        basis = np.ascontiguousarray(basis, dtype=dtype)
        basis.setflags(write=False)
        wmode = np.broadcast_to(synthesis_col_weights(nx, k2), (k1, k2)).ravel()
        w2k = np.ascontiguousarray(np.concatenate([wmode, wmode]), dtype=dtype)
        w2k.setflags(write=False)
        got = (basis, w2k)
        _BASIS_CACHE[key] = got
    return got


def _mode_analysis(h: np.ndarray, k1: int, k2: int) -> np.ndarray:
    """Truncated transform: crop of the unnormalized real 2D FFT."""
    ny, nx = h.shape[-2:]
    basis, _ = _mode_basis(ny, nx, k1, k2, h.dtype)
    zri = h.reshape(-1, ny * nx) @ basis  # (M, 2K)
    K = k1 * k2
    z = zri[:, :K] + 1j * zri[:, K:]
    return z.reshape(h.shape[:-2] + (k1, k2))


def _mode_synthesis(
    y: np.ndarray, ny: int, nx: int, hermitian: bool, scale: float, dtype=np.float64
) -> np.ndarray:
    """Real field from corner-block coefficients.

    With hermitian=True this equals scale*(nx*ny) * irfft2 of the
    zero-padded half spectrum; with hermitian=False it is
    scale * Re(ifft2(full zero-padded spectrum)) * (nx*ny), which is the
    adjoint of _mode_analysis.
    """
    k1, k2 = y.shape[-2:]
    K = k1 * k2
    basis, w2k = _mode_basis(ny, nx, k1, k2, dtype)
    flat = y.reshape(-1, K)
    yri = np.empty((flat.shape[0], 2 * K), dtype=dtype)
    yri[:, :K] = flat.real
    yri[:, K:] = flat.imag
    if hermitian:
        yri *= w2k
    if scale != 1.0:
        yri *= scale
    out = yri @ basis.T
    return out.reshape(y.shape[:-2] + (ny, nx))


# Real packing of the mode algebra: coefficients ride as (K, 2d, B)
# stacks [re; im] and each mode's complex d-by-d kernel becomes the
# 2d-by-2d real block [[re, -im], [im, re]], whose transpose is exactly
# the conjugate-kernel adjoint the backward pass needs.

def _analysis_ri(h: np.ndarray, k1: int, k2: int) -> np.ndarray:
    """Truncated transform in stacked-real form: (..., ny, nx) -> (M, 2K)."""
    ny, nx = h.shape[-2:]
    basis, _ = _mode_basis(ny, nx, k1, k2, h.dtype)
    return h.reshape(-1, ny * nx) @ basis


def _synthesis_ri(
    yri: np.ndarray, ny: int, nx: int, k1: int, k2: int, hermitian: bool, scale: float
) -> np.ndarray:
    """Real field (M, ny*nx) from stacked-real coefficients (M, 2K)."""
    basis, w2k = _mode_basis(ny, nx, k1, k2, yri.dtype)
    if hermitian:
        yri = yri * w2k
        if scale != 1.0:
            yri *= scale
    elif scale != 1.0:
        yri = yri * scale
    return yri @ basis.T


def _pack_modes(zri: np.ndarray, chan: int, K: int) -> np.ndarray:
    """(M, 2K) with M = B*chan -> (K, 2*chan, B)."""
    b = zri.shape[0] // chan
    return np.ascontiguousarray(
        zri.reshape(b, chan, 2, K).transpose(3, 2, 1, 0).reshape(K, 2 * chan, b)
    )


def _unpack_modes(zk: np.ndarray) -> np.ndarray:
    """(K, 2*chan, B) -> (M, 2K)."""
    K, two_chan, b = zk.shape
    chan = two_chan // 2
    return np.ascontiguousarray(
        zk.reshape(K, 2, chan, b).transpose(3, 2, 1, 0)
    ).reshape(b * chan, 2 * K)


def _kernel_blocks(R_re: np.ndarray, R_im: np.ndarray) -> np.ndarray:
    """(d, d, k1, k2) pair -> (K, 2d, 2d) real mode blocks."""
    d = R_re.shape[0]
    K = R_re.shape[2] * R_re.shape[3]
    rr = R_re.reshape(d, d, K)
    ri = R_im.reshape(d, d, K)
    blocks = np.empty((K, 2 * d, 2 * d), dtype=R_re.dtype)
    blocks[:, :d, :d] = rr.transpose(2, 0, 1)
    blocks[:, :d, d:] = -ri.transpose(2, 0, 1)
    blocks[:, d:, :d] = ri.transpose(2, 0, 1)
    blocks[:, d:, d:] = rr.transpose(2, 0, 1)
    return blocks


def _spectral_conv_arr(h: np.ndarray, R: np.ndarray, k1: int, k2: int) -> np.ndarray:
    """Mode-wise matrix multiply in the truncated half spectrum."""
    b, d, ny, nx = h.shape
    _check_modes(nx, ny, k1, k2)
    R = np.asarray(R)
    blocks = _kernel_blocks(
        np.ascontiguousarray(R.real, dtype=h.dtype), np.ascontiguousarray(R.imag, dtype=h.dtype)
    )
    K = k1 * k2
    zk = _pack_modes(_analysis_ri(h, k1, k2), d, K)
    yri = _unpack_modes(np.matmul(blocks, zk))
    out = _synthesis_ri(yri, ny, nx, k1, k2, hermitian=True, scale=1.0 / (nx * ny))
    return out.reshape(b, d, ny, nx)


def _layer_preactivation(h: np.ndarray, blk: LayerBlock, k1: int, k2: int) -> np.ndarray:
    z = _chan_matmul(blk.W, h)
    z += _spectral_conv_arr(h, blk.R, k1, k2)
    z += blk.c.astype(h.dtype, copy=False)[None, :, None, None]
    return z


def _fno_layer_arr(h: np.ndarray, blk: LayerBlock, k1: int, k2: int) -> np.ndarray:
    z = _layer_preactivation(h, blk, k1, k2)
    return np.where(z > 0, z, 0.0).astype(h.dtype, copy=False)


def _ifno_layer_arr(h: np.ndarray, blk: LayerBlock, k1: int, k2: int, dt: float) -> np.ndarray:
    z = _layer_preactivation(h, blk, k1, k2)
    return h + dt * np.where(z > 0, z, 0.0).astype(h.dtype, copy=False)


def _lift_arr(model: OperatorModel, fn: np.ndarray) -> np.ndarray:
    return _chan_matmul(model.P, fn) + model.p.astype(fn.dtype, copy=False)[None, :, None, None]


def _project_arr(model: OperatorModel, h: np.ndarray) -> np.ndarray:
    t1 = _chan_matmul(model.Q1, h) + model.q1.astype(h.dtype, copy=False)[None, :, None, None]
    r1 = np.where(t1 > 0, t1, 0.0).astype(h.dtype, copy=False)
    return _chan_matmul(model.Q2, r1) + model.q2.astype(h.dtype, copy=False)[None, :, None, None]


def _normalize_in(model: OperatorModel, fb: np.ndarray) -> np.ndarray:
    mean = model.norm.in_mean.astype(fb.dtype, copy=False)[None, :, None, None]
    std = model.norm.in_std.astype(fb.dtype, copy=False)[None, :, None, None]
    return (fb - mean) / std


def _denormalize_out(model: OperatorModel, yraw: np.ndarray) -> np.ndarray:
    mean = model.norm.out_mean.astype(yraw.dtype, copy=False)[None, :, None, None]
    std = model.norm.out_std.astype(yraw.dtype, copy=False)[None, :, None, None]
    return yraw * std + mean


def forward_batch(model: OperatorModel, fb: np.ndarray) -> np.ndarray:
    """Forward pass over a batch (B, d_F, ny, nx) -> (B, d_u, ny, nx)."""
    hyper = model.hyper
    if fb.ndim != 4 or fb.shape[1] != hyper.d_F:
        raise InvalidArgumentError(f"expected (B,{hyper.d_F},ny,nx) input, got {fb.shape}")
    h = _lift_arr(model, _normalize_in(model, fb))
    if hyper.L > 0:
        dt = hyper.dt
        for layer in range(hyper.L):
            blk = model.block(layer)
            if hyper.variant == "ifno":
                h = _ifno_layer_arr(h, blk, hyper.k1, hyper.k2, dt)
            else:
                h = _fno_layer_arr(h, blk, hyper.k1, hyper.k2)
    return _denormalize_out(model, _project_arr(model, h))


def forward_hidden(model: OperatorModel, fb: np.ndarray) -> list[np.ndarray]:
    """Hidden states [h_0, ..., h_L] of the forward pass (normalized input)."""
    hyper = model.hyper
    h = _lift_arr(model, _normalize_in(model, fb))
    states = [h]
    if hyper.L > 0:
        dt = hyper.dt
        for layer in range(hyper.L):
            blk = model.block(layer)
            if hyper.variant == "ifno":
                h = _ifno_layer_arr(h, blk, hyper.k1, hyper.k2, dt)
            else:
                h = _fno_layer_arr(h, blk, hyper.k1, hyper.k2)
            states.append(h)
    return states


# ---------------------------------------------------------------------------
# GridField2D-level operations

def lift(model: OperatorModel, f: GridField2D) -> GridField2D:
    """Pointwise affine lift h(x,0) = P f(x) + p (no normalization)."""
    if f.channels != model.hyper.d_F:
        raise InvalidArgumentError(f"input has {f.channels} channels, model wants {model.hyper.d_F}")
    out = _lift_arr(model, f.data[None])[0]
    return GridField2D.from_array(out)


def spectral_conv(h: GridField2D, R: np.ndarray) -> GridField2D:
    """Per-mode complex matrix multiply; unretained modes are zeroed."""
    R = np.asarray(R)
    if R.ndim != 4 or R.shape[0] != R.shape[1] or R.shape[0] != h.channels:
        raise InvalidArgumentError(f"kernel shape {R.shape} incompatible with {h.channels} channels")
    k1, k2 = R.shape[2], R.shape[3]
    out = _spectral_conv_arr(h.data[None], R, k1, k2)[0]
    return GridField2D.from_array(out)


def fno_layer(h: GridField2D, blk: LayerBlock) -> GridField2D:
    """ReLU(W h + spectral_conv(h) + c)."""
    _check_block(h, blk)
    out = _fno_layer_arr(h.data[None], blk, blk.R_re.shape[2], blk.R_re.shape[3])[0]
    return GridField2D.from_array(out)


def ifno_layer(h: GridField2D, blk: LayerBlock, dt: float) -> GridField2D:
    """h + dt * ReLU(W h + spectral_conv(h) + c)."""
    if dt <= 0:
        raise InvalidArgumentError("dt must be positive")
    _check_block(h, blk)
    out = _ifno_layer_arr(h.data[None], blk, blk.R_re.shape[2], blk.R_re.shape[3], dt)[0]
    return GridField2D.from_array(out)


def _check_block(h: GridField2D, blk: LayerBlock) -> None:
    d = blk.W.shape[0]
    if h.channels != d:
        raise InvalidArgumentError(f"field has {h.channels} channels, block wants {d}")


def project(model: OperatorModel, hL: GridField2D) -> GridField2D:
    """Q2 ReLU(Q1 h + q1) + q2 (no denormalization)."""
    if hL.channels != model.hyper.d:
        raise InvalidArgumentError(f"field has {hL.channels} channels, model wants {model.hyper.d}")
    out = _project_arr(model, hL.data[None])[0]
    return GridField2D.from_array(out)


def forward(model: OperatorModel, f: GridField2D) -> GridField2D:
    """Full normalized forward pass on one input field."""
    out = forward_batch(model, f.data[None])[0]
    return GridField2D.from_array(out)


# ---------------------------------------------------------------------------
# Checkpoint serialization (little-endian binary, bitwise-exact roundtrip)

def save_checkpoint(model: OperatorModel, path) -> None:
    hyper = model.hyper
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", _CKPT_VERSION))
        fh.write(struct.pack("<B", VARIANTS.index(hyper.variant)))
        fh.write(
            struct.pack(
                "<7I", hyper.d, hyper.d_F, hyper.d_u, hyper.d_Q, hyper.k1, hyper.k2, hyper.L
            )
        )
        for arr in (model.norm.in_mean, model.norm.in_std, model.norm.out_mean, model.norm.out_std):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        for _, arr in model.param_items():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> OperatorModel:
    with open(path, "rb") as fh:
        if fh.read(8) != _CKPT_MAGIC:
            raise InvalidArgumentError(f"{path} is not a checkpoint file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _CKPT_VERSION:
            raise InvalidArgumentError(f"unsupported checkpoint version {version}")
        (variant_id,) = struct.unpack("<B", fh.read(1))
        d, d_F, d_u, d_Q, k1, k2, L = struct.unpack("<7I", fh.read(28))
        hyper = HyperParams(d=d, d_F=d_F, d_u=d_u, d_Q=d_Q, k1=k1, k2=k2, L=L,
                            variant=VARIANTS[variant_id])

        def read(shape):
            count = int(np.prod(shape))
            return np.frombuffer(fh.read(8 * count), dtype="<f8").astype(np.float64).reshape(shape)

        norm = NormStats(read((d_F,)), read((d_F,)), read((d_u,)), read((d_u,)))
        P = read((d, d_F))
        p = read((d,))
        n_blocks = 1 if hyper.variant == "ifno" else L
        blocks = [
            LayerBlock(
                W=read((d, d)),
                R_re=read((d, d, k1, k2)),
                R_im=read((d, d, k1, k2)),
                c=read((d,)),
            )
            for _ in range(n_blocks)
        ]
        Q1 = read((d_Q, d))
        q1 = read((d_Q,))
        Q2 = read((d_u, d_Q))
        q2 = read((d_u,))
    return OperatorModel(
        hyper=hyper, P=P, p=p, blocks=blocks, Q1=Q1, q1=q1, Q2=Q2, q2=q2, norm=norm
    )
