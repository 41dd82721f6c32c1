"""Training: exact reverse-mode gradients, Adam, schedules, and the loop.

The loss is the batch mean of per-sample relative L2 errors computed in
physical (denormalized) units. Gradients are derived by hand for the
whole forward graph; the spectral path's adjoint uses the conjugate
transform pair with per-column weights that account for the Hermitian
completion of the half spectrum. The ReLU subgradient at 0 is 0.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgumentError, NumericalFailureError
from .grid import GridField2D
from .operator import (
    HyperParams,
    LayerBlock,
    NormStats,
    OperatorModel,
    _analysis_ri,
    _chan_matmul,
    _kernel_blocks,
    _mode_basis,
    _normalize_in,
    _pack_modes,
    _synthesis_ri,
    _unpack_modes,
    forward_batch,
)
from .randfield import RngStream


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    lr0: float = 1e-3
    decay_every: int = 100
    decay_ratio: float = 0.5
    batch_size: int = 20
    seed: int = 0
    float32: bool = False  # throughput-only option; tests always run float64
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.epochs < 0:
            raise InvalidArgumentError("epochs must be >= 0")
        if self.lr0 <= 0 or not (0 < self.decay_ratio <= 1) or self.batch_size < 1:
            raise InvalidArgumentError("invalid optimization settings")
        if self.decay_every < 1:
            raise InvalidArgumentError("decay_every must be >= 1")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    test_metric: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)


@dataclass
class Gradients:
    """Cotangents congruent with OperatorModel's parameter tensors."""

    P: np.ndarray
    p: np.ndarray
    blocks: list[LayerBlock]
    Q1: np.ndarray
    q1: np.ndarray
    Q2: np.ndarray
    q2: np.ndarray

    def param_items(self):
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


def relative_l2(pred, truth) -> float:
    """||pred - truth|| / ||truth|| over all nodes and channels."""
    p = pred.data if isinstance(pred, GridField2D) else np.asarray(pred)
    t = truth.data if isinstance(truth, GridField2D) else np.asarray(truth)
    if p.shape != t.shape:
        raise InvalidArgumentError(f"shape mismatch {p.shape} vs {t.shape}")
    denom = np.linalg.norm(t)
    if denom == 0.0:
        raise InvalidArgumentError("truth field has zero norm")
    return float(np.linalg.norm(p - t) / denom)


def _as_batch(batch) -> tuple[np.ndarray, np.ndarray]:
    """Accept (inputs, outputs) arrays or a list of field pairs."""
    if isinstance(batch, tuple) and len(batch) == 2 and isinstance(batch[0], np.ndarray):
        return batch
    fs, us = [], []
    for f, u in batch:
        fs.append(f.data if isinstance(f, GridField2D) else np.asarray(f))
        us.append(u.data if isinstance(u, GridField2D) else np.asarray(u))
    return np.stack(fs), np.stack(us)


def _spectral_conv_backward(gout, zk, blocks, d, nx, ny, k1, k2):
    """Cotangents of (kernel blocks, h) for the truncated spectral conv.

    The output cotangent maps back through the conjugate transform pair:
    the Hermitian-completion column weights reappear on the analysis
    side, the transposed 2d-by-2d mode block is exactly the conjugate
    kernel, and the input cotangent is an unweighted synthesis.
    """
    b = gout.shape[0]
    K = k1 * k2
    _, w2k = _mode_basis(ny, nx, k1, k2, gout.dtype)
    ybar_ri = _analysis_ri(gout, k1, k2)
    ybar_ri *= w2k / (nx * ny)
    ybar_k = _pack_modes(ybar_ri, d, K)  # (K, 2d, B)
    gblocks = np.matmul(ybar_k, zk.transpose(0, 2, 1))  # (K, 2d, 2d)
    zbar_k = np.matmul(blocks.transpose(0, 2, 1), ybar_k)
    ghin = _synthesis_ri(_unpack_modes(zbar_k), ny, nx, k1, k2, hermitian=False, scale=1.0)
    return gblocks, ghin.reshape(b, d, ny, nx)


def _block_grads_to_kernel(gblocks: np.ndarray, d: int, k1: int, k2: int):
    """(K, 2d, 2d) block cotangents -> (R_re, R_im) cotangents.

    Each kernel entry appears in four block cells ([[re,-im],[im,re]]),
    so the real part collects the two diagonal blocks and the imaginary
    part the difference of the off-diagonal ones.
    """
    g_re = (gblocks[:, :d, :d] + gblocks[:, d:, d:]).transpose(1, 2, 0).reshape(d, d, k1, k2)
    g_im = (gblocks[:, d:, :d] - gblocks[:, :d, d:]).transpose(1, 2, 0).reshape(d, d, k1, k2)
    return g_re, g_im


def loss_and_gradients(model: OperatorModel, batch) -> tuple[float, Gradients]:
    """Batch-mean relative-L2 loss and its exact parameter gradients."""
    fb, ub = _as_batch(batch)
    if fb.shape[0] == 0:
        raise InvalidArgumentError("batch must be non-empty")
    hyper = model.hyper
    dtype = fb.dtype if fb.dtype == np.float32 else np.float64
    fb = fb.astype(dtype, copy=False)
    ub = ub.astype(dtype, copy=False)
    B = fb.shape[0]
    ny, nx = fb.shape[-2:]
    k1, k2 = hyper.k1, hyper.k2

    # forward with tape
    fn = _normalize_in(model, fb)
    h = _chan_matmul(model.P, fn) + model.p.astype(dtype, copy=False)[None, :, None, None]
    dt = 1.0 / hyper.L if (hyper.variant == "ifno" and hyper.L > 0) else 1.0
    K = k1 * k2
    d = hyper.d
    tape = []
    kb = {}  # real mode blocks per LayerBlock (ifno reuses one block L times)
    for layer in range(hyper.L):
        blk = model.block(layer)
        if id(blk) not in kb:
            kb[id(blk)] = _kernel_blocks(
                blk.R_re.astype(dtype, copy=False), blk.R_im.astype(dtype, copy=False)
            )
        blocks = kb[id(blk)]
        zk = _pack_modes(_analysis_ri(h, k1, k2), d, K)  # (K, 2d, B)
        yri = _unpack_modes(np.matmul(blocks, zk))
        z = _synthesis_ri(yri, ny, nx, k1, k2, hermitian=True, scale=1.0 / (nx * ny))
        z = z.reshape(B, d, ny, nx)
        z += _chan_matmul(blk.W, h)
        z += blk.c.astype(dtype, copy=False)[None, :, None, None]
        mask = z > 0
        a = np.maximum(z, 0.0, out=z)
        tape.append((h, zk, mask))
        if hyper.variant == "ifno":
            a *= dt
            a += h
        h = a

    hL = h
    t1 = _chan_matmul(model.Q1, hL) + model.q1.astype(dtype, copy=False)[None, :, None, None]
    m1 = t1 > 0
    r1 = np.where(m1, t1, 0.0).astype(dtype, copy=False)
    yraw = _chan_matmul(model.Q2, r1) + model.q2.astype(dtype, copy=False)[None, :, None, None]
    out_std = model.norm.out_std.astype(dtype, copy=False)[None, :, None, None]
    y = yraw * out_std + model.norm.out_mean.astype(dtype, copy=False)[None, :, None, None]

    diff = y - ub
    num = np.sqrt(np.sum(diff * diff, axis=(1, 2, 3)))
    den = np.sqrt(np.sum(ub * ub, axis=(1, 2, 3)))
    if np.any(den == 0.0):
        raise InvalidArgumentError("batch contains a zero-norm target")
    loss = float(np.mean(num / den))

    # backward
    scale = np.where(num > 0, 1.0 / (B * np.maximum(num, 1e-300) * den), 0.0)
    gy = diff * scale[:, None, None, None]
    gyraw = gy * out_std
    gq2 = gyraw.sum(axis=(0, 2, 3))
    gQ2 = np.einsum("buyx,bqyx->uq", gyraw, r1, optimize=True)
    gr1 = _chan_matmul(model.Q2.T, gyraw)
    gt1 = np.where(m1, gr1, 0.0)
    gq1 = gt1.sum(axis=(0, 2, 3))
    gQ1 = np.einsum("bqyx,biyx->qi", gt1, hL, optimize=True)
    gh = _chan_matmul(model.Q1.T, gt1)

    n_blocks = 1 if hyper.variant == "ifno" else hyper.L
    gblocks = [
        LayerBlock(
            W=np.zeros_like(model.blocks[i].W),
            R_re=np.zeros_like(model.blocks[i].R_re),
            R_im=np.zeros_like(model.blocks[i].R_im),
            c=np.zeros_like(model.blocks[i].c),
        )
        for i in range(n_blocks)
    ]
    for layer in reversed(range(hyper.L)):
        blk = model.block(layer)
        gblk = gblocks[0] if hyper.variant == "ifno" else gblocks[layer]
        h_in, zk, mask = tape[layer]
        gz = gh * mask
        if hyper.variant == "ifno":
            gz *= dt
        gblk.W += np.matmul(
            gz.reshape(B, d, -1), h_in.reshape(B, d, -1).transpose(0, 2, 1)
        ).sum(axis=0)
        gblk.c += gz.sum(axis=(0, 2, 3))
        gmode, gconv = _spectral_conv_backward(gz, zk, kb[id(blk)], d, nx, ny, k1, k2)
        g_re, g_im = _block_grads_to_kernel(gmode, d, k1, k2)
        gblk.R_re += g_re
        gblk.R_im += g_im
        if hyper.variant == "ifno":
            gh += _chan_matmul(blk.W.T, gz)
            gh += gconv
        else:
            gh = _chan_matmul(blk.W.T, gz)
            gh += gconv

    gp = gh.sum(axis=(0, 2, 3))
    gP = np.einsum("boyx,biyx->oi", gh, fn, optimize=True)

    grads = Gradients(P=gP, p=gp, blocks=gblocks, Q1=gQ1, q1=gq1, Q2=gQ2, q2=gq2)
    return loss, grads


def gradients(model: OperatorModel, batch) -> Gradients:
    """Exact reverse-mode gradients of the batch-mean relative-L2 loss."""
    return loss_and_gradients(model, batch)[1]


def batch_loss(model: OperatorModel, batch) -> float:
    fb, ub = _as_batch(batch)
    y = forward_batch(model, fb)
    diff = y - ub
    num = np.sqrt(np.sum(diff * diff, axis=(1, 2, 3)))
    den = np.sqrt(np.sum(ub * ub, axis=(1, 2, 3)))
    if np.any(den == 0.0):
        raise InvalidArgumentError("batch contains a zero-norm target")
    return float(np.mean(num / den))


# ---------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    t: int
    m: dict
    v: dict

    @classmethod
    def init(cls, model: OperatorModel) -> "AdamState":
        zeros = {name: np.zeros_like(arr) for name, arr in model.param_items()}
        return cls(t=0, m=zeros, v={name: np.zeros_like(arr) for name, arr in model.param_items()})


def _adam_update_inplace(
    model: OperatorModel,
    grads: Gradients,
    state: AdamState,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
    weight_decay: float,
) -> None:
    state.t += 1
    t = state.t
    gmap = dict(grads.param_items())
    for name, arr in model.param_items():
        g = gmap[name]
        if weight_decay:
            g = g + weight_decay * arr
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        arr -= lr * m_hat / (np.sqrt(v_hat) + eps)


def adam_step(
    model: OperatorModel,
    grads: Gradients,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> tuple[OperatorModel, AdamState]:
    """Bias-corrected Adam update applied elementwise to every tensor."""
    new_model = model.copy()
    new_state = AdamState(
        t=state.t,
        m={k: v.copy() for k, v in state.m.items()},
        v={k: v.copy() for k, v in state.v.items()},
    )
    _adam_update_inplace(new_model, grads, new_state, lr, beta1, beta2, eps, weight_decay)
    return new_model, new_state


def lr_at(config: TrainConfig, epoch: int) -> float:
    """Step decay: lr0 * ratio^(epoch // decay_every)."""
    if epoch < 0:
        raise InvalidArgumentError("epoch must be >= 0")
    return config.lr0 * config.decay_ratio ** (epoch // config.decay_every)


def evaluate(model: OperatorModel, split, batch: int = 50) -> tuple[float, float]:
    """Mean and standard error of per-sample relative L2 over a split."""
    fb, ub = _as_batch(split)
    if fb.shape[0] == 0:
        raise InvalidArgumentError("split must be non-empty")
    errs = []
    for start in range(0, fb.shape[0], batch):
        y = forward_batch(model, fb[start : start + batch])
        u = ub[start : start + batch]
        num = np.sqrt(np.sum((y - u) ** 2, axis=(1, 2, 3)))
        den = np.sqrt(np.sum(u * u, axis=(1, 2, 3)))
        errs.append(num / den)
    errs = np.concatenate(errs)
    mean = float(errs.mean())
    se = float(errs.std(ddof=1) / np.sqrt(errs.size)) if errs.size > 1 else 0.0
    return mean, se


def _epoch_permutation(seed: int, epoch: int, n: int) -> np.ndarray:
    keys = RngStream(seed, epoch).cursor().u64(n)
    return np.argsort(keys, kind="stable")


def train(
    model: OperatorModel,
    train_split,
    test_split,
    config: TrainConfig,
    fit_norm: bool = True,
) -> tuple[OperatorModel, TrainHistory]:
    """Mini-batch Adam loop; deterministic given (model, data, config)."""
    ftr, utr = _as_batch(train_split)
    fte, ute = _as_batch(test_split)
    model = model.copy()  # the loop owns and mutates its working copy
    if fit_norm:
        model.norm = NormStats.fit(ftr, utr)
    if config.float32:
        ftr, utr = ftr.astype(np.float32), utr.astype(np.float32)
    state = AdamState.init(model)
    history = TrainHistory()
    n = ftr.shape[0]
    for epoch in range(config.epochs):
        tic = time.perf_counter()
        lr = lr_at(config, epoch)
        perm = _epoch_permutation(config.seed, epoch, n)
        total, seen = 0.0, 0
        for start in range(0, n, config.batch_size):
            sel = perm[start : start + config.batch_size]
            loss, grads = loss_and_gradients(model, (ftr[sel], utr[sel]))
            if not np.isfinite(loss):
                raise NumericalFailureError(
                    f"non-finite loss at epoch {epoch}, batch starting {start}"
                )
            _adam_update_inplace(
                model, grads, state, lr, 0.9, 0.999, 1e-8, config.weight_decay
            )
            total += loss * sel.size
            seen += sel.size
        metric, _ = evaluate(model, (fte, ute))
        history.train_loss.append(total / seen)
        history.test_metric.append(metric)
        history.lr.append(lr)
        history.seconds.append(time.perf_counter() - tic)
    return model, history


def shallow_to_deep(trained: OperatorModel, new_L: int) -> OperatorModel:
    """Reuse a trained weight-tied model as the initializer of a deeper one.

    The shared block, lifting, projection and normalization are copied
    verbatim; only the layer count (and hence dt = 1/L) changes.
    """
    if trained.hyper.variant != "ifno":
        raise InvalidArgumentError("shallow-to-deep requires layer-independent parameters (ifno)")
    if new_L < trained.hyper.L:
        raise InvalidArgumentError("new depth must be >= the trained depth")
    out = trained.copy()
    out.hyper = replace(trained.hyper, L=new_L)
    return out


def save_history_csv(history: TrainHistory, path, include_timings: bool = False) -> None:
    """CSV with columns epoch, lr, train_loss, test_metric, seconds.

    Timings are zeroed by default so that repeated runs with one seed
    produce byte-identical files; pass include_timings=True for profiling.
    """
    with open(path, "w", newline="\n") as fh:
        fh.write("epoch,lr,train_loss,test_metric,seconds\n")
        for e in range(len(history.train_loss)):
            secs = history.seconds[e] if include_timings else 0.0
            fh.write(
                f"{e},{history.lr[e]!r},{history.train_loss[e]!r},"
                f"{history.test_metric[e]!r},{secs!r}\n"
            )
