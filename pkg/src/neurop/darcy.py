"""Ground-truth generator: finite-difference Darcy solves and datasets.

The heterogeneous Darcy equation -div(b grad u) = g with Dirichlet data
is discretized with the 5-point conservative scheme; coefficients at
half nodes are arithmetic means of the adjacent nodal values. The SPD
interior system is solved by Jacobi-preconditioned conjugate gradients
to a relative residual of 1e-10 (iteration cap 50*n).
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError, NumericalFailureError
from .grid import GridField2D
from .randfield import RngStream, sample_boundary_setting2, sample_permeability, sample_source_setting2

CG_TOL = 1e-10
_MAGIC = b"NOPDS01\0"
_VERSION = 1


@dataclass(frozen=True)
class DarcyProblem:
    """Permeability b > 0, source g, and Dirichlet values u_D on one grid."""

    b: GridField2D
    g: GridField2D
    u_D: GridField2D

    def __post_init__(self):
        shapes = {(f.nx, f.ny, f.channels) for f in (self.b, self.g, self.u_D)}
        if len(shapes) != 1 or next(iter(shapes))[2] != 1:
            raise InvalidArgumentError("b, g, u_D must be single-channel fields on one grid")
        if np.any(self.b.data <= 0.0):
            raise InvalidArgumentError("permeability must be positive everywhere")


def _half_coefficients(b: np.ndarray):
    """Arithmetic-mean coefficients on x- and y-faces, (ny, nx-1)/(ny-1, nx)."""
    bx = 0.5 * (b[:, :-1] + b[:, 1:])
    by = 0.5 * (b[:-1, :] + b[1:, :])
    return bx, by


def _assemble_interior(b: np.ndarray, hx: float, hy: float) -> sp.csr_matrix:
    ny, nx = b.shape
    my, mx = ny - 2, nx - 2
    bx, by = _half_coefficients(b)
    # face coefficients seen from interior node (j, i), 1-based in the full grid
    bxm = bx[1:-1, :-1] / hx**2  # west face
    bxp = bx[1:-1, 1:] / hx**2  # east face
    bym = by[:-1, 1:-1] / hy**2  # south face
    byp = by[1:, 1:-1] / hy**2  # north face

    idx = np.arange(my * mx).reshape(my, mx)
    rows = [idx.ravel()]
    cols = [idx.ravel()]
    vals = [(bxm + bxp + bym + byp).ravel()]
    rows += [idx[:, :-1].ravel(), idx[:, 1:].ravel()]
    cols += [idx[:, 1:].ravel(), idx[:, :-1].ravel()]
    vals += [-bxp[:, :-1].ravel(), -bxm[:, 1:].ravel()]
    rows += [idx[:-1, :].ravel(), idx[1:, :].ravel()]
    cols += [idx[1:, :].ravel(), idx[:-1, :].ravel()]
    vals += [-byp[:-1, :].ravel(), -bym[1:, :].ravel()]
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(my * mx, my * mx),
    )
    return mat.tocsr()


def _interior_rhs(b: np.ndarray, g: np.ndarray, u_bc: np.ndarray, hx: float, hy: float) -> np.ndarray:
    bx, by = _half_coefficients(b)
    rhs = g[1:-1, 1:-1].copy()
    rhs += bx[1:-1, 1:] * u_bc[1:-1, 2:] / hx**2
    rhs += bx[1:-1, :-1] * u_bc[1:-1, :-2] / hx**2
    rhs += by[1:, 1:-1] * u_bc[2:, 1:-1] / hy**2
    rhs += by[:-1, 1:-1] * u_bc[:-2, 1:-1] / hy**2
    return rhs.ravel()


def _pcg(mat: sp.csr_matrix, rhs: np.ndarray, tol: float, maxiter: int) -> np.ndarray:
    bnorm = np.linalg.norm(rhs)
    x = np.zeros_like(rhs)
    if bnorm == 0.0:
        return x
    inv_diag = 1.0 / mat.diagonal()
    r = rhs.copy()
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    for _ in range(maxiter):
        if np.linalg.norm(r) <= tol * bnorm:
            return x
        ap = mat @ p
        alpha = rz / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.linalg.norm(r) <= tol * bnorm:
        return x
    raise NumericalFailureError(
        f"CG did not reach relative residual {tol:g} within {maxiter} iterations"
    )


def solve_darcy(problem: DarcyProblem) -> GridField2D:
    """Solve the conservative 5-point discretization with Dirichlet data."""
    b = problem.b.data[0]
    g = problem.g.data[0]
    ny, nx = b.shape
    if nx < 17 or ny < 17:
        raise InvalidArgumentError("solver requires a fine grid of at least 17x17")
    hx, hy = problem.b.dx, problem.b.dy
    u_bc = np.zeros_like(b)
    mask = np.zeros_like(b, dtype=bool)
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
    u_bc[mask] = problem.u_D.data[0][mask]

    mat = _assemble_interior(b, hx, hy)
    rhs = _interior_rhs(b, g, u_bc, hx, hy)
    sol = _pcg(mat, rhs, CG_TOL, maxiter=50 * max(nx, ny))

    u = u_bc.copy()
    u[1:-1, 1:-1] = sol.reshape(ny - 2, nx - 2)
    return GridField2D(nx=nx, ny=ny, channels=1, data=u[None])


def interior_residual(problem: DarcyProblem, u: GridField2D) -> float:
    """Relative residual of the discrete interior equations at u."""
    b = problem.b.data[0]
    g = problem.g.data[0]
    hx, hy = problem.b.dx, problem.b.dy
    mat = _assemble_interior(b, hx, hy)
    u_bc = np.zeros_like(b)
    u_bc[0, :], u_bc[-1, :] = u.data[0][0, :], u.data[0][-1, :]
    u_bc[:, 0], u_bc[:, -1] = u.data[0][:, 0], u.data[0][:, -1]
    rhs = _interior_rhs(b, g, u_bc, hx, hy)
    res = mat @ u.data[0][1:-1, 1:-1].ravel() - rhs
    denom = np.linalg.norm(rhs)
    return float(np.linalg.norm(res) / denom) if denom > 0 else float(np.linalg.norm(res))


def flux_balance(problem: DarcyProblem, u: GridField2D) -> tuple[float, float]:
    """(source integral, net boundary outflux) of the discrete solution.

    Summing the conservative interior equations telescopes all interior
    face fluxes, so sum(g)*hx*hy must equal the flux through faces that
    cross the boundary.
    """
    b = problem.b.data[0]
    g = problem.g.data[0]
    uu = u.data[0]
    hx, hy = problem.b.dx, problem.b.dy
    bx, by = _half_coefficients(b)
    source = float(np.sum(g[1:-1, 1:-1]) * hx * hy)
    flux = 0.0
    flux += float(np.sum(bx[1:-1, 0] * (uu[1:-1, 1] - uu[1:-1, 0])) * hy / hx)
    flux += float(np.sum(bx[1:-1, -1] * (uu[1:-1, -2] - uu[1:-1, -1])) * hy / hx)
    flux += float(np.sum(by[0, 1:-1] * (uu[1, 1:-1] - uu[0, 1:-1])) * hx / hy)
    flux += float(np.sum(by[-1, 1:-1] * (uu[-2, 1:-1] - uu[-1, 1:-1])) * hx / hy)
    return source, flux


def downsample(field: GridField2D, stride: int) -> GridField2D:
    """Point subsampling at every stride-th node, keeping both endpoints."""
    if stride < 1:
        raise InvalidArgumentError("stride must be >= 1")
    if (field.nx - 1) % stride or (field.ny - 1) % stride:
        raise InvalidArgumentError(
            f"stride {stride} does not divide grid intervals ({field.nx - 1}, {field.ny - 1})"
        )
    data = field.data[:, ::stride, ::stride]
    return GridField2D(
        nx=(field.nx - 1) // stride + 1,
        ny=(field.ny - 1) // stride + 1,
        channels=field.channels,
        data=data,
    )


@dataclass
class Dataset:
    """Ordered (input field, output field) pairs plus generation metadata."""

    inputs: np.ndarray  # (n, c_in, ny, nx) float64
    outputs: np.ndarray  # (n, c_out, ny, nx) float64
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.ascontiguousarray(self.inputs, dtype=np.float64)
        self.outputs = np.ascontiguousarray(self.outputs, dtype=np.float64)
        if self.inputs.ndim != 4 or self.outputs.ndim != 4:
            raise InvalidArgumentError("inputs/outputs must be (n, c, ny, nx) arrays")
        if self.inputs.shape[0] != self.outputs.shape[0]:
            raise InvalidArgumentError("inputs and outputs disagree on sample count")
        if self.inputs.shape[2:] != self.outputs.shape[2:]:
            raise InvalidArgumentError("inputs and outputs disagree on grid shape")

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    def sample(self, j: int) -> tuple[GridField2D, GridField2D]:
        return GridField2D.from_array(self.inputs[j]), GridField2D.from_array(self.outputs[j])

    def save(self, path) -> None:
        n, c_in, ny, nx = self.inputs.shape
        c_out = self.outputs.shape[1]
        meta = json.dumps(self.metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<IIIIII", _VERSION, n, nx, ny, c_in, c_out))
            fh.write(struct.pack("<I", len(meta)))
            fh.write(meta)
            for j in range(n):
                fh.write(self.inputs[j].astype("<f8").tobytes())
                fh.write(self.outputs[j].astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "Dataset":
        with open(path, "rb") as fh:
            if fh.read(8) != _MAGIC:
                raise InvalidArgumentError(f"{path} is not a dataset file")
            version, n, nx, ny, c_in, c_out = struct.unpack("<IIIIII", fh.read(24))
            if version != _VERSION:
                raise InvalidArgumentError(f"unsupported dataset version {version}")
            (meta_len,) = struct.unpack("<I", fh.read(4))
            metadata = json.loads(fh.read(meta_len).decode("utf-8"))
            inputs = np.empty((n, c_in, ny, nx))
            outputs = np.empty((n, c_out, ny, nx))
            for j in range(n):
                inputs[j] = np.frombuffer(fh.read(8 * c_in * ny * nx), dtype="<f8").reshape(
                    c_in, ny, nx
                )
                outputs[j] = np.frombuffer(fh.read(8 * c_out * ny * nx), dtype="<f8").reshape(
                    c_out, ny, nx
                )
        return cls(inputs=inputs, outputs=outputs, metadata=metadata)

    def sha256(self, path=None) -> str:
        """Hash of the serialized bytes (hashes `path` if given)."""
        h = hashlib.sha256()
        if path is not None:
            with open(path, "rb") as fh:
                for chunk in iter(lambda: fh.read(1 << 20), b""):
                    h.update(chunk)
            return h.hexdigest()
        import io

        buf = io.BytesIO()
        n = self.n_samples
        meta = json.dumps(self.metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
        buf.write(_MAGIC)
        buf.write(
            struct.pack(
                "<IIIIII", _VERSION, n, self.inputs.shape[3], self.inputs.shape[2],
                self.inputs.shape[1], self.outputs.shape[1],
            )
        )
        buf.write(struct.pack("<I", len(meta)))
        buf.write(meta)
        for j in range(n):
            buf.write(self.inputs[j].astype("<f8").tobytes())
            buf.write(self.outputs[j].astype("<f8").tobytes())
        h.update(buf.getvalue())
        return h.hexdigest()


def _coordinate_channels(n: int) -> tuple[np.ndarray, np.ndarray]:
    nodes = np.linspace(0.0, 1.0, n)
    x = np.broadcast_to(nodes[None, :], (n, n))
    y = np.broadcast_to(nodes[:, None], (n, n))
    return x, y


def _constant_field(n: int, value: float) -> GridField2D:
    return GridField2D(nx=n, ny=n, channels=1, data=np.full((1, n, n), value))


def make_dataset_setting1(
    n_samples: int, base_seed: int, fine_n: int = 241, stride: int = 8
) -> Dataset:
    """Permeability -> pressure pairs: input channels [x, y, b], output [u].

    Each sample draws b on the fine grid (stream index = sample index),
    solves with g = 1 and u_D = 0, and downsamples both fields.
    """
    if n_samples < 1:
        raise InvalidArgumentError("need at least one sample")
    g = _constant_field(fine_n, 1.0)
    u_d = _constant_field(fine_n, 0.0)
    coarse_n = (fine_n - 1) // stride + 1
    x, y = _coordinate_channels(coarse_n)
    inputs = np.empty((n_samples, 3, coarse_n, coarse_n))
    outputs = np.empty((n_samples, 1, coarse_n, coarse_n))
    for j in range(n_samples):
        b = sample_permeability(RngStream(base_seed, j), fine_n)
        try:
            u = solve_darcy(DarcyProblem(b=b, g=g, u_D=u_d))
        except NumericalFailureError as exc:
            raise NumericalFailureError(f"sample {j}: {exc}") from exc
        inputs[j, 0], inputs[j, 1] = x, y
        inputs[j, 2] = downsample(b, stride).data[0]
        outputs[j, 0] = downsample(u, stride).data[0]
    metadata = {
        "setting": "darcy1",
        "base_seed": int(base_seed),
        "fine_n": int(fine_n),
        "stride": int(stride),
        "coarse_n": int(coarse_n),
        "channels_in": ["x", "y", "b"],
        "channels_out": ["u"],
    }
    return Dataset(inputs=inputs, outputs=outputs, metadata=metadata)


def make_dataset_setting2(
    n_samples: int,
    base_seed: int,
    fine_n: int = 241,
    stride: int = 8,
    b_seed: int = 2024,
) -> Dataset:
    """Source+boundary -> pressure pairs on one fixed permeability field.

    Input channels are [x, y, g, u_D-padded]; sample j draws g from
    stream 2j and the boundary data from stream 2j+1 of base_seed.
    """
    if n_samples < 1:
        raise InvalidArgumentError("need at least one sample")
    b = sample_permeability(RngStream(b_seed, 0), fine_n)
    coarse_n = (fine_n - 1) // stride + 1
    x, y = _coordinate_channels(coarse_n)
    inputs = np.empty((n_samples, 4, coarse_n, coarse_n))
    outputs = np.empty((n_samples, 1, coarse_n, coarse_n))
    for j in range(n_samples):
        g, _ = sample_source_setting2(RngStream(base_seed, 2 * j), fine_n)
        u_d, _ = sample_boundary_setting2(RngStream(base_seed, 2 * j + 1), fine_n)
        try:
            u = solve_darcy(DarcyProblem(b=b, g=g, u_D=u_d))
        except NumericalFailureError as exc:
            raise NumericalFailureError(f"sample {j}: {exc}") from exc
        inputs[j, 0], inputs[j, 1] = x, y
        inputs[j, 2] = downsample(g, stride).data[0]
        inputs[j, 3] = downsample(u_d, stride).data[0]
        outputs[j, 0] = downsample(u, stride).data[0]
    metadata = {
        "setting": "darcy2",
        "base_seed": int(base_seed),
        "b_seed": int(b_seed),
        "fine_n": int(fine_n),
        "stride": int(stride),
        "coarse_n": int(coarse_n),
        "channels_in": ["x", "y", "g", "u_D"],
        "channels_out": ["u"],
    }
    return Dataset(inputs=inputs, outputs=outputs, metadata=metadata)
