"""Fixed-point iteration harness and a hand-assembled implicit operator.

The weight-tied residual layer h + dt*ReLU(...) can emulate a generic
fixed-point update U <- U + R(U, F). This module provides the reference
iteration, an empirical contraction estimator, and a constructive
build: an implicit operator whose forward pass runs Richardson
iteration for an SPD linear system, exactly, layer for layer.

Construction notes: the system state lives in channels on a tiny 2x2
grid of constant fields. Signed increments pass through ReLU via
channel doubling -- the state is carried as (h+, h-) with
U = sigma(h+) - sigma(h-), both parts non-negative by construction --
and the coupling matrix occupies only the zero-frequency mode of the
spectral kernel (for constant fields the zero mode acts pointwise).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError, NumericalFailureError
from .grid import GridField2D
from .operator import (
    HyperParams,
    LayerBlock,
    NormStats,
    OperatorModel,
    _ifno_layer_arr,
    _lift_arr,
)
from .randfield import RngStream


@dataclass
class FixedPointProblem:
    """Increment map R(U, F), load F, initial guess U0."""

    increment: Callable[[np.ndarray, np.ndarray], np.ndarray]
    load: np.ndarray
    initial: np.ndarray
    contraction: float | None = None


def iterate(problem: FixedPointProblem, L: int) -> np.ndarray:
    """U^L under U^{l+1} = U^l + R(U^l, F)."""
    if L < 0:
        raise InvalidArgumentError("L must be >= 0")
    u = np.asarray(problem.initial, dtype=np.float64).copy()
    f = np.asarray(problem.load, dtype=np.float64)
    for step in range(L):
        u = u + problem.increment(u, f)
        if not np.all(np.isfinite(u)):
            raise NumericalFailureError(f"iterate diverged at step {step + 1}")
    return u


def iterate_trace(problem: FixedPointProblem, L: int) -> list[np.ndarray]:
    """All iterates [U^0, ..., U^L]."""
    if L < 0:
        raise InvalidArgumentError("L must be >= 0")
    u = np.asarray(problem.initial, dtype=np.float64).copy()
    f = np.asarray(problem.load, dtype=np.float64)
    out = [u.copy()]
    for step in range(L):
        u = u + problem.increment(u, f)
        if not np.all(np.isfinite(u)):
            raise NumericalFailureError(f"iterate diverged at step {step + 1}")
        out.append(u.copy())
    return out


def estimate_contraction(problem: FixedPointProblem, n_pairs: int, rng: RngStream) -> float:
    """Empirical lower bound on the Lipschitz constant of U -> R(U, F).

    Maximizes ||R(U1,F)-R(U2,F)|| / ||U1-U2|| over standard-normal pairs.
    """
    if n_pairs < 10:
        raise InvalidArgumentError("need at least 10 pairs")
    dim = np.asarray(problem.initial).size
    cur = rng.cursor()
    f = np.asarray(problem.load, dtype=np.float64)
    best = 0.0
    for _ in range(n_pairs):
        u1 = cur.normals(dim)
        u2 = cur.normals(dim)
        du = np.linalg.norm(u1 - u2)
        if du == 0.0:
            continue
        dr = np.linalg.norm(problem.increment(u1, f) - problem.increment(u2, f))
        best = max(best, float(dr / du))
    return best


@dataclass
class ConstructedIFNO:
    """Implicit operator assembled to run Richardson iteration exactly."""

    model: OperatorModel
    A: np.ndarray
    F: np.ndarray
    omega: float
    problem: FixedPointProblem  # reference Richardson iteration, U0 = 0

    @property
    def dim(self) -> int:
        return self.F.size

    def input_field(self) -> GridField2D:
        """Load vector as constant channel fields on the 2x2 carrier grid."""
        data = np.broadcast_to(self.F[:, None, None], (self.dim, 2, 2))
        return GridField2D(nx=2, ny=2, channels=self.dim, data=np.array(data))

    def _readout(self, h: np.ndarray) -> np.ndarray:
        m = self.dim
        return h[0, :m, 0, 0] - h[0, m : 2 * m, 0, 0]

    def layer_readouts(self) -> list[np.ndarray]:
        """[U_net^0, ..., U_net^L] read off after each iterative layer."""
        model = self.model
        fb = self.input_field().data[None]
        h = _lift_arr(model, fb)
        out = [self._readout(h)]
        dt = model.hyper.dt
        for _ in range(model.hyper.L):
            h = _ifno_layer_arr(h, model.blocks[0], model.hyper.k1, model.hyper.k2, dt)
            out.append(self._readout(h))
        return out

    def solve(self) -> np.ndarray:
        """Network output after all L layers."""
        return self.layer_readouts()[-1]


def build_linear_ifno(A: np.ndarray, F: np.ndarray, omega: float, L: int) -> ConstructedIFNO:
    """Assemble an implicit operator performing U <- U + omega*(F - A U).

    A must be symmetric positive definite and omega in (0, 2/lambda_max)
    so the iteration contracts. The readout after L layers equals the
    reference iterate started from U0 = 0.
    """
    A = np.asarray(A, dtype=np.float64)
    F = np.asarray(F, dtype=np.float64).ravel()
    m = F.size
    if A.shape != (m, m):
        raise InvalidArgumentError(f"A has shape {A.shape}, expected ({m},{m})")
    if not np.allclose(A, A.T, rtol=1e-12, atol=1e-12):
        raise InvalidArgumentError("A must be symmetric")
    eigs = np.linalg.eigvalsh(A)
    if eigs[0] <= 0.0:
        raise InvalidArgumentError("A must be positive definite")
    if eigs[0] / eigs[-1] < 1e-14:
        raise InvalidArgumentError("A is numerically singular")
    if not (0.0 < omega < 2.0 / eigs[-1]):
        raise InvalidArgumentError(f"omega must lie in (0, {2.0 / eigs[-1]:g})")
    if L < 1:
        raise InvalidArgumentError("L must be >= 1")

    d = 3 * m  # channels: [h+ (m), h- (m), carried load (m)]
    hyper = HyperParams(d=d, d_F=m, d_u=m, d_Q=2 * m, k1=1, k2=1, L=L, variant="ifno")
    dt = hyper.dt
    gain = omega / dt

    # zero-frequency coupling: rows h+ get +gain*(F - A U), rows h- the negation
    R0 = np.zeros((d, d))
    R0[:m, :m] = -gain * A
    R0[:m, m : 2 * m] = gain * A
    R0[:m, 2 * m :] = gain * np.eye(m)
    R0[m : 2 * m] = -R0[:m]
    c = np.zeros(d)
    c[2 * m :] = -1.0  # keep carried-load channels frozen through ReLU

    P = np.zeros((d, m))
    P[2 * m :] = np.eye(m)
    Q1 = np.zeros((2 * m, d))
    Q1[:, : 2 * m] = np.eye(2 * m)
    Q2 = np.hstack([np.eye(m), -np.eye(m)])

    model = OperatorModel(
        hyper=hyper,
        P=P,
        p=np.zeros(d),
        blocks=[
            LayerBlock(
                W=np.zeros((d, d)),
                R_re=R0[:, :, None, None],
                R_im=np.zeros((d, d, 1, 1)),
                c=c,
            )
        ],
        Q1=Q1,
        q1=np.zeros(2 * m),
        Q2=Q2,
        q2=np.zeros(m),
        norm=NormStats.identity(m, m),
    )
    problem = FixedPointProblem(
        increment=lambda u, f: omega * (f - A @ u),
        load=F,
        initial=np.zeros(m),
        contraction=float(np.max(np.abs(1.0 - omega * eigs))),
    )
    return ConstructedIFNO(model=model, A=A, F=F, omega=omega, problem=problem)
