"""Small first-order conic solver.

Solves

    minimise  c.x   subject to   A x = b,   x in K

where ``K`` is a product of free, non-negative and Hermitian-PSD blocks (PSD
blocks use :func:`qswitch.matstack.hvec` coordinates).  The iteration is
ADMM on the splitting ``x in {A x = b}``, ``z in K``, ``x = z``: an exact
projection onto the affine set, over-relaxation, a projection onto ``K`` and a
scaled dual update.  Step size is rebalanced from the residual ratio.
Deterministic for fixed inputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .matstack import hmat, hvec

log = logging.getLogger(__name__)

TOL = 1e-7
MAX_ITER = 50_000


@dataclass(frozen=True)
class Block:
    kind: str  # "free" | "nonneg" | "psd"
    size: int  # vector length, or matrix order for "psd"

    @property
    def width(self) -> int:
        return self.size * self.size if self.kind == "psd" else self.size


@dataclass
class ConicProblem:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    blocks: Sequence[Block]

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        n = sum(blk.width for blk in self.blocks)
        if self.c.shape != (n,) or self.A.shape != (self.b.size, n):
            raise ValueError(
                f"shape mismatch: blocks give n={n}, c {self.c.shape}, A {self.A.shape}, b {self.b.shape}"
            )

    @property
    def n(self) -> int:
        return self.c.size

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        out, k = [], 0
        for blk in self.blocks:
            out.append(x[k : k + blk.width])
            k += blk.width
        return out


@dataclass
class SDPResult:
    x: np.ndarray
    converged: bool
    status: str
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    dual: np.ndarray = field(repr=False, default=None)

    def diagnostics(self) -> dict:
        return {
            "converged": self.converged,
            "status": self.status,
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "objective": self.objective,
        }


class AffineProjector:
    """Euclidean projection onto ``{x : A x = b}``.

    Redundant rows are dropped through an SVD.  ``consistent`` is False when
    ``b`` is not in the range of ``A``.
    """

    def __init__(self, A: np.ndarray, b: np.ndarray, rtol: float = 1e-10):
        n = A.shape[1]
        if A.shape[0] == 0:
            self.basis, self.offset, self.use_null = np.zeros((n, 0)), np.zeros(n), False
            self.consistent, self.gap = True, 0.0
            return
        u, s, vt = np.linalg.svd(A, full_matrices=True)
        rank = int(np.sum(s > rtol * s[0])) if s.size else 0
        coeffs = (u[:, :rank].T @ b) / s[:rank]
        self.offset = vt[:rank].T @ coeffs
        self.gap = float(np.linalg.norm(A @ self.offset - b))
        self.consistent = self.gap <= 1e-9 * max(1.0, float(np.linalg.norm(b)))
        # keep whichever basis is thinner
        self.use_null = n - rank < rank
        self.basis = vt[rank:].T if self.use_null else vt[:rank].T

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.use_null:
            return self.offset + self.basis @ (self.basis.T @ (x - self.offset))
        return x - self.basis @ (self.basis.T @ x) + self.offset


def project_cone(x: np.ndarray, blocks: Sequence[Block]) -> np.ndarray:
    out = np.empty_like(x)
    k = 0
    for blk in blocks:
        seg = x[k : k + blk.width]
        if blk.kind == "free":
            out[k : k + blk.width] = seg
        elif blk.kind == "nonneg":
            out[k : k + blk.width] = np.maximum(seg, 0.0)
        elif blk.kind == "psd":
            w, v = np.linalg.eigh(hmat(seg, blk.size))
            out[k : k + blk.width] = hvec((v * np.maximum(w, 0.0)) @ v.conj().T)
        else:
            raise ValueError(f"unknown block kind {blk.kind!r}")
        k += blk.width
    return out


def solve_sdp(
    problem: ConicProblem,
    tol: float = TOL,
    max_iter: int = MAX_ITER,
    rho: float = 1.0,
    alpha: float = 1.6,
    x0: np.ndarray | None = None,
    projector: AffineProjector | None = None,
    check_every: int = 10,
) -> SDPResult:
    """Run the splitting iteration until both residual norms are below ``tol``."""
    proj = projector or AffineProjector(problem.A, problem.b)
    n = problem.n
    if not proj.consistent:
        return SDPResult(np.zeros(n), False, "infeasible_affine", 0, proj.gap, np.inf, np.nan, np.zeros(n))
    blocks, c = problem.blocks, problem.c
    z = project_cone(proj(np.zeros(n) if x0 is None else np.asarray(x0, float)), blocks)
    u = np.zeros(n)
    r_norm = s_norm = np.inf
    status = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        x = proj(z - u - c / rho)
        xr = alpha * x + (1 - alpha) * z
        z_old = z
        z = project_cone(xr + u, blocks)
        u = u + xr - z
        if it % check_every == 0 or it == max_iter:
            r_norm = float(np.linalg.norm(x - z))
            s_norm = float(rho * np.linalg.norm(z - z_old))
            if r_norm <= tol and s_norm <= tol:
                status = "optimal"
                break
            if it % (5 * check_every) == 0:
                if r_norm > 10 * s_norm:
                    rho *= 2.0
                    u /= 2.0
                elif s_norm > 10 * r_norm:
                    rho /= 2.0
                    u *= 2.0
    converged = status == "optimal"
    if not converged:
        log.info("solver stopped at cap: primal %.2e dual %.2e", r_norm, s_norm)
    return SDPResult(z, converged, status, it, r_norm, s_norm, float(c @ z), rho * u)
