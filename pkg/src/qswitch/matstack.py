"""Dense complex linear algebra with labelled tensor factors.

Everything in the package is built from :class:`HermitianOperator`, a small
immutable wrapper around a square numpy array that remembers which labelled
subsystems it acts on.  Subsystems are always tensored in list order, so the
Kronecker index of subsystem ``k`` varies slower than that of ``k + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_RTOL = 1e-12
JACOBI_MAX_SWEEPS = 100
JACOBI_TOL = 1e-12


class ConvergenceError(RuntimeError):
    """An iterative routine hit its iteration cap."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """Hermitian matrix on an ordered list of ``(label, dim)`` subsystems.

    The matrix is symmetrised on construction.  An input whose anti-Hermitian
    part exceeds ``rtol * max|M|`` is rejected, so symmetrisation only ever
    removes rounding drift.
    """

    matrix: np.ndarray
    subsystems: tuple[tuple[str, int], ...]

    def __init__(self, matrix, subsystems=None, *, rtol: float = HERMITIAN_RTOL):
        m = np.asarray(matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"matrix must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("matrix has non-finite entries")
        n = m.shape[0]
        if subsystems is None:
            subsystems = (("0", n),)
        subsystems = tuple((str(label), int(d)) for label, d in subsystems)
        labels = [label for label, _ in subsystems]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate subsystem labels: {labels}")
        if int(np.prod([d for _, d in subsystems])) != n:
            raise ValueError(f"subsystem dims {subsystems} do not multiply to {n}")
        scale = np.max(np.abs(m)) if m.size else 0.0
        skew = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
        if skew > rtol * scale:
            raise ValueError(f"matrix is not Hermitian (max |M - M^H| = {skew:.3e})")
        object.__setattr__(self, "matrix", _freeze((m + m.conj().T) / 2))
        object.__setattr__(self, "subsystems", subsystems)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.subsystems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.subsystems)

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def expectation(self, other: "HermitianOperator | np.ndarray") -> float:
        """Return ``tr[self @ other]`` (real for Hermitian arguments)."""
        m = other.matrix if isinstance(other, HermitianOperator) else np.asarray(other)
        return float(np.real(np.vdot(m.conj().T, self.matrix)))

    def with_matrix(self, matrix) -> "HermitianOperator":
        return HermitianOperator(matrix, self.subsystems)

    def __add__(self, other: "HermitianOperator") -> "HermitianOperator":
        _check_same_layout(self, other)
        return self.with_matrix(self.matrix + other.matrix)

    def __sub__(self, other: "HermitianOperator") -> "HermitianOperator":
        _check_same_layout(self, other)
        return self.with_matrix(self.matrix - other.matrix)

    def __mul__(self, scalar: float) -> "HermitianOperator":
        return self.with_matrix(float(scalar) * self.matrix)

    __rmul__ = __mul__

    def allclose(self, other: "HermitianOperator", atol: float = 1e-10) -> bool:
        return self.subsystems == other.subsystems and np.allclose(
            self.matrix, other.matrix, rtol=0.0, atol=atol
        )

    def to_json(self) -> dict:
        flat = self.matrix.reshape(-1)
        return {
            "dim": self.dim,
            "subsystems": [[label, d] for label, d in self.subsystems],
            "re": flat.real.tolist(),
            "im": flat.imag.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "HermitianOperator":
        n = int(data["dim"])
        re = np.asarray(data["re"], dtype=float)
        im = np.asarray(data["im"], dtype=float)
        if re.size != n * n or im.size != n * n:
            raise ValueError(f"expected {n * n} entries for dim {n}")
        subsystems = [tuple(s) for s in data.get("subsystems") or [("0", n)]]
        return cls((re + 1j * im).reshape(n, n), subsystems)


def _check_same_layout(a: HermitianOperator, b: HermitianOperator) -> None:
    if a.subsystems != b.subsystems:
        raise ValueError(f"subsystem mismatch: {a.subsystems} vs {b.subsystems}")


def identity(subsystems: Sequence[tuple[str, int]]) -> HermitianOperator:
    n = int(np.prod([d for _, d in subsystems]))
    return HermitianOperator(np.eye(n), subsystems)


def kron(a: HermitianOperator, b: HermitianOperator) -> HermitianOperator:
    return HermitianOperator(np.kron(a.matrix, b.matrix), a.subsystems + b.subsystems)


def kron_all(ops: Iterable[HermitianOperator]) -> HermitianOperator:
    ops = list(ops)
    out = ops[0]
    for op in ops[1:]:
        out = kron(out, op)
    return out


def ptrace_array(m: np.ndarray, dims: Sequence[int], traced: Iterable[int]) -> np.ndarray:
    """Trace the subsystems at positions ``traced`` out of a raw matrix."""
    dims = list(dims)
    n = len(dims)
    t = m.reshape(dims + dims)
    for k in sorted(set(traced), reverse=True):
        t = np.trace(t, axis1=k, axis2=k + n)
        n -= 1
        dims.pop(k)
    size = int(np.prod(dims)) if dims else 1
    return t.reshape(size, size)


def trace_replace_array(m: np.ndarray, dims: Sequence[int], positions: Iterable[int]) -> np.ndarray:
    """Trace out ``positions`` and put back the maximally mixed state there.

    This is the map ``W -> Tr_X[W] (x) I_X / d_X`` with the identity slotted
    into its original tensor position.  It is a self-adjoint, trace-preserving
    projector on the space of matrices.
    """
    dims = list(dims)
    n = len(dims)
    t = np.asarray(m).reshape(dims + dims)
    for k in positions:
        reduced = np.trace(t, axis1=k, axis2=k + n)
        reduced = np.expand_dims(np.expand_dims(reduced, k), k + n)
        shape = [1] * (2 * n)
        shape[k] = shape[k + n] = dims[k]
        t = reduced * (np.eye(dims[k]).reshape(shape) / dims[k])
    size = int(np.prod(dims))
    return t.reshape(size, size)


def _positions(op: HermitianOperator, labels: Iterable[str]) -> list[int]:
    index = {label: k for k, label in enumerate(op.labels)}
    missing = [label for label in labels if label not in index]
    if missing:
        raise KeyError(f"unknown subsystem label(s) {missing}; have {list(op.labels)}")
    return [index[label] for label in labels]


def partial_trace(op: HermitianOperator, keep: Iterable[str]) -> HermitianOperator:
    """Trace out every subsystem not named in ``keep``; survivors keep their order."""
    keep = set(_positions(op, keep))
    traced = [k for k in range(len(op.subsystems)) if k not in keep]
    m = ptrace_array(op.matrix, op.dims, traced)
    return HermitianOperator(m, [s for k, s in enumerate(op.subsystems) if k in keep])


def trace_replace(op: HermitianOperator, labels: Iterable[str]) -> HermitianOperator:
    return op.with_matrix(trace_replace_array(op.matrix, op.dims, _positions(op, labels)))


def eigh(op: HermitianOperator, method: str = "lapack") -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and eigenvectors (columns) of ``op``.

    ``method="jacobi"`` runs the pure cyclic Jacobi sweep in :func:`jacobi_eigh`;
    the default goes through LAPACK.
    """
    m = op.matrix if isinstance(op, HermitianOperator) else np.asarray(op)
    if method == "jacobi":
        return jacobi_eigh(m)
    if method != "lapack":
        raise ValueError(f"unknown eigh method {method!r}")
    w, v = np.linalg.eigh(m)
    return w, v


def jacobi_eigh(
    m: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS
) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a complex Hermitian matrix.

    Each rotation first removes the phase of the pivot ``a[p, q]`` and then
    applies the classical real Jacobi rotation.  Stops once the off-diagonal
    Frobenius norm drops below ``tol * ||m||_F``.
    """
    a = np.array(m, dtype=complex)
    a = (a + a.conj().T) / 2
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return np.zeros(n), v

    def off(x):
        return np.sqrt(max(np.linalg.norm(x) ** 2 - np.linalg.norm(np.diag(x)) ** 2, 0.0))

    for _ in range(max_sweeps):
        if off(a) <= tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                r = abs(apq)
                if r <= 1e-300:
                    continue
                phase = apq / r
                app, aqq = a[p, p].real, a[q, q].real
                tau = (aqq - app) / (2 * r)
                t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.sqrt(1 + tau * tau))
                c = 1 / np.sqrt(1 + t * t)
                s = t * c
                g = np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]])
                idx = [p, q]
                a[:, idx] = a[:, idx] @ g
                a[idx, :] = g.conj().T @ a[idx, :]
                a[p, q] = a[q, p] = 0.0
                v[:, idx] = v[:, idx] @ g
    else:
        if off(a) > tol * norm:
            raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.diag(a).real
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def psd_project_array(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    out = (v * w) @ v.conj().T
    return (out + out.conj().T) / 2


def psd_project(op: HermitianOperator, method: str = "lapack") -> HermitianOperator:
    """Frobenius-nearest PSD operator: clip negative eigenvalues to zero."""
    w, v = eigh(op, method=method)
    return op.with_matrix((v * np.clip(w, 0.0, None)) @ v.conj().T)


def is_psd(op: HermitianOperator | np.ndarray, tol: float = 1e-10) -> bool:
    m = op.matrix if isinstance(op, HermitianOperator) else op
    return bool(np.linalg.eigvalsh(m)[0] >= -tol)


# Real orthonormal coordinates for Hermitian matrices: the diagonal, then
# sqrt(2)*Re and sqrt(2)*Im of the strict upper triangle.  With these,
# tr[A B] equals the Euclidean dot product of the coordinate vectors.


def hvec(m: np.ndarray) -> np.ndarray:
    n = m.shape[0]
    iu = np.triu_indices(n, 1)
    upper = m[iu]
    return np.concatenate([np.diag(m).real, np.sqrt(2) * upper.real, np.sqrt(2) * upper.imag])


def hmat(x: np.ndarray, n: int) -> np.ndarray:
    iu = np.triu_indices(n, 1)
    k = len(iu[0])
    m = np.zeros((n, n), dtype=complex)
    m[iu] = (x[n : n + k] + 1j * x[n + k :]) / np.sqrt(2)
    m = m + m.conj().T
    m[np.diag_indices(n)] = x[:n]
    return m


def superoperator_matrix(fn, n: int) -> np.ndarray:
    """Matrix of a real-linear map on n x n Hermitian matrices in hvec coordinates."""
    size = n * n
    out = np.empty((size, size))
    for k in range(size):
        e = np.zeros(size)
        e[k] = 1.0
        out[:, k] = hvec(fn(hmat(e, n)))
    return out
