"""Fixed-order process cones, causal separability and random robustness.

A process compatible with ``A < B < C`` (C has no output) is a PSD ``W`` with

    Tr_C W          = Tr_{B_O C} W (x) I_{B_O} / 2
    Tr_{B_I B_O C} W = Tr_{A_O B_I B_O C} W (x) I_{A_O} / 2
    tr W = 4

and symmetrically for ``B < A < C``.  Writing ``[X]W`` for
``Tr_X W (x) I_X / d_X`` the homogeneous conditions say ``W`` is fixed by the
orthogonal projector

    L(W) = W - [C]W + [B_O C]W - [B_I B_O C]W + [A_O B_I B_O C]W .

A causal witness lives in the dual of both cones, which is handled by
splitting it as ``S = P_k + (something orthogonal to range L_k)`` with
``P_k`` PSD for each order ``k``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .matstack import HermitianOperator, hmat, hvec, superoperator_matrix, trace_replace_array
from .processes import LABELS, PROCESS_TRACE, ProcessMatrix, white_noise_process
from .sdp import TOL, AffineProjector, Block, ConicProblem, SDPResult, solve_sdp

log = logging.getLogger(__name__)

DIM = 32
NONSEPARABLE_TOL = 1e-5


class SolverError(RuntimeError):
    """The first-order solver stopped at its iteration cap."""

    def __init__(self, message: str, result: SDPResult | None = None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class OrderedConeSpec:
    """Affine description of the processes compatible with one causal order.

    ``conditions`` holds pairs ``(X, Y)`` of label sets meaning ``[X]W = [Y]W``;
    they are nested (``X_1 < Y_1 < X_2 < Y_2``), which makes the alternating
    sum in the module docstring an orthogonal projector.
    """

    order: str
    conditions: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...]
    trace_value: float = PROCESS_TRACE

    @property
    def name(self) -> str:
        return " < ".join([*self.order, "C"])


CONES = {
    "AB": OrderedConeSpec(
        "AB",
        ((("C_I",), ("B_O", "C_I")), (("B_I", "B_O", "C_I"), ("A_O", "B_I", "B_O", "C_I"))),
    ),
    "BA": OrderedConeSpec(
        "BA",
        ((("C_I",), ("A_O", "C_I")), (("A_I", "A_O", "C_I"), ("B_O", "A_I", "A_O", "C_I"))),
    ),
}

_POS = {label: k for k, label in enumerate(LABELS)}
_DIMS = (2, 2, 2, 2, 2)


def cone(order: str | OrderedConeSpec) -> OrderedConeSpec:
    return order if isinstance(order, OrderedConeSpec) else CONES[order]


def comb_projector_array(m: np.ndarray, spec: OrderedConeSpec | str) -> np.ndarray:
    """Apply the homogeneous comb projector ``L`` to a raw 32 x 32 matrix."""
    spec = cone(spec)
    out = np.array(m, dtype=complex)
    for x, y in spec.conditions:
        out -= trace_replace_array(m, _DIMS, [_POS[s] for s in x])
        out += trace_replace_array(m, _DIMS, [_POS[s] for s in y])
    return out


def project_to_cone_subspace(
    w: HermitianOperator | ProcessMatrix, spec: OrderedConeSpec | str
) -> HermitianOperator:
    """Orthogonal projection onto ``{L(W) = W, tr W = 4}``."""
    spec = cone(spec)
    op = w.operator if isinstance(w, ProcessMatrix) else w
    if op.dims != _DIMS:
        raise ValueError(f"expected a {_DIMS} layout, got {op.dims}")
    m = comb_projector_array(op.matrix, spec)
    m = m + (spec.trace_value - np.trace(m).real) / DIM * np.eye(DIM)
    return op.with_matrix(m)


def cone_residual(m: np.ndarray, spec: OrderedConeSpec | str) -> float:
    """Frobenius distance of ``m`` from the homogeneous comb subspace."""
    return float(np.linalg.norm(m - comb_projector_array(m, spec)))


@lru_cache(maxsize=None)
def _range_bases(order: str) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal bases (hvec coordinates) of range(L) and its complement."""
    spec = CONES[order]
    sup = superoperator_matrix(lambda m: comb_projector_array(m, spec), DIM)
    w, v = np.linalg.eigh((sup + sup.T) / 2)
    return v[:, w > 0.5], v[:, w <= 0.5]


def range_basis(order: str) -> np.ndarray:
    return _range_bases(order)[0]


def complement_basis(order: str) -> np.ndarray:
    return _range_bases(order)[1]


# ---------------------------------------------------------------------------
# witness programs


@dataclass
class WitnessProgram:
    """``S = hmat(s0 + basis @ g)`` constrained to the dual of both cones."""

    problem: ConicProblem
    basis: np.ndarray
    s0: np.ndarray
    offset: float  # tr[S0 W]
    m: int

    def witness(self, x: np.ndarray) -> np.ndarray:
        return hmat(self.s0 + self.basis @ x[: self.m], DIM)


def witness_program(
    w: np.ndarray,
    basis: np.ndarray,
    s0: np.ndarray,
    extra_A: np.ndarray | None = None,
    extra_b: np.ndarray | None = None,
) -> WitnessProgram:
    """min tr[S w] over ``S = s0 + basis g`` in both dual cones."""
    m = basis.shape[1]
    hw = hvec(np.asarray(w))
    u1, u2 = range_basis("AB"), range_basis("BA")
    nn = DIM * DIM
    r1, r2 = u1.shape[1], u2.shape[1]
    rows = []
    rows.append(np.hstack([-u1.T @ basis, u1.T, np.zeros((r1, nn))]))
    rows.append(np.hstack([-u2.T @ basis, np.zeros((r2, nn)), u2.T]))
    b = [u1.T @ s0, u2.T @ s0]
    if extra_A is not None:
        rows.append(np.hstack([extra_A, np.zeros((extra_A.shape[0], 2 * nn))]))
        b.append(np.asarray(extra_b, float))
    c = np.concatenate([basis.T @ hw, np.zeros(2 * nn)])
    problem = ConicProblem(
        c, np.vstack(rows), np.concatenate(b), [Block("free", m), Block("psd", DIM), Block("psd", DIM)]
    )
    return WitnessProgram(problem, basis, s0, float(s0 @ hw), m)


def full_witness_program(w: np.ndarray) -> WitnessProgram:
    """Unrestricted witness normalised by ``tr[S * white noise] = 1``."""
    omega = hvec(white_noise_process().matrix)
    nn = DIM * DIM
    return witness_program(w, np.eye(nn), np.zeros(nn), omega[None, :], np.array([1.0]))


def minimize_over_cone(
    s: np.ndarray, order: str, tol: float = TOL, max_iter: int = 20_000
) -> tuple[float, np.ndarray, SDPResult]:
    """``min tr[s W]`` over normalised processes compatible with ``order``."""
    comp = complement_basis(order)
    A = np.vstack([comp.T, hvec(np.eye(DIM))[None, :]])
    b = np.concatenate([np.zeros(comp.shape[1]), [PROCESS_TRACE]])
    res = solve_sdp(ConicProblem(hvec(s), A, b, [Block("psd", DIM)]), tol=tol, max_iter=max_iter)
    wmat = hmat(res.x, DIM)
    return float(np.real(np.vdot(wmat, s))), wmat, res


def separable_minimum(s: np.ndarray, tol: float = TOL, max_iter: int = 20_000) -> tuple[float, np.ndarray]:
    """``min tr[s W_sep]`` over causally separable ``W_sep`` and a minimiser.

    The minimum over the convex hull of the two cones is attained in one of
    them, so two cone programs suffice.
    """
    best = (np.inf, None)
    for order in ("AB", "BA"):
        val, wmat, _ = minimize_over_cone(s, order, tol=tol, max_iter=max_iter)
        if val < best[0]:
            best = (val, wmat)
    return best


# ---------------------------------------------------------------------------
# separability


@dataclass
class SeparableDecomposition:
    q: float
    w_ab: ProcessMatrix | None
    w_ba: ProcessMatrix | None
    residual: float
    diagnostics: dict = field(default_factory=dict)

    separable = True


@dataclass
class Certificate:
    """Hermitian ``S`` with ``tr[S w] < 0`` and ``tr[S W_sep] >= 0`` on both cones."""

    operator: HermitianOperator
    value: float
    separable_minimum: float
    diagnostics: dict = field(default_factory=dict)

    separable = False


def decompose(w: ProcessMatrix, tol: float = TOL, max_iter: int = 50_000) -> SeparableDecomposition:
    """Feasibility program ``w = W1 + W2`` with ``Wk`` in the unnormalised cones."""
    nn = DIM * DIM
    c1, c2 = complement_basis("AB"), complement_basis("BA")
    A = np.vstack(
        [
            np.hstack([c1.T, np.zeros((c1.shape[1], nn))]),
            np.hstack([np.zeros((c2.shape[1], nn)), c2.T]),
            np.hstack([np.eye(nn), np.eye(nn)]),
        ]
    )
    b = np.concatenate([np.zeros(c1.shape[1] + c2.shape[1]), hvec(w.matrix)])
    res = solve_sdp(ConicProblem(np.zeros(2 * nn), A, b, [Block("psd", DIM)] * 2), tol=tol, max_iter=max_iter)
    w1, w2 = hmat(res.x[:nn], DIM), hmat(res.x[nn:], DIM)
    residual = max(
        float(np.linalg.norm(w1 + w2 - w.matrix)), cone_residual(w1, "AB"), cone_residual(w2, "BA")
    )
    q = float(np.clip(np.trace(w1).real / PROCESS_TRACE, 0.0, 1.0))

    def normalised(m, weight):
        if weight <= 1e-9:
            return None
        return ProcessMatrix.from_array(m / weight, check=False)

    return SeparableDecomposition(q, normalised(w1, q), normalised(w2, 1 - q), residual, res.diagnostics())


def certify(s: np.ndarray, tol: float = TOL) -> tuple[np.ndarray, float]:
    """Make ``s`` exactly non-negative on separable processes (up to solver accuracy).

    With ``m = min tr[s W_sep] < 0`` the witness is replaced by
    ``(s - m/4 I) / (1 - m)``, which keeps ``tr[s * white noise] = 1``.
    """
    m, _ = separable_minimum(s, tol=tol)
    if m < 0:
        s = (s - (m / PROCESS_TRACE) * np.eye(DIM)) / (1 - m)
    return s, m


def optimal_witness(
    w: ProcessMatrix, tol: float = TOL, max_iter: int = 50_000
) -> tuple[np.ndarray, SDPResult]:
    prog = full_witness_program(w.matrix)
    res = solve_sdp(prog.problem, tol=tol, max_iter=max_iter)
    return prog.witness(res.x), res


def is_causally_separable(
    w: ProcessMatrix, tol: float = TOL, max_iter: int = 50_000
) -> SeparableDecomposition | Certificate:
    """Decide whether ``w`` is a convex mixture of the two fixed-order cones.

    Returns a :class:`SeparableDecomposition` (``residual <= tol``) or a
    :class:`Certificate`.  Raises :class:`SolverError` when neither can be
    produced within the iteration cap.
    """
    s, res = optimal_witness(w, tol=tol, max_iter=max_iter)
    value = float(np.real(np.vdot(s, w.matrix)))
    if value < -NONSEPARABLE_TOL:
        s, smin = certify(s, tol=tol)
        value = float(np.real(np.vdot(s, w.matrix)))
        if value < 0:
            op = HermitianOperator(s, w.operator.subsystems, rtol=1e-9)
            return Certificate(op, value, max(smin, 0.0), res.diagnostics())
    dec = decompose(w, tol=tol, max_iter=max_iter)
    if dec.residual > tol:
        raise SolverError(
            f"no decomposition within tolerance (residual {dec.residual:.2e}) "
            f"and no certificate (witness value {value:.2e})",
            res,
        )
    return dec


@dataclass
class RobustnessResult:
    r_star: float
    witness: HermitianOperator
    diagnostics: dict


def random_robustness(
    w: ProcessMatrix,
    method: str = "dual",
    tol: float = TOL,
    bisection_tol: float = 1e-4,
    gates=None,
) -> RobustnessResult:
    """Least white-noise weight ``r`` making ``(w + r * noise) / (1 + r)`` separable.

    ``method="dual"`` reads ``r`` off the optimal normalised witness
    (``r = -min tr[S w]``).  ``method="bisection"`` brackets ``r`` in
    ``[0, 4]`` using :func:`is_causally_separable` as the oracle; it is slower
    and kept as an independent route.

    With ``gates`` the witness is restricted to the measurable family over
    those unitaries, and ``r`` is the robustness that family can certify.
    This is what an experiment with those gates sees, and it is smaller than
    the unrestricted value.
    """
    if gates is not None:
        from .witness import NoWitnessError, optimize_witness

        try:
            wit = optimize_witness(w, gates, tol=tol, sparsify=False)
        except NoWitnessError:
            return RobustnessResult(0.0, None, {"gates": list(map(str, gates))})
        return RobustnessResult(max(0.0, -wit.optimum), wit.operator, wit.diagnostics)
    if method == "dual":
        s, res = optimal_witness(w, tol=tol)
        if not res.converged:
            raise SolverError("witness program did not converge", res)
        value = float(np.real(np.vdot(s, w.matrix)))
        r = max(0.0, -value)
        return RobustnessResult(r, HermitianOperator(s, w.operator.subsystems, rtol=1e-9), res.diagnostics())
    if method != "bisection":
        raise ValueError(f"unknown method {method!r}")
    noise = white_noise_process().matrix
    lo, hi = 0.0, 4.0
    first = is_causally_separable(w, tol=tol)
    if first.separable:
        return RobustnessResult(0.0, None, {"probes": 1})
    cert, probes = first, 1
    while hi - lo > bisection_tol:
        mid = (lo + hi) / 2
        mixed = ProcessMatrix.from_array((w.matrix + mid * noise) / (1 + mid), check=False)
        verdict = is_causally_separable(mixed, tol=tol)
        probes += 1
        if verdict.separable:
            hi = mid
        else:
            lo, cert = mid, verdict
    return RobustnessResult(hi, cert.operator, {"probes": probes})
