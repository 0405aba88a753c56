"""Gates, Choi operators and process matrices for the two-party quantum switch.

Conventions
-----------
Subsystems are always ordered ``A_I, A_O, B_I, B_O, C_I``.  ``C_I`` carries
only the control (polarisation) qubit: the target at ``C`` is traced out when
the process is built, which is what the multimode-fibre detection does.

A unitary ``U`` is represented by the *transposed* Choi operator

    choi(U) = ( sum_lm |l><m| (x) U|l><m|U^dag )^T ,

with trace ``d_in``.  Pairing that convention with process matrices built
from unnormalised ``|1>> = sum_j |jj>`` links gives the Born rule
``p = tr[(M_A (x) M_B (x) M_C) W]`` with no further transposes.  The
untransposed Choi of ``U`` is the complex conjugate of the operator returned
here (it is rank one, ``|U>><<U|``), so code that prefers the plain
convention can use ``choi(U).matrix.conj()`` against ``W.T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .matstack import HermitianOperator, is_psd, kron_all

LABELS = ("A_I", "A_O", "B_I", "B_O", "C_I")
PROCESS_TRACE = 4.0

_I = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True, eq=False)
class UnitaryGate:
    name: str
    matrix: np.ndarray

    def __post_init__(self):
        u = np.array(self.matrix, dtype=complex)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise ValueError(f"gate {self.name!r} is not square")
        if not np.allclose(u.conj().T @ u, np.eye(u.shape[0]), rtol=0, atol=1e-12):
            raise ValueError(f"gate {self.name!r} is not unitary")
        u.setflags(write=False)
        object.__setattr__(self, "matrix", u)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __repr__(self) -> str:
        return f"UnitaryGate({self.name!r})"


GATES: dict[str, UnitaryGate] = {
    "I": UnitaryGate("I", _I),
    "X": UnitaryGate("X", _X),
    "Y": UnitaryGate("Y", _Y),
    "Z": UnitaryGate("Z", _Z),
    "P": UnitaryGate("P", (_Y + _Z) / np.sqrt(2)),
    "Q": UnitaryGate("Q", (_X + _Z) / np.sqrt(2)),
}
GATE_ORDER = tuple(GATES)


def gate(name: str | UnitaryGate) -> UnitaryGate:
    if isinstance(name, UnitaryGate):
        return name
    try:
        return GATES[name]
    except KeyError:
        raise KeyError(f"unknown gate {name!r}; choose from {', '.join(GATES)}") from None


def parse_gates(spec: str | Sequence[str]) -> list[UnitaryGate]:
    """Gate list from ``"I,X,Y"``, ``"IXY"`` or a sequence of names."""
    if isinstance(spec, str):
        names = [s for s in spec.replace(",", " ").split()]
        if len(names) == 1 and len(names[0]) > 1:
            names = list(names[0])
    else:
        names = list(spec)
    return [gate(n) for n in names]


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self):
        psi = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if abs(np.linalg.norm(psi) - 1) > 1e-12:
            raise ValueError("state is not normalised")
        psi.setflags(write=False)
        object.__setattr__(self, "amplitudes", psi)

    @property
    def dim(self) -> int:
        return self.amplitudes.size


STATES: dict[str, PureState] = {
    "zero": PureState([1, 0]),
    "one": PureState([0, 1]),
    "plus": PureState(np.array([1, 1]) / np.sqrt(2)),
    "minus": PureState(np.array([1, -1]) / np.sqrt(2)),
}


def state(name: str | PureState) -> PureState:
    if isinstance(name, PureState):
        return name
    try:
        return STATES[name]
    except KeyError:
        raise KeyError(f"unknown state {name!r}; choose from {', '.join(STATES)}") from None


@dataclass(frozen=True, eq=False)
class ChoiOperator:
    operator: HermitianOperator
    source: str = ""


def choi_of_unitary(u: UnitaryGate | str, labels: tuple[str, str] = ("A_I", "A_O")) -> ChoiOperator:
    u = gate(u)
    d = u.dim
    # |U>> = sum_l |l> (x) U|l>, i.e. entry (l, j) is U[j, l]
    ket = u.matrix.T.reshape(-1)
    untransposed = np.outer(ket, ket.conj())
    op = HermitianOperator(untransposed.T, [(labels[0], d), (labels[1], d)])
    return ChoiOperator(op, source=u.name)


def measurement_operator(observable_or_projector: np.ndarray, label: str = "C_I") -> ChoiOperator:
    """Operator for an event at C (no output): the transposed effect."""
    m = np.asarray(observable_or_projector, dtype=complex)
    return ChoiOperator(HermitianOperator(m.T, [(label, m.shape[0])]), source="measurement")


def x_projector(sign: int) -> np.ndarray:
    """Projector onto the diagonal (+1) or antidiagonal (-1) polarisation."""
    return (_I + sign * _X) / 2


@dataclass(frozen=True, eq=False)
class ProcessMatrix:
    """Process matrix on ``A_I A_O B_I B_O C_I``.

    ``check=True`` enforces the subsystem layout, positivity and
    ``tr W = d_AO d_BO``; intermediate unnormalised objects pass ``check=False``.
    """

    operator: HermitianOperator
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        op = self.operator
        if op.labels != LABELS:
            raise ValueError(f"process subsystems must be {LABELS}, got {op.labels}")
        if self.check:
            if not self.is_psd():
                raise ValueError("process matrix is not positive semidefinite")
            expected = self.expected_trace
            if abs(op.trace() - expected) > 1e-9 * expected:
                raise ValueError(f"process trace {op.trace():.12g} != {expected:g}")

    @property
    def matrix(self) -> np.ndarray:
        return self.operator.matrix

    @property
    def dims(self) -> tuple[int, ...]:
        return self.operator.dims

    @property
    def expected_trace(self) -> float:
        d = dict(self.operator.subsystems)
        return float(d["A_O"] * d["B_O"])

    def trace(self) -> float:
        return self.operator.trace()

    def is_psd(self, tol: float = 1e-10) -> bool:
        return is_psd(self.operator, tol)

    def to_json(self) -> dict:
        return self.operator.to_json()

    @classmethod
    def from_json(cls, data: dict, check: bool = True) -> "ProcessMatrix":
        return cls(HermitianOperator.from_json(data), check=check)

    @classmethod
    def from_array(cls, m: np.ndarray, d: int = 2, check: bool = True) -> "ProcessMatrix":
        return cls(HermitianOperator(m, process_subsystems(d)), check=check)


def process_subsystems(d: int = 2) -> list[tuple[str, int]]:
    return [("A_I", d), ("A_O", d), ("B_I", d), ("B_O", d), ("C_I", 2)]


def born_probability(maps: Sequence[ChoiOperator | HermitianOperator], w: ProcessMatrix) -> float:
    """``tr[(M_A (x) M_B (x) ...) W]``; the maps must tile W's subsystems in order."""
    ops = [m.operator if isinstance(m, ChoiOperator) else m for m in maps]
    joint = kron_all(ops)
    if joint.dims != w.dims:
        raise ValueError(f"maps cover dims {joint.dims}, process has {w.dims}")
    return joint.expectation(w.operator)


def switch_vector(target: PureState, control: PureState) -> np.ndarray:
    """Pure switch process on ``A_I A_O B_I B_O T C`` as a rank-6 tensor."""
    psi = target.amplitudes
    c0, c1 = control.amplitudes
    d = psi.size
    link = np.eye(d)
    # A then B: psi -> A_I, A_O -> B_I, B_O -> T
    first = np.einsum("a,bc,de->abcde", psi, link, link)
    # B then A: psi -> B_I, B_O -> A_I, A_O -> T
    second = np.einsum("c,da,be->abcde", psi, link, link)
    return np.stack([c0 * first, c1 * second], axis=-1)


def switch_process(target: PureState | str = "zero", control: PureState | str = "plus") -> ProcessMatrix:
    target, control = state(target), state(control)
    if control.dim != 2:
        raise ValueError("control must be a qubit")
    d = target.dim
    v = switch_vector(target, control).reshape(d**4, d, 2)
    w = np.einsum("itc,jtk->icjk", v, v.conj()).reshape(2 * d**4, 2 * d**4)
    return ProcessMatrix.from_array(w, d)


def fixed_order_process(order: str = "AB", target: PureState | str = "zero") -> ProcessMatrix:
    if order not in ("AB", "BA"):
        raise ValueError("order must be 'AB' or 'BA'")
    return switch_process(target, "zero" if order == "AB" else "one")


def white_noise_process(d: int = 2) -> ProcessMatrix:
    n = 2 * d**4
    return ProcessMatrix.from_array(np.eye(n) * (d * d / n), d)


def x_observable_witness_term(a: UnitaryGate | str, b: UnitaryGate | str) -> np.ndarray:
    """Raw matrix of ``choi(a) (x) choi(b) (x) X`` on the standard layout."""
    ca = choi_of_unitary(a).operator.matrix
    cb = choi_of_unitary(b, ("B_I", "B_O")).operator.matrix
    return np.kron(np.kron(ca, cb), _X)


def stokes_expectation(w: ProcessMatrix, a: UnitaryGate | str, b: UnitaryGate | str) -> float:
    """``<X>`` at C given unitaries a and b at A and B."""
    a, b = gate(a), gate(b)
    if w.dims[:4] != (a.dim, a.dim, b.dim, b.dim):
        raise ValueError("gate dimensions do not match the process")
    term = x_observable_witness_term(a, b)
    return float(np.real(np.vdot(term.conj().T, w.matrix)))


def dephase_control(w: ProcessMatrix, visibility: float) -> ProcessMatrix:
    """Shrink the coherence between the two order branches by ``visibility``."""
    if not 0.0 <= visibility <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {visibility}")
    n = w.matrix.shape[0]
    zc = np.kron(np.eye(n // 2), _Z)
    dephased = (w.matrix + zc @ w.matrix @ zc) / 2
    m = visibility * w.matrix + (1 - visibility) * dephased
    return ProcessMatrix(w.operator.with_matrix(m), check=w.check)
