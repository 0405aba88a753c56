"""Compile target-qubit unitaries into prism/cylindrical-lens settings.

Each black box is ``exp(i phase) C R(theta2) C R(theta1)`` with the inverting
prism ``R(theta) = [[cos 2t, sin 2t], [sin 2t, -cos 2t]]`` and the cylindrical
lens pair ``C = diag(1, i)``; light meets ``R(theta1)`` first.  Expanding the
product gives the Pauli form

    i sin a sin b I + cos a sin b X + sin a cos b Y + cos a cos b Z,
    a = 2 theta2, b = 2 theta1,

so only unitaries whose (phase-stripped) Pauli vector factorises this way are
reachable.  The six gates used by the witness all are.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .processes import UnitaryGate, gate

LENS = np.diag([1.0, 1.0j])
MAX_ERROR_DEG = 5.0
GRID_STEP_DEG = 0.5
MATCH_TOL = 1e-9


class CompileError(ValueError):
    """No prism/lens setting reproduces the requested unitary."""


def prism(theta_deg: float) -> np.ndarray:
    t = np.deg2rad(2 * theta_deg)
    return np.array([[np.cos(t), np.sin(t)], [np.sin(t), -np.cos(t)]], dtype=complex)


def black_box(theta1_deg: float, theta2_deg: float, phase: float = 0.0) -> np.ndarray:
    return np.exp(1j * phase) * (LENS @ prism(theta2_deg) @ LENS @ prism(theta1_deg))


@dataclass(frozen=True)
class OpticalRecipe:
    theta1: float  # degrees
    theta2: float  # degrees
    global_phase: float  # radians
    realized: UnitaryGate

    def row(self) -> dict:
        return {
            "gate": self.realized.name,
            "theta1_deg": self.theta1,
            "theta2_deg": self.theta2,
            "phase_rad": self.global_phase,
        }


def _grid_candidates(u: np.ndarray, keep: int = 24) -> np.ndarray:
    angles = np.arange(0.0, 180.0, GRID_STEP_DEG)
    b = np.deg2rad(2 * angles)[:, None]  # theta1
    a = np.deg2rad(2 * angles)[None, :]  # theta2
    # phase-free overlap |tr(M^dag U)| / 2 via the Pauli form of M
    pauli = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1, -1])]
    cu = [np.trace(p @ u) / 2 for p in pauli]
    overlap = np.abs(
        -1j * np.sin(a) * np.sin(b) * cu[0]
        + np.cos(a) * np.sin(b) * cu[1]
        + np.sin(a) * np.cos(b) * cu[2]
        + np.cos(a) * np.cos(b) * cu[3]
    )
    flat = np.argsort(-overlap, axis=None, kind="stable")[:keep]
    i, j = np.unravel_index(flat, overlap.shape)
    return np.stack([angles[i], angles[j]], axis=1)


def _residual(params: np.ndarray, u: np.ndarray) -> np.ndarray:
    diff = black_box(params[0], params[1], params[2]) - u
    return np.concatenate([diff.real.ravel(), diff.imag.ravel()])


def _refine(theta: np.ndarray, u: np.ndarray, iters: int = 50) -> np.ndarray:
    """Gauss-Newton on (theta1, theta2, phase) with a finite-difference Jacobian."""
    m = black_box(theta[0], theta[1])
    phase = float(np.angle(np.trace(m.conj().T @ u)))
    x = np.array([theta[0], theta[1], phase])
    h = 1e-7
    for _ in range(iters):
        r = _residual(x, u)
        if np.max(np.abs(r)) < 1e-14:
            break
        jac = np.empty((r.size, 3))
        for k in range(3):
            step = np.zeros(3)
            step[k] = h
            jac[:, k] = (_residual(x + step, u) - _residual(x - step, u)) / (2 * h)
        dx, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        x = x + dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    return x


def _canonical(x: np.ndarray) -> tuple[float, float, float]:
    t1, t2, ph = x
    # R(theta + 90) = -R(theta): fold angles into [0, 180) keeping the phase honest
    k1, t1 = divmod(t1, 180.0)
    k2, t2 = divmod(t2, 180.0)
    ph = (ph + np.pi) % (2 * np.pi) - np.pi
    t1 = 0.0 if abs(t1 - 180.0) < 1e-9 or abs(t1) < 1e-12 else t1
    t2 = 0.0 if abs(t2 - 180.0) < 1e-9 or abs(t2) < 1e-12 else t2
    if abs(abs(ph) - np.pi) < 1e-12:
        ph = np.pi
    if abs(ph) < 1e-13:
        ph = 0.0
    return float(t1), float(t2), float(ph)


def compile_unitary(u: UnitaryGate | str) -> OpticalRecipe:
    """Find prism angles and a global phase realising ``u`` exactly.

    A 0.5 degree scan of both prism angles seeds Gauss-Newton refinement; among
    settings that match to ``1e-9`` the smallest ``|phase|``, then the smallest
    angles, win.
    """
    g = gate(u)
    if g.dim != 2:
        raise CompileError("only qubit unitaries can be compiled")
    target = g.matrix
    found = []
    for seed in _grid_candidates(target):
        x = _refine(seed, target)
        t1, t2, ph = _canonical(x)
        err = np.max(np.abs(black_box(t1, t2, ph) - target))
        if err <= MATCH_TOL:
            found.append((round(abs(ph), 9), round(t1, 7), round(t2, 7), t1, t2, ph))
    if not found:
        raise CompileError(f"gate {g.name!r} is not reachable with two prisms and two lens pairs")
    *_, t1, t2, ph = min(found)
    # snap to the 1e-9 degree lattice where that keeps the match
    st1, st2 = round(t1, 9), round(t2, 9)
    if np.max(np.abs(black_box(st1, st2, ph) - target)) <= MATCH_TOL:
        t1, t2 = st1, st2
    realized = UnitaryGate(g.name, black_box(t1, t2, ph))
    return OpticalRecipe(t1, t2, ph, realized)


def realized_with_errors(recipe: OpticalRecipe, d1: float, d2: float) -> UnitaryGate:
    """Unitary produced when the prisms sit ``d1``, ``d2`` degrees off target."""
    if abs(d1) > MAX_ERROR_DEG or abs(d2) > MAX_ERROR_DEG:
        raise ValueError(f"prism errors must be within {MAX_ERROR_DEG} degrees")
    return UnitaryGate(
        recipe.realized.name, black_box(recipe.theta1 + d1, recipe.theta2 + d2, recipe.global_phase)
    )


_RECIPES: dict[tuple[str, bytes], OpticalRecipe] = {}


def recipe_for(name: str | UnitaryGate) -> OpticalRecipe:
    """Cached :func:`compile_unitary`."""
    g = gate(name)
    key = (g.name, g.matrix.tobytes())
    if key not in _RECIPES:
        _RECIPES[key] = compile_unitary(g)
    return _RECIPES[key]
