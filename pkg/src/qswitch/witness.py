"""Measurable causal witnesses built from unitary pairs and an X measurement at C.

A witness has the form

    S = 1/4 (I + sum_{(a, b)} gamma[a, b] choi(a) (x) choi(b) (x) X)

so that on a normalised process ``tr[S W] = 1 + 1/4 sum gamma[a, b] <X>_{a,b}``
and ``tr[S * white noise] = 1``.  The coefficients come from the dual program
in :mod:`qswitch.causal_sdp` restricted to this span.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import causal_sdp as csdp
from .hardware import recipe_for, realized_with_errors
from .matstack import HermitianOperator, hvec
from .processes import (
    GATE_ORDER,
    GATES,
    ProcessMatrix,
    UnitaryGate,
    gate,
    process_subsystems,
    x_observable_witness_term,
)
from .sdp import TOL, Block, ConicProblem, solve_sdp

log = logging.getLogger(__name__)

PRUNE_TOL = 1e-6
SPARSITY_SLACK = 1e-6
SPARSITY_MAX_ITER = 3000
# inner separable minimisations of the misalignment search; 1e-4 is far below
# the size of the bounds themselves
SEARCH_TOL = 1e-4
SEARCH_MAX_ITER = 1000
_X = np.array([[0, 1], [1, 0]])
Pair = tuple[str, str]


class NoWitnessError(RuntimeError):
    """The restricted witness program cannot go below zero on this process."""

    def __init__(self, optimum: float):
        super().__init__(f"no witness possible: best value tr[S W] = {optimum:.6g} >= 0")
        self.optimum = optimum


def pair_order(pair: Pair) -> tuple[int, int]:
    """Sort key following the gate listing I, X, Y, Z, P, Q."""
    rank = {name: k for k, name in enumerate(GATE_ORDER)}
    return rank.get(pair[0], len(rank)), rank.get(pair[1], len(rank))


@dataclass
class CausalWitness:
    gamma: dict[Pair, float]
    separable_bound: float = 0.0
    optimum: float | None = None
    diagnostics: dict = field(default_factory=dict, repr=False)

    @property
    def pairs(self) -> list[Pair]:
        return sorted(self.gamma, key=pair_order)

    @property
    def operator(self) -> HermitianOperator:
        m = np.eye(32, dtype=complex) / 4
        for (a, b), g in self.gamma.items():
            m = m + g / 4 * x_observable_witness_term(a, b)
        return HermitianOperator(m, process_subsystems())

    def value(self, w: ProcessMatrix) -> float:
        return self.operator.expectation(w.operator)

    def to_json(self) -> dict:
        data = {
            "gamma": [[a, b, float(self.gamma[(a, b)])] for a, b in self.pairs],
            "separable_bound": float(self.separable_bound),
        }
        if self.optimum is not None:
            data["optimum"] = float(self.optimum)
        return data

    @classmethod
    def from_json(cls, data: dict) -> "CausalWitness":
        gamma = {}
        for a, b, g in data["gamma"]:
            gate(a), gate(b)
            gamma[(a, b)] = float(g)
        if not gamma:
            raise ValueError("witness has an empty gamma table")
        return cls(gamma, float(data.get("separable_bound", 0.0)), data.get("optimum"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CausalWitness":
        return cls.from_json(json.loads(Path(path).read_text()))


def _pair_basis(pairs: Sequence[Pair]) -> np.ndarray:
    return np.stack([hvec(x_observable_witness_term(a, b)) / 4 for a, b in pairs], axis=1)


_S0 = hvec(np.eye(32) / 4)


def _solve_restricted(w: np.ndarray, pairs: Sequence[Pair], tol: float):
    prog = csdp.witness_program(w, _pair_basis(pairs), _S0)
    res = solve_sdp(prog.problem, tol=tol)
    if not res.converged:
        raise csdp.SolverError("restricted witness program did not converge", res)
    return prog.offset + res.objective, res.x[: len(pairs)], res


def _sparsest(
    w: np.ndarray, pairs: Sequence[Pair], target: float, tol: float, start: np.ndarray | None = None
) -> np.ndarray | None:
    """Minimise sum |gamma| among witnesses with ``tr[S w] <= target``.

    ``start`` is a solution vector of the restricted program (gamma, P1, P2)
    used to warm-start the iteration. Returns ``None`` when the iteration cap
    is hit; callers then keep the unsparsified solution.
    """
    basis = _pair_basis(pairs)
    m = len(pairs)
    nn = 32 * 32
    u1, u2 = csdp.range_basis("AB"), csdp.range_basis("BA")
    hw = hvec(w)
    cg = basis.T @ hw
    r1, r2 = u1.shape[1], u2.shape[1]
    A = np.vstack(
        [
            np.hstack([-u1.T @ basis, u1.T @ basis, u1.T, np.zeros((r1, nn)), np.zeros((r1, 1))]),
            np.hstack([-u2.T @ basis, u2.T @ basis, np.zeros((r2, nn)), u2.T, np.zeros((r2, 1))]),
            np.concatenate([cg, -cg, np.zeros(2 * nn), [1.0]])[None, :],
        ]
    )
    b = np.concatenate([u1.T @ _S0, u2.T @ _S0, [target - _S0 @ hw]])
    c = np.concatenate([np.ones(2 * m), np.zeros(2 * nn + 1)])
    blocks = [Block("nonneg", 2 * m), Block("psd", 32), Block("psd", 32), Block("nonneg", 1)]
    x0 = None
    if start is not None:
        g = start[:m]
        slack = max(target - _S0 @ hw - cg @ g, 0.0)
        x0 = np.concatenate([np.maximum(g, 0), np.maximum(-g, 0), start[m:], [slack]])
    res = solve_sdp(ConicProblem(c, A, b, blocks), tol=tol, x0=x0, max_iter=SPARSITY_MAX_ITER)
    if not res.converged:
        return None
    return res.x[:m] - res.x[m : 2 * m]


def optimize_witness(
    w: ProcessMatrix,
    gate_set: Iterable[UnitaryGate | str] = GATE_ORDER,
    tol: float = TOL,
    sparsify: bool = True,
) -> CausalWitness:
    """Most negative measurable witness for ``w`` over ordered pairs of ``gate_set``.

    Steps: solve the restricted dual program; minimise ``sum |gamma|`` at the
    optimal value; drop coefficients below ``1e-6``; re-solve on the surviving
    pairs; finally shift/rescale so that ``min tr[S W_sep] >= 0`` holds for the
    solver's own separable minimiser.
    """
    names = [gate(g).name for g in gate_set]
    for n in names:
        if n not in GATES:
            raise KeyError(f"witness gates must be named gates, got {n!r}")
    pairs = [(a, b) for a in names for b in names]
    opt, g, res = _solve_restricted(w.matrix, pairs, tol)
    log.info("restricted optimum %.6f after %d iterations", opt, res.iterations)
    if opt >= -csdp.NONSEPARABLE_TOL:
        raise NoWitnessError(opt)
    diagnostics = {"full_optimum": opt, "iterations": res.iterations}
    if sparsify:
        sparse = _sparsest(w.matrix, pairs, opt + SPARSITY_SLACK, tol, start=res.x)
        diagnostics["sparsified"] = sparse is not None
        if sparse is None:
            log.warning("sparsity re-solve hit its iteration cap; pruning the plain optimum")
        else:
            g = sparse
    keep = [k for k in range(len(pairs)) if abs(g[k]) >= PRUNE_TOL]
    pruned = [pairs[k] for k in keep]
    popt, pg, _ = _solve_restricted(w.matrix, pruned, tol)
    diagnostics["pruned_optimum"] = popt
    gamma = {p: float(v) for p, v in zip(pruned, pg) if abs(v) >= PRUNE_TOL}

    witness = CausalWitness(gamma)
    s, smin = csdp.certify(witness.operator.matrix, tol=tol)
    diagnostics["separable_minimum_before_certify"] = smin
    if smin < 0:
        witness = CausalWitness({p: v / (1 - smin) for p, v in gamma.items()})
    witness.optimum = witness.value(w)
    witness.diagnostics = diagnostics
    return witness


# ---------------------------------------------------------------------------
# evaluation from Stokes data


@dataclass
class StokesRecord:
    gate_a: str
    gate_b: str
    stokes: float
    std: float = 0.0

    @property
    def pair(self) -> Pair:
        return (self.gate_a, self.gate_b)


@dataclass
class WitnessEstimate:
    value: float
    std_error: float
    stokes_records: list[StokesRecord]
    sigma_from_bound: float | None
    separable_bound: float = 0.0

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "std_error": self.std_error,
            "sigma_from_bound": self.sigma_from_bound,
            "separable_bound": self.separable_bound,
        }


def _as_record(pair: Pair, entry) -> StokesRecord:
    if isinstance(entry, StokesRecord):
        return entry
    if isinstance(entry, (tuple, list)):
        return StokesRecord(pair[0], pair[1], float(entry[0]), float(entry[1]))
    return StokesRecord(pair[0], pair[1], float(entry), 0.0)


def evaluate_witness(
    witness: CausalWitness,
    stokes: Mapping[Pair, float | tuple[float, float] | StokesRecord] | Iterable[StokesRecord],
) -> WitnessEstimate:
    """``<S> = 1 + 1/4 sum gamma <X>`` with independent per-pair errors."""
    if not isinstance(stokes, Mapping):
        stokes = {r.pair: r for r in stokes}
    missing = [p for p in witness.pairs if p not in stokes]
    if missing:
        raise KeyError(f"Stokes table lacks pairs {missing}")
    records = [_as_record(p, stokes[p]) for p in witness.pairs]
    value = 1.0 + sum(witness.gamma[r.pair] * r.stokes for r in records) / 4
    std = float(np.sqrt(sum((witness.gamma[r.pair] * r.std / 4) ** 2 for r in records)))
    sigma = None
    if std > 0 and value < witness.separable_bound:
        sigma = (witness.separable_bound - value) / std
    return WitnessEstimate(float(value), std, records, sigma, witness.separable_bound)


STOKES_FIELDS = ["gate_a", "gate_b", "stokes", "std"]


def write_stokes_csv(records: Iterable[StokesRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(STOKES_FIELDS)
        for r in records:
            writer.writerow([r.gate_a, r.gate_b, repr(float(r.stokes)), repr(float(r.std))])


def read_stokes_csv(path: str | Path) -> dict[Pair, StokesRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != STOKES_FIELDS:
            raise ValueError(f"expected header {','.join(STOKES_FIELDS)}, got {reader.fieldnames}")
        out = {}
        for row in reader:
            rec = StokesRecord(row["gate_a"], row["gate_b"], float(row["stokes"]), float(row["std"]))
            out[rec.pair] = rec
    return out


# ---------------------------------------------------------------------------
# misalignment-corrected bound


def _choi_vector(u: np.ndarray) -> np.ndarray:
    # choi(U) = |v><v| with v the conjugate of |U>>
    return u.T.reshape(-1).conj()


def _x_reduced(w: np.ndarray) -> np.ndarray:
    """``Tr_C[W (I (x) X)]`` so that ``tr[(M (x) X) W] = tr[M R]``."""
    t = w.reshape(16, 2, 16, 2)
    return t[:, 0, :, 1] + t[:, 1, :, 0]


def _perturbations(n_mc: int, seed: int, width: int = 4) -> np.ndarray:
    """Unit-box prism offsets: the ``2**4`` corners, then ``n_mc`` interior draws.

    Corners are given as one sign per prism role (A first prism, A second,
    B first, B second) and tiled across ``width // 4`` gates.
    """
    corners = np.array(np.meshgrid(*[[-1.0, 1.0]] * 4, indexing="ij")).reshape(4, -1).T
    corners = np.repeat(corners.reshape(16, 2, 1, 2), width // 4, axis=2).reshape(16, width)
    rng = np.random.Generator(np.random.Philox(seed))
    return np.vstack([corners, rng.uniform(-1.0, 1.0, size=(n_mc, width))])


def _measured_witness(gam: np.ndarray, vecs: Iterable[np.ndarray]) -> np.ndarray:
    """Witness operator with each ideal Choi vector replaced by a realised one."""
    m = np.eye(32, dtype=complex) / 4
    for g, v in zip(gam, vecs):
        m += g / 4 * np.kron(np.outer(v, v.conj()), _X)
    return m


def _pair_vector(a: str, b: str, da, db) -> np.ndarray:
    ua = realized_with_errors(recipe_for(a), *da).matrix
    ub = realized_with_errors(recipe_for(b), *db).matrix
    return np.kron(_choi_vector(ua), _choi_vector(ub))


def corrected_separable_bound(
    witness: CausalWitness,
    angle_uncertainty: float,
    mc_samples: int = 200,
    seed: int = 0,
    model: str = "sampled",
    max_rounds: int = 8,
    search_tol: float = SEARCH_TOL,
) -> float:
    """Lowest value the measured combination takes on separable processes when
    each prism of each realised gate is off by up to ``angle_uncertainty`` degrees.

    ``model="sampled"`` gives every named gate in box A and in box B its own
    prism errors, shared by all pairs using that gate.  The candidates are the
    16 corner settings (one sign per prism role, same for every gate) plus
    ``mc_samples`` uniform joint draws; the result is the smallest separable
    minimum over the candidates.

    ``model="adversarial"`` lets every pair carry independent errors and
    searches for the worst ones: for the current separable process the worst
    of 16 corners plus ``mc_samples`` draws is picked per pair (exact, as the
    objective splits over pairs), then the separable minimum is re-solved,
    until the value stops improving.  This is a much more pessimistic bound.
    """
    if angle_uncertainty < 0:
        raise ValueError("angle uncertainty must be non-negative")
    if model not in ("sampled", "adversarial"):
        raise ValueError(f"unknown model {model!r}")
    if angle_uncertainty == 0:
        return float(witness.separable_bound)
    if model == "sampled":
        best = _sampled_bound(witness, angle_uncertainty, mc_samples, seed, search_tol)
    else:
        best = _adversarial_bound(witness, angle_uncertainty, mc_samples, seed, max_rounds, search_tol)
    return float(min(best, witness.separable_bound))


def _sampled_bound(witness, u, mc_samples, seed, tol) -> float:
    pairs = witness.pairs
    gam = np.array([witness.gamma[p] for p in pairs])
    names = sorted({g for p in pairs for g in p}, key=GATE_ORDER.index)
    n = len(names)
    idx = {g: k for k, g in enumerate(names)}
    best = np.inf
    for d in u * _perturbations(mc_samples, seed, width=4 * n):
        da, db = d[: 2 * n].reshape(n, 2), d[2 * n :].reshape(n, 2)
        vecs = [_pair_vector(a, b, da[idx[a]], db[idx[b]]) for a, b in pairs]
        val, _ = csdp.separable_minimum(_measured_witness(gam, vecs), tol=tol, max_iter=SEARCH_MAX_ITER)
        best = min(best, val)
    return best


def _adversarial_bound(witness, u, mc_samples, seed, max_rounds, tol) -> float:
    pairs = witness.pairs
    gam = np.array([witness.gamma[p] for p in pairs])
    # candidate Choi vectors, shape (pairs, candidates, 16)
    vecs = np.array(
        [
            [_pair_vector(a, b, d[:2], d[2:]) for d in u * _perturbations(mc_samples, seed + k)]
            for k, (a, b) in enumerate(pairs)
        ]
    )

    def worst_choice(wmat):
        red = _x_reduced(wmat)
        vals = np.real(np.einsum("pci,ij,pcj->pc", vecs.conj(), red, vecs))
        return np.argmin(gam[:, None] * vals, axis=1)

    best = np.inf
    for order in ("AB", "BA"):
        _, wmat, _ = csdp.minimize_over_cone(
            witness.operator.matrix, order, tol=tol, max_iter=SEARCH_MAX_ITER
        )
        current = np.inf
        for _ in range(max_rounds):
            choice = worst_choice(wmat)
            s = _measured_witness(gam, [vecs[k, c] for k, c in enumerate(choice)])
            val, wmat = csdp.separable_minimum(s, tol=tol, max_iter=SEARCH_MAX_ITER)
            log.debug("bound search: %.6f", val)
            if val > current - 1e-7:
                current = min(current, val)
                break
            current = val
        best = min(best, current)
    return best
