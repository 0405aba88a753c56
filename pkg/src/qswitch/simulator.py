"""End-to-end simulation of the photonic switch experiment.

Per unitary pair the simulator draws prism errors, builds the switch output
state, damps the inter-branch coherence by the visibility, and samples photon
counts at the two ports of the diagonal-polarisation analyser.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .hardware import realized_with_errors, recipe_for
from .processes import GATE_ORDER, PureState, UnitaryGate, gate, state
from .witness import CausalWitness, StokesRecord, WitnessEstimate, evaluate_witness, pair_order


@dataclass(frozen=True)
class NoiseModel:
    visibility: float = 0.938
    angle_jitter_deg: float = 1.0
    shots_per_setting: int = 100_000
    rng_seed: int = 0
    analytic: bool = False

    def __post_init__(self):
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError("visibility must lie in [0, 1]")
        if self.angle_jitter_deg < 0:
            raise ValueError("angle jitter must be non-negative")
        if self.shots_per_setting <= 0:
            raise ValueError("shots must be positive")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @classmethod
    def ideal(cls) -> "NoiseModel":
        return cls(visibility=1.0, angle_jitter_deg=0.0, analytic=True)


@dataclass
class PairRecord:
    gate_a: str
    gate_b: str
    ideal: float
    expected: float  # noisy expectation value, before shot noise
    estimate: float
    std: float
    n_plus: int | None = None
    n_minus: int | None = None
    prism_errors_deg: tuple[float, ...] = ()

    @property
    def pair(self) -> tuple[str, str]:
        return (self.gate_a, self.gate_b)


def switch_output(a: np.ndarray, b: np.ndarray, target: np.ndarray) -> np.ndarray:
    """``(BA|psi> |0> + AB|psi> |1>) / sqrt 2`` as a (target, control) array."""
    return np.stack([b @ a @ target, a @ b @ target], axis=1) / np.sqrt(2)


def control_x_expectation(a: np.ndarray, b: np.ndarray, target: np.ndarray, visibility: float = 1.0) -> float:
    phi = switch_output(a, b, target)
    rho_c = phi.T @ phi.conj()  # traces out the spatial mode
    return float(2 * visibility * rho_c[0, 1].real)


def _pair_rng(seed: int, index: int) -> np.random.Generator:
    child = np.random.SeedSequence(seed).spawn(index + 1)[index]
    return np.random.Generator(np.random.Philox(child))


def simulate_pair(
    a: UnitaryGate | str,
    b: UnitaryGate | str,
    noise: NoiseModel,
    rng: np.random.Generator | None = None,
    target: PureState | str = "zero",
) -> PairRecord:
    a, b = gate(a), gate(b)
    psi = state(target).amplitudes
    rng = rng if rng is not None else _pair_rng(noise.rng_seed, 0)
    ideal = control_x_expectation(a.matrix, b.matrix, psi)
    errors = ()
    ua, ub = a.matrix, b.matrix
    if noise.angle_jitter_deg > 0:
        u = noise.angle_jitter_deg
        errors = tuple(float(e) for e in rng.uniform(-u, u, size=4))
        ua = realized_with_errors(recipe_for(a), errors[0], errors[1]).matrix
        ub = realized_with_errors(recipe_for(b), errors[2], errors[3]).matrix
    expected = control_x_expectation(ua, ub, psi, noise.visibility)
    if noise.analytic:
        return PairRecord(a.name, b.name, ideal, expected, expected, 0.0, prism_errors_deg=errors)
    n = noise.shots_per_setting
    p_plus = min(max((1 + expected) / 2, 0.0), 1.0)
    n_plus = int(rng.binomial(n, p_plus))
    est = (2 * n_plus - n) / n
    std = float(np.sqrt(max(1 - est * est, 0.0) / n))
    return PairRecord(a.name, b.name, ideal, expected, est, std, n_plus, n - n_plus, errors)


@dataclass
class ExperimentResult:
    records: list[PairRecord]
    witness_estimate: WitnessEstimate
    config: dict = field(default_factory=dict)

    @property
    def value(self) -> float:
        return self.witness_estimate.value

    def summary(self) -> dict:
        return {
            **self.witness_estimate.to_json(),
            "error_kind": "statistical (binomial shot noise only)",
            "config": self.config,
        }

    def to_json(self) -> str:
        payload = {"summary": self.summary(), "records": [asdict(r) for r in self.records]}
        return json.dumps(payload, indent=2, sort_keys=True)


def run_experiment(witness: CausalWitness, noise: NoiseModel) -> ExperimentResult:
    """Simulate every pair the witness needs; deterministic given the seed."""
    if not witness.gamma:
        raise ValueError("witness has an empty gamma table")
    records = [
        simulate_pair(a, b, noise, _pair_rng(noise.rng_seed, k)) for k, (a, b) in enumerate(witness.pairs)
    ]
    stokes = {r.pair: StokesRecord(r.gate_a, r.gate_b, r.estimate, r.std) for r in records}
    estimate = evaluate_witness(witness, stokes)
    return ExperimentResult(records, estimate, {"noise": asdict(noise)})


FIG4_FIELDS = ["pair_index", "gate_a", "gate_b", "ideal", "simulated", "std"]


def reproduce_figure4(witness: CausalWitness, noise: NoiseModel) -> list[dict]:
    """Rows of ideal vs simulated Stokes values, in I, X, Y, Z, P, Q pair order."""
    return figure4_rows(run_experiment(witness, noise))


def figure4_rows(result: ExperimentResult) -> list[dict]:
    by_pair = {r.pair: r for r in result.records}
    rows = []
    for k, pair in enumerate(sorted(by_pair, key=pair_order)):
        r = by_pair[pair]
        rows.append(
            {
                "pair_index": k,
                "gate_a": r.gate_a,
                "gate_b": r.gate_b,
                "ideal": round(r.ideal, 12) + 0.0,
                "simulated": r.estimate,
                "std": r.std,
            }
        )
    return rows


def write_figure4_csv(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=FIG4_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def all_pairs() -> list[tuple[str, str]]:
    return [(a, b) for a in GATE_ORDER for b in GATE_ORDER]
