import itertools

import numpy as np
import pytest

from qswitch.matstack import HermitianOperator
from qswitch.processes import (
    GATE_ORDER,
    GATES,
    ChoiOperator,
    ProcessMatrix,
    PureState,
    UnitaryGate,
    born_probability,
    choi_of_unitary,
    dephase_control,
    measurement_operator,
    parse_gates,
    stokes_expectation,
    switch_process,
    white_noise_process,
    x_projector,
)

PAIRS = list(itertools.product(GATE_ORDER, repeat=2))


def analytic_stokes(a, b, psi=np.array([1, 0])):
    """Re <psi| A^dag B^dag A B |psi>, straight from the switch output state."""
    ua, ub = GATES[a].matrix, GATES[b].matrix
    return float(np.real(psi.conj() @ ua.conj().T @ ub.conj().T @ ua @ ub @ psi))


def test_gate_definitions():
    x, y, z = GATES["X"].matrix, GATES["Y"].matrix, GATES["Z"].matrix
    np.testing.assert_array_equal(GATES["P"].matrix, (y + z) / np.sqrt(2))
    np.testing.assert_array_equal(GATES["Q"].matrix, (x + z) / np.sqrt(2))
    for g in GATES.values():
        np.testing.assert_allclose(g.matrix.conj().T @ g.matrix, np.eye(2), atol=1e-12)
    with pytest.raises(ValueError):
        UnitaryGate("bad", [[1, 1], [0, 1]])


def test_parse_gates():
    assert [g.name for g in parse_gates("IXY")] == ["I", "X", "Y"]
    assert [g.name for g in parse_gates("I,Z")] == ["I", "Z"]
    with pytest.raises(KeyError):
        parse_gates("W")


def brute_choi_transposed(u):
    d = u.shape[0]
    m = np.zeros((d * d, d * d), dtype=complex)
    for l, k in itertools.product(range(d), repeat=2):
        e = np.zeros((d, d))
        e[l, k] = 1
        m += np.kron(e, u @ e @ u.conj().T)
    return m.T


@pytest.mark.parametrize("name", GATE_ORDER)
def test_choi_matches_formula(name):
    c = choi_of_unitary(name).operator
    np.testing.assert_allclose(c.matrix, brute_choi_transposed(GATES[name].matrix), atol=1e-14)
    assert c.trace() == pytest.approx(2)
    assert np.linalg.matrix_rank(c.matrix, tol=1e-10) == 1
    assert np.linalg.eigvalsh(c.matrix)[0] >= -1e-12


@pytest.mark.parametrize(
    "name, ket",
    [("I", [1, 0, 0, 1]), ("Z", [1, 0, 0, -1]), ("X", [0, 1, 1, 0])],
)
def test_choi_examples(name, ket):
    ket = np.array(ket, dtype=complex)
    np.testing.assert_allclose(choi_of_unitary(name).operator.matrix, np.outer(ket, ket).T, atol=1e-14)


def _effects(a, b, sign):
    return [
        choi_of_unitary(a),
        choi_of_unitary(b, ("B_I", "B_O")),
        measurement_operator(x_projector(sign)),
    ]


def test_switch_trace_and_psd(ideal_switch):
    assert ideal_switch.trace() == pytest.approx(4)
    assert ideal_switch.is_psd()
    assert ideal_switch.dims == (2, 2, 2, 2, 2)


@pytest.mark.parametrize("control", ["zero", "one", "plus", "minus"])
@pytest.mark.parametrize("target", ["zero", "one", "plus"])
def test_switch_valid_for_all_inputs(control, target):
    w = switch_process(target, control)
    assert w.trace() == pytest.approx(4)
    assert w.is_psd()


def test_born_rule_examples(ideal_switch):
    assert born_probability(_effects("I", "I", +1), ideal_switch) == pytest.approx(1)
    assert born_probability(_effects("X", "Y", +1), ideal_switch) == pytest.approx(0, abs=1e-14)


@pytest.mark.parametrize("a, b", PAIRS)
def test_born_normalisation(ideal_switch, a, b):
    total = sum(born_probability(_effects(a, b, s), ideal_switch) for s in (+1, -1))
    assert total == pytest.approx(1, abs=1e-12)


def test_born_dimension_mismatch(ideal_switch):
    with pytest.raises(ValueError):
        born_probability([choi_of_unitary("I")], ideal_switch)


def test_born_identity_maps_complete_povm(ideal_switch):
    identity_c = ChoiOperator(HermitianOperator(np.eye(2), [("C_I", 2)]))
    maps = [choi_of_unitary("I"), choi_of_unitary("I", ("B_I", "B_O")), identity_c]
    assert born_probability(maps, ideal_switch) == pytest.approx(1)


@pytest.mark.parametrize("a, b", PAIRS)
def test_stokes_matches_analytic(ideal_switch, a, b):
    assert stokes_expectation(ideal_switch, a, b) == pytest.approx(analytic_stokes(a, b), abs=1e-10)


def test_stokes_examples(ideal_switch):
    assert stokes_expectation(ideal_switch, "I", "I") == pytest.approx(1)
    assert stokes_expectation(ideal_switch, "X", "Y") == pytest.approx(-1)
    assert stokes_expectation(ideal_switch, "Z", "P") == pytest.approx(0, abs=1e-14)


def test_random_unitaries_match_analytic(rng):
    from scipy.stats import unitary_group

    w = switch_process()
    for k in range(10):
        ua = UnitaryGate("a", unitary_group.rvs(2, random_state=rng))
        ub = UnitaryGate("b", unitary_group.rvs(2, random_state=rng))
        expected = np.real(
            np.array([1, 0])
            @ ua.matrix.conj().T
            @ ub.matrix.conj().T
            @ ua.matrix
            @ ub.matrix
            @ np.array([1, 0])
        )
        assert stokes_expectation(w, ua, ub) == pytest.approx(expected, abs=1e-10)


def test_white_noise():
    w = white_noise_process()
    assert w.trace() == pytest.approx(4)
    np.testing.assert_allclose(w.matrix, np.eye(32) / 8)
    for a, b in PAIRS:
        assert stokes_expectation(w, a, b) == pytest.approx(0, abs=1e-14)


def test_fixed_orders_carry_no_stokes_signal():
    for control in ("zero", "one"):
        w = switch_process("zero", control)
        for a, b in PAIRS:
            assert stokes_expectation(w, a, b) == pytest.approx(0, abs=1e-14)


def test_dephase_control(ideal_switch):
    assert np.array_equal(dephase_control(ideal_switch, 1.0).matrix, ideal_switch.matrix)
    flat = dephase_control(ideal_switch, 0.0)
    assert flat.trace() == pytest.approx(4)
    for a, b in PAIRS:
        assert stokes_expectation(flat, a, b) == pytest.approx(0, abs=1e-14)
    part = dephase_control(ideal_switch, 0.938)
    for a, b in PAIRS:
        assert stokes_expectation(part, a, b) == pytest.approx(0.938 * analytic_stokes(a, b), abs=1e-12)
    with pytest.raises(ValueError):
        dephase_control(ideal_switch, 1.5)


@pytest.mark.parametrize("v", [0.0, 0.3, 0.913, 1.0])
def test_stokes_linear_in_process(ideal_switch, v):
    flat = dephase_control(ideal_switch, 0.0)
    mixed = dephase_control(ideal_switch, v)
    for a, b in PAIRS:
        lhs = stokes_expectation(mixed, a, b)
        rhs = v * stokes_expectation(ideal_switch, a, b) + (1 - v) * stokes_expectation(flat, a, b)
        assert lhs == pytest.approx(rhs, abs=1e-12)


def test_process_validation():
    with pytest.raises(ValueError):
        ProcessMatrix.from_array(np.eye(32))  # trace 32
    with pytest.raises(ValueError):
        ProcessMatrix.from_array(np.diag([8.0] + [-4 / 31 * 1] * 31))
    with pytest.raises(ValueError):
        PureState([1, 1])


def test_process_json_round_trip(ideal_switch):
    back = ProcessMatrix.from_json(ideal_switch.to_json())
    np.testing.assert_array_equal(back.matrix, ideal_switch.matrix)
