import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qswitch.matstack import (
    ConvergenceError,
    HermitianOperator,
    eigh,
    hmat,
    hvec,
    identity,
    jacobi_eigh,
    kron,
    partial_trace,
    psd_project,
    trace_replace,
)

from .conftest import random_hermitian

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]])
Z = np.diag([1.0, -1.0])


def op(m, label):
    return HermitianOperator(m, [(label, len(m))])


def test_kron_identity_and_diagonal():
    assert np.array_equal(kron(op(I2, "a"), op(I2, "b")).matrix, np.eye(4))
    assert np.array_equal(kron(op(Z, "a"), op(Z, "b")).matrix, np.diag([1, -1, -1, 1]))


def test_kron_index_formula():
    k = kron(op(X, "a"), op(Z, "b")).matrix
    expected = np.zeros((4, 4))
    for i, j, p, q in np.ndindex(2, 2, 2, 2):
        expected[i * 2 + p, j * 2 + q] = X[i, j] * Z[p, q]
    assert np.array_equal(k, expected)
    assert np.array_equal(k[:2, 2:], Z) and np.array_equal(k[2:, :2], Z)


def test_kron_concatenates_subsystems():
    k = kron(op(X, "a"), op(Z, "b"))
    assert k.subsystems == (("a", 2), ("b", 2))
    assert k.dim == 4


def test_kron_associative(rng):
    a, b, c = (op(random_hermitian(rng, 2), s) for s in "abc")
    np.testing.assert_allclose(kron(kron(a, b), c).matrix, kron(a, kron(b, c)).matrix, atol=1e-12)


def test_partial_trace_product(rng):
    a = op(random_hermitian(rng, 2), "a")
    b = op(random_hermitian(rng, 3), "b")
    reduced = partial_trace(kron(a, b), {"a"})
    assert reduced.subsystems == (("a", 2),)
    np.testing.assert_allclose(reduced.matrix, a.matrix * np.trace(b.matrix), atol=1e-12)


def test_partial_trace_identity_32():
    ident = identity([(s, 2) for s in ["A_I", "A_O", "B_I", "B_O", "C_I"]])
    np.testing.assert_array_equal(partial_trace(ident, {"B_O"}).matrix, 16 * I2)


def test_partial_trace_bell_brute_force():
    phi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    bell = HermitianOperator(np.outer(phi, phi), [("l", 2), ("r", 2)])
    brute = np.zeros((2, 2), dtype=complex)
    for i, j, k in np.ndindex(2, 2, 2):
        brute[i, j] += bell.matrix[2 * i + k, 2 * j + k]
    np.testing.assert_allclose(partial_trace(bell, {"l"}).matrix, brute)
    np.testing.assert_allclose(brute, I2 / 2)


def test_partial_trace_keeps_order_and_trace(rng):
    subs = [("x", 2), ("y", 3), ("z", 2)]
    m = HermitianOperator(random_hermitian(rng, 12), subs)
    r = partial_trace(m, {"z", "x"})
    assert r.labels == ("x", "z")
    assert r.trace() == pytest.approx(m.trace(), abs=1e-12)


def test_partial_trace_unknown_label():
    with pytest.raises(KeyError):
        partial_trace(op(I2, "a"), {"nope"})


def test_trace_replace_is_projector(rng):
    subs = [("x", 2), ("y", 2), ("z", 2)]
    m = HermitianOperator(random_hermitian(rng, 8), subs)
    once = trace_replace(m, ["y"])
    assert np.allclose(trace_replace(once, ["y"]).matrix, once.matrix)
    assert once.trace() == pytest.approx(m.trace())


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_eigh_pauli(method):
    w, v = eigh(op(Z, "a"), method=method)
    np.testing.assert_allclose(w, [-1, 1])
    np.testing.assert_allclose(np.abs(v), [[0, 1], [1, 0]], atol=1e-12)
    w, v = eigh(op(X, "a"), method=method)
    np.testing.assert_allclose(w, [-1, 1])
    np.testing.assert_allclose(np.abs(v), np.full((2, 2), 1 / np.sqrt(2)), atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 5, 16, 32])
def test_jacobi_reconstruction(rng, n):
    m = random_hermitian(rng, n)
    w, v = jacobi_eigh(m)
    assert np.all(np.diff(w) >= 0)
    assert np.linalg.norm(v @ np.diag(w) @ v.conj().T - m) <= 1e-9 * np.linalg.norm(m)
    assert np.linalg.norm(v.conj().T @ v - np.eye(n)) <= 1e-9
    assert w.sum() == pytest.approx(np.trace(m).real, rel=1e-9, abs=1e-12)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(m), atol=1e-9)


def test_jacobi_iteration_cap(rng):
    with pytest.raises(ConvergenceError):
        jacobi_eigh(random_hermitian(rng, 8), max_sweeps=1)


def test_jacobi_degenerate():
    w, v = jacobi_eigh(np.eye(4))
    np.testing.assert_allclose(w, np.ones(4))
    w, v = jacobi_eigh(np.zeros((3, 3)))
    np.testing.assert_allclose(w, np.zeros(3))


def test_psd_project_examples():
    assert np.allclose(psd_project(op(np.eye(3), "a")).matrix, np.eye(3))
    assert np.allclose(psd_project(op(Z, "a")).matrix, np.diag([1, 0]))
    assert np.allclose(psd_project(op(-np.eye(4), "a")).matrix, 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_psd_project_is_nearest(n, seed):
    rng = np.random.default_rng(seed)
    m = random_hermitian(rng, n)
    p = psd_project(op(m, "a"))
    assert np.linalg.eigvalsh(p.matrix)[0] >= -1e-10
    best = np.linalg.norm(p.matrix - m)
    # oracle: clip at other floors in the eigenbasis, plus random PSD competitors
    w, v = np.linalg.eigh(m)
    for floor in np.linspace(0, 1, 6):
        cand = (v * np.where(w < 0, floor, w)) @ v.conj().T
        assert np.linalg.norm(cand - m) >= best - 1e-12
    for _ in range(5):
        g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        cand = p.matrix + 0.1 * g @ g.conj().T
        assert np.linalg.norm(cand - m) >= best - 1e-12


def test_jacobi_psd_project_agrees(rng):
    m = op(random_hermitian(rng, 6), "a")
    np.testing.assert_allclose(psd_project(m, "jacobi").matrix, psd_project(m).matrix, atol=1e-9)


def test_construction_checks():
    with pytest.raises(ValueError):
        HermitianOperator(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        HermitianOperator(np.eye(2), [("a", 2), ("a", 1)])
    with pytest.raises(ValueError):
        HermitianOperator(np.eye(4), [("a", 2), ("b", 3)])
    with pytest.raises(ValueError):
        HermitianOperator(np.full((2, 2), np.nan))
    m = HermitianOperator(np.array([[1, 1 + 1e-14], [1, 1]]))
    assert np.array_equal(m.matrix, m.matrix.conj().T)


def test_json_round_trip(rng):
    m = HermitianOperator(random_hermitian(rng, 4), [("p", 2), ("q", 2)])
    data = json.loads(json.dumps(m.to_json()))
    assert set(data) == {"dim", "subsystems", "re", "im"}
    assert len(data["re"]) == 16
    back = HermitianOperator.from_json(data)
    assert back.subsystems == m.subsystems
    np.testing.assert_array_equal(back.matrix, m.matrix)


def test_hvec_is_isometry(rng):
    a, b = random_hermitian(rng, 5), random_hermitian(rng, 5)
    assert hvec(a) @ hvec(b) == pytest.approx(np.trace(a @ b).real)
    np.testing.assert_allclose(hmat(hvec(a), 5), a, atol=1e-14)
