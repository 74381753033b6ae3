"""Tests for registers, sparse states, operators and density matrices."""

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from compressed_oracles.qlinalg import (
    DensityMatrix,
    LinearOp,
    RegisterLayout,
    SparseState,
    operator_norm,
    partial_trace,
    random_state,
    random_unitary,
    tensor_embed,
    trace_distance,
)

# ---------------------------------------------------------------------------
# Layouts
# ---------------------------------------------------------------------------


class TestRegisterLayout:
    def test_encode_decode_roundtrip(self):
        lay = RegisterLayout.of(("A", 3), ("B", 4), ("C", 2))
        for idx in range(lay.dim):
            assert lay.encode(lay.decode(idx)) == idx

    def test_first_register_most_significant(self):
        lay = RegisterLayout.of(("A", 3), ("B", 4))
        assert lay.encode([1, 0]) == 4
        assert lay.encode({"A": 0, "B": 3}) == 3

    def test_rejects_duplicate_names(self):
        with pytest.raises(ValueError):
            RegisterLayout.of(("A", 2), ("A", 3))

    def test_sub_and_concat(self):
        lay = RegisterLayout.of(("A", 3), ("B", 4))
        both = lay.concat(RegisterLayout.of(("C", 5)))
        assert both.dims == (3, 4, 5)
        assert both.sub(["C", "A"]).dims == (5, 3)


# ---------------------------------------------------------------------------
# Sparse states
# ---------------------------------------------------------------------------


class TestSparseState:
    lay = RegisterLayout.of(("X", 4), ("Y", 4))

    def test_dense_roundtrip(self):
        v = random_state(16, np.random.default_rng(0))
        s = SparseState.from_dense(self.lay, v)
        assert_allclose(s.to_dense(), v)
        assert_allclose(s.norm(), 1.0)

    def test_drops_tiny_amplitudes(self):
        s = SparseState(self.lay, {0: 1.0, 3: 1e-16})
        assert s.nnz == 1

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            SparseState(self.lay, {99: 1.0})

    def test_inner_and_arithmetic(self):
        a = SparseState.basis(self.lay, [1, 2])
        b = SparseState.basis(self.lay, [3, 0], 1j)
        c = (a + b) * (1 / np.sqrt(2))
        assert_allclose(c.norm(), 1.0)
        assert_allclose(b.inner(c), 1 / np.sqrt(2))
        assert_allclose(a.inner(c), 1 / np.sqrt(2))
        assert (c - c).nnz == 0


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


class TestLinearOp:
    def test_matrix_adjoint(self):
        rng = np.random.default_rng(1)
        m = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
        op = LinearOp.from_matrix(m)
        assert_allclose(op.to_dense(), m)
        assert_allclose(op.dag.to_dense(), m.conj().T)

    def test_composition_and_sum(self):
        rng = np.random.default_rng(2)
        a, b = (rng.standard_normal((4, 4)) for _ in range(2))
        A, B = LinearOp.from_matrix(a), LinearOp.from_matrix(b)
        assert_allclose((A @ B).to_dense(), a @ b)
        assert_allclose((A + B).to_dense(), a + b)
        assert_allclose((A - B).to_dense(), a - b)
        assert_allclose((A * 2j).to_dense(), 2j * a)

    def test_permutation_maps_basis(self):
        perm = np.array([2, 0, 1])
        op = LinearOp.permutation(perm)
        e0 = np.eye(3)[:, 0]
        assert_allclose(op.apply(e0), np.eye(3)[:, 2])
        assert_allclose(op.dag.to_dense() @ op.to_dense(), np.eye(3))

    def test_reflection_is_unitary_involution(self):
        d = sp.csr_matrix(np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=complex))
        r = LinearOp.reflection(d).to_dense()
        assert_allclose(r @ r, np.eye(4), atol=1e-14)
        assert_allclose(r, r.conj().T)

    def test_tensor_embed_matches_kron(self):
        lay = RegisterLayout.of(("A", 2), ("B", 3))
        rng = np.random.default_rng(3)
        u = random_unitary(3, rng)
        op = tensor_embed(LinearOp.from_matrix(u), ["B"], lay)
        assert_allclose(op.to_dense(), np.kron(np.eye(2), u), atol=1e-14)
        op_a = tensor_embed(LinearOp.from_matrix(np.array([[0, 1], [1, 0]])), ["A"], lay)
        assert_allclose(op_a.to_dense(), np.kron([[0, 1], [1, 0]], np.eye(3)))

    def test_operator_norm_exact_and_power(self):
        diag = np.linspace(0.1, 1.0, 600)
        diag[-1] = 3.0
        op = LinearOp.diagonal(diag)
        assert_allclose(operator_norm(op), 3.0, rtol=1e-6)
        assert_allclose(operator_norm(op, np.arange(10)), diag[9], rtol=1e-12)


# ---------------------------------------------------------------------------
# Density matrices
# ---------------------------------------------------------------------------


class TestDensityMatrix:
    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            DensityMatrix(np.array([[1, 1], [0, 0]]))

    def test_partial_trace_of_product_state(self):
        rng = np.random.default_rng(4)
        a, b = random_state(2, rng), random_state(3, rng)
        lay = RegisterLayout.of(("A", 2), ("B", 3))
        s = SparseState.from_dense(lay, np.kron(a, b))
        assert_allclose(partial_trace(s, ["A"]).matrix, np.outer(a, a.conj()), atol=1e-14)
        rho = DensityMatrix.from_state(s)
        assert_allclose(partial_trace(rho, ["B"], lay).matrix, np.outer(b, b.conj()), atol=1e-14)

    def test_from_rows_mixture(self):
        rho = DensityMatrix.from_rows(np.eye(3))
        assert_allclose(rho.matrix, np.eye(3) / 3)
        assert rho.is_psd()


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**31))
def test_pure_state_trace_distance_matches_overlap(d, seed):
    # two routes: spectrum of the difference versus the fidelity formula
    rng = np.random.default_rng(seed)
    a, b = random_state(d, rng), random_state(d, rng)
    td = trace_distance(np.outer(a, a.conj()), np.outer(b, b.conj()))
    assert_allclose(td, np.sqrt(max(0.0, 1 - abs(np.vdot(a, b)) ** 2)), atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31))
def test_trace_distance_is_a_metric(d, seed):
    rng = np.random.default_rng(seed)
    rhos = [DensityMatrix.from_rows(np.array([random_state(d, rng) for _ in range(3)])) for _ in range(3)]
    ab, bc, ac = (trace_distance(rhos[i], rhos[j]) for i, j in ((0, 1), (1, 2), (0, 2)))
    assert 0 <= ab <= 1 + 1e-12
    assert ac <= ab + bc + 1e-12
    assert_allclose(trace_distance(rhos[0], rhos[0]), 0.0, atol=1e-12)
