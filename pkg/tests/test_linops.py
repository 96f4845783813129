"""Operator abstraction: dispatch, adjoints, norms, builders, triplet IO."""

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from pdsplit import linops
from pdsplit.errors import (
    DegenerateProblem,
    DimensionError,
    IndexOutOfRange,
    NonConvergence,
    SelfLoop,
    UnknownKind,
)

import oracles


def test_identity_apply_returns_input():
    op = linops.IdentityOp(3)
    v = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(op.apply(v), v)
    np.testing.assert_array_equal(op.apply_adjoint(v), v)


def test_scaled_identity_doubles():
    op = linops.ScaledOp(2.0, linops.IdentityOp(2))
    np.testing.assert_array_equal(op.apply(np.array([1.0, -1.0])), [2.0, -2.0])


def test_sparse_chain_difference_matches_dense_multiply():
    dense = np.array([[1.0, -1.0, 0.0], [0.0, 1.0, -1.0]])
    op = linops.SparseOp(sp.csr_array(dense))
    v = np.array([1.0, 2.0, 4.0])
    np.testing.assert_allclose(op.apply(v), dense @ v)
    np.testing.assert_array_equal(op.apply(v), [-1.0, -2.0])


def test_dense_adjoint_matches_explicit_transpose():
    rng = np.random.default_rng(0)
    m = rng.standard_normal((2, 3))
    v = rng.standard_normal(2)
    np.testing.assert_allclose(linops.DenseOp(m).apply_adjoint(v), m.T @ v)


def test_vstack_adjoint_sums_block_adjoints():
    rng = np.random.default_rng(1)
    d = rng.standard_normal((3, 4))
    a = rng.standard_normal((5, 4))
    op = linops.VStackOp([linops.DenseOp(d), linops.DenseOp(a)])
    w = rng.standard_normal(8)
    np.testing.assert_allclose(
        op.apply_adjoint(w), d.T @ w[:3] + a.T @ w[3:], atol=1e-14
    )


def test_vstack_forward_concatenates_blocks():
    rng = np.random.default_rng(2)
    d = rng.standard_normal((3, 4))
    a = rng.standard_normal((5, 4))
    op = linops.VStackOp([linops.DenseOp(d), linops.DenseOp(a)])
    v = rng.standard_normal(4)
    np.testing.assert_allclose(op.apply(v), np.concatenate([d @ v, a @ v]))


def test_apply_rejects_wrong_length():
    with pytest.raises(DimensionError):
        linops.IdentityOp(3).apply(np.zeros(4))
    with pytest.raises(DimensionError):
        linops.DenseOp(np.ones((2, 3))).apply_adjoint(np.zeros(3))


def test_make_operator_rejects_unknown_kind():
    with pytest.raises(UnknownKind):
        linops.make_operator("banded", np.eye(2))


def test_op_norm_identity_is_one():
    assert linops.op_norm(linops.IdentityOp(5)) == pytest.approx(1.0, rel=1e-9)


def test_op_norm_diagonal_picks_largest_entry():
    op = linops.DenseOp(np.diag([3.0, 1.0, 0.5]))
    assert linops.op_norm(op) == pytest.approx(3.0, rel=1e-9)


def test_op_norm_matches_gram_eigen_oracle():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((6, 4))
    est = linops.op_norm(linops.DenseOp(a), tol=1e-10)
    assert est == pytest.approx(oracles.spectral_norm_gram(a), rel=1e-8)


def test_op_norm_of_scaled_operator_scales():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((5, 3))
    base = linops.op_norm(linops.DenseOp(a), tol=1e-10)
    scaled = linops.op_norm(linops.ScaledOp(-2.5, linops.DenseOp(a)), tol=1e-10)
    assert scaled == pytest.approx(2.5 * base, rel=1e-8)


def test_op_norm_zero_operator_is_zero():
    assert linops.op_norm(linops.ZeroOp((3, 2))) == 0.0


def test_op_norm_reports_non_convergence():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((8, 8))
    with pytest.raises(NonConvergence):
        linops.op_norm(linops.DenseOp(a), tol=1e-14, max_iters=2)


def test_vstack_norm_bounded_by_stacked_squares():
    rng = np.random.default_rng(6)
    d = rng.standard_normal((3, 4))
    a = rng.standard_normal((5, 4))
    stacked = linops.op_norm(
        linops.VStackOp([linops.DenseOp(d), linops.DenseOp(a)]), tol=1e-10
    )
    parts = (
        linops.op_norm(linops.DenseOp(d), tol=1e-10) ** 2
        + linops.op_norm(linops.DenseOp(a), tol=1e-10) ** 2
    )
    assert stacked**2 <= parts * (1.0 + 1e-9)


def test_adjoint_consistency_on_random_pairs():
    rng = np.random.default_rng(7)
    mat = rng.standard_normal((4, 6))
    ops = [
        linops.DenseOp(mat),
        linops.SparseOp(sp.csr_array(mat)),
        linops.ScaledOp(0.3, linops.DenseOp(mat)),
        linops.VStackOp([linops.DenseOp(mat), linops.IdentityOp(6)]),
    ]
    for op in ops:
        rows, cols = op.shape
        for _ in range(100):
            u = rng.standard_normal(cols)
            v = rng.standard_normal(rows)
            lhs = float(op.apply(u) @ v)
            rhs = float(u @ op.apply_adjoint(v))
            scale = max(abs(lhs), abs(rhs), 1.0)
            assert abs(lhs - rhs) <= 1e-10 * scale


@settings(max_examples=25, deadline=None)
@given(
    rows=st.integers(min_value=1, max_value=6),
    cols=st.integers(min_value=1, max_value=6),
    seed=st.integers(min_value=0, max_value=2**31 - 1),
)
def test_densify_round_trips_apply(rows, cols, seed):
    rng = np.random.default_rng(seed)
    mat = rng.standard_normal((rows, cols))
    op = linops.matrix_operator(sp.csr_array(mat))
    v = rng.standard_normal(cols)
    np.testing.assert_allclose(linops.densify(op) @ v, op.apply(v), atol=1e-12)


def test_group_membership_marks_overlap_column_twice():
    op = linops.build_group_membership([[0, 1, 2], [2, 3, 4]], 5)
    dense = linops.densify(op)
    assert dense.shape == (6, 5)
    assert dense.sum(axis=1).tolist() == [1.0] * 6
    assert dense[:, 2].sum() == 2.0


def test_group_membership_single_group_is_identity():
    op = linops.build_group_membership([list(range(4))], 4)
    np.testing.assert_array_equal(linops.densify(op), np.eye(4))


def test_group_membership_chained_grid_shape_and_sums():
    groups = oracles.chained_group_indices(2, 100)
    op = linops.build_group_membership(groups, 190)
    dense = linops.densify(op)
    assert dense.shape == (200, 190)
    assert set(dense.sum(axis=1).tolist()) == {1.0}
    assert set(dense.sum(axis=0).tolist()) == {1.0, 2.0}


def test_group_membership_rejects_out_of_range():
    with pytest.raises(IndexOutOfRange):
        linops.build_group_membership([[0, 5]], 5)


def test_group_membership_rejects_empty_input():
    with pytest.raises(DegenerateProblem):
        linops.build_group_membership([], 5)
    with pytest.raises(DegenerateProblem):
        linops.build_group_membership([[0], []], 5)


def test_graph_difference_single_edge():
    op = linops.build_graph_difference([(0, 1)], 2)
    np.testing.assert_array_equal(linops.densify(op), [[1.0, -1.0]])


def test_graph_difference_kills_constant_vectors():
    op = linops.build_graph_difference([(0, 1), (1, 2)], 3)
    np.testing.assert_array_equal(op.apply(np.full(3, 4.2)), np.zeros(2))


def test_graph_difference_rejects_self_loop_and_bad_index():
    with pytest.raises(SelfLoop):
        linops.build_graph_difference([(1, 1)], 3)
    with pytest.raises(IndexOutOfRange):
        linops.build_graph_difference([(0, 3)], 3)


def test_triplet_round_trip_preserves_matrix(tmp_path):
    rng = np.random.default_rng(8)
    dense = rng.standard_normal((7, 5)) * (rng.random((7, 5)) < 0.4)
    mat = sp.csr_array(dense)
    path = tmp_path / "triplets.txt"
    linops.write_triplets(str(path), mat)
    back = linops.read_triplets(str(path))
    assert (back != mat).nnz == 0


def test_triplet_reader_rejects_out_of_shape_entry(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("2 2 1\n3 1 5.0\n")
    with pytest.raises(DimensionError):
        linops.read_triplets(str(path))


def test_vector_round_trip(tmp_path):
    path = tmp_path / "vec.txt"
    vec = np.array([1.5, -2.25, 1e-17, 3.0])
    linops.write_vector(str(path), vec)
    np.testing.assert_array_equal(linops.read_vector(str(path)), vec)
