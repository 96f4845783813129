"""Linear operators with lazy composition and power-iteration norms.

Every operator exposes ``apply`` (forward product) and ``apply_adjoint``
(transpose product) on 1-d numpy vectors, together with a ``kind`` tag and a
``shape`` attribute.  Structured operators (identity, zero, scalings, stacks)
stay lazy so that large penalty operators never have to be materialized.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import (
    DegenerateProblem,
    DimensionError,
    IndexOutOfRange,
    NonConvergence,
    SelfLoop,
    UnknownKind,
)

# Matrices strictly smaller than this along both axes are stored dense.
DENSE_FALLBACK_DIM = 64

# Safety factor applied on top of iterative norm estimates.
NORM_SAFETY = 1.01


class LinearOperator:
    """Base class for all operator kinds.

    Attributes
    ----------
    kind : str
        Tag identifying the concrete representation.
    shape : tuple of int
        ``(rows, cols)`` of the represented matrix.
    """

    kind = "abstract"

    def __init__(self, shape):
        rows, cols = int(shape[0]), int(shape[1])
        if rows < 0 or cols < 0:
            raise DimensionError(f"negative operator shape {shape}")
        self.shape = (rows, cols)

    def _check_vec(self, v, length, what):
        v = np.asarray(v, dtype=float)
        if v.ndim != 1 or v.shape[0] != length:
            raise DimensionError(
                f"{what} must be a vector of length {length}, got shape {v.shape}"
            )
        return v

    def apply(self, x):
        raise NotImplementedError

    def apply_adjoint(self, y):
        raise NotImplementedError


class DenseOp(LinearOperator):
    """Operator backed by a 2-d numpy array."""

    kind = "dense"

    def __init__(self, array):
        array = np.asarray(array, dtype=float)
        if array.ndim != 2:
            raise DimensionError("dense operator needs a 2-d array")
        super().__init__(array.shape)
        self.array = array

    def apply(self, x):
        x = self._check_vec(x, self.shape[1], "input")
        return self.array @ x

    def apply_adjoint(self, y):
        y = self._check_vec(y, self.shape[0], "adjoint input")
        return self.array.T @ y


class SparseOp(LinearOperator):
    """Operator backed by a scipy CSR matrix."""

    kind = "sparse-csr"

    def __init__(self, matrix):
        matrix = sp.csr_array(matrix)
        super().__init__(matrix.shape)
        self.matrix = matrix.astype(float)
        self._adjoint = None

    def apply(self, x):
        x = self._check_vec(x, self.shape[1], "input")
        return self.matrix @ x

    def apply_adjoint(self, y):
        y = self._check_vec(y, self.shape[0], "adjoint input")
        if self._adjoint is None:
            self._adjoint = sp.csr_array(self.matrix.T)
        return self._adjoint @ y


class IdentityOp(LinearOperator):
    """Square identity of a given dimension."""

    kind = "identity"

    def __init__(self, n):
        super().__init__((n, n))

    def apply(self, x):
        return self._check_vec(x, self.shape[1], "input").copy()

    def apply_adjoint(self, y):
        return self._check_vec(y, self.shape[0], "adjoint input").copy()


class ZeroOp(LinearOperator):
    """All-zero operator of a given shape."""

    kind = "zero"

    def apply(self, x):
        self._check_vec(x, self.shape[1], "input")
        return np.zeros(self.shape[0])

    def apply_adjoint(self, y):
        self._check_vec(y, self.shape[0], "adjoint input")
        return np.zeros(self.shape[1])


class ScaledOp(LinearOperator):
    """A scalar multiple ``alpha * inner`` of another operator."""

    kind = "scaled"

    def __init__(self, alpha, inner):
        if not isinstance(inner, LinearOperator):
            raise UnknownKind("scaled operator needs a LinearOperator inner part")
        super().__init__(inner.shape)
        self.alpha = float(alpha)
        self.inner = inner

    def apply(self, x):
        return self.alpha * self.inner.apply(x)

    def apply_adjoint(self, y):
        return self.alpha * self.inner.apply_adjoint(y)


class VStackOp(LinearOperator):
    """Vertical stack of operators sharing a common column dimension.

    The stack stays lazy: forward products concatenate block outputs and
    adjoint products sum block adjoints over the matching row segments.
    """

    kind = "vstack"

    def __init__(self, blocks):
        blocks = list(blocks)
        if not blocks:
            raise DegenerateProblem("vstack of zero blocks")
        cols = blocks[0].shape[1]
        for b in blocks:
            if not isinstance(b, LinearOperator):
                raise UnknownKind("vstack blocks must be LinearOperator instances")
            if b.shape[1] != cols:
                raise DimensionError(
                    f"vstack blocks disagree on columns: {b.shape[1]} vs {cols}"
                )
        rows = sum(b.shape[0] for b in blocks)
        super().__init__((rows, cols))
        self.blocks = blocks
        self.offsets = np.cumsum([0] + [b.shape[0] for b in blocks])

    def apply(self, x):
        x = self._check_vec(x, self.shape[1], "input")
        return np.concatenate([b.apply(x) for b in self.blocks])

    def apply_adjoint(self, y):
        y = self._check_vec(y, self.shape[0], "adjoint input")
        out = np.zeros(self.shape[1])
        for b, lo, hi in zip(self.blocks, self.offsets[:-1], self.offsets[1:]):
            out += b.apply_adjoint(y[lo:hi])
        return out


_KINDS = {
    "dense": DenseOp,
    "sparse-csr": SparseOp,
    "identity": IdentityOp,
    "zero": ZeroOp,
    "scaled": ScaledOp,
    "vstack": VStackOp,
}


def make_operator(kind, *args, **kwargs):
    """Construct an operator from its kind tag.

    Parameters
    ----------
    kind : str
        One of ``dense``, ``sparse-csr``, ``identity``, ``zero``, ``scaled``,
        ``vstack``.

    Returns
    -------
    LinearOperator

    Raises
    ------
    UnknownKind
        If the tag is not registered.
    """
    try:
        cls = _KINDS[kind]
    except KeyError:
        raise UnknownKind(f"unknown operator kind {kind!r}") from None
    return cls(*args, **kwargs)


def matrix_operator(a):
    """Wrap a concrete matrix, choosing dense or CSR storage.

    Matrices smaller than ``DENSE_FALLBACK_DIM`` along both axes are stored
    dense; anything larger goes to CSR.
    """
    if sp.issparse(a):
        rows, cols = a.shape
        if rows < DENSE_FALLBACK_DIM and cols < DENSE_FALLBACK_DIM:
            return DenseOp(a.toarray())
        return SparseOp(a)
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise DimensionError("matrix_operator needs a 2-d matrix")
    rows, cols = a.shape
    if rows < DENSE_FALLBACK_DIM and cols < DENSE_FALLBACK_DIM:
        return DenseOp(a)
    return SparseOp(sp.csr_array(a))


def scaled_copy(op, alpha):
    """Return ``alpha * op`` without copying the underlying data.

    Nested scalings are flattened and scaling by zero collapses to the zero
    operator so downstream code can branch on the kind tag.
    """
    alpha = float(alpha)
    if alpha == 0.0:
        return ZeroOp(op.shape)
    if isinstance(op, ScaledOp):
        return ScaledOp(alpha * op.alpha, op.inner)
    if isinstance(op, ZeroOp):
        return ZeroOp(op.shape)
    return ScaledOp(alpha, op)


def apply(op, x):
    """Forward product ``op @ x`` for any operator kind."""
    return op.apply(x)


def apply_adjoint(op, y):
    """Adjoint product ``op.T @ y`` for any operator kind."""
    return op.apply_adjoint(y)


def densify(op):
    """Materialize an operator as a dense array.

    Intended for diagnostics and small problems only; stacks and scalings are
    resolved recursively.
    """
    if isinstance(op, DenseOp):
        return op.array.copy()
    if isinstance(op, SparseOp):
        return op.matrix.toarray()
    if isinstance(op, IdentityOp):
        return np.eye(op.shape[0])
    if isinstance(op, ZeroOp):
        return np.zeros(op.shape)
    if isinstance(op, ScaledOp):
        return op.alpha * densify(op.inner)
    if isinstance(op, VStackOp):
        return np.vstack([densify(b) for b in op.blocks])
    raise UnknownKind(f"cannot densify operator kind {op.kind!r}")


def op_norm(op, tol=1e-9, max_iters=10000):
    """Largest singular value via power iteration on the normal operator.

    The starting vector comes from a counter-based generator keyed at zero so
    repeated calls give identical results.

    Parameters
    ----------
    op : LinearOperator
    tol : float
        Relative tolerance on successive Rayleigh quotients.
    max_iters : int
        Iteration budget.

    Returns
    -------
    float
        Estimate of the spectral norm of ``op``.

    Raises
    ------
    NonConvergence
        If the Rayleigh quotient has not settled within the budget.
    """
    rows, cols = op.shape
    if rows == 0 or cols == 0:
        return 0.0
    rng = np.random.Generator(np.random.Philox(0))
    v = rng.standard_normal(cols)
    nrm = np.linalg.norm(v)
    v /= nrm
    lam_prev = np.inf
    for _ in range(max_iters):
        w = op.apply_adjoint(op.apply(v))
        lam = float(v @ w)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        if abs(lam - lam_prev) <= tol * max(1.0, abs(lam)):
            return float(np.sqrt(max(lam, 0.0)))
        lam_prev = lam
    raise NonConvergence(
        f"power iteration did not settle in {max_iters} iterations"
    )


def safe_op_norm(op, tol=1e-9, max_iters=10000):
    """Spectral norm estimate inflated by the safety factor.

    Power iteration approaches the top singular value from below, so values
    fed into step-size bounds get multiplied by ``NORM_SAFETY`` to stay on
    the conservative side.
    """
    return NORM_SAFETY * op_norm(op, tol=tol, max_iters=max_iters)


def build_group_membership(groups, p):
    """Row-selector operator for (possibly overlapping) coordinate groups.

    Stacking the selector of every group gives an operator whose forward
    product lists the group subvectors in order, so a blockwise penalty on
    the output equals the overlapping group penalty on the input.

    Parameters
    ----------
    groups : sequence of sequences of int
        0-based coordinate indices, one inner sequence per group.
    p : int
        Ambient dimension.

    Returns
    -------
    LinearOperator
        Operator of shape ``(sum of group sizes, p)``.

    Raises
    ------
    DegenerateProblem
        If there are no groups or a group is empty.
    IndexOutOfRange
        If an index falls outside ``[0, p)``.
    """
    groups = [np.asarray(g, dtype=int) for g in groups]
    if not groups:
        raise DegenerateProblem("no groups given")
    rows = []
    for j, g in enumerate(groups):
        if g.size == 0:
            raise DegenerateProblem(f"group {j} is empty")
        if np.any(g < 0) or np.any(g >= p):
            raise IndexOutOfRange(f"group {j} references a coordinate outside [0, {p})")
        rows.append(g)
    cols = np.concatenate(rows)
    total = cols.size
    mat = sp.csr_array(
        (np.ones(total), (np.arange(total), cols)), shape=(total, p)
    )
    return matrix_operator(mat)


def build_graph_difference(edges, p):
    """Signed edge-difference operator of a graph on ``p`` nodes.

    Each edge ``(i, j)`` contributes one row with ``+1`` at ``i`` and ``-1``
    at ``j``, so the forward product lists the differences ``x[i] - x[j]``.

    Parameters
    ----------
    edges : sequence of (int, int)
        0-based node pairs.
    p : int
        Number of nodes.

    Returns
    -------
    LinearOperator
        Operator of shape ``(len(edges), p)``.

    Raises
    ------
    SelfLoop
        If an edge joins a node to itself.
    IndexOutOfRange
        If an endpoint falls outside ``[0, p)``.
    DegenerateProblem
        If there are no edges.
    """
    edges = [(int(i), int(j)) for i, j in edges]
    if not edges:
        raise DegenerateProblem("no edges given")
    for k, (i, j) in enumerate(edges):
        if i == j:
            raise SelfLoop(f"edge {k} joins node {i} to itself")
        if not (0 <= i < p and 0 <= j < p):
            raise IndexOutOfRange(f"edge {k} references a node outside [0, {p})")
    m = len(edges)
    row = np.repeat(np.arange(m), 2)
    col = np.array([idx for e in edges for idx in e])
    val = np.tile([1.0, -1.0], m)
    mat = sp.csr_array((val, (row, col)), shape=(m, p))
    return matrix_operator(mat)


def write_triplets(path, matrix):
    """Write a matrix in the 1-based triplet text format.

    The first line holds ``rows cols nnz``; every following line holds one
    entry as ``row col value`` with 1-based indices and 17 significant
    digits.
    """
    if isinstance(matrix, LinearOperator):
        matrix = matrix.matrix if matrix.kind == "sparse-csr" else densify(matrix)
    coo = sp.coo_array(matrix)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")


def read_triplets(path):
    """Read a matrix written by :func:`write_triplets`.

    Returns
    -------
    scipy.sparse.csr_array

    Raises
    ------
    DimensionError
        If the header is malformed or an index exceeds the declared shape.
    """
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise DimensionError(f"triplet header must hold 3 integers, got {header}")
        rows, cols, nnz = (int(t) for t in header)
        ii = np.empty(nnz, dtype=int)
        jj = np.empty(nnz, dtype=int)
        vv = np.empty(nnz, dtype=float)
        for k in range(nnz):
            parts = fh.readline().split()
            if len(parts) != 3:
                raise DimensionError(f"triplet line {k + 2} is malformed")
            ii[k] = int(parts[0]) - 1
            jj[k] = int(parts[1]) - 1
            vv[k] = float(parts[2])
    if nnz and (ii.min() < 0 or jj.min() < 0 or ii.max() >= rows or jj.max() >= cols):
        raise DimensionError("triplet entry outside the declared shape")
    return sp.csr_array(sp.coo_array((vv, (ii, jj)), shape=(rows, cols)))


def write_vector(path, vec):
    """Write a vector as one value per line with 17 significant digits."""
    vec = np.asarray(vec, dtype=float).ravel()
    with open(path, "w", encoding="ascii") as fh:
        for v in vec:
            fh.write(f"{v:.17g}\n")


def read_vector(path):
    """Read a vector written by :func:`write_vector`."""
    with open(path, "r", encoding="ascii") as fh:
        values = [float(line) for line in fh if line.strip()]
    return np.array(values, dtype=float)
