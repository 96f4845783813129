"""Smooth-plus-composite problems in saddle form.

A problem ``min_x f(x) + h(Kx)`` is handled through its saddle formulation
``min_x max_y f(x) + <Kx, y> - h*(y)``, so a problem bundle carries the
smooth part (value, gradient, curvature bound), the coupling operator, and
the conjugate-prox spec of the penalty.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import linops
from .errors import BadLabels, DimensionError, MissingPrimalEvaluator
from .linops import LinearOperator, matrix_operator
from .prox import Composite, ConjugateProx, GroupL2Balls, GroupPartition, HingeConj, IdentityShift

# Tolerance used when deciding conjugate feasibility of computed duals;
# prox outputs land on constraint boundaries up to rounding.
FEAS_TOL = 1e-9


class SmoothLoss:
    """Smooth convex loss with an explicit curvature bound.

    Attributes
    ----------
    value : callable
        Maps a primal vector to the loss value.
    grad : callable
        Maps a primal vector to the gradient.
    L_f : float
        Lipschitz constant of the gradient (0 for a vanishing loss).
    """

    def __init__(self, value, grad, lipschitz):
        self.value = value
        self.grad = grad
        self.L_f = float(lipschitz)


def quadratic_loss(a, b):
    """Least-squares loss ``f(x) = 0.5 * ||A x - b||^2``.

    The curvature bound is the squared spectral norm of ``A`` with the
    iterative-estimate safety factor applied.

    Parameters
    ----------
    a : LinearOperator or matrix
    b : ndarray
        Response vector matching the rows of ``a``.

    Returns
    -------
    SmoothLoss
    """
    a_op = a if isinstance(a, LinearOperator) else matrix_operator(a)
    b = np.asarray(b, dtype=float)
    if b.ndim != 1 or b.shape[0] != a_op.shape[0]:
        raise DimensionError(
            f"response length {b.shape} does not match {a_op.shape[0]} rows"
        )

    def value(x):
        r = a_op.apply(x) - b
        return 0.5 * float(r @ r)

    def grad(x):
        return a_op.apply_adjoint(a_op.apply(x) - b)

    return SmoothLoss(value, grad, linops.safe_op_norm(a_op) ** 2)


def logistic_loss(a, b):
    """Logistic negative log-likelihood with labels in ``{0, 1}``.

    ``f(x) = sum_i log(1 + exp(a_i' x)) - b_i * (a_i' x)``, computed through
    ``logaddexp`` for overflow safety.  The curvature bound is a quarter of
    the squared spectral norm of ``A``.

    Parameters
    ----------
    a : LinearOperator or matrix
    b : ndarray
        0/1 labels matching the rows of ``a``.

    Returns
    -------
    SmoothLoss

    Raises
    ------
    BadLabels
        If any label is outside ``{0, 1}``.
    """
    a_op = a if isinstance(a, LinearOperator) else matrix_operator(a)
    b = np.asarray(b, dtype=float)
    if b.ndim != 1 or b.shape[0] != a_op.shape[0]:
        raise DimensionError(
            f"label length {b.shape} does not match {a_op.shape[0]} rows"
        )
    if not np.all(np.isin(b, (0.0, 1.0))):
        raise BadLabels("logistic labels must take values in {0, 1}")

    def value(x):
        t = a_op.apply(x)
        return float(np.sum(np.logaddexp(0.0, t) - b * t))

    def grad(x):
        t = a_op.apply(x)
        return a_op.apply_adjoint(1.0 / (1.0 + np.exp(-t)) - b)

    return SmoothLoss(value, grad, 0.25 * linops.safe_op_norm(a_op) ** 2)


def zero_loss(p):
    """Vanishing smooth part for problems handled entirely by the penalty."""

    def value(x):
        return 0.0

    def grad(x):
        return np.zeros(p)

    return SmoothLoss(value, grad, 0.0)


class SaddleProblem:
    """Problem bundle for ``min_x f(x) + h(Kx)``.

    Attributes
    ----------
    loss : SmoothLoss
        Smooth part ``f``.
    K : LinearOperator
        Coupling operator from primal to dual space.
    hconj : ConjugateProx
        Prox spec of the penalty conjugate ``h*``.
    h_primal : callable or None
        Optional override returning ``h(u)``; when absent the spec's own
        primal value is used.
    dims : tuple of int
        ``(primal dimension, dual dimension)``.
    loss_matrix, loss_rhs : optional
        Concrete data behind a least-squares loss, kept when available so
        feature-sharded runs can split the design matrix by columns.
    """

    def __init__(self, loss, k_op, hconj, h_primal=None, loss_matrix=None, loss_rhs=None):
        if not isinstance(k_op, LinearOperator):
            k_op = matrix_operator(k_op)
        if not isinstance(hconj, ConjugateProx):
            raise DimensionError("hconj must be a ConjugateProx spec")
        if hconj.dim != k_op.shape[0]:
            raise DimensionError(
                f"penalty dimension {hconj.dim} does not match operator rows {k_op.shape[0]}"
            )
        self.loss = loss
        self.K = k_op
        self.hconj = hconj
        self.h_primal = h_primal
        self.dims = (k_op.shape[1], k_op.shape[0])
        self.loss_matrix = loss_matrix
        self.loss_rhs = loss_rhs
        self._k_norm = None

    @property
    def grad_f(self):
        return self.loss.grad

    @property
    def L_f(self):
        return self.loss.L_f

    @property
    def k_norm(self):
        """Safety-inflated spectral norm of the coupling operator, cached."""
        if self._k_norm is None:
            self._k_norm = linops.safe_op_norm(self.K)
        return self._k_norm


def penalty_value(problem, u):
    """Value of the penalty ``h`` at a dual-space point ``u``."""
    if problem.h_primal is not None:
        return float(problem.h_primal(u))
    if problem.hconj is None:
        raise MissingPrimalEvaluator("problem has no penalty evaluator")
    return float(problem.hconj.primal_value(u))


def primal_objective(problem, x):
    """Objective ``f(x) + h(Kx)``.

    Raises
    ------
    MissingPrimalEvaluator
        If neither an explicit penalty evaluator nor a prox spec with a
        primal value is available.
    """
    x = np.asarray(x, dtype=float)
    return float(problem.loss.value(x)) + penalty_value(problem, problem.K.apply(x))


def lagrangian(problem, x, y):
    """Saddle value ``f(x) + <Kx, y> - h*(y)``.

    Returns ``-inf`` when ``y`` is infeasible for ``h*`` (the conjugate is
    ``+inf`` there); a small tolerance absorbs boundary rounding of prox
    outputs.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    conj = problem.hconj.conj_value_with_tol(y, FEAS_TOL)
    if not np.isfinite(conj):
        return -np.inf
    return float(problem.loss.value(x)) + float(problem.K.apply(x) @ y) - conj


def fixed_point_residual(problem, x, y, tau, sigma):
    """Norm of the displacement of one plain primal-dual update.

    Computes ``x - x_next`` and ``y - y_next`` for the unpreconditioned
    update (gradient step on the primal, conjugate prox on the dual, both
    from the current point) and returns the combined Euclidean norm.  Zero
    exactly at saddle points for any positive step sizes.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    gx = problem.grad_f(x) + problem.K.apply_adjoint(y)
    ry = y - problem.hconj.prox(y + sigma * problem.K.apply(x), sigma)
    return float(np.sqrt(tau * tau * float(gx @ gx) + float(ry @ ry)))


def split_dual_construct(pen_op, pen_conj, a, labels):
    """Build the penalty-plus-hinge problem with a vanishing smooth part.

    The model ``min_x P(D x) + sum_i max(0, 1 - b_i * a_i' x)`` is driven
    entirely by the penalty machinery: the coupling operator stacks the
    penalty operator on top of the data matrix and the conjugate spec pairs
    the penalty conjugate with the hinge conjugate.

    Parameters
    ----------
    pen_op : LinearOperator
        Structure operator ``D`` of the penalty.
    pen_conj : ConjugateProx
        Conjugate spec of the penalty ``P``.
    a : LinearOperator or matrix
        Data matrix with one row per sample.
    labels : ndarray
        Sample labels in ``{-1, +1}``.

    Returns
    -------
    SaddleProblem
    """
    a_op = a if isinstance(a, LinearOperator) else matrix_operator(a)
    if pen_op.shape[1] != a_op.shape[1]:
        raise DimensionError(
            f"penalty columns {pen_op.shape[1]} do not match data columns {a_op.shape[1]}"
        )
    hinge = HingeConj(labels)
    if hinge.dim != a_op.shape[0]:
        raise DimensionError("one label per data row is required")
    k_op = linops.VStackOp([pen_op, a_op])
    hconj = Composite([pen_conj, hinge])
    return SaddleProblem(zero_loss(k_op.shape[1]), k_op, hconj)


def latent_group_construct(groups, a, b, radii):
    """Build the latent (duplicated-variable) group problem.

    The latent penalty picks the cheapest split of ``x`` into group-supported
    parts.  Introducing one latent block per group and an equality constraint
    tying their scatter-sum back to ``x`` turns the least-squares model into
    a saddle problem on the stacked variable ``(x, v)``:

    * the first dual block reads ``v`` and applies the blockwise norm
      penalty with the given radii,
    * the second dual block reads ``x - scatter(v)`` and enforces equality
      through a linear conjugate (the reported penalty value of that block
      is zero; constraint violation shows up in the solver residual).

    Parameters
    ----------
    groups : sequence of sequences of int
        0-based coordinate indices of each group.
    a : LinearOperator or matrix
        Design matrix of the least-squares loss on ``x``.
    b : ndarray
        Observation vector.
    radii : ndarray or float
        Blockwise penalty weights, one per group (scalars broadcast).

    Returns
    -------
    SaddleProblem
        Problem on the stacked variable of length ``p + sum of group sizes``.
    """
    a_op = a if isinstance(a, LinearOperator) else matrix_operator(a)
    loss = quadratic_loss(a_op, b)
    p = a_op.shape[1]
    member = linops.build_group_membership(groups, p)
    d_mat = sp.csr_array(linops.densify(member)) if member.kind == "dense" else member.matrix
    q = member.shape[0]
    k_mat = sp.bmat(
        [
            [sp.csr_array((q, p)), sp.eye(q)],
            [sp.eye(p), -d_mat.T],
        ],
        format="csr",
    )
    partition = GroupPartition([len(g) for g in groups])
    hconj = Composite([GroupL2Balls(partition, radii), IdentityShift(p)])

    def value(z):
        return loss.value(z[:p])

    def grad(z):
        out = np.zeros(p + q)
        out[:p] = loss.grad(z[:p])
        return out

    stacked = SmoothLoss(value, grad, loss.L_f)
    return SaddleProblem(stacked, matrix_operator(k_mat), hconj)
