"""Feature-sharded execution with communication accounting.

Columns of the design matrix and of the penalty operator are split into
contiguous, balanced blocks, one per worker, and every operator product is
evaluated blockwise with the partial results reduced left to right.  The
run itself stays single-process; what the sharding changes is the
*accounting*: a ledger records how many vector entries would cross worker
boundaries per iteration.

Counting rules per product:

* design matrix: partial row-space vectors are dense, so a forward gather
  and an adjoint broadcast both move ``(workers - 1) * rows`` entries;
* penalty operator: only structurally nonzero rows of the off-diagonal
  sub-blocks (dual rows owned by one worker, columns by another) move, and
  their count is the same in both directions.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fb, saddle
from .errors import ConstraintViolation, DegenerateProblem, DimensionError, TooManyWorkers
from .fb import IterTrace, TRACE_COLUMNS
from .linops import DenseOp, LinearOperator, SparseOp, densify

LEDGER_COLUMNS = ["iter", "loss_comm", "penalty_comm", "total_comm"]


class CommLedger:
    """Per-iteration record of cross-worker traffic.

    Products accumulate into pending counters; ``flush`` closes one
    iteration and appends a row with that iteration's loss-side and
    penalty-side counts plus their sum.
    """

    def __init__(self):
        self.trace = IterTrace(LEDGER_COLUMNS)
        self._loss_pending = 0
        self._penalty_pending = 0

    def add_loss(self, units):
        self._loss_pending += int(units)

    def add_penalty(self, units):
        self._penalty_pending += int(units)

    def flush(self, iteration):
        row_loss = self._loss_pending
        row_pen = self._penalty_pending
        self.trace.append(
            iter=iteration,
            loss_comm=row_loss,
            penalty_comm=row_pen,
            total_comm=row_loss + row_pen,
        )
        self._loss_pending = 0
        self._penalty_pending = 0

    def to_csv(self, path):
        self.trace.to_csv(path)

    def column(self, name):
        return self.trace.column(name)


def _balanced_offsets(total, parts):
    sizes = np.full(parts, total // parts, dtype=int)
    sizes[: total % parts] += 1
    return np.concatenate([[0], np.cumsum(sizes)])


def _as_sparse(op):
    if isinstance(op, SparseOp):
        return op.matrix
    if isinstance(op, DenseOp):
        return sp.csr_array(op.array)
    return sp.csr_array(densify(op))


@dataclass
class ShardPlan:
    """Blockwise layout of a problem across workers.

    Attributes
    ----------
    m : int
        Worker count.
    n, p, l : int
        Sample, feature, and dual-row counts.
    col_offsets : ndarray
        Feature boundaries; worker ``j`` owns ``col_offsets[j]:col_offsets[j+1]``.
    row_offsets : ndarray
        Dual-row boundaries under the same balancing rule.
    a_blocks : list
        Column blocks of the design matrix, one per worker.
    k_blocks : list
        Column blocks of the penalty operator, one per worker.
    cross_table : ndarray
        ``cross_table[i, j]`` counts structurally nonzero rows of the
        penalty sub-block with rows owned by ``i`` and columns by ``j``.
    cross_total : int
        Off-diagonal sum of ``cross_table``: entries moved per penalty
        product.
    """

    m: int
    n: int
    p: int
    l: int
    col_offsets: np.ndarray
    row_offsets: np.ndarray
    a_blocks: list
    k_blocks: list
    cross_table: np.ndarray
    cross_total: int


def partition_problem(problem, m_workers):
    """Split a least-squares problem into a contiguous balanced plan.

    Parameters
    ----------
    problem : SaddleProblem
        Must carry explicit design data (``loss_matrix`` and ``loss_rhs``).
    m_workers : int
        Number of workers; block sizes differ by at most one.

    Returns
    -------
    ShardPlan

    Raises
    ------
    TooManyWorkers
        If there are more workers than feature columns.
    DegenerateProblem
        If the problem has no explicit design data.
    """
    m = int(m_workers)
    if m < 1:
        raise ConstraintViolation("worker count must be positive")
    p, l = problem.dims
    if m > p:
        raise TooManyWorkers(f"{m} workers for {p} features")
    if problem.loss_matrix is None or problem.loss_rhs is None:
        raise DegenerateProblem("sharded runs need explicit least-squares data")
    a_mat = _as_sparse(
        problem.loss_matrix
        if isinstance(problem.loss_matrix, LinearOperator)
        else DenseOp(problem.loss_matrix)
    )
    k_mat = _as_sparse(problem.K)
    if a_mat.shape[1] != p:
        raise DimensionError("design matrix columns do not match the problem")
    n = a_mat.shape[0]
    col_offsets = _balanced_offsets(p, m)
    row_offsets = _balanced_offsets(l, m)
    a_blocks = []
    k_blocks = []
    row_owner = np.searchsorted(row_offsets, np.arange(l), side="right") - 1
    cross_table = np.zeros((m, m), dtype=int)
    for j in range(m):
        lo, hi = col_offsets[j], col_offsets[j + 1]
        a_blocks.append(sp.csr_array(a_mat[:, lo:hi]))
        kj = sp.csr_array(k_mat[:, lo:hi])
        k_blocks.append(kj)
        nz_rows = np.flatnonzero(np.diff(kj.indptr) > 0)
        for r in nz_rows:
            cross_table[row_owner[r], j] += 1
    cross_total = int(cross_table.sum() - np.trace(cross_table))
    return ShardPlan(
        m=m,
        n=n,
        p=p,
        l=l,
        col_offsets=col_offsets,
        row_offsets=row_offsets,
        a_blocks=a_blocks,
        k_blocks=k_blocks,
        cross_table=cross_table,
        cross_total=cross_total,
    )


def _split(plan, x):
    return [
        x[plan.col_offsets[j] : plan.col_offsets[j + 1]] for j in range(plan.m)
    ]


def _reduce_left_to_right(parts):
    out = np.array(parts[0], dtype=float, copy=True)
    for part in parts[1:]:
        out = out + part
    return out


def sharded_loss_matvec(plan, x, ledger=None):
    """Design-matrix product ``A x`` via blockwise partials.

    Workers contribute dense partial row-space vectors that are gathered
    and reduced left to right; ``(m - 1) * n`` entries cross boundaries.
    """
    parts = [blk @ xj for blk, xj in zip(plan.a_blocks, _split(plan, x))]
    if ledger is not None:
        ledger.add_loss((plan.m - 1) * plan.n)
    return _reduce_left_to_right(parts)


def sharded_loss_adjoint_matvec(plan, r, ledger=None):
    """Adjoint design product ``A' r``.

    The row-space vector is broadcast to every worker (``(m - 1) * n``
    entries); the per-worker outputs concatenate without further traffic.
    """
    if ledger is not None:
        ledger.add_loss((plan.m - 1) * plan.n)
    return np.concatenate([blk.T @ r for blk in plan.a_blocks])


def sharded_penalty_matvec(plan, x, ledger=None):
    """Penalty product ``K x`` via blockwise partials.

    Only structurally nonzero rows of off-diagonal sub-blocks travel, so
    the ledger grows by the plan's precomputed cross count.
    """
    parts = [blk @ xj for blk, xj in zip(plan.k_blocks, _split(plan, x))]
    if ledger is not None:
        ledger.add_penalty(plan.cross_total)
    return _reduce_left_to_right(parts)


def sharded_penalty_adjoint_matvec(plan, y, ledger=None):
    """Adjoint penalty product ``K' y``.

    Workers need the dual entries of rows meeting their columns; rows owned
    elsewhere account for exactly the same cross count as the forward
    direction.
    """
    if ledger is not None:
        ledger.add_penalty(plan.cross_total)
    return np.concatenate([blk.T @ y for blk in plan.k_blocks])


@dataclass
class ShardResult:
    """Outcome of a sharded run."""

    x: np.ndarray
    y: np.ndarray
    trace: IterTrace
    ledger: CommLedger
    iterations: int
    converged: bool
    plan: ShardPlan


class _CountingPenaltyOp(LinearOperator):
    """Penalty operator routing products through the sharded paths."""

    kind = "sharded"

    def __init__(self, plan, ledger):
        super().__init__((plan.l, plan.p))
        self.plan = plan
        self.ledger = ledger

    def apply(self, x):
        return sharded_penalty_matvec(self.plan, x, self.ledger)

    def apply_adjoint(self, y):
        return sharded_penalty_adjoint_matvec(self.plan, y, self.ledger)


def run_fb_sharded(problem, params, m_workers, x0=None, y0=None, tol=None):
    """Run the base iteration with sharded products and a traffic ledger.

    The arithmetic differs from the dense run only in summation order, so
    the trajectories agree to rounding.  Objective reporting happens on the
    gathered iterate and is not charged to the ledger.

    Returns
    -------
    ShardResult
    """
    info = fb.validate_params(problem, params)
    params = fb.resolve_params(problem, params)
    tau, sigma, rho = params.tau, params.sigma, info["rho"]
    plan = partition_problem(problem, m_workers)
    ledger = CommLedger()
    b = np.asarray(problem.loss_rhs, dtype=float)

    def grad(x):
        r = sharded_loss_matvec(plan, x, ledger) - b
        return sharded_loss_adjoint_matvec(plan, r, ledger)

    shadow_loss = saddle.SmoothLoss(problem.loss.value, grad, problem.L_f)
    shadow = saddle.SaddleProblem(
        shadow_loss, _CountingPenaltyOp(plan, ledger), problem.hconj
    )
    shadow._k_norm = problem.k_norm

    p, l = problem.dims
    x = np.zeros(p) if x0 is None else np.asarray(x0, dtype=float).copy()
    y = np.zeros(l) if y0 is None else np.asarray(y0, dtype=float).copy()
    trace = IterTrace(TRACE_COLUMNS)
    erg_x = np.zeros(p)
    erg_w = 0.0
    converged = False
    k = 0
    start = time.perf_counter()
    for k in range(1, params.max_iters + 1):
        x_t, y_t = fb.fb_step(shadow, params.kappa, tau, sigma, x, y)
        fb._require_finite(x_t, y_t, k)
        dx = x_t - x
        dy = y_t - y
        res = float(np.sqrt(dx @ dx + dy @ dy))
        x = x + rho * dx
        y = y + rho * dy
        erg_x += rho * x_t
        erg_w += rho
        ledger.flush(k)
        converged = tol is not None and res <= tol
        if k % params.record_every == 0 or k == params.max_iters or converged:
            trace.append(
                k=k,
                objective=saddle.primal_objective(problem, x),
                ergodic_objective=saddle.primal_objective(problem, erg_x / erg_w),
                residual=res,
                mdist=np.nan,
                seconds=time.perf_counter() - start,
            )
        if converged:
            break
    return ShardResult(
        x=x,
        y=y,
        trace=trace,
        ledger=ledger,
        iterations=k,
        converged=converged,
        plan=plan,
    )
