"""Accelerated variants with vanishing step schedules.

The accelerated iteration extrapolates the coupling products with two
auxiliary operators ``A`` (primal side) and ``B`` (dual side) and averages
iterates with vanishing weights.  Two operator modes are supported:

* ``kappa``: ``A = -kappa * K`` and ``B = kappa * K``, matching the
  preconditioner continuum of the base iteration;
* ``chen``: ``A = -K`` and ``B = 0``, the gradient-extrapolation scheme.

Schedules come in a bounded-domain flavor (constant dual step, iterate-norm
bounds supplied) and an unbounded flavor (horizon-tied growing steps).  Both
satisfy two per-iteration inequalities that are asserted at construction.
"""

from __future__ import annotations

from dataclasses import dataclass
import time

import numpy as np

from . import saddle
from .errors import (
    ConstraintViolation,
    DimensionError,
    MissingHistory,
    UnknownKind,
)
from .fb import IterTrace, _require_finite
from .linops import ZeroOp, scaled_copy

ACCEL_TRACE_COLUMNS = [
    "k",
    "objective",
    "ergodic_objective",
    "residual",
    "mdist",
    "seconds",
    "tau_k",
    "sigma_k",
    "rho_k",
]

# Relative tolerance when asserting schedule inequalities whose sharp
# configurations are exactly tight in real arithmetic.
COND_TOL = 1e-12


@dataclass
class AccelParams:
    """Configuration of an accelerated run.

    Attributes
    ----------
    mode : str
        ``"kappa"`` or ``"chen"``.
    kappa : float
        Continuum position for the ``kappa`` mode.
    setting : str
        ``"bounded"`` (needs ``omega_x``/``omega_y``) or ``"unbounded"``
        (needs ``horizon``).
    omega_x, omega_y : float or None
        Iterate-norm bounds of the bounded setting.
    horizon : int or None
        Step horizon ``N`` of the unbounded setting; the run performs ``N``
        steps.
    q, r : float
        Splitting parameters of the schedule inequalities.
    max_iters : int or None
        Step count for bounded runs (unbounded runs take the horizon).
    record_every : int
        Trace row cadence.
    """

    mode: str = "kappa"
    kappa: float = 0.0
    setting: str = "bounded"
    omega_x: float | None = None
    omega_y: float | None = None
    horizon: int | None = None
    q: float = 0.5
    r: float = 0.25
    max_iters: int | None = None
    record_every: int = 1


def mode_factors(mode, kappa=0.0):
    """Norm factors ``(a, b, c, d)`` of the mode's auxiliary operators.

    They scale the coupling norm: ``||A|| = a ||K||``, ``||B|| = b ||K||``,
    ``||K + A|| = c ||K||``, ``||K + B|| = d ||K||``.
    """
    if mode == "kappa":
        if not -1.0 <= kappa <= 1.0:
            raise ConstraintViolation(f"kappa must lie in [-1, 1], got {kappa}")
        return abs(kappa), abs(kappa), abs(1.0 - kappa), abs(1.0 + kappa)
    if mode == "chen":
        return 1.0, 0.0, 0.0, 1.0
    raise UnknownKind(f"unknown accelerated mode {mode!r}")


def mode_operators(problem, mode, kappa=0.0):
    """Auxiliary operator pair ``(A, B)`` for a mode, sharing ``K``'s data."""
    mode_factors(mode, kappa)
    if mode == "kappa":
        return scaled_copy(problem.K, -kappa), scaled_copy(problem.K, kappa)
    return scaled_copy(problem.K, -1.0), ZeroOp(problem.K.shape)


@dataclass
class Schedule:
    """Step, relaxation, and extrapolation schedule.

    ``rho``, ``theta``, ``tau``, ``sigma``, and ``gamma`` accept scalar or
    ndarray iteration indices.  ``P`` and ``Q`` are the schedule constants
    entering the convergence bounds.
    """

    setting: str
    q: float
    r: float
    P: float
    Q: float
    factors: tuple
    l_f: float
    k_norm: float
    horizon: int | None = None
    omega_x: float | None = None
    omega_y: float | None = None

    def rho(self, k):
        k = np.asarray(k, dtype=float)
        out = 2.0 / (k + 1.0)
        return float(out) if out.ndim == 0 else out

    def theta(self, k):
        k = np.asarray(k, dtype=float)
        out = (k - 1.0) / k
        return float(out) if out.ndim == 0 else out

    def gamma(self, k):
        k = np.asarray(k, dtype=float)
        return float(k) if k.ndim == 0 else k.copy()

    def tau(self, k):
        k = np.asarray(k, dtype=float)
        if self.setting == "bounded":
            den = 2.0 * self.P * self.l_f + k * self.Q * self.k_norm * (
                self.omega_y / self.omega_x
            )
        else:
            den = 2.0 * self.P * self.l_f + self.Q * self.horizon * self.k_norm
        out = k / den
        return float(out) if out.ndim == 0 else out

    def sigma(self, k):
        k = np.asarray(k, dtype=float)
        if self.setting == "bounded":
            out = np.full_like(k, self.omega_y / (self.k_norm * self.omega_x))
        else:
            out = k / (self.horizon * self.k_norm)
        return float(out) if out.ndim == 0 else out

    def condition_margins(self, k):
        """Margins of the two schedule inequalities at index ``k``.

        Both must stay nonnegative: the primal one controls the curvature
        and primal extrapolation budget, the dual one the coupling budget.
        """
        a, b, c, d = self.factors
        tau = self.tau(k)
        sigma = self.sigma(k)
        bq = (b * b / self.q) if b > 0 else 0.0
        m1 = (
            (1.0 - self.q) / tau
            - self.l_f * self.rho(k)
            - (a * self.k_norm) ** 2 * sigma / self.r
        )
        m2 = (1.0 - self.r) / sigma - tau * (2.0 * c * d + bq) * self.k_norm**2
        return m1, m2

    def assert_conditions(self, ks):
        """Raise unless both inequalities hold (to rounding) on ``ks``."""
        ks = np.asarray(ks, dtype=float)
        m1, m2 = self.condition_margins(ks)
        a, _, _, _ = self.factors
        scale1 = (
            (1.0 - self.q) / self.tau(ks)
            + self.l_f * self.rho(ks)
            + (a * self.k_norm) ** 2 * self.sigma(ks) / self.r
        )
        scale2 = (1.0 - self.r) / self.sigma(ks) + np.abs(
            m2 - (1.0 - self.r) / self.sigma(ks)
        )
        bad1 = m1 < -COND_TOL * scale1
        bad2 = m2 < -COND_TOL * scale2
        if np.any(bad1) or np.any(bad2):
            k_bad = ks[np.argmax(bad1 | bad2)]
            raise ConstraintViolation(
                f"schedule inequalities fail at k = {k_bad:g}"
            )


def _check_qr(q, r, r_cap):
    if not 0.0 < q < 1.0:
        raise ConstraintViolation(f"q must lie in (0, 1), got {q}")
    if not 0.0 < r < r_cap:
        raise ConstraintViolation(f"r must lie in (0, {r_cap}), got {r}")


def _q_constant(factors, q, r, floor_one):
    a, b, c, d = factors
    bq = (b * b / q) if b > 0 else 0.0
    q_const = max(a * a / ((1.0 - q) * r), (2.0 * c * d + bq) / (1.0 - r))
    return max(q_const, 1.0) if floor_one else q_const


def schedule_bounded(l_f, k_norm, factors, omega_x, omega_y, q, r, check_up_to=10000):
    """Schedule for the bounded setting.

    Constant dual step ``omega_y / (||K|| omega_x)`` and a primal step
    saturating toward ``omega_x / (Q ||K|| omega_y)``.  The two schedule
    inequalities are asserted for ``k`` up to ``check_up_to`` (they hold for
    every ``k``; the check guards transcription drift).
    """
    _check_qr(q, r, 1.0)
    if omega_x <= 0 or omega_y <= 0:
        raise ConstraintViolation("iterate-norm bounds must be positive")
    if k_norm <= 0:
        raise ConstraintViolation("coupling norm must be positive")
    sched = Schedule(
        setting="bounded",
        q=q,
        r=r,
        P=1.0 / (1.0 - q),
        Q=_q_constant(factors, q, r, floor_one=False),
        factors=tuple(factors),
        l_f=l_f,
        k_norm=k_norm,
        omega_x=omega_x,
        omega_y=omega_y,
    )
    sched.assert_conditions(np.arange(1, check_up_to + 1))
    return sched


def schedule_unbounded(l_f, k_norm, factors, horizon, q, r):
    """Schedule for the unbounded setting with a fixed step horizon.

    Both steps grow linearly in ``k`` against horizon-tied denominators;
    the inequalities are asserted for ``k = 1..horizon``, the exact range a
    horizon-``N`` run uses.
    """
    _check_qr(q, r, 0.5)
    horizon = int(horizon)
    if horizon < 2:
        raise ConstraintViolation("horizon must be at least 2")
    if k_norm <= 0:
        raise ConstraintViolation("coupling norm must be positive")
    sched = Schedule(
        setting="unbounded",
        q=q,
        r=r,
        P=1.0 / (1.0 - q),
        Q=_q_constant(factors, q, r, floor_one=True),
        factors=tuple(factors),
        l_f=l_f,
        k_norm=k_norm,
        horizon=horizon,
    )
    sched.assert_conditions(np.arange(1, horizon + 1))
    return sched


def bounded_gap_bound(schedule, k):
    """Bounded-setting optimality-gap bound at iterate index ``k``.

    ``4 P omega_x^2 L_f / (k (k - 1)) + 2 omega_x omega_y (Q + 1) ||K|| / k``
    for ``k >= 2``.
    """
    k = float(k)
    if k < 2:
        raise ConstraintViolation("the bounded gap bound starts at k = 2")
    return (
        4.0 * schedule.P * schedule.omega_x**2 * schedule.l_f / (k * (k - 1.0))
        + 2.0
        * schedule.omega_x
        * schedule.omega_y
        * (schedule.Q + 1.0)
        * schedule.k_norm
        / k
    )


def tune_qr(setting, l_f, k_norm, factors, horizon, omega_x=None, omega_y=None):
    """Pick ``(q, r)`` minimizing the horizon bound on a 0.01 grid.

    Bounded runs minimize the gap bound at the horizon; unbounded runs
    minimize the perturbation-energy bound.  Ties break toward smaller
    ``q``, then smaller ``r``.
    """
    horizon = int(horizon)
    if horizon < 2:
        raise ConstraintViolation("horizon must be at least 2")
    grid = np.arange(1, 100) * 0.01
    if setting == "bounded":
        if omega_x is None or omega_y is None:
            raise ConstraintViolation("bounded tuning needs omega_x and omega_y")
        r_grid = grid
    elif setting == "unbounded":
        r_grid = grid[grid < 0.5]
    else:
        raise UnknownKind(f"unknown schedule setting {setting!r}")
    a, b, c, d = factors
    qq, rr = np.meshgrid(grid, r_grid, indexing="ij")
    bq = np.where(b > 0, b * b / qq, 0.0)
    q_const = np.maximum(a * a / ((1.0 - qq) * rr), (2.0 * c * d + bq) / (1.0 - rr))
    p_const = 1.0 / (1.0 - qq)
    if setting == "bounded":
        obj = 4.0 * p_const * omega_x**2 * l_f / (
            horizon * (horizon - 1.0)
        ) + 2.0 * omega_x * omega_y * (q_const + 1.0) * k_norm / horizon
    else:
        q_const = np.maximum(q_const, 1.0)
        energy = 2.0 + qq / (1.0 - qq) + (2.0 * rr + 1.0) / (1.0 - 2.0 * rr)
        obj = (4.0 * p_const * l_f / horizon**2 + 2.0 * q_const * k_norm / horizon) * energy
    best = obj.min()
    ties = np.argwhere(obj == best)
    # Ties resolve toward the smallest q, then the smallest r; the row-major
    # order of argwhere on the (q, r) grid delivers exactly that.
    i, j = ties[0]
    return float(grid[i]), float(r_grid[j])


@dataclass
class AccelState:
    """Iterate bundle of the accelerated recursion.

    Holds the averaged pair ``(x, y)``, the current resolvent pair
    ``(xt, yt)``, and the previous resolvent pair for extrapolation.
    """

    x: np.ndarray
    y: np.ndarray
    xt: np.ndarray
    yt: np.ndarray
    xt_prev: np.ndarray
    yt_prev: np.ndarray

    @classmethod
    def start(cls, x0, y0):
        return cls(x0.copy(), y0.copy(), x0.copy(), y0.copy(), x0.copy(), y0.copy())


def _accel_core(grad, k_fwd, k_adj, a_fwd, b_adj, prox, tau, tau_prev, sigma, rho, theta, state):
    """One accelerated update from operator callbacks.

    The stochastic variant runs this exact function with estimate-drawing
    callbacks, so a zero-variance oracle reproduces deterministic runs
    bitwise.  The dual extrapolation term ``B'(yt - yt_prev)`` is evaluated
    once and reused by the post-prox correction line.
    """
    dxt = state.xt - state.xt_prev
    dyt = state.yt - state.yt_prev
    u_bar = k_fwd(state.xt) - theta * a_fwd(dxt)
    bt_dyt = b_adj(dyt)
    v_bar = k_adj(state.yt) + theta * (
        (tau_prev / tau) * (k_adj(dyt) + bt_dyt) - bt_dyt
    )
    x_md = (1.0 - rho) * state.x + rho * state.xt
    g = grad(x_md)
    w = g + v_bar
    u_new = u_bar - tau * (k_fwd(w) + a_fwd(w))
    yt_new = prox(state.yt + sigma * u_new, sigma)
    vt_new = k_adj(yt_new) + b_adj(yt_new - state.yt) - theta * bt_dyt
    xt_new = state.xt - tau * (g + vt_new)
    x_new = (1.0 - rho) * state.x + rho * xt_new
    y_new = (1.0 - rho) * state.y + rho * yt_new
    return AccelState(x_new, y_new, xt_new, yt_new, state.xt, state.yt)


def accel_step(problem, a_op, b_op, schedule, k, state):
    """One deterministic accelerated update at iteration index ``k``."""
    return _accel_core(
        problem.grad_f,
        problem.K.apply,
        problem.K.apply_adjoint,
        a_op.apply,
        b_op.apply_adjoint,
        problem.hconj.prox,
        schedule.tau(k),
        schedule.tau(k - 1) if k > 1 else 0.0,
        schedule.sigma(k),
        schedule.rho(k),
        schedule.theta(k),
        state,
    )


@dataclass
class AccelResult:
    """Outcome of an accelerated run.

    Keeps the first resolvent pair and the final two resolvent pairs so the
    perturbation diagnostic can be evaluated afterwards.
    """

    x: np.ndarray
    y: np.ndarray
    xt: np.ndarray
    yt: np.ndarray
    xt_prev: np.ndarray
    yt_prev: np.ndarray
    xt_first: np.ndarray
    yt_first: np.ndarray
    trace: IterTrace
    iterations: int
    schedule: Schedule


def build_schedule(problem, params):
    """Construct the schedule requested by ``params`` for ``problem``."""
    factors = mode_factors(params.mode, params.kappa)
    if params.setting == "bounded":
        if params.omega_x is None or params.omega_y is None:
            raise ConstraintViolation("bounded setting needs omega_x and omega_y")
        return schedule_bounded(
            problem.L_f,
            problem.k_norm,
            factors,
            params.omega_x,
            params.omega_y,
            params.q,
            params.r,
        )
    if params.setting == "unbounded":
        if params.horizon is None:
            raise ConstraintViolation("unbounded setting needs a horizon")
        return schedule_unbounded(
            problem.L_f, problem.k_norm, factors, params.horizon, params.q, params.r
        )
    raise UnknownKind(f"unknown schedule setting {params.setting!r}")


def run_accel(problem, params, x0=None, y0=None):
    """Run the accelerated iteration.

    Bounded runs take ``params.max_iters`` steps; unbounded runs take
    ``params.horizon`` steps.  The trace's ``objective`` column tracks the
    resolvent point and ``ergodic_objective`` the averaged point carrying
    the rate guarantee.

    Returns
    -------
    AccelResult
    """
    p, l = problem.dims
    x = np.zeros(p) if x0 is None else np.asarray(x0, dtype=float).copy()
    y = np.zeros(l) if y0 is None else np.asarray(y0, dtype=float).copy()
    if x.shape != (p,) or y.shape != (l,):
        raise DimensionError("starting point does not match problem dimensions")
    schedule = build_schedule(problem, params)
    if params.setting == "bounded":
        if params.max_iters is None or params.max_iters < 0:
            raise ConstraintViolation("bounded runs need a nonnegative max_iters")
        n_steps = params.max_iters
    else:
        n_steps = params.horizon if params.max_iters is None else min(
            params.horizon, params.max_iters
        )
    a_op, b_op = mode_operators(problem, params.mode, params.kappa)
    state = AccelState.start(x, y)
    xt_first = None
    yt_first = None
    trace = IterTrace(ACCEL_TRACE_COLUMNS)
    start = time.perf_counter()
    k = 0
    for k in range(1, n_steps + 1):
        prev = state
        state = accel_step(problem, a_op, b_op, schedule, k, prev)
        _require_finite(state.xt, state.yt, k)
        if k == 1:
            xt_first = state.xt.copy()
            yt_first = state.yt.copy()
        if k % params.record_every == 0 or k == n_steps:
            dx = state.xt - prev.xt
            dy = state.yt - prev.yt
            trace.append(
                k=k,
                objective=saddle.primal_objective(problem, state.xt),
                ergodic_objective=saddle.primal_objective(problem, state.x),
                residual=float(np.sqrt(dx @ dx + dy @ dy)),
                mdist=np.nan,
                seconds=time.perf_counter() - start,
                tau_k=schedule.tau(k),
                sigma_k=schedule.sigma(k),
                rho_k=schedule.rho(k),
            )
    return AccelResult(
        x=state.x,
        y=state.y,
        xt=state.xt,
        yt=state.yt,
        xt_prev=state.xt_prev,
        yt_prev=state.yt_prev,
        xt_first=xt_first,
        yt_first=yt_first,
        trace=trace,
        iterations=k,
        schedule=schedule,
    )


@dataclass
class PerturbationDiagnostic:
    """Perturbation vector of an unbounded run and its certified envelope."""

    k: int
    v_x: np.ndarray
    v_y: np.ndarray
    v_norm: float
    v_norm_bound: float
    eps: float
    r_tilde: float


def compute_perturbation(problem, params, result, anchor):
    """Perturbation diagnostic of an unbounded accelerated run.

    The final iterate of an unbounded run solves a perturbed inclusion
    whose perturbation vector is computable from the first and last
    resolvent pairs:

    ``v = rho_k * ((xt1 - xt_new) / tau_k - B'(dy),
    (yt1 - yt_new) / sigma_k + A dx + tau_k (K + A)(K + B)' dy)``

    with ``dx = xt_new - xt_prev`` and ``dy = yt_new - yt_prev``.  The
    diagnostic also evaluates the norm envelope and the perturbation-energy
    value ``eps`` relative to the supplied anchor pair (a solution or a
    trusted approximation of one).

    Raises
    ------
    MissingHistory
        If the run result lacks the first resolvent pair.
    ConstraintViolation
        If the run is not an unbounded-setting run.
    """
    schedule = result.schedule
    if schedule.setting != "unbounded":
        raise ConstraintViolation("the perturbation diagnostic is defined for unbounded runs")
    if result.xt_first is None or result.yt_first is None:
        raise MissingHistory("run result lacks the first resolvent pair")
    k = result.iterations
    tau = schedule.tau(k)
    sigma = schedule.sigma(k)
    rho = schedule.rho(k)
    a_op, b_op = mode_operators(problem, params.mode, params.kappa)
    dx = result.xt - result.xt_prev
    dy = result.yt - result.yt_prev
    v_x = rho * ((result.xt_first - result.xt) / tau - b_op.apply_adjoint(dy))
    cross = problem.K.apply_adjoint(dy) + b_op.apply_adjoint(dy)
    v_y = rho * (
        (result.yt_first - result.yt) / sigma
        + a_op.apply(dx)
        + tau * (problem.K.apply(cross) + a_op.apply(cross))
    )
    v_norm = float(np.sqrt(v_x @ v_x + v_y @ v_y))

    tau1 = schedule.tau(1)
    sigma1 = schedule.sigma(1)
    x_hat = np.asarray(anchor[0], dtype=float)
    y_hat = np.asarray(anchor[1], dtype=float)
    ex = x_hat - result.xt_first
    ey = y_hat - result.yt_first
    r_tilde = float(np.sqrt(ex @ ex + (tau1 / sigma1) * (ey @ ey)))
    mu = np.sqrt(1.0 / (1.0 - schedule.q))
    nu = np.sqrt(2.0 * sigma1 / (tau1 * (1.0 - 2.0 * schedule.r)))
    a, b, c, d = schedule.factors
    nk = schedule.k_norm
    v_norm_bound = (
        (rho / tau) * np.linalg.norm(ex)
        + (rho / sigma) * np.linalg.norm(ey)
        + (
            (rho / tau) * (mu + (tau1 / sigma1) * nu)
            + 2.0 * rho * (mu * a * nk + nu * b * nk)
            + 2.0 * tau * rho * nu * (c * nk) * (d * nk)
        )
        * r_tilde
    )
    eps = (
        (rho / tau)
        * (
            2.0
            + schedule.q / (1.0 - schedule.q)
            + (2.0 * schedule.r + 1.0) / (1.0 - 2.0 * schedule.r)
        )
        * r_tilde**2
    )
    return PerturbationDiagnostic(
        k=k,
        v_x=v_x,
        v_y=v_y,
        v_norm=v_norm,
        v_norm_bound=float(v_norm_bound),
        eps=float(eps),
        r_tilde=r_tilde,
    )
