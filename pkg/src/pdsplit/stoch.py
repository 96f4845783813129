"""Stochastic-oracle variants of the accelerated iteration.

Every coupling product and gradient in the accelerated update may be
replaced by an unbiased estimate.  The step arithmetic is shared with the
deterministic module (the same core runs with estimate-drawing callbacks),
so a zero-variance oracle reproduces a deterministic run bitwise.

Convergence is established for the modes whose primal extrapolation
operator is exactly ``-K`` (``kappa`` mode at 1 and ``chen``); other modes
require the caller to opt in explicitly.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import time

import numpy as np

from . import saddle
from .accel import (
    ACCEL_TRACE_COLUMNS,
    AccelResult,
    AccelState,
    _accel_core,
    mode_factors,
    mode_operators,
)
from .errors import (
    ConstraintViolation,
    DimensionError,
    UnsupportedMode,
)
from .fb import IterTrace, _require_finite

STOC_TRACE_COLUMNS = ACCEL_TRACE_COLUMNS + ["seed"]

AGGREGATE_COLUMNS = ["k", "mean_objective", "median_objective", "q10", "q90"]

# Draw count and inflation applied by the built-in variance estimation.
CHI_DRAWS = 1000
CHI_INFLATION = 1.5
_CHI_SEED = 987654321

# Relative tolerance for asserting the noisy schedule inequalities.
COND_TOL = 1e-12


@dataclass
class StocParams:
    """Configuration of a stochastic accelerated run.

    The horizon ``N`` fixes the step denominators in both settings; a run
    performs ``N - 1`` steps so the final iterate carries index ``N``.

    Attributes
    ----------
    mode, kappa : str, float
        Operator mode, as in the deterministic module.
    setting : str
        ``"bounded"`` (needs ``omega_x``/``omega_y``) or ``"unbounded"``
        (needs ``r_tilde``, an anchor-radius estimate).
    q, r, s, t : float
        Splitting parameters with ``0 < q < s < 1`` and ``0 < r < t < 1``
        (``r < 1/2`` in the unbounded setting).
    chi_x, chi_y : float or None
        Noise levels of the primal and dual estimate channels; ``None``
        defers to the oracle's declared bounds (or, when those are also
        undeclared, a measurement at the starting point).
    unproven : bool
        Allow modes without a stochastic guarantee.
    """

    mode: str = "kappa"
    kappa: float = 1.0
    setting: str = "bounded"
    omega_x: float | None = None
    omega_y: float | None = None
    horizon: int | None = None
    q: float = 0.25
    r: float = 0.2
    s: float = 0.75
    t: float = 0.8
    chi_x: float | None = None
    chi_y: float | None = None
    r_tilde: float | None = None
    record_every: int = 1
    unproven: bool = False


class StochasticOracle:
    """Interface for unbiased estimate draws.

    Each method call draws a fresh estimate; the expectations must equal
    the exact products for every argument.  Implementations declare their
    noise levels through the per-channel attributes ``chi_xf`` (gradient),
    ``chi_xk`` (dual-to-primal coupling), ``chi_yk`` (primal-to-dual
    coupling), ``chi_a``, and ``chi_b``: each bounds the root mean squared
    deviation of its channel over the region the iterates can visit.
    ``None`` means undeclared, in which case the runner falls back to
    measuring at the starting point.
    """

    chi_xf: float | None = None
    chi_xk: float | None = None
    chi_yk: float | None = None
    chi_a: float | None = None
    chi_b: float | None = None

    @property
    def chi_x(self):
        """Combined primal noise level, or ``None`` if undeclared."""
        if self.chi_xf is None or self.chi_xk is None:
            return None
        return float(np.sqrt(self.chi_xf**2 + self.chi_xk**2))

    @property
    def chi_y(self):
        """Dual noise level, or ``None`` if undeclared."""
        return self.chi_yk

    def grad(self, x):
        """Estimate of the smooth-part gradient at ``x``."""
        raise NotImplementedError

    def kx(self, x):
        """Estimate of ``K x``."""
        raise NotImplementedError

    def ky(self, y):
        """Estimate of ``K' y``."""
        raise NotImplementedError

    def a_fwd(self, x):
        """Estimate of ``A x``."""
        raise NotImplementedError

    def b_adj(self, y):
        """Estimate of ``B' y``."""
        raise NotImplementedError


class MaskedGradOracle(StochasticOracle):
    """Coordinate-masked gradient oracle with exact coupling products.

    The gradient is evaluated at a masked point: each coordinate of the
    argument survives with probability ``pi`` and is scaled by ``1 / pi``,
    which makes the masked point unbiased for the argument (and the draw
    unbiased whenever the gradient is linear).  All coupling products are
    exact, so only the gradient channel carries noise, and at ``pi = 1``
    every draw is exact.

    The declared gradient noise level combines the Lipschitz modulus with
    the mask variance: the masked point deviates from ``x`` by
    ``sqrt((1 - pi) / pi) ||x||`` in root mean square, so over arguments
    with ``||x|| <= radius`` the deviation of the draw is bounded by
    ``L_f sqrt((1 - pi) / pi) radius``.

    Parameters
    ----------
    problem : SaddleProblem
    a_op, b_op : LinearOperator
        Mode operators used by the accelerated recursion.
    pi : float
        Keep probability in ``(0, 1]``.
    seed : int
        Key of the counter-based generator.
    radius : float
        Bound on the norm of gradient arguments, used only for the
        declared noise level.
    """

    def __init__(self, problem, a_op, b_op, pi, seed, radius=1.0):
        if not 0.0 < pi <= 1.0:
            raise ConstraintViolation(f"keep probability must lie in (0, 1], got {pi}")
        if radius <= 0.0:
            raise ConstraintViolation(f"declaration radius must be positive, got {radius}")
        self.problem = problem
        self.a_op = a_op
        self.b_op = b_op
        self.pi = float(pi)
        self.radius = float(radius)
        self.rng = np.random.Generator(np.random.Philox(seed))
        self.chi_xf = problem.L_f * np.sqrt((1.0 - self.pi) / self.pi) * self.radius
        self.chi_xk = 0.0
        self.chi_yk = 0.0
        self.chi_a = 0.0
        self.chi_b = 0.0

    def grad(self, x):
        p = self.problem.dims[0]
        mask = (self.rng.random(p) < self.pi).astype(float) / self.pi
        return self.problem.grad_f(mask * x)

    def kx(self, x):
        return self.problem.K.apply(x)

    def ky(self, y):
        return self.problem.K.apply_adjoint(y)

    def a_fwd(self, x):
        return self.a_op.apply(x)

    def b_adj(self, y):
        return self.b_op.apply_adjoint(y)


def oracle_sample(oracle, x, y):
    """Draw one estimate tuple ``(grad, Kx, K'y, Ax, B'y)`` at ``(x, y)``."""
    return (
        oracle.grad(x),
        oracle.kx(x),
        oracle.ky(y),
        oracle.a_fwd(x),
        oracle.b_adj(y),
    )


def masked_oracle_factory(problem, params, pi):
    """Factory of masked-gradient oracles matching a parameter set.

    The declaration radius follows the setting: the primal norm bound when
    given, otherwise the anchor-radius estimate, otherwise one.
    """
    a_op, b_op = mode_operators(problem, params.mode, params.kappa)
    radius = params.omega_x if params.omega_x is not None else params.r_tilde
    if radius is None:
        radius = 1.0

    def factory(seed):
        return MaskedGradOracle(problem, a_op, b_op, pi, seed, radius=radius)

    return factory


def estimate_chi(oracle, problem, x, y, n_draws=CHI_DRAWS, inflation=CHI_INFLATION):
    """Measure the noise levels of an oracle at a point.

    Estimates the root mean squared deviation of the gradient channel and
    of both coupling channels by ``n_draws`` draws, then inflates by
    ``inflation`` to stay on the conservative side of the schedules.  The
    primal level combines the gradient channel with the dual-to-primal
    coupling channel in quadrature.

    Returns
    -------
    dict
        ``chi_x``, ``chi_y``, and the raw per-channel values.
    """
    g = problem.grad_f(x)
    kx = problem.K.apply(x)
    ky = problem.K.apply_adjoint(y)
    acc_f = acc_kx = acc_ky = 0.0
    for _ in range(n_draws):
        df = oracle.grad(x) - g
        dkx = oracle.kx(x) - kx
        dky = oracle.ky(y) - ky
        acc_f += float(df @ df)
        acc_kx += float(dkx @ dkx)
        acc_ky += float(dky @ dky)
    chi_xf = np.sqrt(acc_f / n_draws)
    chi_xk = np.sqrt(acc_ky / n_draws)
    chi_yk = np.sqrt(acc_kx / n_draws)
    return {
        "chi_x": inflation * float(np.sqrt(chi_xf**2 + chi_xk**2)),
        "chi_y": inflation * float(chi_yk),
        "chi_xf": float(chi_xf),
        "chi_xk": float(chi_xk),
        "chi_yk": float(chi_yk),
    }


@dataclass
class StocSchedule:
    """Noisy-setting schedule with horizon-tied steps.

    Shares the relaxation and extrapolation laws of the deterministic
    schedule (``rho = 2 / (k + 1)``, ``theta = (k - 1) / k``); both steps
    grow linearly in ``k`` against constant denominators, so the
    extrapolation ratio matches ``theta`` exactly.
    """

    setting: str
    q: float
    r: float
    s: float
    t: float
    P: float
    Q: float
    factors: tuple
    l_f: float
    k_norm: float
    horizon: int
    chi_x: float
    chi_y: float
    omega_x: float | None = None
    omega_y: float | None = None
    r_tilde: float | None = None

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

    def _noise_scale(self):
        return float(
            np.sqrt(
                (2.0 - self.s) / (1.0 - self.s) * self.chi_x**2
                + (2.0 - self.t) / (1.0 - self.t) * self.chi_y**2
            )
        )

    def tau(self, k):
        k = np.asarray(k, dtype=float)
        n = float(self.horizon)
        if self.setting == "bounded":
            den = (
                2.0 * self.P * self.l_f * self.omega_x
                + self.Q * self.k_norm * self.omega_y * (n - 1.0)
                + self.chi_x * n * np.sqrt(n - 1.0)
            )
            out = self.omega_x * k / den
        else:
            den = (
                2.0 * self.P * self.l_f
                + self.Q * self.k_norm * (n - 1.0)
                + n * np.sqrt(n - 1.0) * self._noise_scale() / self.r_tilde
            )
            out = k / den
        return float(out) if out.ndim == 0 else out

    def sigma(self, k):
        k = np.asarray(k, dtype=float)
        n = float(self.horizon)
        if self.setting == "bounded":
            den = self.k_norm * self.omega_x * (n - 1.0) + self.chi_y * n * np.sqrt(
                n - 1.0
            )
            out = self.omega_y * k / den
        else:
            den = self.k_norm * (n - 1.0) + n * np.sqrt(
                n - 1.0
            ) * self._noise_scale() / self.r_tilde
            out = k / den
        return float(out) if out.ndim == 0 else out

    def condition_margins(self, k):
        """Margins of the noisy schedule inequalities at index ``k``."""
        a, b, c, d = self.factors
        tau = self.tau(k)
        sigma = self.sigma(k)
        bq = (b * b / self.q) if b > 0 else 0.0
        m1 = (
            (self.s - self.q) / tau
            - self.l_f * self.rho(k)
            - (a * self.k_norm) ** 2 * sigma / self.r
        )
        m2 = (self.t - self.r) / sigma - tau * (2.0 * c * d + bq) * self.k_norm**2
        return m1, m2

    def assert_conditions(self, ks):
        """Raise unless both inequalities hold (to rounding) on ``ks``.

        A horizon-``N`` run executes steps ``1 .. N - 1``, which is the
        range the inequalities are needed (and guaranteed) on.
        """
        ks = np.asarray(ks, dtype=float)
        m1, m2 = self.condition_margins(ks)
        a, _, _, _ = self.factors
        scale1 = (
            (self.s - self.q) / self.tau(ks)
            + self.l_f * self.rho(ks)
            + (a * self.k_norm) ** 2 * self.sigma(ks) / self.r
        )
        scale2 = (self.t - self.r) / self.sigma(ks) + np.abs(
            m2 - (self.t - self.r) / self.sigma(ks)
        )
        if np.any(m1 < -COND_TOL * scale1) or np.any(m2 < -COND_TOL * scale2):
            raise ConstraintViolation("noisy schedule inequalities fail")


def _check_qrst(q, r, s, t, r_cap=1.0):
    if not 0.0 < q < s < 1.0:
        raise ConstraintViolation(f"need 0 < q < s < 1, got q = {q}, s = {s}")
    if not 0.0 < r < t < 1.0:
        raise ConstraintViolation(f"need 0 < r < t < 1, got r = {r}, t = {t}")
    if r >= r_cap:
        raise ConstraintViolation(f"r must stay below {r_cap}, got {r}")


def _stoc_q_constant(factors, q, r, s, t, floor_one):
    a, b, _, _ = factors
    bq = (b * b / q) if b > 0 else 0.0
    q_const = max(a * a / (r * (s - q)), bq / (t - r))
    return max(q_const, 1.0) if floor_one else q_const


def schedule_stoc_bounded(
    l_f, k_norm, factors, horizon, omega_x, omega_y, q, r, s, t, chi_x, chi_y
):
    """Noisy schedule for the bounded setting.

    Both steps grow linearly against denominators holding the horizon and
    the noise levels; the inequalities are asserted on the executed range
    ``k = 1 .. horizon - 1``.
    """
    _check_qrst(q, r, s, t)
    horizon = int(horizon)
    if horizon < 2:
        raise ConstraintViolation("horizon must be at least 2")
    if omega_x is None or omega_y is None or omega_x <= 0 or omega_y <= 0:
        raise ConstraintViolation("bounded setting needs positive iterate-norm bounds")
    if chi_x < 0 or chi_y < 0:
        raise ConstraintViolation("noise levels must be nonnegative")
    sched = StocSchedule(
        setting="bounded",
        q=q,
        r=r,
        s=s,
        t=t,
        P=1.0 / (s - q),
        Q=_stoc_q_constant(factors, q, r, s, t, floor_one=False),
        factors=tuple(factors),
        l_f=l_f,
        k_norm=k_norm,
        horizon=horizon,
        chi_x=float(chi_x),
        chi_y=float(chi_y),
        omega_x=omega_x,
        omega_y=omega_y,
    )
    sched.assert_conditions(np.arange(1, horizon))
    return sched


def schedule_stoc_unbounded(l_f, k_norm, factors, horizon, q, r, s, t, chi_x, chi_y, r_tilde):
    """Noisy schedule for the unbounded setting.

    Needs an anchor-radius estimate ``r_tilde`` scaling the noise share of
    the step denominators, and ``r < 1/2``.
    """
    _check_qrst(q, r, s, t, r_cap=0.5)
    horizon = int(horizon)
    if horizon < 2:
        raise ConstraintViolation("horizon must be at least 2")
    if r_tilde is None or r_tilde <= 0:
        raise ConstraintViolation("unbounded setting needs a positive r_tilde")
    if chi_x < 0 or chi_y < 0:
        raise ConstraintViolation("noise levels must be nonnegative")
    sched = StocSchedule(
        setting="unbounded",
        q=q,
        r=r,
        s=s,
        t=t,
        P=1.0 / (s - q),
        Q=_stoc_q_constant(factors, q, r, s, t, floor_one=True),
        factors=tuple(factors),
        l_f=l_f,
        k_norm=k_norm,
        horizon=horizon,
        chi_x=float(chi_x),
        chi_y=float(chi_y),
        r_tilde=float(r_tilde),
    )
    sched.assert_conditions(np.arange(1, horizon))
    return sched


def stoc_gap_bound(schedule):
    """Expected-gap bound at the horizon iterate of a bounded noisy run."""
    if schedule.setting != "bounded":
        raise ConstraintViolation("the gap bound is stated for the bounded setting")
    n = float(schedule.horizon)
    root = np.sqrt(n - 1.0)
    return (
        8.0 * schedule.P * schedule.l_f * schedule.omega_x**2 / (n * (n - 1.0))
        + 4.0 * schedule.k_norm * schedule.omega_x * schedule.omega_y * (schedule.Q + 1.0) / n
        + (4.0 * schedule.chi_x * schedule.omega_x + 4.0 * schedule.chi_y * schedule.omega_y)
        / root
        + (2.0 - schedule.r)
        * schedule.omega_x
        * schedule.chi_x
        / (3.0 * (1.0 - schedule.r) * root)
        + (2.0 - schedule.s)
        * schedule.omega_y
        * schedule.chi_y
        / (3.0 * (1.0 - schedule.s) * root)
    )


def check_proven_mode(params):
    """Raise unless the mode carries a stochastic guarantee (or opted out).

    The guarantee needs the primal extrapolation operator to equal ``-K``:
    mode ``kappa`` at exactly 1, or mode ``chen``.
    """
    proven = params.mode == "chen" or (params.mode == "kappa" and params.kappa == 1.0)
    if not proven and not params.unproven:
        raise UnsupportedMode(
            f"mode {params.mode!r} (kappa = {params.kappa}) has no stochastic "
            "guarantee; pass unproven to run it anyway"
        )


def build_stoc_schedule(problem, params):
    """Construct the noisy schedule requested by ``params``.

    Noise levels must already be resolved (not ``None``).
    """
    factors = mode_factors(params.mode, params.kappa)
    if params.horizon is None:
        raise ConstraintViolation("stochastic runs need a horizon")
    if params.chi_x is None or params.chi_y is None:
        raise ConstraintViolation("noise levels are unresolved; run estimate_chi first")
    if params.setting == "bounded":
        return schedule_stoc_bounded(
            problem.L_f,
            problem.k_norm,
            factors,
            params.horizon,
            params.omega_x,
            params.omega_y,
            params.q,
            params.r,
            params.s,
            params.t,
            params.chi_x,
            params.chi_y,
        )
    if params.setting == "unbounded":
        return schedule_stoc_unbounded(
            problem.L_f,
            problem.k_norm,
            factors,
            params.horizon,
            params.q,
            params.r,
            params.s,
            params.t,
            params.chi_x,
            params.chi_y,
            params.r_tilde,
        )
    raise ConstraintViolation(f"unknown schedule setting {params.setting!r}")


def stoc_accel_step(problem, oracle, schedule, k, state):
    """One stochastic accelerated update at iteration index ``k``.

    Runs the deterministic step core with the oracle's estimate draws in
    place of the exact products, one draw per operator evaluation; the
    dual extrapolation draw is reused by the post-prox correction exactly
    as the deterministic step reuses its cached product.
    """
    return _accel_core(
        oracle.grad,
        oracle.kx,
        oracle.ky,
        oracle.a_fwd,
        oracle.b_adj,
        problem.hconj.prox,
        schedule.tau(k),
        schedule.tau(k - 1) if k > 1 else 0.0,
        schedule.sigma(k),
        schedule.rho(k),
        schedule.theta(k),
        state,
    )


@dataclass
class StocResult:
    """Outcome of a multi-seed stochastic run."""

    runs: list
    aggregate: IterTrace
    schedule: StocSchedule
    chi_x: float
    chi_y: float
    seeds: list


def run_stoc(problem, params, oracle_factory, seeds, x0=None, y0=None, jobs=1):
    """Run the stochastic accelerated iteration over one or more seeds.

    Each seed gets a fresh oracle from ``oracle_factory(seed)`` and runs
    ``horizon - 1`` steps under one shared schedule.  Unset noise levels
    are measured at the starting point with a dedicated estimation oracle.
    Seeds are independent given the schedule, so ``jobs > 1`` fans them out
    across worker threads; results are collected in seed order and identical
    for any job count.

    Returns
    -------
    StocResult
        Per-seed results (with ``seed``-stamped traces) plus an aggregate
        trace of the averaged-point objective across seeds: mean, median,
        and the 10/90 percent quantiles per recorded index.
    """
    check_proven_mode(params)
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ConstraintViolation("run_stoc needs at least one seed")
    p, l = problem.dims
    x_start = np.zeros(p) if x0 is None else np.asarray(x0, dtype=float).copy()
    y_start = np.zeros(l) if y0 is None else np.asarray(y0, dtype=float).copy()
    if x_start.shape != (p,) or y_start.shape != (l,):
        raise DimensionError("starting point does not match problem dimensions")

    chi_x, chi_y = params.chi_x, params.chi_y
    if chi_x is None or chi_y is None:
        probe = oracle_factory(_CHI_SEED)
        declared_x, declared_y = probe.chi_x, probe.chi_y
        if declared_x is None or declared_y is None:
            measured = estimate_chi(probe, problem, x_start, y_start)
            declared_x = measured["chi_x"] if declared_x is None else declared_x
            declared_y = measured["chi_y"] if declared_y is None else declared_y
        chi_x = declared_x if chi_x is None else chi_x
        chi_y = declared_y if chi_y is None else chi_y
    resolved = StocParams(**{**params.__dict__, "chi_x": chi_x, "chi_y": chi_y})
    schedule = build_stoc_schedule(problem, resolved)

    n_steps = resolved.horizon - 1

    def one_seed(seed):
        oracle = oracle_factory(seed)
        state = AccelState.start(x_start, y_start)
        xt_first = yt_first = None
        trace = IterTrace(STOC_TRACE_COLUMNS)
        ks = []
        objs = []
        start = time.perf_counter()
        k = 0
        for k in range(1, n_steps + 1):
            prev = state
            state = stoc_accel_step(problem, oracle, schedule, k, prev)
            _require_finite(state.xt, state.yt, k)
            if k == 1:
                xt_first = state.xt.copy()
                yt_first = state.yt.copy()
            if k % resolved.record_every == 0 or k == n_steps:
                dx = state.xt - prev.xt
                dy = state.yt - prev.yt
                erg = saddle.primal_objective(problem, state.x)
                trace.append(
                    k=k,
                    objective=saddle.primal_objective(problem, state.xt),
                    ergodic_objective=erg,
                    residual=float(np.sqrt(dx @ dx + dy @ dy)),
                    mdist=np.nan,
                    seconds=time.perf_counter() - start,
                    tau_k=schedule.tau(k),
                    sigma_k=schedule.sigma(k),
                    rho_k=schedule.rho(k),
                    seed=seed,
                )
                ks.append(k)
                objs.append(erg)
        result = AccelResult(
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
        return result, ks, objs

    if jobs > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(one_seed, seeds))
    else:
        outcomes = [one_seed(seed) for seed in seeds]
    runs = [run for run, _, _ in outcomes]
    ks_ref = outcomes[0][1]
    per_seed_obj = [objs for _, _, objs in outcomes]

    aggregate = IterTrace(AGGREGATE_COLUMNS)
    values = np.asarray(per_seed_obj)
    for i, k in enumerate(ks_ref):
        col = values[:, i]
        aggregate.append(
            k=k,
            mean_objective=float(col.mean()),
            median_objective=float(np.median(col)),
            q10=float(np.quantile(col, 0.1)),
            q90=float(np.quantile(col, 0.9)),
        )
    return StocResult(
        runs=runs,
        aggregate=aggregate,
        schedule=schedule,
        chi_x=float(chi_x),
        chi_y=float(chi_y),
        seeds=seeds,
    )
