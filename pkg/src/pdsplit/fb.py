"""Relaxed preconditioned forward-backward iteration on the saddle problem.

One parameter ``kappa`` in ``[-1, 1]`` moves the preconditioner along a
continuum: ``kappa = 0`` evaluates the penalty prox at a gradient-corrected
point and leaves the metric block diagonal, while ``|kappa| = 1`` anchors
the prox fully on one side and couples the metric blocks.  All members share
the same fixed points, step-size region arithmetic, and relaxation cap.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass

import numpy as np

from . import saddle
from .errors import (
    ConstraintViolation,
    DegenerateProblem,
    DimensionError,
    MissingHistory,
    NonFiniteIterate,
)
from .linops import densify

# Largest primal-plus-dual dimension for which the metric matrix is built.
M_DENSE_LIMIT = 2000

# Fraction of the theoretical caps used by the step and relaxation recipes.
RECIPE_FACTOR = 0.9


@dataclass
class FbParams:
    """Parameters of the relaxed preconditioned iteration.

    Attributes
    ----------
    kappa : float
        Continuum position in ``[-1, 1]``.
    tau, sigma : float or None
        Primal and dual step sizes; ``None`` selects the recipe values.
    relaxation : float or str
        A constant relaxation factor, or ``"recipe"`` for 0.9 times the cap.
    max_iters : int
        Iteration budget.
    record_every : int
        Trace row cadence (the final row is always recorded).
    """

    kappa: float = 0.0
    tau: float | None = None
    sigma: float | None = None
    relaxation: float | str = "recipe"
    max_iters: int = 1000
    record_every: int = 1


class IterTrace:
    """Columnar iteration trace with CSV round-tripping.

    Values are written with 17 significant digits so that reloading a trace
    reproduces the recorded doubles exactly.
    """

    def __init__(self, columns):
        self.columns = list(columns)
        self._data = {c: [] for c in self.columns}

    def append(self, **values):
        if set(values) != set(self.columns):
            raise DimensionError(
                f"trace row keys {sorted(values)} do not match columns {sorted(self.columns)}"
            )
        for c in self.columns:
            self._data[c].append(float(values[c]))

    def __len__(self):
        return len(self._data[self.columns[0]]) if self.columns else 0

    def column(self, name):
        return np.asarray(self._data[name], dtype=float)

    def to_csv(self, path):
        """Write the trace atomically (temp file plus rename)."""
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="ascii") as fh:
            fh.write(",".join(self.columns) + "\n")
            for i in range(len(self)):
                fh.write(
                    ",".join(f"{self._data[c][i]:.17g}" for c in self.columns) + "\n"
                )
        os.replace(tmp, path)

    @classmethod
    def from_csv(cls, path):
        with open(path, "r", encoding="ascii") as fh:
            header = fh.readline().strip()
            if not header:
                raise DimensionError(f"trace file {path} has no header")
            trace = cls(header.split(","))
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                vals = line.split(",")
                trace.append(**dict(zip(trace.columns, map(float, vals))))
        return trace


TRACE_COLUMNS = ["k", "objective", "ergodic_objective", "residual", "mdist", "seconds"]


@dataclass
class FbResult:
    """Outcome of a forward-backward run."""

    x: np.ndarray
    y: np.ndarray
    x_tilde: np.ndarray
    y_tilde: np.ndarray
    trace: IterTrace
    iterations: int
    converged: bool
    rho: float
    delta: float
    iterates: list | None = None


def convergence_region(l_f, k_norm, kappa, tau, sigma):
    """Step-size region test with slack diagnostics.

    The pair ``(tau, sigma)`` is admissible for continuum position ``kappa``
    when the curvature margin ``1/tau - l_f/2`` is positive and the coupling
    product ``(1/tau - l_f/2) * (1/sigma - tau * k_norm^2)`` exceeds
    ``(tau * l_f / 2) * kappa^2 * k_norm^2``.  Larger ``|kappa|`` only
    shrinks the region.

    Returns
    -------
    (bool, dict)
        Validity flag and a dict with absolute margins ``curvature`` and
        ``coupling`` plus scale-free ``rel_curvature`` and ``rel_coupling``
        entries for interior tests.
    """
    if tau <= 0 or sigma <= 0:
        raise ConstraintViolation("step sizes must be positive")
    inv_tau = 1.0 / tau
    inv_sigma = 1.0 / sigma
    m_curv = inv_tau - l_f / 2.0
    lhs = m_curv * (inv_sigma - tau * k_norm**2)
    rhs = (tau * l_f / 2.0) * (kappa * k_norm) ** 2
    m_couple = lhs - rhs
    scale_curv = inv_tau + l_f / 2.0
    scale_couple = abs(m_curv) * (inv_sigma + tau * k_norm**2) + rhs + 1e-300
    margins = {
        "curvature": m_curv,
        "coupling": m_couple,
        "rel_curvature": m_curv / scale_curv,
        "rel_coupling": m_couple / scale_couple,
    }
    valid = m_curv > 0 and m_couple > 0 and tau * sigma * k_norm**2 < 1.0
    return valid, margins


def relaxation_cap(l_f, k_norm, kappa, tau, sigma):
    """Upper relaxation bound for admissible parameters.

    ``delta = 2 - (tau * l_f / 2) * (1 - (1 - kappa^2) * s) / (1 - s)`` with
    ``s = tau * sigma * k_norm^2``; the parameters are admissible exactly
    when the bound exceeds 1.  Returns ``-inf`` when ``s >= 1``.
    """
    s = tau * sigma * k_norm**2
    if s >= 1.0:
        return -np.inf
    return 2.0 - (tau * l_f / 2.0) * (1.0 - (1.0 - kappa**2) * s) / (1.0 - s)


def default_step_sizes(problem, kappa):
    """Recipe step sizes saturating the region at 90 percent.

    The primal step takes 90 percent of its curvature cap ``2 / L_f`` (or
    ``1 / ||K||`` for a vanishing smooth part) and the dual step takes 90
    percent of the largest admissible value at that primal step,

    ``sigma_max = (1 - tau L_f / 2) / ((1 - (1 - kappa^2) tau L_f / 2)
    * tau * ||K||^2)``.

    Returns
    -------
    (float, float)
        ``(tau, sigma)`` passing :func:`validate_params`.
    """
    l_f = problem.L_f
    k_norm = problem.k_norm
    if k_norm <= 0:
        raise DegenerateProblem("coupling operator has zero norm")
    if l_f > 0:
        tau = RECIPE_FACTOR * 2.0 / l_f
    else:
        tau = 1.0 / k_norm
    half = tau * l_f / 2.0
    sigma_max = (1.0 - half) / ((1.0 - (1.0 - kappa**2) * half) * tau * k_norm**2)
    return tau, RECIPE_FACTOR * sigma_max


def resolve_params(problem, params):
    """Fill recipe step sizes, returning a concrete ``FbParams`` copy."""
    tau, sigma = params.tau, params.sigma
    if tau is None or sigma is None:
        dtau, dsigma = default_step_sizes(problem, params.kappa)
        tau = dtau if tau is None else tau
        sigma = dsigma if sigma is None else sigma
    return FbParams(
        kappa=params.kappa,
        tau=tau,
        sigma=sigma,
        relaxation=params.relaxation,
        max_iters=params.max_iters,
        record_every=params.record_every,
    )


def validate_params(problem, params):
    """Check a parameter set against the convergence region.

    Returns
    -------
    dict
        Resolved ``tau``, ``sigma``, ``rho`` and the cap ``delta``.

    Raises
    ------
    ConstraintViolation
        If ``kappa`` leaves ``[-1, 1]``, the step sizes leave the region, or
        a constant relaxation factor reaches the cap.
    """
    params = resolve_params(problem, params)
    if not -1.0 <= params.kappa <= 1.0:
        raise ConstraintViolation(f"kappa must lie in [-1, 1], got {params.kappa}")
    if params.max_iters < 0 or params.record_every < 1:
        raise ConstraintViolation("iteration budget must be nonnegative and "
                                  "the recording cadence positive")
    valid, margins = convergence_region(
        problem.L_f, problem.k_norm, params.kappa, params.tau, params.sigma
    )
    if not valid:
        raise ConstraintViolation(
            "step sizes leave the convergence region "
            f"(curvature margin {margins['curvature']:.3g}, "
            f"coupling margin {margins['coupling']:.3g})"
        )
    delta = relaxation_cap(
        problem.L_f, problem.k_norm, params.kappa, params.tau, params.sigma
    )
    if params.relaxation == "recipe":
        rho = RECIPE_FACTOR * delta
    else:
        rho = float(params.relaxation)
        if not 0.0 < rho < delta:
            raise ConstraintViolation(
                f"relaxation {rho} outside (0, {delta:.6g})"
            )
    return {
        "tau": params.tau,
        "sigma": params.sigma,
        "rho": rho,
        "delta": delta,
        "margins": margins,
    }


def fb_step(problem, kappa, tau, sigma, x, y):
    """One resolvent evaluation of the preconditioned iteration.

    Evaluates the gradient at ``x``, forms the prox anchor
    ``w = x + tau * (kappa - 1) * (grad + K' y)``, updates the dual through
    the conjugate prox at ``y + sigma * K w``, and completes the primal as
    ``x - tau * (grad - kappa * K' y + (1 + kappa) * K' y_new)``.

    Returns
    -------
    (ndarray, ndarray)
        The unrelaxed output pair.
    """
    g = problem.grad_f(x)
    kty = problem.K.apply_adjoint(y)
    w = x + (tau * (kappa - 1.0)) * (g + kty)
    y_new = problem.hconj.prox(y + sigma * problem.K.apply(w), sigma)
    x_new = x - tau * (
        g - kappa * kty + (1.0 + kappa) * problem.K.apply_adjoint(y_new)
    )
    return x_new, y_new


def build_m_matrix(problem, kappa, tau, sigma):
    """Dense metric matrix of the preconditioned iteration.

    Blocks: ``[[I/tau, C'], [C, I/sigma + tau * (C C' - K K')]]`` with
    ``C = kappa * K``.  Only available while the stacked dimension stays at
    or below ``M_DENSE_LIMIT``.
    """
    p, l = problem.dims
    if p + l > M_DENSE_LIMIT:
        raise DimensionError(
            f"metric matrix needs p + l <= {M_DENSE_LIMIT}, got {p + l}"
        )
    k_mat = densify(problem.K)
    c_mat = kappa * k_mat
    kkt = k_mat @ k_mat.T
    top = np.hstack([np.eye(p) / tau, c_mat.T])
    bottom = np.hstack(
        [c_mat, np.eye(l) / sigma + tau * (kappa**2 * kkt - kkt)]
    )
    return np.vstack([top, bottom])


def m_norm(m, d):
    """Metric norm ``sqrt(d' M d)`` clipped against rounding."""
    return float(np.sqrt(max(float(d @ (m @ d)), 0.0)))


def _require_finite(x, y, k):
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NonFiniteIterate(f"iterate left the finite range at iteration {k}")


def run_fb(
    problem,
    params,
    x0=None,
    y0=None,
    tol=None,
    validate=True,
    keep_iterates=False,
    record_mdist="auto",
):
    """Run the relaxed preconditioned iteration.

    Parameters
    ----------
    problem : SaddleProblem
    params : FbParams
    x0, y0 : ndarray, optional
        Starting points (zeros by default).
    tol : float, optional
        Stop once the unrelaxed step residual falls at or below this value.
    validate : bool
        Check the region before running.  Disabled by region scans, which
        probe inadmissible parameter pairs on purpose; in that case a
        numeric ``relaxation`` is used as given (default 1).
    keep_iterates : bool
        Keep every relaxed iterate pair (including the start) in memory.
    record_mdist : bool or "auto"
        Record the metric displacement per row; ``"auto"`` enables it while
        the stacked dimension allows the dense metric.

    Returns
    -------
    FbResult
    """
    p, l = problem.dims
    x = np.zeros(p) if x0 is None else np.asarray(x0, dtype=float).copy()
    y = np.zeros(l) if y0 is None else np.asarray(y0, dtype=float).copy()
    if x.shape != (p,) or y.shape != (l,):
        raise DimensionError("starting point does not match problem dimensions")

    params = resolve_params(problem, params)
    if validate:
        info = validate_params(problem, params)
        rho, delta = info["rho"], info["delta"]
    else:
        delta = relaxation_cap(
            problem.L_f, problem.k_norm, params.kappa, params.tau, params.sigma
        )
        rho = params.relaxation if isinstance(params.relaxation, float) else 1.0

    if record_mdist == "auto":
        record_mdist = p + l <= M_DENSE_LIMIT
    metric = (
        build_m_matrix(problem, params.kappa, params.tau, params.sigma)
        if record_mdist
        else None
    )

    trace = IterTrace(TRACE_COLUMNS)
    iterates = [(x.copy(), y.copy())] if keep_iterates else None
    erg_x = np.zeros(p)
    erg_w = 0.0
    x_t, y_t = x, y
    converged = False
    k = 0
    start = time.perf_counter()
    for k in range(1, params.max_iters + 1):
        x_t, y_t = fb_step(problem, params.kappa, params.tau, params.sigma, x, y)
        _require_finite(x_t, y_t, k)
        dx = x_t - x
        dy = y_t - y
        res = float(np.sqrt(dx @ dx + dy @ dy))
        mdist = m_norm(metric, np.concatenate([dx, dy])) if metric is not None else np.nan
        x = x + rho * dx
        y = y + rho * dy
        erg_x += rho * x_t
        erg_w += rho
        if keep_iterates:
            iterates.append((x.copy(), y.copy()))
        converged = tol is not None and res <= tol
        if k % params.record_every == 0 or k == params.max_iters or converged:
            trace.append(
                k=k,
                objective=saddle.primal_objective(problem, x),
                ergodic_objective=saddle.primal_objective(problem, erg_x / erg_w),
                residual=res,
                mdist=mdist,
                seconds=time.perf_counter() - start,
            )
        if converged:
            break

    return FbResult(
        x=x,
        y=y,
        x_tilde=x_t,
        y_tilde=y_t,
        trace=trace,
        iterations=k,
        converged=converged,
        rho=rho,
        delta=delta,
        iterates=iterates,
    )


def fejer_check(problem, params, iterates, z_star, slack_factor=1e-10):
    """Check monotone decrease of the metric distance to a fixed point.

    Parameters
    ----------
    problem : SaddleProblem
    params : FbParams
        The parameters the iterates were produced with.
    iterates : sequence of (ndarray, ndarray)
        Relaxed iterate pairs, the starting point first.
    z_star : (ndarray, ndarray)
        Fixed-point pair against which distances are measured.
    slack_factor : float
        Allowed increase is ``slack_factor * (1 + initial distance)``.

    Returns
    -------
    dict
        ``ok`` flag, ``max_increase``, ``slack``, the distance array, and
        ``first_violation``: the index (into ``iterates``) of the first
        iterate whose distance exceeds its predecessor's by more than the
        slack, or ``None`` when the sequence is monotone.

    Raises
    ------
    MissingHistory
        If fewer than two iterates are supplied.
    """
    if iterates is None or len(iterates) < 2:
        raise MissingHistory("fejer_check needs at least two recorded iterates")
    params = resolve_params(problem, params)
    metric = build_m_matrix(problem, params.kappa, params.tau, params.sigma)
    zs = np.concatenate([np.asarray(z_star[0]), np.asarray(z_star[1])])
    dist = np.array(
        [m_norm(metric, np.concatenate([xi, yi]) - zs) for xi, yi in iterates]
    )
    slack = slack_factor * (1.0 + dist[0])
    increases = np.diff(dist)
    max_increase = float(increases.max()) if increases.size else 0.0
    offending = np.nonzero(increases > slack)[0]
    return {
        "ok": max_increase <= slack,
        "max_increase": max_increase,
        "slack": slack,
        "distances": dist,
        "first_violation": int(offending[0]) + 1 if offending.size else None,
    }


def fbf_default_step(problem, margin=0.99):
    """Step size for the forward-backward-forward benchmark.

    The forward map of the saddle operator is Lipschitz with constant
    ``L_f + ||K||``, so any step below the reciprocal works; this returns
    ``margin`` times the cap.
    """
    return margin / (problem.L_f + problem.k_norm)


def fbf_step(problem, tau, x, y, x_prev, y_prev, alpha1=0.0, alpha2=0.0):
    """One inertial forward-backward-forward update.

    A tentative pair moves along the forward map with inertia ``alpha1``,
    then both blocks are corrected with the re-evaluated coupling and
    inertia ``alpha2``.  With zero inertia this is the classical
    two-forward-evaluation scheme; the dual prox uses the same step as the
    primal.

    Returns
    -------
    (ndarray, ndarray)
        The corrected iterate pair.
    """
    g = problem.grad_f(x)
    x_mid = x - tau * (g + problem.K.apply_adjoint(y)) + alpha1 * (x - x_prev)
    y_mid = problem.hconj.prox(
        y + tau * problem.K.apply(x) + alpha1 * (y - y_prev), tau
    )
    y_new = y_mid + tau * problem.K.apply(x_mid - x) + alpha2 * (y - y_prev)
    x_new = x_mid - tau * problem.K.apply_adjoint(y_mid - y) + alpha2 * (x - x_prev)
    return x_new, y_new


def run_fbf(
    problem,
    tau=None,
    alpha1=0.0,
    alpha2=0.0,
    max_iters=1000,
    x0=None,
    y0=None,
    tol=None,
    record_every=1,
):
    """Run the forward-backward-forward benchmark iteration.

    Returns an :class:`FbResult`; the metric-displacement column is not
    defined for this scheme and stays ``nan``.
    """
    p, l = problem.dims
    x = np.zeros(p) if x0 is None else np.asarray(x0, dtype=float).copy()
    y = np.zeros(l) if y0 is None else np.asarray(y0, dtype=float).copy()
    if tau is None:
        tau = fbf_default_step(problem)
    if tau <= 0 or tau * (problem.L_f + problem.k_norm) >= 1.0:
        raise ConstraintViolation(
            "forward-backward-forward step must satisfy tau * (L_f + ||K||) < 1"
        )
    x_prev, y_prev = x.copy(), y.copy()
    trace = IterTrace(TRACE_COLUMNS)
    erg_x = np.zeros(p)
    converged = False
    k = 0
    start = time.perf_counter()
    for k in range(1, max_iters + 1):
        x_new, y_new = fbf_step(problem, tau, x, y, x_prev, y_prev, alpha1, alpha2)
        _require_finite(x_new, y_new, k)
        res = float(
            np.sqrt(np.sum((x_new - x) ** 2) + np.sum((y_new - y) ** 2))
        )
        x_prev, y_prev = x, y
        x, y = x_new, y_new
        erg_x += x
        converged = tol is not None and res <= tol
        if k % record_every == 0 or k == max_iters or converged:
            trace.append(
                k=k,
                objective=saddle.primal_objective(problem, x),
                ergodic_objective=saddle.primal_objective(problem, erg_x / k),
                residual=res,
                mdist=np.nan,
                seconds=time.perf_counter() - start,
            )
        if converged:
            break
    return FbResult(
        x=x,
        y=y,
        x_tilde=x,
        y_tilde=y,
        trace=trace,
        iterations=k,
        converged=converged,
        rho=1.0,
        delta=np.nan,
        iterates=None,
    )
