"""Synthetic problem generators, reference solutions, and rate diagnostics.

Three seeded generator families produce least-squares instances: overlapping
group lasso (chained groups sharing a fixed ten-coordinate overlap),
graph-guided fused lasso (differences over a clustered gene-network graph),
and the latent variant of the group problem built on the same data.  A plain
lasso generator covers tiny smoke problems.  Generated problems round-trip
through a bundle directory of text artifacts, high-accuracy solutions come
from a warm-started bounded accelerated run with a plain polishing phase, and
convergence-rate slopes are fit on the final decade of a trace.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, fields

import numpy as np

from . import accel, fb, linops, saddle
from .errors import (
    ConfigError,
    ConstraintViolation,
    InsufficientData,
    InsufficientInactives,
    ResidualTooLarge,
    UnknownKind,
)
from .linops import DenseOp, IdentityOp, matrix_operator
from .prox import BoxClip, GroupL2Balls, GroupPartition

# Number of coordinates shared by consecutive groups of the chained design.
OVERLAP = 10

# Correlation between a hub variable and each of its satellite variables in
# the clustered network design.
HUB_CORRELATION = 0.7

GENERATOR_KINDS = (
    "overlapping-group-lasso",
    "graph-guided-fused-lasso",
    "latent-group-lasso",
    "lasso",
)

BUNDLE_META = "meta.txt"
BUNDLE_DESIGN = "design.txt"
BUNDLE_RESPONSE = "response.txt"
BUNDLE_COUPLING = "coupling.txt"
BUNDLE_SIGNAL = "signal.txt"

_INT_META_KEYS = {
    "seed",
    "n_samples",
    "n_groups",
    "group_size",
    "subnet_size",
    "n_subnets",
    "n_active",
    "dim",
    "primal_dim",
    "dual_dim",
}
_FLOAT_META_KEYS = {"lam", "noise_sd"}


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of one synthetic problem instance.

    Attributes
    ----------
    kind : str
        One of ``GENERATOR_KINDS``.
    seed : int
        Counter-based generator seed; the same spec and seed reproduce the
        problem bit for bit on any platform.
    n_samples : int
        Number of observation rows.
    n_groups, group_size : int
        Group count and size of the chained-group designs (each group shares
        ``OVERLAP`` coordinates with its successor).
    subnet_size, n_subnets, n_active : int
        Cluster size, cluster count, and number of signal-carrying clusters
        of the network design.
    dim : int
        Coordinate count of the plain lasso design.
    lam : float or None
        Penalty weight; ``None`` selects the kind's default rule
        (``n_groups / 100`` for the group designs, 1 otherwise).
    noise_sd : float or None
        Observation noise level; ``None`` selects the kind's default
        (100 for the network design, 1 otherwise).
    """

    kind: str
    seed: int = 0
    n_samples: int = 200
    n_groups: int = 10
    group_size: int = 20
    subnet_size: int = 5
    n_subnets: int = 40
    n_active: int = 4
    dim: int = 20
    lam: float | None = None
    noise_sd: float | None = None

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise UnknownKind(f"unknown generator kind {self.kind!r}")
        if self.seed < 0:
            raise ConstraintViolation("seed must be nonnegative")
        if self.n_samples < 1:
            raise ConstraintViolation("n_samples must be positive")
        if self.kind in ("overlapping-group-lasso", "latent-group-lasso"):
            if self.n_groups < 1:
                raise ConstraintViolation("n_groups must be positive")
            if self.group_size <= OVERLAP:
                raise ConstraintViolation(
                    f"group_size must exceed the overlap {OVERLAP}"
                )
        elif self.kind == "graph-guided-fused-lasso":
            if self.subnet_size < 1 or self.n_subnets < 1:
                raise ConstraintViolation("cluster counts must be positive")
            if not 0 <= self.n_active <= self.n_subnets:
                raise ConstraintViolation(
                    "n_active must lie between 0 and n_subnets"
                )
        elif self.dim < 1:
            raise ConstraintViolation("dim must be positive")
        if self.lam is not None and self.lam < 0:
            raise ConstraintViolation("lam must be nonnegative")
        if self.noise_sd is not None and self.noise_sd < 0:
            raise ConstraintViolation("noise_sd must be nonnegative")

    @property
    def primal_dim(self):
        """Coordinate count of the generated design, by closed form."""
        if self.kind in ("overlapping-group-lasso", "latent-group-lasso"):
            return self.n_groups * (self.group_size - OVERLAP) + OVERLAP
        if self.kind == "graph-guided-fused-lasso":
            return self.n_subnets * self.subnet_size
        return self.dim

    @property
    def penalty_weight(self):
        """Resolved penalty weight, applying the kind's default rule."""
        if self.lam is not None:
            return float(self.lam)
        if self.kind in ("overlapping-group-lasso", "latent-group-lasso"):
            return self.n_groups / 100.0
        return 1.0

    @property
    def noise_scale(self):
        """Resolved observation-noise level."""
        if self.noise_sd is not None:
            return float(self.noise_sd)
        return 100.0 if self.kind == "graph-guided-fused-lasso" else 1.0


@dataclass
class GeneratedProblem:
    """A generated instance with its raw data and ground truth."""

    spec: SyntheticSpec
    problem: saddle.SaddleProblem
    design: np.ndarray
    response: np.ndarray
    signal: np.ndarray
    meta: dict


@dataclass
class ReferenceSolution:
    """High-accuracy solution pair with its certificate."""

    x: np.ndarray
    y: np.ndarray
    objective: float
    method: str
    iterations: int
    residual_rel: float
    best_effort: bool


@dataclass
class RateEstimate:
    """Fitted log-log convergence slope over a trace window."""

    slope: float
    stderr: float
    n_points: int


def _rng(seed):
    return np.random.Generator(np.random.Philox(int(seed)))


def _decaying_signal(p):
    """Alternating-sign signal with a slow exponential decay."""
    j = np.arange(p)
    return (-1.0) ** (j + 1) * np.exp(-j / 100.0)


def overlapping_groups(n_groups, group_size):
    """Chained index groups, each sharing ``OVERLAP`` coordinates.

    Group ``j`` covers ``group_size`` consecutive coordinates starting at
    ``j * (group_size - OVERLAP)``; the total coordinate count is
    ``n_groups * (group_size - OVERLAP) + OVERLAP``.
    """
    step = group_size - OVERLAP
    return [np.arange(j * step, j * step + group_size) for j in range(n_groups)]


def _chained_group_data(spec):
    """Draw the design, response, and ground truth of the group designs.

    Draw order: the full design matrix first, then the observation noise.
    """
    p = spec.primal_dim
    rng = _rng(spec.seed)
    a = rng.standard_normal((spec.n_samples, p))
    x_true = _decaying_signal(p)
    b = a @ x_true + spec.noise_scale * rng.standard_normal(spec.n_samples)
    groups = overlapping_groups(spec.n_groups, spec.group_size)
    radii = spec.penalty_weight * np.sqrt([len(g) for g in groups])
    return a, b, x_true, groups, radii


def _base_meta(spec, problem):
    meta = {
        "kind": spec.kind,
        "seed": spec.seed,
        "n_samples": spec.n_samples,
        "lam": spec.penalty_weight,
        "noise_sd": spec.noise_scale,
        "primal_dim": problem.dims[0],
        "dual_dim": problem.dims[1],
    }
    if spec.kind in ("overlapping-group-lasso", "latent-group-lasso"):
        meta["n_groups"] = spec.n_groups
        meta["group_size"] = spec.group_size
    elif spec.kind == "graph-guided-fused-lasso":
        meta["subnet_size"] = spec.subnet_size
        meta["n_subnets"] = spec.n_subnets
        meta["n_active"] = spec.n_active
    else:
        meta["dim"] = spec.dim
    return meta


def gen_overlapping_group_lasso(spec):
    """Least-squares problem with an overlapping group penalty.

    The penalty is a weighted sum of group Euclidean norms with weights
    ``lam * sqrt(group size)``; the coupling operator stacks the group
    selectors so every group reads its own copy of the shared overlap.

    Returns
    -------
    GeneratedProblem
    """
    a, b, x_true, groups, radii = _chained_group_data(spec)
    k_op = linops.build_group_membership(groups, spec.primal_dim)
    partition = GroupPartition([len(g) for g in groups])
    hconj = GroupL2Balls(partition, radii)
    problem = saddle.SaddleProblem(
        saddle.quadratic_loss(DenseOp(a), b),
        k_op,
        hconj,
        loss_matrix=a,
        loss_rhs=b,
    )
    return GeneratedProblem(spec, problem, a, b, x_true, _base_meta(spec, problem))


def gen_latent_group_lasso(spec):
    """Latent-variable variant of the overlapping group problem.

    Uses the same seeded data as :func:`gen_overlapping_group_lasso` and the
    duplicated-variable construction, so the primal variable stacks ``x``
    with one latent block per group.
    """
    a, b, x_true, groups, radii = _chained_group_data(spec)
    problem = saddle.latent_group_construct(groups, DenseOp(a), b, radii)
    return GeneratedProblem(spec, problem, a, b, x_true, _base_meta(spec, problem))


def gen_graph_guided_fused_lasso(spec):
    """Least-squares problem with differences over a clustered network.

    The design holds ``n_subnets`` clusters of ``subnet_size`` variables: one
    hub drawn standard normal and satellites correlated ``HUB_CORRELATION``
    with it (conditionally independent given the hub).  The ground truth is a
    signed staircase over the first ``n_active`` clusters; the difference
    graph joins every pair inside a cluster and links each signal-carrying
    variable to ``n_subnets - 1`` distinct silent variables.

    Draw order: hub columns, satellite noise, observation noise, then the
    cross-link targets for each signal variable in coordinate order.

    Raises
    ------
    InsufficientInactives
        If fewer than ``n_subnets - 1`` silent variables exist while
        cross-links are required.
    """
    t_size = spec.subnet_size
    j_count = spec.n_subnets
    j_active = spec.n_active
    n = spec.n_samples
    p = spec.primal_dim
    rng = _rng(spec.seed)

    hub = rng.standard_normal((n, j_count))
    satellite = rng.standard_normal((n, j_count, t_size - 1))
    a = np.empty((n, p))
    blocks = a.reshape(n, j_count, t_size)
    blocks[:, :, 0] = hub
    if t_size > 1:
        blocks[:, :, 1:] = (
            HUB_CORRELATION * hub[:, :, None]
            + math.sqrt(1.0 - HUB_CORRELATION**2) * satellite
        )

    levels = np.zeros(j_count)
    j_idx = np.arange(1, j_active + 1)
    levels[:j_active] = (-1.0) ** (j_idx + 1) * ((j_idx + 1) // 2)
    x_true = np.repeat(levels, t_size)
    b = a @ x_true + spec.noise_scale * rng.standard_normal(n)

    edges = []
    for j in range(j_count):
        base = j * t_size
        for u in range(t_size):
            for v in range(u + 1, t_size):
                edges.append((base + u, base + v))
    n_cross = j_count - 1
    active_count = j_active * t_size
    if j_active > 0 and n_cross > 0:
        silent = np.arange(active_count, p)
        if silent.size < n_cross:
            raise InsufficientInactives(
                f"need {n_cross} distinct silent targets, only {silent.size} exist"
            )
        for v in range(active_count):
            for w in rng.choice(silent, size=n_cross, replace=False):
                edges.append((v, int(w)))

    k_op = linops.build_graph_difference(edges, p)
    hconj = BoxClip(spec.penalty_weight, len(edges))
    problem = saddle.SaddleProblem(
        saddle.quadratic_loss(DenseOp(a), b),
        k_op,
        hconj,
        loss_matrix=a,
        loss_rhs=b,
    )
    meta = _base_meta(spec, problem)
    meta["n_edges"] = len(edges)
    return GeneratedProblem(spec, problem, a, b, x_true, meta)


def gen_lasso(spec):
    """Plain lasso with an identity coupling, for tiny smoke problems."""
    p = spec.primal_dim
    rng = _rng(spec.seed)
    a = rng.standard_normal((spec.n_samples, p))
    x_true = _decaying_signal(p)
    b = a @ x_true + spec.noise_scale * rng.standard_normal(spec.n_samples)
    problem = saddle.SaddleProblem(
        saddle.quadratic_loss(DenseOp(a), b),
        IdentityOp(p),
        BoxClip(spec.penalty_weight, p),
        loss_matrix=a,
        loss_rhs=b,
    )
    return GeneratedProblem(spec, problem, a, b, x_true, _base_meta(spec, problem))


_GENERATORS = {
    "overlapping-group-lasso": gen_overlapping_group_lasso,
    "graph-guided-fused-lasso": gen_graph_guided_fused_lasso,
    "latent-group-lasso": gen_latent_group_lasso,
    "lasso": gen_lasso,
}


def generate(spec):
    """Dispatch to the generator named by ``spec.kind``."""
    return _GENERATORS[spec.kind](spec)


def save_bundle(path, generated):
    """Write a generated problem to a bundle directory.

    The bundle holds the metadata as flat ``key=value`` text, the design and
    coupling matrices in triplet format, and the response and ground-truth
    vectors as one value per line.
    """
    os.makedirs(path, exist_ok=True)
    tmp = os.path.join(path, BUNDLE_META + ".tmp")
    with open(tmp, "w", encoding="ascii") as fh:
        for key, value in generated.meta.items():
            fh.write(f"{key}={value}\n")
    os.replace(tmp, os.path.join(path, BUNDLE_META))
    linops.write_triplets(os.path.join(path, BUNDLE_DESIGN), generated.design)
    linops.write_vector(os.path.join(path, BUNDLE_RESPONSE), generated.response)
    linops.write_triplets(os.path.join(path, BUNDLE_COUPLING), generated.problem.K)
    linops.write_vector(os.path.join(path, BUNDLE_SIGNAL), generated.signal)


def _parse_meta(path):
    meta = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key in _INT_META_KEYS:
                meta[key] = int(value)
            elif key in _FLOAT_META_KEYS:
                meta[key] = float(value)
            else:
                meta[key] = value
    return meta


def load_bundle(path):
    """Read a bundle directory back into a :class:`GeneratedProblem`.

    The stored matrices are authoritative: the coupling operator is rebuilt
    from its triplet file (the latent construction, whose operator is a
    deterministic function of the group layout, is reassembled instead).
    """
    meta = _parse_meta(os.path.join(path, BUNDLE_META))
    if "kind" not in meta:
        raise ConfigError(f"bundle {path} lacks a kind entry")
    spec_fields = {f.name for f in fields(SyntheticSpec)}
    spec = SyntheticSpec(**{k: v for k, v in meta.items() if k in spec_fields})
    design = linops.read_triplets(os.path.join(path, BUNDLE_DESIGN)).toarray()
    response = linops.read_vector(os.path.join(path, BUNDLE_RESPONSE))
    signal = linops.read_vector(os.path.join(path, BUNDLE_SIGNAL))
    coupling = linops.read_triplets(os.path.join(path, BUNDLE_COUPLING))

    loss = saddle.quadratic_loss(DenseOp(design), response)
    if spec.kind == "overlapping-group-lasso":
        groups = overlapping_groups(spec.n_groups, spec.group_size)
        radii = spec.penalty_weight * np.sqrt([len(g) for g in groups])
        hconj = GroupL2Balls(GroupPartition([len(g) for g in groups]), radii)
        problem = saddle.SaddleProblem(
            loss, matrix_operator(coupling), hconj,
            loss_matrix=design, loss_rhs=response,
        )
    elif spec.kind == "graph-guided-fused-lasso":
        hconj = BoxClip(spec.penalty_weight, coupling.shape[0])
        problem = saddle.SaddleProblem(
            loss, matrix_operator(coupling), hconj,
            loss_matrix=design, loss_rhs=response,
        )
    elif spec.kind == "latent-group-lasso":
        groups = overlapping_groups(spec.n_groups, spec.group_size)
        radii = spec.penalty_weight * np.sqrt([len(g) for g in groups])
        problem = saddle.latent_group_construct(groups, DenseOp(design), response, radii)
    else:
        hconj = BoxClip(spec.penalty_weight, spec.primal_dim)
        problem = saddle.SaddleProblem(
            loss, IdentityOp(spec.primal_dim), hconj,
            loss_matrix=design, loss_rhs=response,
        )
    return GeneratedProblem(spec, problem, design, response, signal, meta)


def _relative_residual(problem, x, y, tau, sigma):
    resid = saddle.fixed_point_residual(problem, x, y, tau, sigma)
    return resid / (1.0 + float(np.linalg.norm(x)) + float(np.linalg.norm(y)))


def auto_norm_bounds(problem, warm_iters=2000):
    """Iterate-norm bounds for the bounded schedules, from a plain warmup.

    Runs the plain iteration from zero for ``warm_iters`` steps and returns
    ``2 * sqrt(2)`` times each block norm, floored at 1, together with the
    warmup result for warm-starting.
    """
    warm = fb.run_fb(
        problem,
        fb.FbParams(kappa=0.0, max_iters=warm_iters, record_every=warm_iters),
    )
    omega_x = 2.0 * math.sqrt(2.0) * max(1.0, float(np.linalg.norm(warm.x)))
    omega_y = 2.0 * math.sqrt(2.0) * max(1.0, float(np.linalg.norm(warm.y)))
    return omega_x, omega_y, warm


def reference_solve(problem, budget=100000, tol=1e-8):
    """Compute a high-accuracy solution pair with a residual certificate.

    The pipeline warm-starts with a short plain run, derives iterate-norm
    bounds from the warm point, runs the bounded accelerated iteration at the
    block-diagonal continuum position with tuned splitting parameters for
    ``budget`` steps, and then polishes with the plain iteration until the
    relative fixed-point residual falls to ``tol``.  A problem whose coupling
    norm is zero skips straight to the polish (the accelerated dual step is
    undefined there).

    If the certificate cannot be met the best iterate is returned with
    ``best_effort`` set and a :class:`ResidualTooLarge` warning.

    Returns
    -------
    ReferenceSolution
    """
    budget = int(budget)
    if budget < 2:
        raise ConstraintViolation("reference budget must be at least 2")
    p, l = problem.dims
    zero_coupling = problem.k_norm == 0.0
    if zero_coupling:
        if problem.L_f <= 0:
            raise ConstraintViolation(
                "a zero-coupling problem needs a positive curvature bound"
            )
        tau = fb.RECIPE_FACTOR * 2.0 / problem.L_f
        sigma = 1.0
    else:
        tau, sigma = fb.default_step_sizes(problem, 0.0)

    iterations = 0
    if zero_coupling:
        x = np.zeros(p)
        y = np.zeros(l)
        method = "plain"
    else:
        warm_iters = max(10, min(2000, budget // 10))
        omega_x, omega_y, warm = auto_norm_bounds(problem, warm_iters)
        iterations += warm.iterations
        factors = accel.mode_factors("kappa", 0.0)
        q, r = accel.tune_qr(
            "bounded",
            problem.L_f,
            problem.k_norm,
            factors,
            budget,
            omega_x=omega_x,
            omega_y=omega_y,
        )
        params = accel.AccelParams(
            mode="kappa",
            kappa=0.0,
            setting="bounded",
            omega_x=omega_x,
            omega_y=omega_y,
            q=q,
            r=r,
            max_iters=budget,
            record_every=budget,
        )
        acc = accel.run_accel(problem, params, x0=warm.x, y0=warm.y)
        iterations += acc.iterations
        x, y = acc.x, acc.y
        method = "accel-bounded-polish"

    residual_rel = _relative_residual(problem, x, y, tau, sigma)
    shrink = 0.3
    for _ in range(5):
        if residual_rel <= tol:
            break
        step_tol = shrink * tol * (1.0 + float(np.linalg.norm(x)) + float(np.linalg.norm(y)))
        pol = fb.run_fb(
            problem,
            fb.FbParams(
                kappa=0.0, tau=tau, sigma=sigma, max_iters=budget, record_every=budget
            ),
            x0=x,
            y0=y,
            tol=step_tol,
        )
        iterations += pol.iterations
        x, y = pol.x, pol.y
        residual_rel = _relative_residual(problem, x, y, tau, sigma)
        if pol.converged:
            shrink *= 0.1

    best_effort = residual_rel > tol
    if best_effort:
        warnings.warn(
            f"reference solve stopped at relative residual {residual_rel:.3g} "
            f"(target {tol:.3g})",
            ResidualTooLarge,
        )
    return ReferenceSolution(
        x=x,
        y=y,
        objective=saddle.primal_objective(problem, x),
        method=method,
        iterations=iterations,
        residual_rel=residual_rel,
        best_effort=best_effort,
    )


REFERENCE_SUMMARY = "reference.txt"
REFERENCE_X = "solution_x.txt"
REFERENCE_Y = "solution_y.txt"


def save_reference(path, ref):
    """Write a reference solution to a directory of text artifacts."""
    os.makedirs(path, exist_ok=True)
    linops.write_vector(os.path.join(path, REFERENCE_X), ref.x)
    linops.write_vector(os.path.join(path, REFERENCE_Y), ref.y)
    tmp = os.path.join(path, REFERENCE_SUMMARY + ".tmp")
    with open(tmp, "w", encoding="ascii") as fh:
        fh.write(f"objective={ref.objective:.17g}\n")
        fh.write(f"method={ref.method}\n")
        fh.write(f"iterations={ref.iterations}\n")
        fh.write(f"residual_rel={ref.residual_rel:.17g}\n")
        fh.write(f"best_effort={int(ref.best_effort)}\n")
    os.replace(tmp, os.path.join(path, REFERENCE_SUMMARY))


def load_reference(path):
    """Read a reference solution written by :func:`save_reference`."""
    summary = _parse_meta(os.path.join(path, REFERENCE_SUMMARY))
    return ReferenceSolution(
        x=linops.read_vector(os.path.join(path, REFERENCE_X)),
        y=linops.read_vector(os.path.join(path, REFERENCE_Y)),
        objective=float(summary["objective"]),
        method=str(summary["method"]),
        iterations=int(summary["iterations"]),
        residual_rel=float(summary["residual_rel"]),
        best_effort=bool(int(summary["best_effort"])),
    )


def rate_slope(trace, f_star, column="ergodic_objective"):
    """Least-squares slope of log gap against log k on the final decade.

    Keeps rows with ``k`` in the last decade (at or above a tenth of the
    largest recorded index) whose gap to ``f_star`` sits above the rounding
    floor ``100 * eps * |f_star|``, then fits a line to log gap over log k.

    Returns
    -------
    RateEstimate

    Raises
    ------
    InsufficientData
        If fewer than 10 usable points remain.
    """
    ks = trace.column("k")
    vals = trace.column(column)
    if ks.size == 0:
        raise InsufficientData("trace is empty")
    window = ks >= ks.max() / 10.0
    gap = vals - float(f_star)
    floor = 100.0 * np.finfo(float).eps * abs(float(f_star))
    keep = window & (gap > floor)
    kept = int(keep.sum())
    if kept < 10:
        raise InsufficientData(
            f"only {kept} usable points in the final decade (need 10)"
        )
    t = np.log(ks[keep])
    g = np.log(gap[keep])
    dt = t - t.mean()
    denom = float(dt @ dt)
    if denom == 0.0:
        raise InsufficientData("the window has no spread in k")
    slope = float(dt @ (g - g.mean())) / denom
    resid = g - g.mean() - slope * dt
    dof = max(t.size - 2, 1)
    stderr = math.sqrt(float(resid @ resid) / dof / denom)
    return RateEstimate(slope=slope, stderr=stderr, n_points=int(t.size))
