"""Proximal maps for penalty conjugates.

The dual update of every solver in this package needs the proximal map of a
penalty conjugate ``h*``.  For the supported penalties ``h*`` is either an
indicator of a simple set (so the prox is a projection), a linear function,
or a blockwise combination of those.  Each spec also knows the primal value
``h(u)`` so objective reporting does not need a second description, and the
primal prox is always reachable through the Moreau identity.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    BadLabels,
    DegenerateProblem,
    DimensionError,
    UnknownKind,
    UnsupportedPrimalProx,
)


class GroupPartition:
    """Contiguous partition of a vector into blocks.

    Attributes
    ----------
    sizes : ndarray of int
        Block lengths, all positive.
    offsets : ndarray of int
        Prefix sums; block ``j`` covers ``offsets[j]:offsets[j + 1]``.
    """

    def __init__(self, sizes):
        sizes = np.asarray(sizes, dtype=int)
        if sizes.ndim != 1 or sizes.size == 0:
            raise DegenerateProblem("partition needs at least one block")
        if np.any(sizes <= 0):
            raise DegenerateProblem("partition blocks must be non-empty")
        self.sizes = sizes
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])

    @property
    def n_blocks(self):
        return self.sizes.size

    @property
    def total(self):
        return int(self.offsets[-1])

    def iter_blocks(self):
        """Yield ``(lo, hi)`` slices of consecutive blocks."""
        for j in range(self.n_blocks):
            yield int(self.offsets[j]), int(self.offsets[j + 1])


class ConjugateProx:
    """Base class for penalty-conjugate prox specs.

    Attributes
    ----------
    kind : str
        Tag identifying the penalty family.
    dim : int
        Length of the dual vectors the spec acts on.
    """

    kind = "abstract"

    def __init__(self, dim):
        dim = int(dim)
        if dim <= 0:
            raise DegenerateProblem("prox spec needs a positive dimension")
        self.dim = dim

    def _check(self, v):
        v = np.asarray(v, dtype=float)
        if v.ndim != 1 or v.shape[0] != self.dim:
            raise DimensionError(
                f"expected a vector of length {self.dim}, got shape {v.shape}"
            )
        return v

    def prox(self, v, sigma):
        """Proximal point of ``sigma * h*`` at ``v``."""
        raise NotImplementedError

    def conj_value(self, y):
        """Value of ``h*`` at ``y`` (``inf`` outside its domain)."""
        raise NotImplementedError

    def primal_value(self, u):
        """Value of the penalty ``h`` at ``u``."""
        raise NotImplementedError

    def feasible(self, y, tol=1e-9):
        """Whether ``y`` lies in the domain of ``h*`` within ``tol``."""
        return np.isfinite(self.conj_value_with_tol(y, tol))

    def conj_value_with_tol(self, y, tol):
        """Like :meth:`conj_value` but declaring near-feasible points in."""
        raise NotImplementedError


class BoxClip(ConjugateProx):
    """Conjugate of the weighted absolute-value penalty ``lam * sum |u_i|``.

    The conjugate is the indicator of the box ``[-lam, lam]^dim``, so the
    prox is a coordinatewise clip independent of the step.
    """

    kind = "box-clip"

    def __init__(self, lam, dim):
        super().__init__(dim)
        if lam < 0:
            raise DegenerateProblem("penalty weight must be nonnegative")
        self.lam = float(lam)

    def prox(self, v, sigma):
        v = self._check(v)
        return np.clip(v, -self.lam, self.lam)

    def conj_value(self, y):
        return self.conj_value_with_tol(y, 0.0)

    def conj_value_with_tol(self, y, tol):
        y = self._check(y)
        if np.max(np.abs(y), initial=0.0) > self.lam + tol:
            return np.inf
        return 0.0

    def primal_value(self, u):
        u = self._check(u)
        return self.lam * float(np.abs(u).sum())


class L2Ball(ConjugateProx):
    """Conjugate of the Euclidean-norm penalty ``lam * ||u||_2``.

    The conjugate is the indicator of the Euclidean ball of radius ``lam``;
    the prox is the radial projection onto that ball.
    """

    kind = "l2-ball"

    def __init__(self, lam, dim):
        super().__init__(dim)
        if lam < 0:
            raise DegenerateProblem("penalty weight must be nonnegative")
        self.lam = float(lam)

    def prox(self, v, sigma):
        v = self._check(v)
        nrm = np.linalg.norm(v)
        if nrm <= self.lam:
            return v.copy()
        if nrm == 0.0:
            return v.copy()
        return v * (self.lam / nrm)

    def conj_value(self, y):
        return self.conj_value_with_tol(y, 0.0)

    def conj_value_with_tol(self, y, tol):
        y = self._check(y)
        if np.linalg.norm(y) > self.lam + tol:
            return np.inf
        return 0.0

    def primal_value(self, u):
        u = self._check(u)
        return self.lam * float(np.linalg.norm(u))


class L1Ball(ConjugateProx):
    """Conjugate of the max-norm penalty ``lam * max_i |u_i|``.

    The conjugate is the indicator of the l1 ball of radius ``lam``; the
    prox is the exact sort-based projection onto that ball.
    """

    kind = "l1-ball"

    def __init__(self, lam, dim):
        super().__init__(dim)
        if lam < 0:
            raise DegenerateProblem("penalty weight must be nonnegative")
        self.lam = float(lam)

    def prox(self, v, sigma):
        v = self._check(v)
        return project_l1_ball(v, self.lam)

    def conj_value(self, y):
        return self.conj_value_with_tol(y, 0.0)

    def conj_value_with_tol(self, y, tol):
        y = self._check(y)
        if np.abs(y).sum() > self.lam + tol:
            return np.inf
        return 0.0

    def primal_value(self, u):
        u = self._check(u)
        return self.lam * float(np.max(np.abs(u), initial=0.0))


class GroupL2Balls(ConjugateProx):
    """Conjugate of a weighted sum of blockwise Euclidean norms.

    With partition blocks ``u_g`` and weights ``radii[g]`` the penalty is
    ``sum_g radii[g] * ||u_g||_2`` and the conjugate is the indicator of the
    product of Euclidean balls, so the prox projects each block radially.
    """

    kind = "group-l2-balls"

    def __init__(self, partition, radii):
        if not isinstance(partition, GroupPartition):
            raise DimensionError("group-l2-balls needs a GroupPartition")
        super().__init__(partition.total)
        radii = np.broadcast_to(
            np.asarray(radii, dtype=float), (partition.n_blocks,)
        ).copy()
        if np.any(radii < 0):
            raise DegenerateProblem("group radii must be nonnegative")
        self.partition = partition
        self.radii = radii

    def prox(self, v, sigma):
        v = self._check(v)
        out = v.copy()
        for j, (lo, hi) in enumerate(self.partition.iter_blocks()):
            nrm = np.linalg.norm(out[lo:hi])
            r = self.radii[j]
            if nrm > r:
                out[lo:hi] *= r / nrm
        return out

    def conj_value(self, y):
        return self.conj_value_with_tol(y, 0.0)

    def conj_value_with_tol(self, y, tol):
        y = self._check(y)
        for j, (lo, hi) in enumerate(self.partition.iter_blocks()):
            if np.linalg.norm(y[lo:hi]) > self.radii[j] + tol:
                return np.inf
        return 0.0

    def primal_value(self, u):
        u = self._check(u)
        total = 0.0
        for j, (lo, hi) in enumerate(self.partition.iter_blocks()):
            total += self.radii[j] * np.linalg.norm(u[lo:hi])
        return float(total)


class HingeConj(ConjugateProx):
    """Conjugate of the hinge loss ``sum_i max(0, 1 - b_i * u_i)``.

    For labels ``b_i`` in ``{-1, +1}`` the conjugate is linear on a
    coordinatewise interval: ``h*(y) = sum_i b_i y_i`` on the set where
    every ``b_i y_i`` lies in ``[-1, 0]``.  The prox shifts by
    ``sigma * b`` and clips to that interval.
    """

    kind = "hinge-conj"

    def __init__(self, labels):
        labels = np.asarray(labels, dtype=float)
        if labels.ndim != 1 or labels.size == 0:
            raise BadLabels("labels must be a non-empty vector")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise BadLabels("labels must take values in {-1, +1}")
        super().__init__(labels.size)
        self.labels = labels
        self._lo = np.minimum(-labels, 0.0)
        self._hi = np.maximum(-labels, 0.0)

    def prox(self, v, sigma):
        v = self._check(v)
        return np.clip(v - sigma * self.labels, self._lo, self._hi)

    def conj_value(self, y):
        return self.conj_value_with_tol(y, 0.0)

    def conj_value_with_tol(self, y, tol):
        y = self._check(y)
        by = self.labels * y
        if np.any(by < -1.0 - tol) or np.any(by > tol):
            return np.inf
        return float((self.labels * y).sum())

    def primal_value(self, u):
        u = self._check(u)
        return float(np.maximum(0.0, 1.0 - self.labels * u).sum())


class IdentityShift(ConjugateProx):
    """Conjugate of the equality indicator ``h(u) = 0 if u == shift``.

    The conjugate is linear, ``h*(y) = <shift, y>``, so the prox is the
    shift map ``v - sigma * shift`` (the identity when the shift is zero).
    The penalty value is reported as zero; feasibility of the constraint is
    tracked through the solver residual, not through the objective.
    """

    kind = "identity-shift"

    def __init__(self, dim, shift=None):
        super().__init__(dim)
        if shift is None:
            shift = np.zeros(self.dim)
        self.shift = self._check(shift)

    def prox(self, v, sigma):
        v = self._check(v)
        return v - sigma * self.shift

    def conj_value(self, y):
        return self.conj_value_with_tol(y, 0.0)

    def conj_value_with_tol(self, y, tol):
        y = self._check(y)
        return float(self.shift @ y)

    def primal_value(self, u):
        self._check(u)
        return 0.0


class Composite(ConjugateProx):
    """Blockwise combination of conjugate-prox specs.

    The dual vector splits into consecutive segments, one per part, and each
    part acts on its own segment.  Values add across parts.
    """

    kind = "composite"

    def __init__(self, parts):
        parts = list(parts)
        if not parts:
            raise DegenerateProblem("composite of zero parts")
        for part in parts:
            if not isinstance(part, ConjugateProx):
                raise UnknownKind("composite parts must be ConjugateProx instances")
        super().__init__(sum(part.dim for part in parts))
        self.parts = parts
        self.offsets = np.concatenate([[0], np.cumsum([p.dim for p in parts])])

    def _segments(self, v):
        for part, lo, hi in zip(self.parts, self.offsets[:-1], self.offsets[1:]):
            yield part, v[lo:hi]

    def prox(self, v, sigma):
        v = self._check(v)
        return np.concatenate(
            [part.prox(seg, sigma) for part, seg in self._segments(v)]
        )

    def conj_value(self, y):
        return self.conj_value_with_tol(y, 0.0)

    def conj_value_with_tol(self, y, tol):
        y = self._check(y)
        total = 0.0
        for part, seg in self._segments(y):
            val = part.conj_value_with_tol(seg, tol)
            if not np.isfinite(val):
                return np.inf
            total += val
        return float(total)

    def primal_value(self, u):
        u = self._check(u)
        return float(sum(part.primal_value(seg) for part, seg in self._segments(u)))


_PROX_KINDS = {
    "box-clip": BoxClip,
    "l2-ball": L2Ball,
    "l1-ball": L1Ball,
    "group-l2-balls": GroupL2Balls,
    "hinge-conj": HingeConj,
    "identity-shift": IdentityShift,
    "composite": Composite,
}


def make_prox(kind, *args, **kwargs):
    """Construct a conjugate-prox spec from its kind tag.

    Raises
    ------
    UnknownKind
        If the tag is not registered.
    """
    try:
        cls = _PROX_KINDS[kind]
    except KeyError:
        raise UnknownKind(f"unknown prox kind {kind!r}") from None
    return cls(*args, **kwargs)


def prox_conjugate(spec, v, sigma):
    """Proximal point of ``sigma * h*`` at ``v`` for the given spec.

    Parameters
    ----------
    spec : ConjugateProx
    v : ndarray
        Dual vector of length ``spec.dim``.
    sigma : float
        Positive dual step size.

    Returns
    -------
    ndarray
    """
    if sigma <= 0:
        raise DegenerateProblem("prox step must be positive")
    return spec.prox(v, float(sigma))


def project_l1_ball(v, radius):
    """Exact Euclidean projection onto the l1 ball of a given radius.

    Uses the sort-based threshold search: order the magnitudes, find the
    largest prefix whose soft threshold stays positive, and shrink toward
    zero by the resulting threshold.

    Parameters
    ----------
    v : ndarray
    radius : float
        Nonnegative ball radius.

    Returns
    -------
    ndarray
        The closest point with ``sum |out_i| <= radius``.
    """
    v = np.asarray(v, dtype=float)
    if radius < 0:
        raise DegenerateProblem("l1 ball radius must be nonnegative")
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    if radius == 0.0:
        return np.zeros_like(v)
    u = np.sort(a)[::-1]
    cssv = np.cumsum(u)
    counts = np.arange(1, u.size + 1)
    rho = np.nonzero(u * counts > cssv - radius)[0][-1]
    theta = (cssv[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(a - theta, 0.0)


def primal_prox(spec, z, scale):
    """Prox of ``scale * h`` at ``z`` through the direct primal rules.

    Only the penalties with a standard closed-form primal prox are covered:
    coordinatewise soft threshold for the weighted absolute-value penalty,
    vector shrink for the Euclidean-norm penalty, and blockwise shrink for
    the group penalty.

    Raises
    ------
    UnsupportedPrimalProx
        For specs without a primal rule here.
    """
    if scale <= 0:
        raise DegenerateProblem("prox scale must be positive")
    z = np.asarray(z, dtype=float)
    if isinstance(spec, BoxClip):
        t = scale * spec.lam
        return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)
    if isinstance(spec, L2Ball):
        return _shrink_vector(z, scale * spec.lam)
    if isinstance(spec, GroupL2Balls):
        out = z.copy()
        for j, (lo, hi) in enumerate(spec.partition.iter_blocks()):
            out[lo:hi] = _shrink_vector(out[lo:hi], scale * spec.radii[j])
        return out
    raise UnsupportedPrimalProx(
        f"no direct primal prox rule for kind {spec.kind!r}"
    )


def _shrink_vector(z, t):
    nrm = np.linalg.norm(z)
    if nrm <= t:
        return np.zeros_like(z)
    return z * (1.0 - t / nrm)


def moreau_prox_primal(spec, z, sigma):
    """Conjugate prox ``prox_{sigma h*}(z)`` reached through the primal rule.

    Splits ``z`` into its two proximal parts and returns the conjugate one,
    ``z - sigma * prox_{h / sigma}(z / sigma)``, with the inner prox computed
    by the direct primal rule rather than any conjugate projection.  Agreement
    with :meth:`ConjugateProx.prox` is the decomposition identity.

    Parameters
    ----------
    spec : ConjugateProx
        Spec whose penalty has a direct primal rule.
    z : ndarray
    sigma : float
        Positive dual step size.

    Returns
    -------
    ndarray

    Raises
    ------
    UnsupportedPrimalProx
        If the penalty has no direct primal rule.
    """
    if sigma <= 0:
        raise DegenerateProblem("prox step must be positive")
    z = np.asarray(z, dtype=float)
    sigma = float(sigma)
    return z - sigma * primal_prox(spec, z / sigma, 1.0 / sigma)
