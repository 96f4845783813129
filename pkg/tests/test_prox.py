"""Conjugate prox catalog: closed forms, identities, composition."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from pdsplit import prox
from pdsplit.errors import (
    BadLabels,
    DegenerateProblem,
    DimensionError,
    UnknownKind,
    UnsupportedPrimalProx,
)

import oracles


def test_box_clip_pinned_values():
    spec = prox.BoxClip(1.0, 3)
    out = spec.prox(np.array([2.0, -0.5, -3.0]), 0.7)
    np.testing.assert_array_equal(out, [1.0, -0.5, -1.0])


def test_l2_ball_scales_radially_and_keeps_interior():
    spec = prox.L2Ball(1.0, 2)
    np.testing.assert_allclose(spec.prox(np.array([3.0, 4.0]), 1.0), [0.6, 0.8])
    inside = np.array([0.3, -0.4])
    np.testing.assert_array_equal(spec.prox(inside, 2.0), inside)


def test_hinge_conj_pinned_values_positive_label():
    spec = prox.HingeConj(np.array([1.0]))
    assert spec.prox(np.array([0.5]), 1.0)[0] == pytest.approx(-0.5)
    assert spec.prox(np.array([3.0]), 1.0)[0] == pytest.approx(0.0)
    assert spec.prox(np.array([-2.0]), 1.0)[0] == pytest.approx(-1.0)


def test_hinge_conj_negative_label_mirrors_interval():
    spec = prox.HingeConj(-np.ones(33))
    out = spec.prox(np.linspace(-4.0, 4.0, 33), 0.5)
    assert np.all(out >= 0.0) and np.all(out <= 1.0)


def test_hinge_conj_rejects_bad_labels():
    with pytest.raises(BadLabels):
        prox.HingeConj(np.array([1.0, 0.0]))
    with pytest.raises(BadLabels):
        prox.HingeConj(np.zeros(0))


def test_l1_ball_prox_pinned_and_matches_bisection():
    spec = prox.L1Ball(1.0, 2)
    np.testing.assert_allclose(spec.prox(np.array([2.0, 1.0]), 1.0), [1.0, 0.0],
                               atol=1e-12)
    rng = np.random.default_rng(10)
    for _ in range(20):
        z = rng.standard_normal(5) * 3.0
        np.testing.assert_allclose(
            spec.prox(z[:2], 1.0),
            oracles.l1_ball_project_bisect(z[:2], 1.0),
            atol=1e-10,
        )


def test_project_l1_ball_keeps_feasible_point():
    z = np.array([0.3, -0.2])
    np.testing.assert_array_equal(prox.project_l1_ball(z, 1.0), z)


def test_project_l1_ball_single_coordinate():
    np.testing.assert_allclose(
        prox.project_l1_ball(np.array([3.0, 0.0]), 1.0), [1.0, 0.0], atol=1e-12
    )


def test_project_l1_ball_matches_bisection_oracle():
    rng = np.random.default_rng(11)
    for _ in range(50):
        z = rng.standard_normal(5) * 2.0
        radius = float(rng.uniform(0.1, 3.0))
        np.testing.assert_allclose(
            prox.project_l1_ball(z, radius),
            oracles.l1_ball_project_bisect(z, radius),
            atol=1e-10,
        )


def test_moreau_primal_route_matches_box_clip_scalar():
    spec = prox.BoxClip(1.0, 1)
    out = prox.moreau_prox_primal(spec, np.array([2.0]), 1.0)
    assert out[0] == pytest.approx(2.0 - 1.0)
    np.testing.assert_allclose(out, spec.prox(np.array([2.0]), 1.0), atol=1e-15)


def test_moreau_primal_route_matches_ball_projection():
    partition = prox.GroupPartition([4])
    spec = prox.GroupL2Balls(partition, [1.5])
    rng = np.random.default_rng(12)
    z = rng.standard_normal(4) * 3.0
    direct = prox.L2Ball(1.5, 4).prox(z, 2.0)
    np.testing.assert_allclose(
        prox.moreau_prox_primal(spec, z, 2.0), direct, atol=1e-12
    )


def test_moreau_primal_route_fixes_origin():
    spec = prox.BoxClip(0.8, 3)
    np.testing.assert_array_equal(
        prox.moreau_prox_primal(spec, np.zeros(3), 1.7), np.zeros(3)
    )


def test_moreau_primal_route_rejects_unsupported_kind():
    with pytest.raises(UnsupportedPrimalProx):
        prox.moreau_prox_primal(prox.HingeConj(np.array([1.0])), np.zeros(1), 1.0)


def _moreau_cases():
    partition = prox.GroupPartition([2, 3])
    return [
        (prox.BoxClip(0.7, 5), 5),
        (prox.L2Ball(1.2, 5), 5),
        (prox.GroupL2Balls(partition, [0.5, 2.0]), 5),
    ]


def test_moreau_identity_holds_for_supported_penalties():
    rng = np.random.default_rng(13)
    for spec, dim in _moreau_cases():
        for sigma in (0.25, 1.0, 3.5):
            z = rng.standard_normal(dim) * 4.0
            conj = spec.prox(z, sigma)
            primal = prox.primal_prox(spec, z / sigma, 1.0 / sigma)
            np.testing.assert_allclose(conj + sigma * primal, z, atol=1e-12)


def test_projection_prox_idempotent():
    rng = np.random.default_rng(14)
    specs = [
        prox.BoxClip(1.0, 4),
        prox.L2Ball(0.8, 4),
        prox.L1Ball(1.3, 4),
        prox.GroupL2Balls(prox.GroupPartition([2, 2]), [0.6, 1.1]),
    ]
    for spec in specs:
        z = rng.standard_normal(4) * 3.0
        once = spec.prox(z, 1.0)
        np.testing.assert_allclose(spec.prox(once, 1.0), once, atol=1e-12)


def test_prox_nonexpansive_on_random_pairs():
    rng = np.random.default_rng(15)
    specs = [
        prox.BoxClip(1.0, 6),
        prox.L2Ball(1.5, 6),
        prox.L1Ball(2.0, 6),
        prox.GroupL2Balls(prox.GroupPartition([3, 3]), [1.0, 0.4]),
        prox.HingeConj(np.array([1.0, -1.0, 1.0, 1.0, -1.0, -1.0])),
        prox.IdentityShift(6, rng.standard_normal(6)),
    ]
    for spec in specs:
        for _ in range(100):
            z1 = rng.standard_normal(6) * 2.0
            z2 = rng.standard_normal(6) * 2.0
            gap = np.linalg.norm(spec.prox(z1, 0.9) - spec.prox(z2, 0.9))
            assert gap <= np.linalg.norm(z1 - z2) + 1e-10


def test_composite_equals_blockwise_concatenation():
    part_a = prox.BoxClip(1.0, 2)
    part_b = prox.HingeConj(np.array([1.0, -1.0, 1.0]))
    spec = prox.Composite([part_a, part_b])
    rng = np.random.default_rng(16)
    v = rng.standard_normal(5)
    expected = np.concatenate([part_a.prox(v[:2], 0.6), part_b.prox(v[2:], 0.6)])
    np.testing.assert_array_equal(spec.prox(v, 0.6), expected)
    assert spec.dim == 5


def test_composite_values_add_and_propagate_infeasibility():
    spec = prox.Composite([prox.BoxClip(1.0, 2), prox.IdentityShift(1, [2.0])])
    assert spec.conj_value(np.array([0.5, -0.5, 3.0])) == pytest.approx(6.0)
    assert spec.conj_value(np.array([1.5, 0.0, 0.0])) == np.inf
    assert spec.primal_value(np.array([0.5, -2.0, 9.0])) == pytest.approx(2.5)


def test_composite_rejects_empty_and_foreign_parts():
    with pytest.raises(DegenerateProblem):
        prox.Composite([])
    with pytest.raises(UnknownKind):
        prox.Composite([prox.BoxClip(1.0, 2), "not a spec"])


def test_identity_shift_prox_and_value():
    shift = np.array([1.0, -2.0])
    spec = prox.IdentityShift(2, shift)
    v = np.array([0.5, 0.5])
    np.testing.assert_allclose(spec.prox(v, 3.0), v - 3.0 * shift)
    assert spec.conj_value(v) == pytest.approx(float(shift @ v))
    plain = prox.IdentityShift(2)
    np.testing.assert_array_equal(plain.prox(v, 5.0), v)


def test_group_partition_blocks_cover_total():
    partition = prox.GroupPartition([2, 3, 1])
    assert partition.total == 6
    assert partition.n_blocks == 3
    assert list(partition.iter_blocks()) == [(0, 2), (2, 5), (5, 6)]


def test_feasibility_and_conj_values():
    spec = prox.BoxClip(1.0, 2)
    assert spec.feasible(np.array([1.0, -1.0]))
    assert not spec.feasible(np.array([1.1, 0.0]))
    assert spec.conj_value(np.array([0.2, 0.3])) == 0.0
    assert spec.conj_value(np.array([2.0, 0.0])) == np.inf
    assert spec.primal_value(np.array([2.0, -3.0])) == pytest.approx(5.0)


def test_make_prox_dispatch_and_unknown_kind():
    spec = prox.make_prox("box-clip", 2.0, 3)
    assert isinstance(spec, prox.BoxClip)
    with pytest.raises(UnknownKind):
        prox.make_prox("nuclear", 1.0, 3)


def test_prox_conjugate_validates_step():
    spec = prox.BoxClip(1.0, 2)
    with pytest.raises(DegenerateProblem):
        prox.prox_conjugate(spec, np.zeros(2), 0.0)
    with pytest.raises(DimensionError):
        prox.prox_conjugate(spec, np.zeros(3), 1.0)


@settings(max_examples=50, deadline=None)
@given(
    z=hnp.arrays(np.float64, 4, elements=st.floats(-50, 50)),
    lam=st.floats(0.1, 5.0),
    sigma=st.floats(0.1, 10.0),
)
def test_box_clip_output_always_in_box(z, lam, sigma):
    out = prox.BoxClip(lam, 4).prox(z, sigma)
    assert np.all(np.abs(out) <= lam)


@settings(max_examples=50, deadline=None)
@given(
    z=hnp.arrays(np.float64, 5, elements=st.floats(-20, 20)),
    radius=st.floats(0.1, 10.0),
)
def test_l1_projection_feasible_and_idempotent(z, radius):
    out = prox.project_l1_ball(z, radius)
    assert np.abs(out).sum() <= radius * (1.0 + 1e-12) + 1e-12
    np.testing.assert_allclose(prox.project_l1_ball(out, radius), out, atol=1e-12)
