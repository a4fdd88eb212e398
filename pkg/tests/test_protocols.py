import itertools
import math

import numpy as np
import pytest

from errors import DimensionMismatchError, UnknownProtocolError
from protocols import (
    PROTOCOL_NAMES,
    computational_basis,
    dome_mub_pair_infeasibility,
    get_protocol,
    is_orthonormal,
    measurement_basis,
    mub_protocol,
    ray_basis,
    registry,
    same_state_set,
    seven_rays_protocol,
    tetrahedral_directions,
    three_rays_protocol,
    umbrella_protocol,
    unbiasedness_matrix,
)
from state_geometry import NORTH, X_AXIS, Y_AXIS, BiphotonState, Manifold, classify_state, dome_state, overlap

SQ2 = math.sqrt(2)


def _states(rows, scale):
    return [BiphotonState(np.array(r, dtype=complex) / scale) for r in rows]


def test_measurement_basis_is_fock_basis():
    np.testing.assert_array_equal(measurement_basis().matrix, np.eye(3))
    assert is_orthonormal(measurement_basis(), 0.0)
    assert same_state_set(list(ray_basis(NORTH)), list(measurement_basis()))


def test_umbrella_is_unbiased_with_measurement_basis():
    protocol = umbrella_protocol()
    m = unbiasedness_matrix(*protocol.bases)
    np.testing.assert_allclose(m, np.full((3, 3), 1 / 3), atol=1e-12)
    assert is_orthonormal(protocol.bases[1])


def test_umbrella_vectors_sit_on_the_dome():
    for v in umbrella_protocol().bases[1]:
        c = classify_state(v)
        assert c.manifold is Manifold.DOME
        assert c.direction.theta == pytest.approx(math.acos(1 / math.sqrt(3)), abs=1e-8)


def test_equatorial_ray_bases_match_reference_vectors():
    x_rows = [(1, SQ2, 1), (1, -SQ2, 1), (SQ2, 0, -SQ2)]
    y_rows = [(1, SQ2 * 1j, -1), (-1, SQ2 * 1j, 1), (SQ2, 0, SQ2)]
    assert same_state_set(list(ray_basis(X_AXIS)), _states(x_rows, 2))
    assert same_state_set(list(ray_basis(Y_AXIS)), _states(y_rows, 2))


def test_three_rays_cross_overlaps():
    z, x, y = three_rays_protocol().bases
    xy = unbiasedness_matrix(x, y)
    assert set(np.round(xy, 12).ravel()) <= {0.0, 0.25, 0.5}
    np.testing.assert_allclose(xy.sum(axis=0), 1, atol=1e-12)
    np.testing.assert_allclose(xy.sum(axis=1), 1, atol=1e-12)
    for other in (x, y):
        assert set(np.round(unbiasedness_matrix(z, other), 12).ravel()) <= {0.0, 0.25, 0.5}
    # the equatorial ray bases are not unbiased
    assert not np.allclose(xy, 1 / 3)


def test_seven_rays_bases():
    protocol = seven_rays_protocol()
    assert protocol.n_bases == 7
    assert all(is_orthonormal(b) for b in protocol.bases)
    axes = (X_AXIS, Y_AXIS, NORTH)
    for t in tetrahedral_directions():
        for a in axes:
            assert abs(overlap(dome_state(t), dome_state(a))) ** 2 == pytest.approx(1 / 3, abs=1e-12)
            assert t.angle_to(a) == pytest.approx(math.acos(1 / math.sqrt(3)), abs=1e-12)


def test_ray_basis_is_symmetric_under_antipode():
    rng = np.random.default_rng(3)
    from state_geometry import random_direction

    for _ in range(50):
        n = random_direction(rng)
        assert same_state_set(list(ray_basis(n)), list(ray_basis(-n)))


@pytest.mark.parametrize("d,m", [(2, 2), (2, 3), (3, 2), (3, 3), (3, 4)])
def test_mub_families_are_unbiased(d, m):
    protocol = mub_protocol(d, m)
    assert protocol.n_bases == m
    for a, b in itertools.combinations(protocol.bases, 2):
        np.testing.assert_allclose(unbiasedness_matrix(a, b), np.full((d, d), 1 / d), atol=1e-12)


def test_qutrit_fourier_basis():
    fourier = mub_protocol(3, 2).bases[1]
    omega = np.exp(2j * np.pi / 3)
    expect = _states([[omega ** (r * s) for r in range(3)] for s in range(3)], math.sqrt(3))
    assert same_state_set(list(fourier), expect)


def test_mub_count_is_bounded():
    with pytest.raises(ValueError):
        mub_protocol(3, 5)
    with pytest.raises(ValueError):
        mub_protocol(2, 1)
    with pytest.raises(ValueError):
        mub_protocol(5, 2)


def test_unbiasedness_matrix_properties():
    b = mub_protocol(3, 4).bases[2]
    np.testing.assert_allclose(unbiasedness_matrix(b, b), np.eye(3), atol=1e-12)
    with pytest.raises(DimensionMismatchError):
        unbiasedness_matrix(b, computational_basis(2))


@pytest.mark.parametrize("name", ["umbrella", "three-rays", "seven-rays"])
def test_geometric_protocols_live_in_the_subset(name):
    for basis in get_protocol(name).bases:
        for v in basis:
            assert classify_state(v).in_subset


def test_four_mub_leaves_the_subset():
    outside = [
        v for b in get_protocol("qutrit-4mub").bases for v in b
        if classify_state(v).manifold is Manifold.OUTSIDE
    ]
    assert outside


def test_dome_mub_pair_is_infeasible():
    cert = dome_mub_pair_infeasibility()
    assert cert.patterns_checked == 512
    assert cert.feasible_patterns == 0
    assert cert.min_abs_row_dot == pytest.approx(1 / 3, abs=1e-12)
    assert cert.single_triplet_orthonormal
    assert cert.proven


def test_registry():
    assert PROTOCOL_NAMES == (
        "bb84", "qubit-3mub", "umbrella", "three-rays", "seven-rays", "qutrit-3mub", "qutrit-4mub",
    )
    protocols = registry()
    assert [p.dimension for p in protocols.values()] == [2, 2, 3, 3, 3, 3, 3]
    assert get_protocol("bb84") is get_protocol("bb84")
    with pytest.raises(UnknownProtocolError):
        get_protocol("bb85")
    with pytest.raises(KeyError):
        get_protocol("")
