import math

import numpy as np
import pytest

import keyrate
from entropy import binary, shannon
from errors import InfeasibleErrorRateError, PreprocessingRangeError, UnsupportedProtocolError
from keyrate import (
    BellDiagonalState,
    KeyRatePoint,
    bell_matrix,
    bell_vector,
    constraint_set,
    error_coefficients,
    eve_blocks,
    feasible_vertices,
    grid_min_rate,
    min_rate,
    optimal_rate,
    rate_curve,
    rate_functional,
    rate_functional_generic,
    symmetric_frame,
)
from protocols import get_protocol, mub_basis, mub_protocol, same_state_set

LOG3 = math.log2(3)


def _root(f, lo, hi):
    # plain bisection for the closed-form thresholds
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bb84_rate(q):
    return 1 - 2 * binary(q)


def six_state_rate(q):
    return 1 - shannon([1 - 1.5 * q, q / 2, q / 2, q / 2])


def two_mub_qutrit_rate(q):
    return LOG3 - 2 * binary(q) - 2 * q


def four_mub_rate(q):
    return LOG3 - shannon([1 - 4 * q / 3] + [q / 6] * 8)


@pytest.fixture
def rng():
    return np.random.default_rng(11)


@pytest.mark.parametrize("d", [2, 3])
def test_bell_states_form_a_basis(d):
    phi = bell_matrix(d)
    np.testing.assert_allclose(phi.conj().T @ phi, np.eye(d * d), atol=1e-12)


def test_error_coefficients_of_standard_bases():
    comp = error_coefficients(mub_basis(3, 0))
    fourier = error_coefficients(mub_basis(3, 1))
    j, k = np.indices((3, 3))
    np.testing.assert_allclose(comp, (k != 0).astype(float), atol=1e-12)
    np.testing.assert_allclose(fourier, (j != 0).astype(float), atol=1e-12)


def test_umbrella_frame_is_the_fourier_pair():
    frame = symmetric_frame(get_protocol("umbrella"))
    assert same_state_set(list(frame.bases[1]), list(mub_basis(3, 1)))
    np.testing.assert_array_equal(
        constraint_set(get_protocol("umbrella"), 0.1).rows,
        constraint_set(mub_protocol(3, 2), 0.1).rows,
    )
    assert symmetric_frame(get_protocol("qutrit-4mub")) is get_protocol("qutrit-4mub")


def test_bell_vector_for_qutrits():
    omega = np.exp(2j * np.pi / 3)
    expect = np.zeros(9, dtype=complex)
    # |0,1>, |1,2>, |2,0> in s*d + t order
    expect[[1, 5, 6]] = np.array([1, omega, omega**2]) / math.sqrt(3)
    np.testing.assert_allclose(bell_vector(1, 1, 3), expect, atol=1e-12)
    np.testing.assert_allclose(bell_vector(0, 0, 2), np.array([1, 0, 0, 1]) / math.sqrt(2), atol=1e-12)
    for j, k in ((3, 0), (0, 3), (-1, 0)):
        with pytest.raises(IndexError):
            bell_vector(j, k, 3)


@pytest.mark.parametrize("d", [2, 3])
def test_eve_blocks_are_states(d, rng):
    for _ in range(500):
        lam = BellDiagonalState(rng.dirichlet(np.ones(d * d) * rng.uniform(0.2, 2.0)))
        q = rng.uniform(0, (d - 1) / d - 1e-6)
        blocks = eve_blocks(lam, q)
        assert blocks.shape == (d, d, d)
        np.testing.assert_allclose(blocks, blocks.conj().transpose(0, 2, 1), atol=1e-12)
        assert np.linalg.eigvalsh(blocks).min() >= -1e-12
        assert np.trace(blocks, axis1=1, axis2=2).sum() == pytest.approx(1.0, abs=1e-12)


def test_bell_state_validation():
    with pytest.raises(ValueError):
        BellDiagonalState(np.full(4, 0.3))
    with pytest.raises(ValueError):
        BellDiagonalState(np.ones(5) / 5)
    with pytest.raises(ValueError):
        BellDiagonalState(np.array([1.1, -0.1, 0.0, 0.0]))
    lam = BellDiagonalState(np.array([1.0 + 1e-15, -1e-15, 0.0, 0.0]))
    assert lam.weights.min() == 0.0


@pytest.mark.parametrize("d", [2, 3])
def test_rate_without_preprocessing_is_log_d_minus_entropy(d, rng):
    for _ in range(10_000):
        lam = BellDiagonalState(rng.dirichlet(np.ones(d * d)))
        assert rate_functional(lam, 0.0) == pytest.approx(math.log2(d) - shannon(lam.weights), abs=1e-10)


@pytest.mark.parametrize("d", [2, 3])
def test_block_and_purification_paths_agree(d, rng):
    for _ in range(1000):
        lam = BellDiagonalState(rng.dirichlet(np.ones(d * d) * rng.uniform(0.2, 2.0)))
        q = rng.uniform(0, (d - 1) / d - 1e-6)
        assert rate_functional(lam, q) == pytest.approx(rate_functional_generic(lam, q), abs=1e-9)


def test_perfect_correlation_gives_log_d():
    for d in (2, 3):
        lam = np.zeros((d, d))
        lam[0, 0] = 1.0
        assert rate_functional(BellDiagonalState(lam)) == pytest.approx(math.log2(d), abs=1e-12)


def test_preprocessing_range_is_checked():
    lam = BellDiagonalState(np.full(9, 1 / 9))
    with pytest.raises(PreprocessingRangeError):
        rate_functional(lam, 2 / 3)
    with pytest.raises(PreprocessingRangeError):
        rate_functional(lam, -0.01)


def test_gradient_matches_finite_differences(rng):
    for d, q in ((2, 0.1), (3, 0.0), (3, 0.3)):
        objective = keyrate._RateObjective(d, q)
        lam = 0.5 * rng.dirichlet(np.ones(d * d)) + 0.5 / (d * d)
        _, grad = objective(lam)
        direction = rng.normal(size=d * d)
        direction -= direction.mean()
        h = 1e-6
        numeric = (objective(lam + h * direction)[0] - objective(lam - h * direction)[0]) / (2 * h)
        assert grad @ direction == pytest.approx(numeric, abs=1e-5)


def test_feasible_polytope():
    bb84 = get_protocol("bb84")
    verts = feasible_vertices(constraint_set(bb84, 0.1))
    assert len(verts) == 2
    for v in verts:
        assert v.min() >= 0
        assert constraint_set(bb84, 0.1).residual(v) < 1e-9
    assert len(feasible_vertices(constraint_set(bb84, 0.0))) == 1
    with pytest.raises(InfeasibleErrorRateError):
        feasible_vertices(constraint_set(get_protocol("qutrit-4mub"), 0.9))


def test_ray_protocols_are_rejected():
    with pytest.raises(UnsupportedProtocolError):
        min_rate(get_protocol("three-rays"), 0.1)
    with pytest.raises(UnsupportedProtocolError):
        constraint_set(get_protocol("seven-rays"), 0.1)


def test_bb84_matches_closed_form():
    bb84 = get_protocol("bb84")
    for q in np.linspace(0.0, 0.11, 50):
        res = min_rate(bb84, q)
        assert res.rate == pytest.approx(bb84_rate(q), abs=1e-6)
        assert constraint_set(bb84, q).residual(res.state.weights) < 1e-9
        assert abs(res.state.weights.sum() - 1) < 1e-12


def test_six_state_matches_closed_form():
    six = get_protocol("qubit-3mub")
    for q in np.linspace(0.0, 0.2, 11):
        assert min_rate(six, q).rate == pytest.approx(six_state_rate(q), abs=1e-6)


@pytest.mark.parametrize(
    "name,closed_form",
    [("umbrella", two_mub_qutrit_rate), ("qutrit-4mub", four_mub_rate)],
)
def test_qutrit_rates_match_closed_forms(name, closed_form):
    protocol = get_protocol(name)
    for q in (0.02, 0.08, 0.15):
        assert min_rate(protocol, q).rate == pytest.approx(closed_form(q), abs=1e-6)


def test_grid_cross_check_for_qubits():
    bb84 = get_protocol("bb84")
    for q_err, q in ((0.05, 0.0), (0.1, 0.0), (0.1, 0.15)):
        solved = min_rate(bb84, q_err, q).rate
        grid = grid_min_rate(bb84, q_err, q)
        assert grid >= solved - 1e-7
        assert grid - solved < 1e-4
    six = get_protocol("qubit-3mub")
    assert grid_min_rate(six, 0.1, 0.2) == pytest.approx(min_rate(six, 0.1, 0.2).rate, abs=1e-12)
    with pytest.raises(ValueError):
        grid_min_rate(get_protocol("umbrella"), 0.1)


def test_multistart_is_deterministic():
    protocol = get_protocol("qutrit-3mub")
    a = min_rate(protocol, 0.12, 0.1)
    b = min_rate(protocol, 0.12, 0.1)
    assert a.rate == b.rate
    np.testing.assert_array_equal(a.state.weights, b.state.weights)
    assert a.starts >= 20


def test_preprocessing_never_hurts():
    bb84 = get_protocol("bb84")
    pt = optimal_rate(bb84, 0.1)
    assert pt.preprocessing
    assert 0.0 <= pt.q < 0.5
    assert pt.rate >= bb84_rate(0.1) - 1e-9
    assert pt.rate_normalized == pt.rate


def test_preprocessing_at_zero_error():
    pt = optimal_rate(get_protocol("qutrit-4mub"), 0.0)
    assert pt.q == 0.0
    assert pt.rate == pytest.approx(LOG3, abs=1e-12)
    assert pt.rate_normalized == pytest.approx(1.0, abs=1e-12)


def test_rate_curve_is_nonincreasing():
    curve = rate_curve(get_protocol("qutrit-4mub"), np.linspace(0, 0.25, 11))
    rates = [pt.rate for pt in curve]
    assert all(b <= a + 1e-9 for a, b in zip(rates, rates[1:]))
    assert [pt.error_rate for pt in curve] == pytest.approx(list(np.linspace(0, 0.25, 11)))


def test_preprocessed_curve_dominates_plain_curve():
    grid = np.linspace(0.0, 0.1, 5)
    bb84 = get_protocol("bb84")
    plain = rate_curve(bb84, grid)
    processed = rate_curve(bb84, grid, preprocessing=True)
    for a, b in zip(plain, processed):
        assert b.rate >= a.rate - 1e-9
        assert b.preprocessing and not a.preprocessing


def test_qutrit_curves_lie_above_qubit_curves():
    grid = [0.0, 0.03, 0.06, 0.1]
    qubit = [rate_curve(get_protocol(n), grid) for n in ("bb84", "qubit-3mub")]
    qutrit = [rate_curve(get_protocol(n), grid) for n in ("umbrella", "qutrit-3mub", "qutrit-4mub")]
    for i in range(len(grid)):
        assert min(c[i].rate for c in qutrit) > max(c[i].rate for c in qubit)


def test_critical_search_treats_saturated_rate_as_zero(monkeypatch):
    # past the threshold the preprocessed rate sits at -1e-14 instead of turning negative
    def fake_rate_at(protocol, error_rate, preprocessing):
        if preprocessing:
            rate = 0.3 * (0.124 - error_rate) if error_rate < 0.124 else -1e-14
        else:
            rate = 0.11 - error_rate
        return KeyRatePoint(protocol.name, 2, error_rate, preprocessing, 0.0, rate)

    monkeypatch.setattr(keyrate, "rate_at", fake_rate_at)
    bb84 = get_protocol("bb84")
    assert keyrate.critical_error_rate(bb84) == pytest.approx(0.11, abs=1e-6)
    assert keyrate.critical_error_rate(bb84, preprocessing=True) == pytest.approx(0.124, abs=1e-6)


def test_critical_rate_for_bb84_without_preprocessing():
    expected = _root(bb84_rate, 0.0, 0.3)
    assert keyrate.critical_error_rate(get_protocol("bb84")) == pytest.approx(expected, abs=5e-4)


@pytest.mark.slow
@pytest.mark.parametrize(
    "name,expected",
    [("qubit-3mub", 0.127), ("umbrella", 0.160), ("qutrit-3mub", 0.1825), ("qutrit-4mub", 0.191)],
)
def test_critical_rates_without_preprocessing(name, expected):
    assert keyrate.critical_error_rate(get_protocol(name)) == pytest.approx(expected, abs=2e-3)


@pytest.mark.slow
@pytest.mark.parametrize(
    "name,expected",
    [("bb84", 0.124), ("qubit-3mub", 0.141), ("umbrella", 0.177), ("qutrit-3mub", 0.203), ("qutrit-4mub", 0.211)],
)
def test_critical_rates_with_preprocessing(name, expected):
    assert keyrate.critical_error_rate(get_protocol(name), preprocessing=True) == pytest.approx(expected, abs=2e-3)
