import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nested_ising.engine import StateVector, bell_phi_plus, haar_random_state, plus_state, product_state
from nested_ising.errors import DimensionMismatch, NumericalFailure, WrongDimension
from nested_ising.measures import (
    PHI_PLUS_DM,
    concurrence,
    dephased_bell_state,
    dephasing_curve,
    pure_state_concurrence,
    purity,
    reduced_density,
    sigma_z_expectation,
    spin_flip,
    unital_region_mask,
    werner_curve,
    werner_state,
)
from nested_ising.rng import stream

from conftest import random_unitary


def dense_partial_trace(psi, n, n_keep):
    """Full 2^n x 2^n density matrix traced down to the n_keep lowest qubits."""
    rho = np.outer(psi, psi.conj())
    d_keep, d_env = 1 << n_keep, 1 << (n - n_keep)
    # row index = env * d_keep + keep
    t = rho.reshape(d_env, d_keep, d_env, d_keep)
    return np.einsum("akal->kl", t)


def random_density(rng, rank=4):
    z = rng.standard_normal((4, rank)) + 1j * rng.standard_normal((4, rank))
    rho = z @ z.conj().T
    return rho / np.trace(rho)


# --- reduced density -------------------------------------------------------------

def test_reduced_of_plus_product(rng):
    psi = product_state([plus_state(), haar_random_state(4, rng)])
    rho = reduced_density(psi, 1)
    np.testing.assert_allclose(rho, np.full((2, 2), 0.5), atol=1e-12)
    assert purity(rho) == pytest.approx(1, abs=1e-12)


def test_reduced_of_bell_is_maximally_mixed():
    rho = reduced_density(bell_phi_plus(), 1)
    np.testing.assert_allclose(rho, np.eye(2) / 2, atol=1e-15)


@pytest.mark.parametrize("n_central", [1, 2])
def test_reduced_matches_dense_trace(rng, n_central):
    psi = haar_random_state(10, rng)
    expected = dense_partial_trace(psi.amplitudes, 10, n_central)
    np.testing.assert_allclose(reduced_density(psi, n_central), expected, atol=1e-12, rtol=0)


def test_reduced_density_invariants(rng):
    rho = reduced_density(haar_random_state(7, rng), 2)
    assert np.max(np.abs(rho - rho.conj().T)) < 1e-10
    assert abs(np.trace(rho) - 1) < 1e-10
    assert np.linalg.eigvalsh(rho).min() > -1e-10


def test_reduced_density_errors():
    with pytest.raises(DimensionMismatch):
        reduced_density(plus_state(), 2)
    with pytest.raises(DimensionMismatch):
        reduced_density(bell_phi_plus(), 3)


# --- purity --------------------------------------------------------------------

def test_purity_examples(rng):
    v = haar_random_state(2, rng).amplitudes
    assert purity(np.outer(v, v.conj())) == pytest.approx(1, abs=1e-14)
    assert purity(np.eye(2) / 2) == 0.5
    assert purity(np.diag([0.75, 0.25])) == 0.625


def test_purity_wrong_dimension():
    with pytest.raises(WrongDimension):
        purity(np.eye(3) / 3)


# --- spin flip and concurrence ----------------------------------------------------

def test_spin_flip_bell_invariant():
    np.testing.assert_allclose(spin_flip(PHI_PLUS_DM), PHI_PLUS_DM, atol=1e-15)


def test_spin_flip_00_to_11():
    rho = np.zeros((4, 4))
    rho[0, 0] = 1
    expected = np.zeros((4, 4))
    expected[3, 3] = 1
    np.testing.assert_allclose(spin_flip(rho), expected, atol=1e-15)


def test_spin_flip_keeps_hermitian_unit_trace(rng):
    flipped = spin_flip(random_density(rng))
    assert np.max(np.abs(flipped - flipped.conj().T)) < 1e-14
    assert abs(np.trace(flipped) - 1) < 1e-14


def test_spin_flip_wrong_dimension():
    with pytest.raises(WrongDimension):
        spin_flip(np.eye(2) / 2)


def test_concurrence_examples():
    assert concurrence(PHI_PLUS_DM) == pytest.approx(1, abs=1e-12)
    product = np.zeros((4, 4))
    product[0, 0] = 1
    assert concurrence(product) == 0


def test_werner_concurrence_matches_closed_form():
    # Werner family: C = max(0, (3p - 1)/2)
    assert concurrence(werner_state(0.8)) == pytest.approx(0.7, abs=1e-10)
    for p in np.linspace(0, 1, 11):
        assert concurrence(werner_state(p)) == pytest.approx(max(0, (3 * p - 1) / 2), abs=1e-10)


def test_concurrence_rejects_broken_input():
    with pytest.raises(NumericalFailure):
        concurrence(np.diag([1.0, -0.5, 0.25, 0.25]) @ np.array(
            [[0, 0, 0, 1], [0, 1, 0, 0], [0, 0, 1, 0], [1, 0, 0, 0]]))
    with pytest.raises(WrongDimension):
        concurrence(np.eye(2) / 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_concurrence_local_unitary_invariance(seed):
    rng = stream(seed, "lu")
    rho = random_density(rng, rank=int(rng.integers(1, 5)))
    u = np.kron(random_unitary(rng), random_unitary(rng))
    assert concurrence(u @ rho @ u.conj().T) == pytest.approx(concurrence(rho), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pure_state_concurrence_closed_form(seed):
    v = haar_random_state(2, stream(seed, "pure")).amplitudes
    assert concurrence(np.outer(v, v.conj())) == pytest.approx(pure_state_concurrence(v), abs=1e-10)


def test_sigma_z_examples():
    assert sigma_z_expectation(np.diag([1.0, 0.0])) == 1
    assert sigma_z_expectation(np.full((2, 2), 0.5)) == 0
    assert sigma_z_expectation(np.eye(2) / 2) == 0
    with pytest.raises(WrongDimension):
        sigma_z_expectation(np.eye(4) / 4)


# --- reference curves -------------------------------------------------------------

def test_werner_curve_endpoints():
    pts = werner_curve(4)
    assert (pts[-1].purity, pts[-1].concurrence) == pytest.approx((1, 1), abs=1e-12)
    assert (pts[0].purity, pts[0].concurrence) == pytest.approx((0.25, 0), abs=1e-12)
    third = werner_state(1 / 3)
    assert purity(third) == pytest.approx(1 / 3, abs=1e-12)
    assert concurrence(third) == pytest.approx(0, abs=1e-12)


def test_dephasing_curve_points():
    pts = dephasing_curve(3)
    assert (pts[-1].purity, pts[-1].concurrence) == pytest.approx((1, 1), abs=1e-12)
    assert (pts[0].purity, pts[0].concurrence) == pytest.approx((0.5, 0), abs=1e-12)
    assert (pts[1].purity, pts[1].concurrence) == pytest.approx((0.625, 0.5), abs=1e-12)
    half = dephased_bell_state(0.5)
    assert concurrence(half) == pytest.approx(0.5, abs=1e-12)


def test_curves_need_two_samples():
    with pytest.raises(ValueError):
        werner_curve(1)


def test_dephasing_below_werner():
    w, d = werner_curve(401), dephasing_curve(401)
    wp, wc = np.array([(p.purity, p.concurrence) for p in w]).T
    dp, dc = np.array([(p.purity, p.concurrence) for p in d]).T
    grid = np.linspace(0.26, 0.99, 200)
    lower = np.interp(grid, dp, dc, left=0.0)
    upper = np.interp(grid, wp, wc)
    assert np.all(lower <= upper + 1e-12)


def test_unital_mask():
    inside = unital_region_mask([1.0, 0.625, 0.3], [1.0, 0.52, 0.0])
    assert inside.all()
    outside = unital_region_mask([0.625, 0.625], [0.9, 0.3])
    assert not outside.any()


def test_dephasing_channel_on_bell_lies_on_lower_curve():
    for kappa in (0.2, 0.7):
        rho = dephased_bell_state(kappa)
        assert unital_region_mask([purity(rho)], [concurrence(rho)], tol=1e-9)[0]
