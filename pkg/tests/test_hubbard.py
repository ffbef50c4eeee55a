import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import linalg

from entdim import (DensityMatrix, HubbardParams, apply_dephasing, build_hamiltonian,
                    disorder_realization, ground_state, make_basis, thermal_state)
from entdim.hubbard import ground_degeneracy

from conftest import random_mixed


def test_two_site_matrix_by_hand():
    b = make_basis(2, 1, 2)
    U, J = -3.0, 1.0
    expected = np.array([[U, -J, -J, 0], [-J, 0, 0, -J], [-J, 0, 0, -J], [0, -J, -J, U]])
    assert np.allclose(build_hamiltonian(b, HubbardParams(U, J)), expected)
    # closed-form ground energy of this 4x4 block
    _, E = ground_state(build_hamiltonian(b, HubbardParams(U, J)), return_energy=True)
    assert E == pytest.approx((U - np.sqrt(U ** 2 + 16 * J ** 2)) / 2, abs=1e-12)


@given(st.floats(-20, 30), st.integers(2, 6))
def test_hermitian(U, L):
    H = build_hamiltonian(make_basis(L, 1, 2), HubbardParams(U))
    assert np.allclose(H, H.T)


@pytest.mark.parametrize("L,N,stat", [(5, 1, "distinguishable"), (6, 2, "fermion"),
                                      (6, 3, "fermion"), (5, 2, "hcb")])
def test_noninteracting_energy(L, N, stat):
    # U = 0: twice the sum of the N lowest (fermions) or the product-state value
    eps = -2 * np.cos(np.pi * np.arange(1, L + 1) / (L + 1))
    b = make_basis(L, N, 2, stat)
    E = linalg.eigvalsh(build_hamiltonian(b, HubbardParams(0.0)))[0]
    if stat == "hcb":
        single = linalg.eigvalsh(build_hamiltonian(make_basis(L, N, 2, "fermion"),
                                                   HubbardParams(0.0)))[0] / 2
        assert E == pytest.approx(2 * single, abs=1e-10)
    else:
        assert E == pytest.approx(2 * np.sort(eps)[:N].sum(), abs=1e-10)


@pytest.mark.parametrize("U", [-15.0, 4.0])
def test_hardcore_bosons_and_fermions_share_spectrum(U):
    # open chain, nearest-neighbour hopping: Jordan-Wigner maps one onto the other
    f = linalg.eigvalsh(build_hamiltonian(make_basis(5, 2, 2, "fermion"), HubbardParams(U)))
    h = linalg.eigvalsh(build_hamiltonian(make_basis(5, 2, 2, "hcb"), HubbardParams(U)))
    assert np.allclose(f, h)


def test_three_species_couplings():
    b = make_basis(3, 1, 3)
    H = build_hamiltonian(b, HubbardParams((-1.0, -2.0, -4.0)))
    i = b.composite_index((0, 0, 0))
    assert H[i, i] == pytest.approx(-7.0)
    j = b.composite_index((0, 0, 1))
    assert H[j, j] == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        build_hamiltonian(b, HubbardParams(-1.0))


def test_offsets_shift_each_atom():
    b = make_basis(3, 1, 2)
    off = np.array([0.3, -0.1, 0.2])
    H = build_hamiltonian(b, HubbardParams(0.0, offsets=off))
    i = b.composite_index((0, 2))
    assert H[i, i] == pytest.approx(0.5)


def test_ground_state_phase_convention():
    b = make_basis(6, 1, 2)
    psi = ground_state(build_hamiltonian(b, HubbardParams(-12)))
    assert np.isrealobj(psi)
    assert psi[np.argmax(np.abs(psi))] > 0
    assert ground_degeneracy(build_hamiltonian(b, HubbardParams(-12))) == 1


def test_thermal_state_limits():
    b = make_basis(4, 1, 2)
    H = build_hamiltonian(b, HubbardParams(-6))
    cold = thermal_state(H, 200.0, b)
    psi = ground_state(H)
    assert cold.expectation(psi) == pytest.approx(1.0, abs=1e-10)
    hot = thermal_state(H, 1e-6, b)
    assert hot.purity() == pytest.approx(1 / b.dim, rel=1e-4)
    with pytest.raises(ValueError):
        thermal_state(H, 0.0, b)


def test_mixture_matches_dense():
    rng = np.random.default_rng(0)
    b = make_basis(3, 1, 2)
    rho = random_mixed(b, rng).mixed(0.3)
    dense = DensityMatrix(b, matrix=rho.matrix)
    assert rho.purity() == pytest.approx(dense.purity(), abs=1e-12)
    assert np.allclose(rho.populations(), dense.populations())
    v = rng.normal(size=b.dim)
    assert rho.expectation(v) == pytest.approx(dense.expectation(v), abs=1e-12)
    dense.validate()
    assert rho.trace() == pytest.approx(1.0)


@given(st.floats(0, 1), st.floats(0, 1))
def test_dephasing_is_affine(r1, r2):
    b = make_basis(3, 1, 2)
    rho = DensityMatrix.pure(b, ground_state(build_hamiltonian(b, HubbardParams(-5))))
    p0, p1 = rho.populations(), apply_dephasing(rho, 1.0).populations()
    for r in (r1, r2):
        assert np.allclose(apply_dephasing(rho, r).populations(), (1 - r) * p0 + r * p1)
    with pytest.raises(ValueError):
        rho.mixed(1.5)


def test_disorder_is_reproducible():
    a = disorder_realization(6, 0.05, seed=3)
    assert np.array_equal(a, disorder_realization(6, 0.05, seed=3))
    assert not np.array_equal(a, disorder_realization(6, 0.05, seed=4))
    assert np.all(disorder_realization(6, 0.0, seed=1) == 0)
    with pytest.raises(ValueError):
        disorder_realization(6, -1.0)


def test_invalid_params():
    with pytest.raises(ValueError):
        HubbardParams(1.0, J=0.0)
    with pytest.raises(ValueError):
        build_hamiltonian(make_basis(3, 1, 2), HubbardParams(0.0, offsets=[0.1, 0.2]))
