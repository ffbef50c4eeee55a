import numpy as np
import pytest
from hypothesis import given, strategies as st

from entdim import WannierEnvelope, build_mode_set, build_overlap, coherence_tensor, make_basis, \
    momentum_density, project_coefficients, solve_g
from entdim.momentum import OrbitSpace
from entdim.reconstruction import CoefficientVector, OverlapMatrix, SolverError

from conftest import ground, random_mixed

CONFIGS = [(2, 1, 2, "distinguishable"), (3, 1, 2, "distinguishable"),
           (4, 2, 2, "fermion"), (4, 2, 2, "hcb"), (3, 1, 3, "distinguishable")]


def _brute_two_atom(L):
    # O >= -O lexicographically over the (2L-1) x (2L-1) shift grid
    out = []
    for a in range(-(L - 1), L):
        for b in range(-(L - 1), L):
            if (a, b) >= (-a, -b):
                out.append((a, b))
    return sorted(out)


def test_two_site_mode_set():
    M = build_mode_set(make_basis(2, 1, 2))
    assert sorted(M.labels) == [(0, 0), (0, 1), (1, -1), (1, 0), (1, 1)]
    assert M.labels[M.zero] == (0, 0)
    assert M.kind == "two-atom"


@pytest.mark.parametrize("L", [2, 3, 4, 5, 6])
def test_two_atom_mode_set_matches_brute_force(L):
    M = build_mode_set(make_basis(L, 1, 2))
    assert sorted(M.labels) == _brute_two_atom(L)
    if L == 6:
        assert len(M) == 61


@pytest.mark.parametrize("L,N,m,stat", CONFIGS + [(6, 3, 2, "hcb")])
def test_no_mode_with_its_negation(L, N, m, stat):
    M = build_mode_set(make_basis(L, N, m, stat))
    modes = {tuple(t) for t in M.modes}
    zero = tuple(M.modes[M.zero])
    for t, nt in zip(M.modes, M.negated):
        if tuple(t) != zero and tuple(t) != tuple(nt):
            assert tuple(nt) not in modes
    # every orbit tuple is represented exactly once up to negation
    space = M.space
    assert 2 * len(M) - M.self_conjugate.sum() == np.prod(space.shape)


@pytest.mark.parametrize("L,N,m,stat", CONFIGS)
def test_every_coherence_lands_in_one_mode(L, N, m, stat):
    # tensor -> g -> tensor is lossless for any Hermitian-symmetric tensor
    rng = np.random.default_rng(1)
    b = make_basis(L, N, m, stat)
    M = build_mode_set(b)
    A = coherence_tensor(random_mixed(b, rng), M.space)
    assert np.allclose(M.to_tensor(M.from_tensor(A)), A, atol=1e-12)


def test_constant_mode_is_one():
    rng = np.random.default_rng(0)
    M = build_mode_set(make_basis(4, 1, 2))
    c = project_coefficients(rng.normal(size=(50, 2, 1)) * 3, M)
    assert c[M.zero] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        project_coefficients(np.zeros((0, 2, 1)), M)


def _exact_c(rho, M, env):
    # c = E[conj-free prod Phi] from the closed-form Gram: c_O = conj(((⊗K) A)_O) / norm
    space = M.space
    K = space.gram(env)
    dens = momentum_density(rho, env, space)
    C = space.kron_solve(coherence_tensor(rho, space), K, inverse=False) / dens.normalization
    return np.conj(C[tuple(M.modes.T)])


@pytest.mark.parametrize("L,N,m,stat", CONFIGS)
@pytest.mark.parametrize("method", ["cholesky", "cg"])
def test_solve_recovers_coherences(L, N, m, stat, method):
    rng = np.random.default_rng(7)
    b = make_basis(L, N, m, stat)
    env = WannierEnvelope()
    M = build_mode_set(b)
    rho = random_mixed(b, rng)
    Q = build_overlap(M, env)
    g = solve_g(Q, CoefficientVector(_exact_c(rho, M, env)), method=method)
    A = coherence_tensor(rho, M.space)
    assert g.meta["method"] == method
    assert np.allclose(M.to_tensor(g.values), A, atol=1e-8)
    assert g[M.zero] == pytest.approx(1.0, abs=1e-12)


def test_direct_quadrature_round_trip_two_atoms():
    # c from 2D trapezoid quadrature of the momentum density itself
    b, rho = ground(3, U=-5.0)
    env = WannierEnvelope()
    M = build_mode_set(b)
    dens = momentum_density(rho, env)
    k = np.linspace(-9 * env.sigma_k, 9 * env.sigma_k, 241)
    h = k[1] - k[0]
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    pts = np.stack([K1.ravel(), K2.ravel()], axis=1).reshape(-1, 2, 1)
    w = dens(pts) * h * h
    feats = M.space.features(pts)
    prod = feats[0][:, M.modes[:, 0]] * feats[1][:, M.modes[:, 1]]
    c = w @ prod
    g = solve_g(build_overlap(M, env), c)
    assert np.allclose(M.to_tensor(g.values), coherence_tensor(rho), atol=1e-8)


def test_cholesky_and_cg_agree_on_large_system():
    b = make_basis(6, 3, 2, "hcb")
    rng = np.random.default_rng(2)
    M = build_mode_set(b)
    Q = OverlapMatrix(M, WannierEnvelope())
    c = rng.normal(size=len(M)) + 1j * rng.normal(size=len(M))
    c[M.zero] = 1.0
    c[M.self_conjugate] = c[M.self_conjugate].real
    g_cg = solve_g(Q, c, method="cg")
    g_un = solve_g(Q, c, method="cg", precondition=False, rtol=1e-12)
    assert g_cg.meta["iterations"] <= 10
    assert np.allclose(g_cg.values, g_un.values, atol=1e-6)
    small = build_mode_set(make_basis(5, 1, 2))
    Qs = OverlapMatrix(small, WannierEnvelope())
    cs = rng.normal(size=len(small)) + 0j
    assert np.allclose(solve_g(Qs, cs, method="cg").values,
                       solve_g(Qs, cs, method="cholesky").values, atol=1e-8)


def test_overlap_is_spd_and_symmetric():
    for L in range(2, 9):
        M = build_mode_set(make_basis(L, 1, 2))
        Q = OverlapMatrix(M, WannierEnvelope(1.0))
        for part in ("R", "I"):
            D = Q.dense(part)
            if D.size:
                assert np.allclose(D, D.T, atol=1e-12)
                np.linalg.cholesky(D)


def test_singular_overlap_raises():
    with pytest.raises(SolverError, match="sigma_k"):
        OverlapMatrix(build_mode_set(make_basis(6, 1, 2)), WannierEnvelope(0.05))
    with pytest.raises(ValueError):
        solve_g(OverlapMatrix(build_mode_set(make_basis(3, 1, 2)), WannierEnvelope()),
                np.ones(5), method="lu")


@given(st.floats(0.6, 5.0))
def test_matvec_matches_dense(sigma):
    M = build_mode_set(make_basis(4, 1, 2))
    Q = OverlapMatrix(M, WannierEnvelope(sigma))
    x = np.linspace(-1, 1, len(M))
    assert np.allclose(Q.matvec(x, "R"), Q.dense("R") @ x, atol=1e-10)
    xi = x[: len(Q.imag_modes)]
    assert np.allclose(Q.matvec(xi, "I"), Q.dense("I") @ xi, atol=1e-10)
    assert np.allclose(Q.precondition(Q.matvec(x, "R"), "R"), x, atol=1e-8)
