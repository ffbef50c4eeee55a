import json

import numpy as np
import pytest

from entdim import (DensityMatrix, ShotSet, WannierEnvelope, build_mode_set, coherence_tensor,
                    make_basis, make_reference, momentum_density, sample_momenta,
                    sample_positions)
from entdim.sampling import AncestralSampler, ShotFormatError

from conftest import ground


def test_position_counts_and_determinism():
    _, rho = ground(4)
    a = sample_positions(rho, 5000, seed=3)
    b = sample_positions(rho, 5000, seed=3)
    assert len(a) == 5000
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, sample_positions(rho, 5000, seed=4).data)


def test_position_frequencies_converge():
    _, rho = ground(3, U=-2.0)
    n = 200_000
    p_hat = sample_positions(rho, n, seed=1).populations(rho.basis)
    p = rho.populations()
    se = np.sqrt(p * (1 - p) / n) + 1e-12
    assert np.all(np.abs(p_hat - p) < 5 * se + 1e-9)


def test_worker_count_does_not_change_shots(monkeypatch):
    _, rho = ground(4)
    env = WannierEnvelope()
    monkeypatch.setenv("ENTDIM_WORKERS", "1")
    one = sample_momenta(rho, env, 9000, seed=5)
    monkeypatch.setenv("ENTDIM_WORKERS", "3")
    three = sample_momenta(rho, env, 9000, seed=5)
    assert np.array_equal(one.data, three.data)
    assert np.array_equal(one.streams, three.streams)


@pytest.mark.parametrize("L,N,stat", [(3, 1, "distinguishable"), (4, 2, "hcb"), (4, 2, "fermion")])
def test_momentum_means_match_exact_coefficients(L, N, stat):
    # sample means of every mode function agree with the closed-form expectation
    b = make_basis(L, N, 2, stat)
    ref = make_reference("mes", b)
    rho = DensityMatrix.pure(b, ref.vector)
    env = WannierEnvelope()
    M = build_mode_set(b)
    n = 60_000 if N == 1 else 30_000
    shots = sample_momenta(rho, env, n, seed=11)
    feats = M.space.features(shots.data)
    prod = feats[0][:, M.modes[:, 0]] * feats[1][:, M.modes[:, 1]]
    mean = prod.mean(axis=0)
    se_r = prod.real.std(axis=0) / np.sqrt(n) + 1e-9
    se_i = prod.imag.std(axis=0) / np.sqrt(n) + 1e-9
    dens = momentum_density(rho, env, M.space)
    C = M.space.kron_solve(coherence_tensor(rho, M.space), M.space.gram(env), inverse=False)
    exact = np.conj(C[tuple(M.modes.T)]) / dens.normalization
    z = np.concatenate([(mean.real - exact.real) / se_r, (mean.imag - exact.imag) / se_i])
    assert np.max(np.abs(z)) < 5.0


def test_product_state_fringes_vanish():
    b = make_basis(4, 1, 2)
    v = np.zeros(b.dim)
    v[b.composite_index((1, 2))] = 1.0
    rho = DensityMatrix.pure(b, v)
    n = 20_000
    shots = sample_momenta(rho, WannierEnvelope(), n, seed=2)
    M = build_mode_set(b)
    feats = M.space.features(shots.data)
    prod = feats[0][:, M.modes[:, 0]] * feats[1][:, M.modes[:, 1]]
    fringe = np.delete(prod.mean(axis=0), M.zero)
    assert np.all(np.abs(fringe) < 4 / np.sqrt(n) * np.sqrt(2))


def test_jsonl_round_trip(tmp_path):
    _, rho = ground(4)
    pos = sample_positions(rho, 50, seed=0)
    mom = sample_momenta(rho, WannierEnvelope(), 50, seed=0)
    for ss in (pos, mom):
        path = tmp_path / f"{ss.basis}.jsonl"
        ss.to_jsonl(path)
        back = ShotSet.from_jsonl(path)
        assert back.basis == ss.basis
        assert np.array_equal(back.data, ss.data)
    rec = json.loads((tmp_path / "position.jsonl").read_text().splitlines()[0])
    assert rec["basis"] == "position"
    assert all(1 <= a["site"] <= 4 for a in rec["atoms"])


@pytest.mark.parametrize("line", [
    "not json",
    '{"shot": 0, "basis": "spin", "atoms": []}',
    '{"shot": 0, "basis": "position", "atoms": [{"species": 1}]}',
    '{"shot": 0, "basis": "position", "atoms": [{"species": 2, "site": 1}]}',
])
def test_malformed_shots(tmp_path, line):
    p = tmp_path / "bad.jsonl"
    p.write_text(line + "\n")
    with pytest.raises(ShotFormatError):
        ShotSet.from_jsonl(p)


def test_mixed_basis_and_bad_sites(tmp_path):
    p = tmp_path / "mixed.jsonl"
    p.write_text('{"shot":0,"basis":"position","atoms":[{"species":1,"site":1},'
                 '{"species":2,"site":1}]}\n'
                 '{"shot":1,"basis":"momentum","atoms":[{"species":1,"kd":0.1},'
                 '{"species":2,"kd":0.2}]}\n')
    with pytest.raises(ShotFormatError):
        ShotSet.from_jsonl(p)
    ss = ShotSet("position", np.array([[[7], [0]]]))
    with pytest.raises(ShotFormatError):
        ss.composite_indices(make_basis(4, 1, 2))


def test_zero_and_negative_counts():
    _, rho = ground(3)
    assert len(sample_positions(rho, 0)) == 0
    with pytest.raises(ValueError):
        sample_momenta(rho, WannierEnvelope(), -1)


def test_cutoff_changes_only_far_terms():
    _, rho = ground(4)
    env = WannierEnvelope()
    s = AncestralSampler(rho, env)
    assert s.delta_c == pytest.approx(env.cutoff(1e-8))
    shots = s.sample(2000, seed=1)
    assert shots.meta["sigma_k"] == env.sigma_k
    assert np.all(np.isfinite(shots.data))
