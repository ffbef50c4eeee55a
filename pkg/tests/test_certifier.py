import json

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from entdim import (DensityMatrix, FidelityCertifier, ShotSet, WannierEnvelope, build_mode_set,
                    certify_exact, certify_shots, make_basis, make_reference, sample_momenta, sample_positions)
from entdim.sampling import ShotFormatError

from conftest import ground


@pytest.fixture(scope="module")
def shots():
    _, rho = ground(6)
    pos = sample_positions(rho, 10_000, seed=21)
    mom = sample_momenta(rho, WannierEnvelope(), 20_000, seed=22)
    return rho, pos, mom


def test_estimator_params_round_trip():
    est = FidelityCertifier(sites=4, reference="nondimer", n_bootstrap=50)
    params = est.get_params()
    assert params["sites"] == 4 and params["reference"] == "nondimer"
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(sites=5)
    assert est.sites == 5


def test_fit_returns_self_and_split_is_exact(shots):
    rho, pos, mom = shots
    est = FidelityCertifier(n_bootstrap=200)
    assert est.fit(pos, mom) is est
    r = est.result_
    assert r.bound == r.population + r.coherence
    assert r.coherence == pytest.approx(r.coherence_sum - r.csi)
    assert r.se > 0
    assert r.n_positions == 10_000 and r.n_momenta == 20_000
    assert r.seeds["positions"] == 21 and r.seeds["momenta"] == 22
    assert est.coefficients_[build_mode_set(rho.basis).space.zero] == pytest.approx(1.0)
    exact = certify_exact(rho, make_reference("mes", rho.basis)).bound
    assert abs(r.bound - exact) < 4 * r.se


def test_solvers_agree(shots):
    _, pos, mom = shots
    vals = [FidelityCertifier(solver=s, n_bootstrap=0).fit(pos, mom).bound_
            for s in ("kron", "cholesky", "cg")]
    assert np.allclose(vals, vals[0], atol=1e-9)


def test_array_inputs_match_shotsets(shots):
    rho, pos, mom = shots
    a = FidelityCertifier(n_bootstrap=0).fit(pos, mom).bound_
    b = FidelityCertifier(n_bootstrap=0).fit(pos.composite_indices(rho.basis),
                                             mom.data.reshape(len(mom), -1)).bound_
    assert a == pytest.approx(b, abs=1e-12)


def test_bootstrap_invariant_to_shot_order(shots):
    _, pos, mom = shots
    rng = np.random.default_rng(0)
    se = FidelityCertifier(n_bootstrap=100).fit(pos, mom).se_
    pp = pos.subset(rng.permutation(len(pos)))
    mm = mom.subset(rng.permutation(len(mom)))
    assert FidelityCertifier(n_bootstrap=100).fit(pp, mm).se_ == pytest.approx(se, rel=1e-12)


def test_degenerate_shots_have_zero_se():
    pos = np.zeros((500, 2, 1), dtype=int)
    mom = np.full((500, 2, 1), 0.3)
    assert FidelityCertifier(sites=4, n_bootstrap=50).fit(pos, mom).se_ == 0.0


def test_mes_shots_certify_full_dimension():
    b = make_basis(4, 1, 2)
    rho = DensityMatrix.pure(b, make_reference("mes", b).vector)
    pos = sample_positions(rho, 100_000, seed=1)
    mom = sample_momenta(rho, WannierEnvelope(), 100_000, seed=2)
    r = certify_shots(pos, mom, b, n_bootstrap=200)
    assert r.dimension_3sigma == 4


def test_maximally_mixed_shots_certify_nothing():
    b = make_basis(6, 1, 2)
    rho = DensityMatrix.maximally_mixed(b)
    pos = sample_positions(rho, 20_000, seed=1)
    mom = sample_momenta(rho, WannierEnvelope(), 20_000, seed=2)
    r = certify_shots(pos, mom, b, n_bootstrap=100)
    assert r.dimension == 1 and r.bound < 0


def test_predict_transform_score(shots):
    _, pos, mom = shots
    est = FidelityCertifier(n_bootstrap=0)
    with pytest.raises(NotFittedError):
        est.predict([0.5])
    est.fit(pos, mom)
    assert list(est.predict([0.1, 0.5, 0.7, 0.9])) == [1, 3, 5, 6]
    X = est.transform(mom.data[:10])
    assert X.shape == (10, 61 + 60)
    assert np.allclose(X[:, build_mode_set(make_basis(6, 1, 2)).zero], 1.0)
    assert est.score(pos, mom) == pytest.approx(est.bound_)


def test_lambda_scan_in_fit():
    _, rho = ground(6, U=30.0)
    pos = sample_positions(rho, 20_000, seed=3)
    mom = sample_momenta(rho, WannierEnvelope(), 20_000, seed=4)
    est = FidelityCertifier(reference="lambda", n_bootstrap=50,
                            lambda_grid=np.linspace(0.5, 0.9, 21)).fit(pos, mom)
    assert est.lambda_scan_ is not None
    assert est.reference_.lambda1 == pytest.approx(est.lambda_scan_.lambda1)
    assert est.result_.reference["kind"] == "lambda_family"


def test_input_validation():
    est = FidelityCertifier(sites=4, n_bootstrap=0)
    good_pos = np.zeros((10, 2, 1), dtype=int)
    with pytest.raises(ShotFormatError):
        est.fit(good_pos, np.zeros((10, 3, 1)))
    with pytest.raises(ShotFormatError):
        est.fit(np.full((10, 2, 1), 9), np.zeros((10, 2, 1)))
    with pytest.raises(ShotFormatError):
        est.fit(good_pos, np.full((10, 2, 1), np.nan))
    with pytest.raises(ShotFormatError):
        est.fit(ShotSet("momentum", np.zeros((3, 2, 1))), np.zeros((10, 2, 1)))
    with pytest.raises(ShotFormatError):
        est.fit(good_pos.astype(float) + 0.5, np.zeros((10, 2, 1)))


def test_result_json(shots):
    _, pos, mom = shots
    r = FidelityCertifier(n_bootstrap=20).fit(pos, mom).result_
    d = json.loads(r.to_json())
    assert d["reference"]["kind"] == "mes"
    assert len(d["ladder"]) == 6
    assert "k" in r.ladder_table().splitlines()[0]
