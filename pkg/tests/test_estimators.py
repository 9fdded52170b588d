import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from spde_reduce.estimators import FermiProjector, ReducedEnsemble


def test_projector_round_trip():
    proj = FermiProjector(model="allen_cahn", model_params={"n_points": 401})
    H = np.array([[8.0], [10.5], [12.0]])
    proj.fit()
    X = proj.inverse_transform(H)
    assert np.allclose(proj.transform(X), H, atol=1e-8)
    assert np.all(proj.residuals_ <= 1e-8)


def test_projector_params_and_clone():
    proj = FermiProjector(model="damped_wave", tol=1e-9)
    assert proj.get_params()["tol"] == 1e-9
    assert clone(proj).get_params() == proj.get_params()


def test_projector_validation():
    proj = FermiProjector(model="damped_wave")
    with pytest.raises(NotFittedError):
        proj.transform(np.zeros((1, 65)))
    proj.fit()
    with pytest.raises(ValueError):
        proj.transform(np.zeros((1, 10)))


def test_reduced_ensemble_predicts_mean():
    est = ReducedEnsemble(model="nls_soliton", T=10.0, n_paths=2000, seed=1).fit()
    pred = est.predict([0.0, 10.0])
    assert pred[0] == 0.0
    assert pred[1] == pytest.approx(2 / 3 * 0.01 * 10, abs=4 * np.sqrt(4 / 3 * 0.01 * 10 / 2000))
    assert est.predict_variance([10.0])[0] == pytest.approx(4 / 3 * 0.1, rel=0.1)
