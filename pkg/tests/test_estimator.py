import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from lbccn._errors import InputError, ShapeError
from lbccn.estimator import LbccnEnhancer, check_binaural_batch, check_paired


def pairs(n=2, length=4000, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(length) / 16000
    clean = np.stack([np.stack([np.sin(2 * np.pi * 200 * t + i),
                                0.7 * np.sin(2 * np.pi * 200 * t + i + 0.2)]) for i in range(n)])
    noisy = clean + 0.3 * rng.standard_normal(clean.shape)
    return noisy.astype(np.float32), clean.astype(np.float32)


def test_params_roundtrip():
    est = LbccnEnhancer(q=30, variant="masks", epochs=3)
    params = est.get_params()
    assert params["q"] == 30 and params["variant"] == "masks"
    assert clone(est).get_params() == params
    est.set_params(k=0.25)
    assert est.k == 0.25


def test_validation():
    with pytest.raises(ShapeError):
        check_binaural_batch(np.zeros((2, 3, 500)))
    with pytest.raises(ShapeError):
        check_binaural_batch(np.zeros((2, 2, 100)))
    with pytest.raises(InputError):
        check_binaural_batch(np.full((1, 2, 500), np.nan))
    with pytest.raises(InputError):
        check_binaural_batch(np.zeros((1, 2, 500), complex))
    with pytest.raises(ShapeError):
        check_paired(np.zeros((1, 2, 500)), np.zeros((1, 2, 600)))
    assert check_binaural_batch(np.zeros((2, 500))).shape == (1, 2, 500)


def test_fit_transform_score():
    X, y = pairs()
    est = LbccnEnhancer(epochs=2, batch_size=2, lr=1e-3, dtype="complex64")
    with pytest.raises(NotFittedError):
        est.transform(X)
    out = est.fit(X, y).transform(X)
    assert out.shape == X.shape and np.all(np.isfinite(out))
    assert len(est.loss_curve_) == 2 and est.n_features_in_ == 4000
    assert np.array_equal(est.predict(X), out)
    assert np.isfinite(est.score(X, y))
