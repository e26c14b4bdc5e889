import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import FunctionTransformer

from harvest_assoc import prob
from harvest_assoc.estimators import COLUMNS, SuccessProbability

X = np.array([
    [0.03, 10.0, 1.0, 0.625, 50, 7.0],
    [0.12, 15.0, 2.0, 0.3, 40, 6.0],
    [0.09, 10.0, 0.5, 0.8, 69, 9.0],
])


def test_numeric_matches_function():
    out = SuccessProbability().fit(X).transform(X)
    assert out.shape == (3, 1)
    for row, val in zip(X, out[:, 0]):
        mu, a, th, t, k, q = row
        assert val == prob.success_prob_numeric(mu, a, th, t, int(k), q, method="legendre")


def test_both_columns_and_names():
    est = SuccessProbability(method="both", quadrature="quad")
    out = est.fit_transform(X)
    assert out.shape == (3, 2)
    assert list(est.get_feature_names_out()) == ["lower_bound", "numeric"]
    assert np.all(out[:, 0] <= out[:, 1])


def test_lower_bound_only():
    out = SuccessProbability(method="lower_bound").fit(X).transform(X[:1])
    assert out[0, 0] == prob.success_prob_lower_bound(0.03, 10.0, 1.0, 0.625, 50, 7.0)


def test_clone_and_params():
    est = SuccessProbability(method="both")
    twin = clone(est)
    assert twin.get_params() == {"method": "both", "quadrature": "legendre"}
    assert not hasattr(twin, "n_features_in_")


def test_unfitted_and_bad_input():
    with pytest.raises(NotFittedError):
        SuccessProbability().transform(X)
    with pytest.raises(ValueError, match="method"):
        SuccessProbability(method="exact").fit(X)
    with pytest.raises(ValueError, match="columns"):
        SuccessProbability().fit(X[:, :5])
    bad = X.copy()
    bad[0, 4] = 2.5
    with pytest.raises(ValueError, match="k must"):
        SuccessProbability().fit(bad)
    with pytest.raises(ValueError):
        SuccessProbability().fit([[np.nan] * len(COLUMNS)])


def test_in_pipeline():
    pipe = make_pipeline(FunctionTransformer(), SuccessProbability())
    assert pipe.fit_transform(X).shape == (3, 1)
