"""Scikit-learn style wrappers around the success-probability model."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from . import prob

COLUMNS = ("mu", "alpha", "theta", "t", "k", "q_max")
_METHODS = ("numeric", "lower_bound", "both")


class SuccessProbability(TransformerMixin, BaseEstimator):
    """Map rows of ``(mu, alpha, theta, t, k, q_max)`` to success probabilities.

    ``method="numeric"`` integrates the residual-energy model,
    ``"lower_bound"`` uses the normal-approximation bound and ``"both"``
    returns the two as columns ``[lower_bound, numeric]``.  The model is
    closed form, so ``fit`` only validates the input width.
    """

    def __init__(self, method="numeric", quadrature="legendre"):
        self.method = method
        self.quadrature = quadrature

    def _check_params(self):
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}, got {self.method!r}")
        if self.quadrature not in ("quad", "legendre"):
            raise ValueError(f"quadrature must be 'quad' or 'legendre', got {self.quadrature!r}")

    def _validate(self, X) -> np.ndarray:
        X = check_array(X, dtype=float)
        if X.shape[1] != len(COLUMNS):
            raise ValueError(f"expected {len(COLUMNS)} columns {COLUMNS}, got {X.shape[1]}")
        if np.any(X[:, 4] != np.round(X[:, 4])) or np.any(X[:, 4] < 1):
            raise ValueError("k must be a positive integer")
        return X

    def fit(self, X, y=None):
        self._check_params()
        self.n_features_in_ = self._validate(X).shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "n_features_in_")
        self._check_params()
        X = self._validate(X)
        out = []
        for mu, alpha, th, t, k, q_max in X:
            k = int(k)
            row = []
            if self.method in ("lower_bound", "both"):
                row.append(prob.success_prob_lower_bound(mu, alpha, th, t, k, q_max))
            if self.method in ("numeric", "both"):
                row.append(prob.success_prob_numeric(mu, alpha, th, t, k, q_max, method=self.quadrature))
            out.append(row)
        return np.asarray(out, dtype=float).reshape(len(X), -1)

    def get_feature_names_out(self, input_features=None):
        names = {"numeric": ["numeric"], "lower_bound": ["lower_bound"], "both": ["lower_bound", "numeric"]}
        return np.asarray(names[self.method], dtype=object)
