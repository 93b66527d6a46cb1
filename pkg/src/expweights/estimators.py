"""scikit-learn style wrappers around the weighted orthonormal basis.

``WeightedOrthonormalFeatures`` maps scalar samples to ``p_k(x) w(x)``.
``WeightedPolynomialApproximator`` fits ``P`` of degree ``<= degree`` that
minimises the discrete weighted ``L_p`` error ``||(y - P(x)) w(x)||_p`` over
the given samples (least squares for ``p=2``, a linear program otherwise).
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .approx import parse_p
from .mrs import MrsTable
from .operators import BasisPoly
from .orthopoly import eval_basis, stieltjes
from .quadrature import DTYPE
from .weights import WeightSpec, parse_weight


def _weight(spec):
    return spec if isinstance(spec, WeightSpec) else parse_weight(spec)


def _column(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"expected a single feature, got shape {X.shape}")
        X = X[:, 0]
    if X.ndim != 1:
        raise ValueError(f"expected 1-D samples, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("samples must be finite")
    return X


def _recurrence(weight, degree):
    return stieltjes(weight, MrsTable(weight), max(degree + 1, 2))


class WeightedOrthonormalFeatures(TransformerMixin, BaseEstimator):
    """Features ``[p_0(x) w(x), ..., p_degree(x) w(x)]`` (or unweighted ``p_k``)."""

    def __init__(self, weight="erdos", degree=8, weighted=True):
        self.weight = weight
        self.degree = degree
        self.weighted = weighted

    def fit(self, X, y=None):
        _column(X)
        if int(self.degree) < 0:
            raise ValueError("degree must be >= 0")
        self.weight_ = _weight(self.weight)
        self.rec_ = _recurrence(self.weight_, int(self.degree))
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        check_is_fitted(self, "rec_")
        x = _column(X).astype(DTYPE)
        B = eval_basis(self.rec_, int(self.degree), x)
        if self.weighted:
            B = B * np.exp(-self.weight_.Q(x))[:, None]
        return np.asarray(B, dtype=float)


class WeightedPolynomialApproximator(RegressorMixin, BaseEstimator):
    """Discrete weighted best ``L_p`` polynomial fit in the orthonormal basis."""

    def __init__(self, weight="erdos", degree=8, p=2):
        self.weight = weight
        self.degree = degree
        self.p = p

    def fit(self, X, y):
        x = _column(X)
        y = np.asarray(y, dtype=float).ravel()
        if y.shape != x.shape:
            raise ValueError("X and y must have the same number of samples")
        p = parse_p(self.p)
        feats = WeightedOrthonormalFeatures(self.weight, self.degree).fit(x)
        A = feats.transform(x)
        b = y * np.exp(-np.asarray(feats.weight_.Q(x.astype(DTYPE)), dtype=float))
        if p == 2:
            coef = np.linalg.lstsq(A, b, rcond=None)[0]
        else:
            coef = _lp_fit(A, b, p)
        self.features_ = feats
        self.coef_ = coef
        self.poly_ = BasisPoly(feats.rec_, coef.astype(DTYPE))
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return np.asarray(self.poly_(_column(X).astype(DTYPE)), dtype=float)

    def weighted_error(self, X, y):
        """``||(y - P) w||_p`` over the samples (max for ``p=inf``)."""
        check_is_fitted(self, "coef_")
        x = _column(X)
        w = np.exp(-np.asarray(self.features_.weight_.Q(x.astype(DTYPE)), dtype=float))
        r = np.abs((np.asarray(y, dtype=float).ravel() - self.predict(x)) * w)
        p = parse_p(self.p)
        return float(r.max()) if p == np.inf else float(np.sum(r ** p) ** (1 / p))


def _lp_fit(A, b, p):
    """Minimise ``max |A c - b|`` (``p=inf``) or ``sum |A c - b|`` (``p=1``)."""
    m, k = A.shape
    scale = max(np.abs(b).max(), 1e-300)
    b = b / scale
    if p == np.inf:
        # variables (c, t): A c - b <= t, b - A c <= t
        cost = np.r_[np.zeros(k), 1.0]
        ones = np.ones((m, 1))
        A_ub = np.block([[A, -ones], [-A, -ones]])
        bounds = [(None, None)] * k + [(0, None)]
    else:
        # variables (c, s): |A c - b| <= s_i
        cost = np.r_[np.zeros(k), np.ones(m)]
        eye = np.eye(m)
        A_ub = np.block([[A, -eye], [-A, -eye]])
        bounds = [(None, None)] * k + [(0, None)] * m
    res = linprog(cost, A_ub=A_ub, b_ub=np.r_[b, -b], bounds=bounds, method="highs")
    if res.status != 0:
        raise ArithmeticError(f"LP fit failed: {res.message}")
    return res.x[:k] * scale
