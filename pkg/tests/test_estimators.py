import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import make_pipeline
from sklearn.linear_model import LinearRegression

from expweights.estimators import WeightedOrthonormalFeatures, WeightedPolynomialApproximator

X = np.linspace(-2, 2, 300)[:, None]
y = np.sin(X[:, 0])


def test_features_oracle():
    f = WeightedOrthonormalFeatures("freud:2", degree=0, weighted=False).fit(X)
    np.testing.assert_allclose(f.transform(X[:3]), (math.pi / 2) ** -0.25, rtol=1e-14)
    fw = WeightedOrthonormalFeatures("freud:2", degree=3).fit(X)
    assert fw.transform(X).shape == (300, 4)


@pytest.mark.parametrize("p", [2, "inf", 1])
def test_fit_predict(p):
    m = WeightedPolynomialApproximator("erdos", degree=8, p=p).fit(X, y)
    assert m.score(X, y) > 0.999999
    assert m.weighted_error(X, y) < 1e-5


def test_minimax_beats_least_squares_in_sup_norm():
    ls = WeightedPolynomialApproximator("erdos", 6, 2).fit(X, y)
    mm = WeightedPolynomialApproximator("erdos", 6, "inf").fit(X, y)
    ls.p = "inf"
    assert mm.weighted_error(X, y) <= ls.weighted_error(X, y) * (1 + 1e-9)


def test_sklearn_protocol():
    m = WeightedPolynomialApproximator("erdos", 5)
    assert clone(m).get_params() == m.get_params()
    pipe = make_pipeline(WeightedOrthonormalFeatures("erdos", 4), LinearRegression()).fit(X, y)
    assert pipe.predict(X).shape == (300,)
    with pytest.raises(ValueError):
        m.fit(np.zeros((3, 2)), np.zeros(3))
    with pytest.raises(ValueError):
        WeightedPolynomialApproximator("erdos", 5, p=3).fit(X, y)
