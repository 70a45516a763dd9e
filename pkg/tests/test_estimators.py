import numpy as np
import pytest
from sklearn.base import clone

from fibernli import shaping, stats
from fibernli.errors import DataError, ParameterError
from fibernli.estimators import MEGNRegressor, SymbolCovarianceEstimator
from fibernli.kernels import QuadratureConfig

P = 2.5e-4


@pytest.fixture(scope="module")
def stream():
    comp = shaping.make_composition(shaping.PMF_64QAM, shaping.ALPHABET_64QAM, 40)
    st = shaping.generate_stream(shaping.ShapingScheme(comp, 4, P), 200_000, np.random.default_rng(0))
    return comp, st.as_array()


def test_covariance_estimator_params_and_fit(stream):
    comp, X = stream
    est = SymbolCovarianceEstimator(period=10, max_tau=12, triples=False)
    assert clone(est).get_params() == est.get_params()
    est.fit(X)
    assert est.p_ch_ == pytest.approx(P, rel=1e-12)
    ana = stats.analytic_covariances(comp, 4, 12, 12, power=P)
    se = est.covariances_.stderr["S1"]
    assert np.all(np.abs(est.covariances_.k_s1[1:] - ana.k_s1[1:]) < 4.5 * se[1:])
    e = est.transform(X[:5])
    assert e.shape == (5, 2)


def test_regressor_analytic_and_empirical_agree(stream):
    comp, X = stream
    common = dict(memory=10, n_freq=5, quad=QuadratureConfig(101))
    a = MEGNRegressor(covariance="analytic", composition=comp, mapping_h=4, **common).fit(X)
    b = MEGNRegressor(covariance="empirical", period=10, **common).fit(X)
    assert b.eta_ == pytest.approx(a.eta_, rel=0.01)
    g = a.predict([0.0, 8e9])
    assert g.shape == (2,) and np.all(g > 0)
    assert g[0] == pytest.approx(a.spectrum_.g_total[2], rel=1e-9)
    assert clone(a).get_params()["memory"] == 10


def test_estimator_errors(stream):
    _, X = stream
    with pytest.raises(DataError):
        SymbolCovarianceEstimator(period=10).fit(X[:5])
    with pytest.raises(DataError):
        SymbolCovarianceEstimator(period=10).fit(np.ones((100, 3)))
    bad = X[:1000].copy()
    bad[3, 0] = np.nan
    with pytest.raises(DataError):
        SymbolCovarianceEstimator(period=10, max_tau=2).fit(bad)
    with pytest.raises(ParameterError):
        MEGNRegressor(covariance="empirical", memory=2, n_freq=3, quad=QuadratureConfig(101)).fit(X)
    with pytest.raises(ParameterError):
        MEGNRegressor(covariance="other", memory=2, n_freq=3, quad=QuadratureConfig(101)).fit(X)
    reg = MEGNRegressor(covariance="analytic", composition=stream[0], mapping_h=4, memory=2, n_freq=3,
                        quad=QuadratureConfig(101)).fit(X)
    with pytest.raises(DataError):
        reg.predict([20e9])
