import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from ardbnn import HMCClassifier, LaplaceClassifier, MinMaxScaler, auc
from ardbnn.exceptions import InputShapeError, UnsupportedModelError

FAST_HMC = dict(n_samples=30, burn_in=30, n_leapfrog=10)


@pytest.fixture(scope="module")
def toy():
    rng = np.random.default_rng(0)
    X = rng.random((120, 3))
    y = (X[:, 0] + 0.1 * rng.standard_normal(120) > 0.5).astype(int)
    return X, y


class TestHMCClassifier:
    def test_params_round_trip(self):
        est = HMCClassifier(n_hidden=3, n_chains=2, random_state=4)
        assert clone(est).get_params() == est.get_params()
        assert est.set_params(step_size=0.02).step_size == 0.02

    def test_fit_predict(self, toy):
        X, y = toy
        est = HMCClassifier(random_state=1, **FAST_HMC).fit(X, y)
        proba = est.predict_proba(X)
        assert proba.shape == (120, 2)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0)
        assert set(est.predict(X)) <= {0, 1}
        assert est.chain_.weights.shape == (30, est.shape_.n_params)
        assert auc(proba[:, 1], y) > 0.9

    def test_string_labels(self, toy):
        X, y = toy
        labels = np.where(y == 1, "default", "paid")
        est = HMCClassifier(random_state=1, **FAST_HMC).fit(X, labels)
        assert set(est.predict(X)) <= {"default", "paid"}
        # positive class is classes_[1] = "paid"
        assert est.classes_.tolist() == ["default", "paid"]

    def test_multiple_chains_are_concatenated(self, toy):
        X, y = toy
        est = HMCClassifier(random_state=2, n_chains=3, **FAST_HMC).fit(X, y)
        assert len(est.chain_) == 90
        np.testing.assert_array_equal(est.chain_id_, np.repeat([0, 1, 2], 30))
        assert len(est.diagnostics_) == 3
        assert est.chain_.diagnostics.n_proposed == sum(d.n_proposed for d in est.diagnostics_)
        assert not np.array_equal(est.chain_.weights[0], est.chain_.weights[30])

    def test_deterministic(self, toy):
        X, y = toy
        a = HMCClassifier(random_state=5, **FAST_HMC).fit(X, y)
        b = HMCClassifier(random_state=5, **FAST_HMC).fit(X, y)
        np.testing.assert_array_equal(a.chain_.weights, b.chain_.weights)

    def test_relevance_and_non_ard(self, toy):
        X, y = toy
        est = HMCClassifier(random_state=1, **FAST_HMC).fit(X, y, feature_names=["a", "b", "c"])
        assert sorted(est.relevance_report().features) == ["a", "b", "c"]
        base = HMCClassifier(ard=False, random_state=1, **FAST_HMC).fit(X, y)
        assert np.all(base.chain_.alpha == 1.0)
        with pytest.raises(UnsupportedModelError):
            base.relevance_report()

    def test_fixed_step_size_is_not_tuned(self, toy):
        X, y = toy
        est = HMCClassifier(step_size=0.005, random_state=0, **FAST_HMC).fit(X, y)
        assert est.chain_.diagnostics.step_size == 0.005

    def test_predict_distribution(self, toy):
        X, y = toy
        est = HMCClassifier(random_state=1, **FAST_HMC).fit(X, y)
        dist = est.predict_distribution(X[:4])
        assert dist.probabilities.shape == (30, 4)
        np.testing.assert_allclose(dist.mean, est.predict_proba(X[:4])[:, 1])


class TestLaplaceClassifier:
    def test_fit_predict(self, toy):
        X, y = toy
        est = LaplaceClassifier(n_mc=100, random_state=0).fit(X, y)
        assert est.predict_proba(X).shape == (120, 2)
        # 120 rows leave a wide posterior, so the averaged probabilities are
        # moderated towards 0.5; ranking quality is the stable check
        assert auc(est.predict_proba(X)[:, 1], y) > 0.9
        assert est.relevance_report().features[0] == "x1"

    def test_predictions_reproducible(self, toy):
        X, y = toy
        est = LaplaceClassifier(n_mc=50, random_state=0).fit(X, y)
        np.testing.assert_array_equal(est.predict_proba(X), est.predict_proba(X))

    def test_pipeline_with_scaler(self, toy):
        X, y = toy
        pipe = make_pipeline(MinMaxScaler(), LaplaceClassifier(n_mc=20)).fit(X * 1000 + 5, y)
        assert pipe.predict_proba(X[:3] * 1000 + 5).shape == (3, 2)

    def test_dataframe_feature_names(self, toy):
        pd = pytest.importorskip("pandas")
        X, y = toy
        est = LaplaceClassifier(n_mc=10).fit(pd.DataFrame(X, columns=["p", "q", "r"]), y)
        assert est.feature_names_ == ("p", "q", "r")


class TestValidation:
    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            LaplaceClassifier().predict_proba(np.zeros((1, 2)))

    def test_feature_count_mismatch(self, toy):
        X, y = toy
        est = LaplaceClassifier(n_mc=10).fit(X, y)
        with pytest.raises(InputShapeError):
            est.predict(np.zeros((2, 4)))

    def test_requires_binary_labels(self, toy):
        X, _ = toy
        with pytest.raises(ValueError, match="binary"):
            LaplaceClassifier().fit(X, np.arange(120) % 3)

    def test_nan_rejected(self, toy):
        X, y = toy
        X = X.copy()
        X[0, 0] = np.nan
        with pytest.raises(ValueError):
            HMCClassifier(**FAST_HMC).fit(X, y)

    def test_feature_name_count(self, toy):
        X, y = toy
        with pytest.raises(InputShapeError):
            LaplaceClassifier().fit(X, y, feature_names=["a"])
