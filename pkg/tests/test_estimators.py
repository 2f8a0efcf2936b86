import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.utils.estimator_checks import parametrize_with_checks

from rerorisk.bounds import RiskParams, mse_success_probability, saturating_M
from rerorisk.estimators import GradientInversionAttack, ReconstructionRiskModel
from rerorisk.exceptions import ConfigurationError, DomainError


@pytest.fixture
def data(rng):
    X = rng.normal(size=(200, 6))
    X[0] = 0.0
    return X


@parametrize_with_checks(
    [GradientInversionAttack(random_state=0), ReconstructionRiskModel(noise_multiplier=1.0, eta=0.5)]
)
def test_sklearn_compatible(estimator, check):
    check(estimator)


class TestReconstructionRiskModel:
    def test_learns_dataset_quantities(self, data):
        model = ReconstructionRiskModel(noise_multiplier=0.5).fit(data)
        norms = np.linalg.norm(data, axis=1)
        assert model.n_features_in_ == 6
        assert model.min_norm_ == norms[norms > 0].min()
        assert model.max_norm_ == norms.max()
        assert model.data_range_ == data.max() - data.min()
        assert model.risk_params_ == RiskParams(
            n=6, noise_multiplier=0.5, min_norm=model.min_norm_, max_norm=model.max_norm_,
            data_range=model.data_range_,
        )

    def test_calibration(self, data):
        model = ReconstructionRiskModel(eta=0.05, gamma=0.1).fit(data)
        assert model.rero_mse().gamma == pytest.approx(0.1, abs=1e-12)

    def test_calibration_needs_target(self, data):
        with pytest.raises(ConfigurationError):
            ReconstructionRiskModel(eta=0.05).fit(data)

    def test_all_zero(self):
        with pytest.raises(DomainError):
            ReconstructionRiskModel(noise_multiplier=1.0).fit(np.zeros((3, 2)))

    def test_score_samples(self, data):
        model = ReconstructionRiskModel(noise_multiplier=0.3, eta=0.02).fit(data)
        scores = model.score_samples(data[1:6])
        expected = [
            mse_success_probability(model.risk_params_, np.linalg.norm(row), 0.02)
            for row in data[1:6]
        ]
        np.testing.assert_allclose(scores, expected)
        assert np.all(scores <= model.rero_mse().gamma + 1e-15)

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            ReconstructionRiskModel(noise_multiplier=1.0).eta_at(0.5)

    def test_psnr_and_corridor(self, data):
        model = ReconstructionRiskModel(noise_multiplier=0.3).fit(data)
        eta = model.eta_at(0.2)
        assert model.corridor(0.2) == (0.0, eta)
        db = 10 * math.log10(model.data_range_**2 / eta)
        assert model.rero_psnr(db).gamma == pytest.approx(0.2, abs=1e-12)

    def test_clone_keeps_params(self):
        model = ReconstructionRiskModel(noise_multiplier=0.3, clip_norm=2.0)
        assert clone(model).get_params() == model.get_params()


class TestGradientInversionAttack:
    def test_auto_rows(self, data):
        attack = GradientInversionAttack(clip_norm=5.0).fit(data)
        assert attack.m_rows_ == saturating_M(5.0, attack.min_norm_)

    def test_clip_factors(self, data):
        attack = GradientInversionAttack(clip_norm=1.0, m_rows=4, rest_norm=0.5).fit(data)
        norms = np.linalg.norm(data, axis=1)
        expected = 1 / np.maximum(1, np.sqrt(4 * norms**2 + 0.25))
        np.testing.assert_allclose(attack.clip_factors(data), expected)

    def test_error_at_floor(self, rng):
        X = rng.normal(size=(4000, 8))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        attack = GradientInversionAttack(noise_multiplier=0.2, random_state=1).fit(X)
        R = attack.transform(X)
        assert np.mean((R - X) ** 2) == pytest.approx(0.04, rel=0.03)

    def test_reproducible(self, data):
        attack = GradientInversionAttack(random_state=3).fit(data)
        assert np.array_equal(attack.transform(data), attack.transform(data))

    def test_invalid_rows(self, data):
        with pytest.raises(DomainError):
            GradientInversionAttack(m_rows=0).fit(data)
