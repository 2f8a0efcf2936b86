"""scikit-learn compatible front ends.

``ReconstructionRiskModel`` learns the dataset quantities the bounds depend
on (smallest non-zero norm, value range) and optionally calibrates the noise
multiplier to a target ``(eta, gamma)``. ``GradientInversionAttack`` is a
transformer that returns the optimal attacker's reconstruction of every row
after one simulated DP-SGD step.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import bounds
from .exceptions import ConfigurationError, DomainError


def _row_norms(X):
    return np.linalg.norm(X, axis=1)


def _check_width(estimator, X):
    if X.shape[1] != estimator.n_features_in_:
        raise ValueError(
            f"X has {X.shape[1]} features, but {type(estimator).__name__} "
            f"is expecting {estimator.n_features_in_} features as input"
        )


def _min_nonzero_norm(X):
    norms = _row_norms(X)
    nonzero = norms[norms > 0]
    if nonzero.size == 0:
        raise DomainError("the dataset contains only zero vectors")
    return float(nonzero.min()), float(norms.max())


class ReconstructionRiskModel(BaseEstimator):
    """Reconstruction-robustness bounds fitted to a dataset.

    Parameters
    ----------
    noise_multiplier : float, optional
        Noise multiplier of the Gaussian mechanism. When omitted, ``eta`` and
        ``gamma`` must be given and the multiplier is calibrated during fit.
    eta : float, optional
        MSE threshold used by calibration and as default in ``score_samples``.
    gamma : float, optional
        Tolerated success probability used by calibration.
    clip_norm : float, default=1.0
        DP-SGD clipping norm.
    """

    def __init__(self, noise_multiplier=None, eta=None, gamma=None, clip_norm=1.0):
        self.noise_multiplier = noise_multiplier
        self.eta = eta
        self.gamma = gamma
        self.clip_norm = clip_norm

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        self.n_features_in_ = X.shape[1]
        self.min_norm_, self.max_norm_ = _min_nonzero_norm(X)
        self.data_range_ = float(X.max() - X.min())
        if self.noise_multiplier is None:
            if self.eta is None or self.gamma is None:
                raise ConfigurationError("give noise_multiplier, or both eta and gamma")
            self.noise_multiplier_ = bounds.sigma_from_eta_gamma(
                self.n_features_in_, self.min_norm_, self.eta, self.gamma
            )
        else:
            self.noise_multiplier_ = float(self.noise_multiplier)
        return self

    @property
    def risk_params_(self) -> bounds.RiskParams:
        check_is_fitted(self, "noise_multiplier_")
        return bounds.RiskParams(
            n=self.n_features_in_,
            noise_multiplier=self.noise_multiplier_,
            clip_norm=self.clip_norm,
            min_norm=self.min_norm_,
            max_norm=self.max_norm_,
            data_range=self.data_range_,
        )

    def score_samples(self, X, eta=None):
        """Per-row probability that the optimal attack reaches MSE <= eta."""
        check_is_fitted(self, "noise_multiplier_")
        X = check_array(X, dtype=float)
        _check_width(self, X)
        eta = self.eta if eta is None else eta
        if eta is None:
            raise ConfigurationError("no eta given")
        params = self.risk_params_
        return np.array(
            [bounds.mse_success_probability(params, norm, eta) for norm in _row_norms(X)]
        )

    def rero_mse(self, eta=None) -> bounds.ReRoResult:
        eta = self.eta if eta is None else eta
        return bounds.rero_gamma_mse(self.risk_params_, eta)

    def rero_psnr(self, eta_db) -> bounds.ReRoResult:
        return bounds.psnr_exceedance_bound(self.risk_params_, eta_db)

    def eta_at(self, gamma) -> float:
        return bounds.eta_from_gamma(self.risk_params_, gamma)

    def corridor(self, gamma_prior):
        return bounds.risk_corridor(self.risk_params_, gamma_prior)


class GradientInversionAttack(TransformerMixin, BaseEstimator):
    """Optimal analytic gradient inversion against one DP-SGD step per row.

    The attacker's layer uses unit loss derivatives and ``m_rows`` rows;
    ``"auto"`` picks the smallest count that saturates clipping on every
    non-zero training row, which attains the minimum reconstruction variance.
    Scales are assumed known to the attacker.

    Parameters
    ----------
    noise_multiplier : float, default=1.0
    clip_norm : float, default=1.0
    m_rows : int or "auto", default="auto"
    rest_norm : float, default=0.0
        Norm of gradients from the rest of the network.
    include_bias : bool, default=False
    random_state : int or None
    """

    def __init__(
        self,
        noise_multiplier=1.0,
        clip_norm=1.0,
        m_rows="auto",
        rest_norm=0.0,
        include_bias=False,
        random_state=None,
    ):
        self.noise_multiplier = noise_multiplier
        self.clip_norm = clip_norm
        self.m_rows = m_rows
        self.rest_norm = rest_norm
        self.include_bias = include_bias
        self.random_state = random_state

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.non_deterministic = True
        return tags

    def _more_tags(self):  # scikit-learn < 1.6
        return {"non_deterministic": True}

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        self.n_features_in_ = X.shape[1]
        self.min_norm_, _ = _min_nonzero_norm(X)
        if self.m_rows == "auto":
            self.m_rows_ = bounds.saturating_M(self.clip_norm, self.min_norm_)
        else:
            self.m_rows_ = int(self.m_rows)
            if self.m_rows_ < 1:
                raise DomainError("m_rows must be >= 1")
        return self

    def clip_factors(self, X):
        """DP-SGD clip factor of each row's training step."""
        check_is_fitted(self, "m_rows_")
        X = check_array(X, dtype=float)
        _check_width(self, X)
        sq = self.m_rows_ * _row_norms(X) ** 2 + self.rest_norm**2
        if self.include_bias:
            sq = sq + self.m_rows_
        return 1.0 / np.maximum(1.0, np.sqrt(sq) / self.clip_norm)

    def transform(self, X):
        check_is_fitted(self, "m_rows_")
        X = check_array(X, dtype=float)
        _check_width(self, X)
        beta = self.clip_factors(X)
        rng = np.random.default_rng(self.random_state)
        # the mean of m_rows iid N(0, 1) rows is N(0, 1/m_rows)
        std = self.clip_norm * self.noise_multiplier / (beta * np.sqrt(self.m_rows_))
        return X + std[:, None] * rng.standard_normal(X.shape)
