"""Closed-form reconstruction-risk bounds for analytic gradient inversion.

Under the optimal attack the reconstruction of a target ``X`` is Gaussian
around ``X`` with per-coordinate variance ``sigma**2 * ||X||**2``, so the
reconstruction MSE is a scaled chi-squared variable with ``N`` degrees of
freedom. Everything here is a rearrangement of that fact.

Two query granularities are exposed. Per-target queries take the exact norm
of one target; dataset-level queries use ``RiskParams.min_norm`` (the
smallest non-zero norm in the dataset), which is the worst case because the
success probability decreases in the target norm.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

from .exceptions import ConfigurationError, DomainError
from .specfun import inverse_regularized_gamma_p, regularized_gamma_p

__all__ = [
    "Metric",
    "Direction",
    "RiskParams",
    "ReRoResult",
    "PSNR_PERFECT",
    "mse_success_probability",
    "rero_gamma_mse",
    "eta_from_gamma",
    "sigma_from_eta_gamma",
    "psnr_to_mse_threshold",
    "psnr_exceedance_bound",
    "expected_mse",
    "optimal_M",
    "saturating_M",
    "multi_attack_variance",
    "ncc_bound",
    "risk_corridor",
]

#: PSNR score of a reconstruction with exactly zero MSE.
PSNR_PERFECT = math.inf


class Metric(enum.Enum):
    MSE = "mse"
    NEG_PSNR = "neg_psnr"
    NCC = "ncc"


class Direction(enum.Enum):
    ERROR_AT_MOST_ETA = "error_at_most_eta"
    SCORE_AT_LEAST_ETA = "score_at_least_eta"


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise DomainError(f"{name} must be a finite positive number, got {value!r}")
    return value


def _non_negative(name: str, value: float) -> float:
    value = float(value)
    if not (math.isfinite(value) and value >= 0):
        raise DomainError(f"{name} must be a finite non-negative number, got {value!r}")
    return value


def _open_probability(name: str, value: float) -> float:
    value = float(value)
    if not (0.0 < value < 1.0):
        raise DomainError(f"{name} must lie in the open interval (0, 1), got {value!r}")
    return value


def _positive_int(name: str, value) -> int:
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise DomainError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class RiskParams:
    """Privacy and data context of a risk query.

    Attributes
    ----------
    n : int
        Number of entries of a target vector.
    noise_multiplier : float
        Gaussian-mechanism noise multiplier sigma.
    clip_norm : float
        DP-SGD clipping norm C.
    min_norm : float
        Smallest l2 norm over the non-zero targets of the dataset.
    max_norm : float, optional
        Largest l2 norm, for per-target sweeps.
    data_range : float, optional
        ``max`` over the dataset of the largest entry minus ``min`` of the
        smallest entry. Only the PSNR bound needs it.
    """

    n: int
    noise_multiplier: float
    clip_norm: float = 1.0
    min_norm: float = 1.0
    max_norm: Optional[float] = None
    data_range: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "n", _positive_int("n", self.n))
        object.__setattr__(
            self, "noise_multiplier", _positive("noise_multiplier", self.noise_multiplier)
        )
        object.__setattr__(self, "clip_norm", _positive("clip_norm", self.clip_norm))
        object.__setattr__(self, "min_norm", _positive("min_norm", self.min_norm))
        if self.max_norm is not None:
            max_norm = _positive("max_norm", self.max_norm)
            if max_norm < self.min_norm:
                raise DomainError("max_norm must be >= min_norm")
            object.__setattr__(self, "max_norm", max_norm)
        if self.data_range is not None:
            object.__setattr__(self, "data_range", _non_negative("data_range", self.data_range))


@dataclass(frozen=True)
class ReRoResult:
    """An (eta, gamma) reconstruction-robustness certificate."""

    metric: Metric
    eta: float
    gamma: float
    direction: Direction

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0):
            raise DomainError("gamma must lie in [0, 1]")
        if self.metric is Metric.MSE and not self.eta >= 0:
            raise DomainError("an MSE threshold must be >= 0")


def _mse_cdf(n: int, sigma: float, norm: float, eta: float) -> float:
    if eta == 0.0:
        return 0.0
    if math.isinf(eta):
        return 1.0
    return regularized_gamma_p(n / 2.0, n * eta / (2.0 * sigma**2 * norm**2))


def mse_success_probability(params: RiskParams, target_norm: float, eta: float) -> float:
    """Probability that the optimal reconstruction of one target has MSE <= eta."""
    target_norm = _positive("target_norm", target_norm)
    eta = float(eta)
    if not eta >= 0:
        raise DomainError(f"eta must be >= 0, got {eta!r}")
    return _mse_cdf(params.n, params.noise_multiplier, target_norm, eta)


def rero_gamma_mse(params: RiskParams, eta: float) -> ReRoResult:
    """Dataset-level MSE certificate: worst case over targets with norm >= min_norm."""
    gamma = mse_success_probability(params, params.min_norm, eta)
    return ReRoResult(Metric.MSE, float(eta), gamma, Direction.ERROR_AT_MOST_ETA)


def eta_from_gamma(params: RiskParams, gamma: float) -> float:
    """MSE threshold at which the dataset-level success probability equals ``gamma``."""
    gamma = _open_probability("gamma", gamma)
    n = params.n
    sigma = params.noise_multiplier
    return (2.0 * sigma**2 / n) * params.min_norm**2 * inverse_regularized_gamma_p(n / 2.0, gamma)


def sigma_from_eta_gamma(n: int, min_norm: float, eta: float, gamma: float) -> float:
    """Noise multiplier that caps the success probability at ``gamma`` for threshold ``eta``."""
    n = _positive_int("n", n)
    min_norm = _positive("min_norm", min_norm)
    eta = _positive("eta", eta)
    gamma = _open_probability("gamma", gamma)
    quantile = inverse_regularized_gamma_p(n / 2.0, gamma)
    return math.sqrt(n * eta / (2.0 * min_norm**2 * quantile))


def psnr_to_mse_threshold(eta_db: float, data_range: float) -> float:
    """MSE level equivalent to a PSNR of ``eta_db`` decibels for the given range."""
    return 10.0 ** (-float(eta_db) / 10.0) * float(data_range) ** 2


def psnr_exceedance_bound(params: RiskParams, eta_db: float) -> ReRoResult:
    """Upper bound on P(PSNR >= eta_db), valid for every non-zero target."""
    if params.data_range is None:
        raise ConfigurationError("the PSNR bound needs data_range")
    if params.data_range <= 0:
        raise DomainError("data_range must be > 0 for the PSNR bound")
    eta_db = float(eta_db)
    if math.isnan(eta_db):
        raise DomainError("eta_db must not be NaN")
    threshold = psnr_to_mse_threshold(eta_db, params.data_range)
    gamma = _mse_cdf(params.n, params.noise_multiplier, params.min_norm, threshold)
    return ReRoResult(Metric.NEG_PSNR, eta_db, gamma, Direction.SCORE_AT_LEAST_ETA)


def expected_mse(sigma: float, target_norm: float) -> float:
    """Mean reconstruction MSE of the optimal attack."""
    return float(sigma) ** 2 * float(target_norm) ** 2


def optimal_M(clip_norm: float, min_norm: float) -> int:
    """Row count ``max(1, ceil(C / m))`` prescribed for the attack's linear layer.

    With unit loss derivatives the global gradient norm is ``sqrt(M) * ||X||``,
    so this row count saturates clipping only when ``C <= m``. See
    :func:`saturating_M` for the count that reaches the variance floor.
    """
    clip_norm = _positive("clip_norm", clip_norm)
    min_norm = _positive("min_norm", min_norm)
    return max(1, math.ceil(clip_norm / min_norm))


def saturating_M(clip_norm: float, min_norm: float) -> int:
    """Smallest row count for which unit loss derivatives trigger clipping on every target.

    ``sqrt(M) * m >= C`` makes the clip factor ``C / (sqrt(M) ||X||)`` and the
    per-coordinate variance exactly ``sigma**2 * ||X||**2``.
    """
    clip_norm = _positive("clip_norm", clip_norm)
    min_norm = _positive("min_norm", min_norm)
    ratio = clip_norm / min_norm
    m_rows = max(1, math.ceil(ratio * ratio))
    # guard against the square rounding up past an exact integer
    if m_rows > 1 and math.sqrt(m_rows - 1) * min_norm >= clip_norm:
        m_rows -= 1
    return m_rows


def multi_attack_variance(sigma: float, target_norm: float, k: int) -> float:
    """Per-coordinate variance after averaging ``k`` independent optimal reconstructions."""
    k = _positive_int("k", k)
    return expected_mse(sigma, target_norm) / k


def ncc_bound(
    sigma: float, target_norm: float, n: int, var_x: Optional[float] = None
) -> float:
    """Correlation between a target and its optimal reconstruction.

    With ``var_x`` (the spread of the target's entries) the exact value
    ``sqrt(1 / (1 + sigma**2 ||X||**2 / var_x))`` is returned; without it the
    dimension-only ceiling ``sqrt(1 / (1 + sigma**2 n))``.
    """
    sigma = _positive("sigma", sigma)
    n = _positive_int("n", n)
    if var_x is None:
        return math.sqrt(1.0 / (1.0 + sigma**2 * n))
    target_norm = _positive("target_norm", target_norm)
    var_x = _positive("var_x", var_x)
    ceiling = target_norm**2 / n
    if var_x > ceiling * (1.0 + 1e-12):
        raise DomainError(
            f"var_x={var_x!r} exceeds ||X||^2/N={ceiling!r}; the entry variance of an "
            "N-vector is at most its squared norm over N"
        )
    return math.sqrt(1.0 / (1.0 + sigma**2 * target_norm**2 / var_x))


def risk_corridor(params: RiskParams, gamma_prior: float) -> tuple[float, float]:
    """Interval ``[0, eta(gamma_prior)]`` of errors discounted by a candidate set.

    ``gamma_prior`` is the perfect-reconstruction success probability of an
    identification-based bound evaluated elsewhere.
    """
    return (0.0, eta_from_gamma(params, gamma_prior))
