"""Differential-privacy bounds on analytic gradient inversion attacks.

Closed-form success probabilities and noise calibration live in
:mod:`rerorisk.bounds`, the attack simulator in :mod:`rerorisk.mechanism`,
and scikit-learn style wrappers in :mod:`rerorisk.estimators`.
"""

from .bounds import (
    PSNR_PERFECT,
    Direction,
    Metric,
    ReRoResult,
    RiskParams,
    eta_from_gamma,
    expected_mse,
    mse_success_probability,
    multi_attack_variance,
    ncc_bound,
    optimal_M,
    psnr_exceedance_bound,
    rero_gamma_mse,
    risk_corridor,
    saturating_M,
    sigma_from_eta_gamma,
)
from .exceptions import ConfigurationError, DomainError, ReconstructionError, ShapeError
from .mechanism import AttackConfig, PrivatizedStep, TargetVector, TrialBatch, run_trials

__version__ = "0.1.0"
