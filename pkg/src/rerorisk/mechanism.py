"""Monte Carlo simulator of one DP-SGD step attacked through a linear layer.

The attacker's layer has ``M`` rows. Row ``j`` of its weight gradient stores
``s_j * X`` where ``s_j`` is the clip factor times the loss derivative of
output ``j``. DP-SGD adds isotropic Gaussian noise with standard deviation
``C * sigma`` to every gradient coordinate. Gradients of the rest of the
network never enter the reconstruction, so they are represented only by
their norm, which is added in quadrature to the clipped global norm.

Randomness: trials are grouped in fixed blocks of :data:`TRIALS_PER_STREAM`
and block ``b`` draws from ``SeedSequence(seed, spawn_key=(0, b))``. A trial's
values therefore depend only on ``(seed, trial index)`` and not on how
blocks are scheduled across threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bounds import PSNR_PERFECT, RiskParams
from .exceptions import ConfigurationError, DomainError, ReconstructionError, ShapeError
from .specfun import regularized_gamma_p

__all__ = [
    "TRIALS_PER_STREAM",
    "TargetVector",
    "AttackConfig",
    "PrivatizedStep",
    "TrialBatch",
    "global_gradient_norm",
    "clip_factor",
    "reconstruction_variance",
    "privatize_step",
    "reconstruct",
    "sample_reconstructions",
    "run_trials",
    "aggregate_reconstructions",
    "mse",
    "psnr",
    "ncc",
    "ks_statistic",
    "ks_critical_value",
]

TRIALS_PER_STREAM = 1024


@dataclass(frozen=True, eq=False)
class TargetVector:
    """A reconstruction target with its cached Euclidean norm."""

    entries: np.ndarray
    norm: float = field(init=False)

    def __post_init__(self):
        x = np.array(self.entries, dtype=float)
        if x.ndim != 1 or x.size == 0:
            raise ShapeError("a target must be a non-empty 1-d vector")
        if not np.all(np.isfinite(x)):
            raise DomainError("target entries must be finite")
        x.setflags(write=False)
        object.__setattr__(self, "entries", x)
        object.__setattr__(self, "norm", float(np.linalg.norm(x)))

    @classmethod
    def on_sphere(cls, n: int, norm: float, rng: np.random.Generator) -> "TargetVector":
        """Uniformly random direction in R^n scaled to ``norm``."""
        if norm <= 0:
            raise DomainError("target norm must be > 0")
        direction = rng.standard_normal(n)
        while not np.any(direction):
            direction = rng.standard_normal(n)
        return cls(direction / np.linalg.norm(direction) * norm)

    @property
    def n(self) -> int:
        return self.entries.size

    @property
    def value_range(self) -> float:
        return float(self.entries.max() - self.entries.min())

    def require_nonzero(self) -> None:
        if self.norm == 0:
            raise DomainError("the zero vector cannot be a reconstruction target")


@dataclass(frozen=True)
class AttackConfig:
    """Knobs of the simulated attack and of the DP-SGD step it targets.

    ``loss_derivatives`` defaults to all ones, the derivative of the summed
    layer output. ``include_bias`` adds the bias gradients (equal to the loss
    derivatives) to the clipped norm.
    """

    m_rows: int = 1
    clip_norm: float = 1.0
    noise_multiplier: float = 1.0
    rest_norm: float = 0.0
    loss_derivatives: Optional[tuple] = None
    include_bias: bool = False
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.m_rows, bool) or int(self.m_rows) != self.m_rows or self.m_rows < 1:
            raise DomainError("m_rows must be a positive integer")
        object.__setattr__(self, "m_rows", int(self.m_rows))
        if not (math.isfinite(self.clip_norm) and self.clip_norm > 0):
            raise DomainError("clip_norm must be > 0")
        if not (math.isfinite(self.noise_multiplier) and self.noise_multiplier > 0):
            raise DomainError("noise_multiplier must be > 0")
        if not (math.isfinite(self.rest_norm) and self.rest_norm >= 0):
            raise DomainError("rest_norm must be >= 0")
        if self.loss_derivatives is not None:
            d = tuple(float(v) for v in self.loss_derivatives)
            if len(d) != self.m_rows:
                raise ShapeError("loss_derivatives needs one entry per row")
            if not any(d):
                raise ConfigurationError("at least one loss derivative must be non-zero")
            object.__setattr__(self, "loss_derivatives", d)
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must fit in an unsigned 64-bit integer")

    @property
    def derivatives(self) -> np.ndarray:
        if self.loss_derivatives is None:
            return np.ones(self.m_rows)
        return np.asarray(self.loss_derivatives, dtype=float)

    @property
    def noise_std(self) -> float:
        return self.clip_norm * self.noise_multiplier


@dataclass(frozen=True, eq=False)
class PrivatizedStep:
    """Observed noisy weight rows and bias entries of the attack layer."""

    weight_rows: np.ndarray
    bias_entries: np.ndarray
    true_scales: np.ndarray
    clip_factor: float


@dataclass(frozen=True, eq=False)
class TrialBatch:
    """Per-trial reconstruction errors of one Monte Carlo run."""

    mse: np.ndarray
    psnr: np.ndarray
    trials: int
    seed: int
    config: AttackConfig

    @property
    def finite_psnr(self) -> np.ndarray:
        """PSNR values with the perfect-reconstruction sentinel removed."""
        return self.psnr[self.psnr != PSNR_PERFECT]


def global_gradient_norm(target: TargetVector, config: AttackConfig) -> float:
    """l2 norm of the unclipped global gradient of one training step."""
    target.require_nonzero()
    d2 = float(np.sum(config.derivatives**2))
    sq = d2 * target.norm**2 + config.rest_norm**2
    if config.include_bias:
        sq += d2
    return math.sqrt(sq)


def clip_factor(target: TargetVector, config: AttackConfig) -> float:
    """DP-SGD clipping multiplier ``1 / max(1, ||G|| / C)``."""
    return 1.0 / max(1.0, global_gradient_norm(target, config) / config.clip_norm)


def reconstruction_variance(target: TargetVector, config: AttackConfig) -> float:
    """Per-coordinate variance of the sample-mean reconstruction with known scales."""
    scales = clip_factor(target, config) * config.derivatives
    if np.any(scales == 0):
        raise ReconstructionError("a zero scale makes the sample mean undefined")
    return float(config.noise_std**2 * np.sum(1.0 / scales**2) / config.m_rows**2)


def _default_rng(config: AttackConfig) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0, 0)))


def privatize_step(
    target: TargetVector,
    config: AttackConfig,
    rng: Optional[np.random.Generator] = None,
) -> PrivatizedStep:
    """Draw the privatized weight rows and bias entries of one step."""
    beta = clip_factor(target, config)
    scales = beta * config.derivatives
    rng = _default_rng(config) if rng is None else rng
    std = config.noise_std
    rows = scales[:, None] * target.entries[None, :]
    rows = rows + std * rng.standard_normal((config.m_rows, target.n))
    bias = scales + std * rng.standard_normal(config.m_rows)
    return PrivatizedStep(rows, bias, scales, beta)


def _check_scales(scales, m_rows: int) -> np.ndarray:
    scales = np.asarray(scales, dtype=float)
    if scales.shape != (m_rows,):
        raise ShapeError(f"expected {m_rows} scales, got shape {scales.shape}")
    if np.any(scales == 0):
        raise ReconstructionError("a zero scale makes the sample mean undefined")
    return scales


def reconstruct(step: PrivatizedStep, scales=None) -> np.ndarray:
    """Sample mean of the rescaled weight rows.

    ``scales`` defaults to the true scales, the attacker's best case.
    """
    if scales is None:
        scales = step.true_scales
    scales = _check_scales(scales, step.weight_rows.shape[0])
    return np.mean(step.weight_rows / scales[:, None], axis=0)


def _reconstruct_block(
    target: TargetVector,
    config: AttackConfig,
    true_scales: np.ndarray,
    scales: np.ndarray,
    block: int,
    size: int,
) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0, block)))
    noise = rng.standard_normal((size, config.m_rows, target.n))
    rows = true_scales[None, :, None] * target.entries[None, None, :]
    rows = rows + config.noise_std * noise
    return np.mean(rows / scales[None, :, None], axis=1)


def sample_reconstructions(
    target: TargetVector,
    config: AttackConfig,
    trials: int,
    scales=None,
    n_jobs: int = 1,
) -> np.ndarray:
    """Reconstructions of ``trials`` independent privatized steps, shape (trials, N)."""
    if isinstance(trials, bool) or int(trials) != trials or trials < 1:
        raise DomainError("trials must be a positive integer")
    trials = int(trials)
    true_scales = clip_factor(target, config) * config.derivatives
    scales = true_scales if scales is None else scales
    scales = _check_scales(scales, config.m_rows)

    n_blocks = -(-trials // TRIALS_PER_STREAM)
    sizes = [min(TRIALS_PER_STREAM, trials - b * TRIALS_PER_STREAM) for b in range(n_blocks)]

    def work(b):
        return _reconstruct_block(target, config, true_scales, scales, b, sizes[b])

    if n_jobs == 1 or n_blocks == 1:
        parts = [work(b) for b in range(n_blocks)]
    else:
        workers = None if n_jobs in (None, -1) else int(n_jobs)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, range(n_blocks)))
    return np.concatenate(parts, axis=0)


def mse(target, estimates) -> np.ndarray:
    """Mean squared error between a target and one or more estimates."""
    x = target.entries if isinstance(target, TargetVector) else np.asarray(target, float)
    est = np.asarray(estimates, dtype=float)
    if est.shape[-1] != x.shape[-1]:
        raise ShapeError("estimate and target dimensions differ")
    return np.mean((est - x) ** 2, axis=-1)


def psnr(mse_values, data_range: float) -> np.ndarray:
    """``10 log10(range**2 / MSE)``; zero MSE maps to :data:`PSNR_PERFECT`."""
    m = np.asarray(mse_values, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 10.0 * np.log10(float(data_range) ** 2) - 10.0 * np.log10(m)
    return np.where(m == 0, PSNR_PERFECT, out)


def ncc(x, y) -> float:
    """Pearson correlation between the entries of two vectors."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ShapeError("ncc needs equally shaped vectors")
    xc = x - x.mean()
    yc = y - y.mean()
    return float(np.dot(xc, yc) / math.sqrt(np.dot(xc, xc) * np.dot(yc, yc)))


def run_trials(
    target: TargetVector,
    config: AttackConfig,
    trials: int,
    scales=None,
    data_range: Optional[float] = None,
    n_jobs: int = 1,
) -> TrialBatch:
    """Repeat privatization and reconstruction ``trials`` times and record the errors.

    PSNR uses the target's own value range unless ``data_range`` is given.
    """
    target.require_nonzero()
    recon = sample_reconstructions(target, config, trials, scales=scales, n_jobs=n_jobs)
    errors = mse(target, recon)
    rng_value = target.value_range if data_range is None else float(data_range)
    scores = psnr(errors, rng_value)
    return TrialBatch(errors, scores, int(trials), int(config.seed), config)


def aggregate_reconstructions(estimates: Sequence) -> np.ndarray:
    """Coordinate-wise mean of reconstructions of the same target."""
    arrays = [np.asarray(e, dtype=float) for e in estimates]
    if not arrays:
        raise ShapeError("need at least one estimate")
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise ShapeError("all estimates must have the same dimension")
    return np.mean(np.stack(arrays), axis=0)


def ks_statistic(batch: TrialBatch, params: RiskParams, target_norm: float) -> float:
    """Kolmogorov-Smirnov distance between the batch MSEs and the scaled chi-squared law."""
    values = np.sort(batch.mse)
    k = values.size
    if k == 0:
        raise DomainError("the batch is empty")
    n = params.n
    scale = 2.0 * params.noise_multiplier**2 * float(target_norm) ** 2
    if scale == 0.0:
        # sigma**2 underflowed: the law is a point mass at zero
        return float(np.mean(values > 0))
    cdf = regularized_gamma_p(n / 2.0, n * values / scale)
    i = np.arange(1, k + 1)
    return float(max(np.max(i / k - cdf), np.max(cdf - (i - 1) / k)))


def ks_critical_value(trials: int, alpha: float = 0.05) -> float:
    """Approximate one-sample KS critical value (Stephens' small-sample correction)."""
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    root = math.sqrt(trials)
    return c / (root + 0.12 + 0.11 / root)
