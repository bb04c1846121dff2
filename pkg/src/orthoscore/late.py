"""Binary-instrument causal-effect estimation via complier reweighting.

The target is beta0 = E[(Y(1) - Y(0)) * 1{complier}], the complier
average effect scaled by the complier probability.  Identification
rests on the signed kappa weights built from the instrument propensity
g0(x) = P(Z=1 | X=x), whose log-odds f0 is the first nuisance.  Three
score variants are provided:

* moment:     (kappa1 - kappa0) * y - beta                (not orthogonal)
* robust:     moment plus the correction
              -(g - z)/(g(1-g)) * h(x),                   (orthogonal)
  where h0(x) = E[Y * ((e^f0 - e^-f0) Z - e^f0) | X=x] is estimated by
  regressing that pseudo-outcome (built with f-hat) on x;
* regression: kappa1 * mu1(x) - kappa0 * mu0(x) - beta, with the local
  average response functions mu_t fitted by kappa-weighted least squares.

``late_crossfit`` runs the two-fold cross-fitting algorithm: nuisances
fitted on one fold, the estimating equation solved on the other, fold
estimates averaged.  All three scores are linear in beta with slope -1,
so the solve is a fold mean.  Confidence intervals use the robust-score
variance for the moment method too (the two estimators share one
asymptotic variance); regression methods use their own residuals.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import Dataset, EstimationResult, FunctionEstimate, derive_seed, split_folds
from .learners import (MlpArchitecture, TrainConfig, expit, fit_least_squares,
                       fit_logistic, fit_mlp, pipeline_train_config)

__all__ = [
    "METHODS",
    "LateConfig",
    "LateNuisance",
    "clip_propensity",
    "kappa",
    "estimate_log_odds",
    "estimate_h",
    "robust_score",
    "moment_score",
    "regression_score",
    "fit_larf",
    "solve_beta_linear",
    "estimate_variance",
    "late_crossfit",
]

METHODS = ("robust_np", "robust_lr", "moment", "reg_np", "reg_lr")


@dataclass(frozen=True)
class LateConfig:
    """Method choice plus learner settings for the IV pipeline."""

    method: str = "robust_lr"
    clip_epsilon: float = 0.01
    level: float = 0.95
    arch: MlpArchitecture = field(default_factory=MlpArchitecture)
    train: TrainConfig = field(default_factory=pipeline_train_config)
    log_odds_learner: str = "auto"  # auto | logistic | mlp
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method: {self.method!r}")
        if not (0.0 < self.clip_epsilon < 0.5):
            raise ValueError("clip_epsilon must lie in (0, 0.5)")
        if self.log_odds_learner not in ("auto", "logistic", "mlp"):
            raise ValueError("log_odds_learner must be auto, logistic, or mlp")

    @property
    def family(self) -> str:
        """Learner tier: nonparametric for *_np, linear otherwise."""
        return "np" if self.method.endswith("_np") else "lr"


@dataclass(frozen=True)
class LateNuisance:
    """Fitted nuisances for one fold."""

    f_hat: FunctionEstimate
    clip_epsilon: float
    h_hat: FunctionEstimate | None = None
    mu0_hat: FunctionEstimate | None = None
    mu1_hat: FunctionEstimate | None = None

    def propensity(self, x) -> np.ndarray:
        """Clipped instrument propensity at the given covariates."""
        return clip_propensity(expit(self.f_hat(x)), self.clip_epsilon)


def clip_propensity(g, eps: float) -> np.ndarray:
    """Clamp propensities into [eps, 1-eps]; identity inside the band."""
    if not (0.0 < eps < 0.5):
        raise ValueError("clip epsilon must lie in (0, 0.5)")
    return np.clip(np.asarray(g, dtype=float), eps, 1.0 - eps)


def kappa(d, z, g):
    """Signed complier weights (kappa0, kappa1).

    kappa0 = (1-d) * ((1-z) - (1-g)) / ((1-g) g)
    kappa1 = d * (z - g) / ((1-g) g)
    """
    d = np.asarray(d, dtype=float)
    z = np.asarray(z, dtype=float)
    g = np.asarray(g, dtype=float)
    if np.any(g <= 0.0) or np.any(g >= 1.0):
        raise ValueError("g must lie strictly inside (0, 1)")
    denom = (1.0 - g) * g
    k0 = (1.0 - d) * ((1.0 - z) - (1.0 - g)) / denom
    k1 = d * (z - g) / denom
    return k0, k1


def _train_config(config: LateConfig, *seed_path: int) -> TrainConfig:
    return replace(config.train, seed=derive_seed(config.seed, *seed_path))


def estimate_log_odds(train: Dataset, config: LateConfig,
                      seed_tag: int = 0) -> FunctionEstimate:
    """Fit the instrument log-odds f-hat on one fold.

    Uses the nonparametric net for *_np methods and the affine logistic
    fit otherwise; ``config.log_odds_learner`` overrides the mapping.
    """
    if train.z is None:
        raise ValueError("instrument required")
    learner = config.log_odds_learner
    if learner == "auto":
        learner = "mlp" if config.family == "np" else "logistic"
    if learner == "logistic":
        return fit_logistic(train.x, train.z)
    return fit_mlp(train.x, train.z, "cross_entropy_on_logits",
                   arch=config.arch, config=_train_config(config, 10, seed_tag))


def estimate_h(train: Dataset, f_hat: FunctionEstimate, config: LateConfig,
               seed_tag: int = 0) -> FunctionEstimate:
    """Fit the correction direction h-hat by pseudo-outcome regression.

    The pseudo-outcome is t_i = y_i * ((e^f - e^-f) z_i - e^f) with f
    the fitted log-odds at x_i; the exponentials are formed from the
    clipped propensity, which bounds them by (1-eps)/eps.
    """
    g = clip_propensity(expit(f_hat(train.x)), config.clip_epsilon)
    e_f = g / (1.0 - g)
    pseudo = train.y * ((e_f - 1.0 / e_f) * train.z - e_f)
    if not np.all(np.isfinite(pseudo)):
        raise RuntimeError("non-finite pseudo-outcome")
    if config.family == "np":
        return fit_mlp(train.x, pseudo, "squared_error", arch=config.arch,
                       config=_train_config(config, 20, seed_tag))
    return fit_least_squares(train.x, pseudo)


def robust_score(beta: float, f_hat: FunctionEstimate, h_hat: FunctionEstimate,
                 data: Dataset, clip_epsilon: float = 0.01) -> np.ndarray:
    """Orthogonal score (kappa1-kappa0)y - (g-z)/(g(1-g)) h(x) - beta."""
    g = clip_propensity(expit(f_hat(data.x)), clip_epsilon)
    k0, k1 = kappa(data.d, data.z, g)
    correction = (g - data.z) / (g * (1.0 - g)) * h_hat(data.x)
    return (k1 - k0) * data.y - correction - beta


def moment_score(beta: float, f_hat: FunctionEstimate, data: Dataset,
                 clip_epsilon: float = 0.01) -> np.ndarray:
    """Plain reweighting score (kappa1 - kappa0) y - beta."""
    g = clip_propensity(expit(f_hat(data.x)), clip_epsilon)
    k0, k1 = kappa(data.d, data.z, g)
    return (k1 - k0) * data.y - beta


def regression_score(beta: float, f_hat: FunctionEstimate,
                     mu0_hat: FunctionEstimate, mu1_hat: FunctionEstimate,
                     data: Dataset, clip_epsilon: float = 0.01) -> np.ndarray:
    """Imputation score kappa1 mu1(x) - kappa0 mu0(x) - beta."""
    g = clip_propensity(expit(f_hat(data.x)), clip_epsilon)
    k0, k1 = kappa(data.d, data.z, g)
    return k1 * mu1_hat(data.x) - k0 * mu0_hat(data.x) - beta


def fit_larf(train: Dataset, f_hat: FunctionEstimate, t: int,
             config: LateConfig, seed_tag: int = 0) -> FunctionEstimate:
    """Fit the arm-t local average response function mu_t.

    Minimizes the kappa^(t)-weighted squared error; the weights are
    signed, which both learners accept as-is.
    """
    if t not in (0, 1):
        raise ValueError("arm must be 0 or 1")
    g = clip_propensity(expit(f_hat(train.x)), config.clip_epsilon)
    k0, k1 = kappa(train.d, train.z, g)
    w = k1 if t == 1 else k0
    if config.family == "np":
        return fit_mlp(train.x, train.y, "weighted_squared_error", weights=w,
                       arch=config.arch, config=_train_config(config, 30 + t, seed_tag))
    return fit_least_squares(train.x, train.y, weights=w)


def solve_beta_linear(score_fn, fold: Dataset) -> float:
    """Root of a score of the form A(w) - beta: the fold mean of A.

    `score_fn(beta, data)` must return per-observation scores with
    slope exactly -1 in beta.
    """
    if fold.n == 0:
        raise ValueError("empty fold")
    beta_hat = float(np.mean(score_fn(0.0, fold)))
    residual = abs(float(np.mean(score_fn(beta_hat, fold))))
    if residual > 1e-10 * max(1.0, abs(beta_hat)):
        raise RuntimeError("score is not linear in beta with slope -1")
    return beta_hat


def estimate_variance(score_fn, beta_hat: float, fold: Dataset) -> float:
    """Mean squared score at beta_hat over the fold."""
    if fold.n == 0:
        raise ValueError("empty fold")
    s = score_fn(beta_hat, fold)
    return float(np.mean(s * s))


def _fit_nuisances(train: Dataset, config: LateConfig,
                   seed_tag: int) -> LateNuisance:
    f_hat = estimate_log_odds(train, config, seed_tag)
    h_hat = mu0 = mu1 = None
    if config.method in ("robust_np", "robust_lr", "moment"):
        # The moment method needs h-hat only for its variance estimate.
        h_hat = estimate_h(train, f_hat, config, seed_tag)
    else:
        mu0 = fit_larf(train, f_hat, 0, config, seed_tag)
        mu1 = fit_larf(train, f_hat, 1, config, seed_tag)
    return LateNuisance(f_hat=f_hat, clip_epsilon=config.clip_epsilon,
                        h_hat=h_hat, mu0_hat=mu0, mu1_hat=mu1)


def late_crossfit(data: Dataset, config: LateConfig) -> EstimationResult:
    """Two-fold cross-fitted estimate with plug-in variance.

    For each fold pair, nuisances are fitted on one half and the
    configured method's estimating equation is solved on the other;
    the two fold estimates are averaged and the two fold variances
    pooled by simple average.
    """
    if data.z is None:
        raise ValueError("instrument required")
    if np.all(data.z == data.z[0]):
        raise ValueError("degenerate instrument")
    split = split_folds(data.n, derive_seed(config.seed, 0))
    eps = config.clip_epsilon
    fold_betas, fold_vars = [], []
    for k in (0, 1):
        train = data.subset(split.indices(1 - k))
        est = data.subset(split.indices(k))
        try:
            nus = _fit_nuisances(train, config, seed_tag=k)
            if config.method in ("robust_np", "robust_lr"):
                point_fn = var_fn = lambda b, ds: robust_score(
                    b, nus.f_hat, nus.h_hat, ds, eps)
            elif config.method == "moment":
                point_fn = lambda b, ds: moment_score(b, nus.f_hat, ds, eps)
                var_fn = lambda b, ds: robust_score(b, nus.f_hat, nus.h_hat, ds, eps)
            else:
                point_fn = var_fn = lambda b, ds: regression_score(
                    b, nus.f_hat, nus.mu0_hat, nus.mu1_hat, ds, eps)
            beta_k = solve_beta_linear(point_fn, est)
            fold_betas.append(beta_k)
            fold_vars.append(estimate_variance(var_fn, beta_k, est))
        except Exception as exc:
            raise RuntimeError(f"fold {k}: {exc}") from exc
    return EstimationResult.from_folds(fold_betas, float(np.mean(fold_vars)),
                                       data.n, config.method, config.seed,
                                       config.level)
