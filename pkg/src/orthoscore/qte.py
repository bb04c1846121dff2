"""Quantile treatment effect of the treated-arm potential outcome.

The target beta0 is the tau-th quantile of Y(1) under ignorability
given X.  With the treatment propensity g0(x) = P(D=1 | X=x) and its
log-odds f0, the inverse-propensity score

    psi(beta, f; w) = d (1 + e^{-f(x)}) (I(y <= beta) - tau)

identifies beta0 but is not orthogonal to f.  The orthogonal version
adds (expit(f(x)) - d) * h(x) with the correction direction

    h0(x) = E[D (I(Y <= beta0) - tau) | X=x] / g0(x)^2,

estimated by a pilot-then-correct pass: solve the plain IPW equation
for a pilot quantile on the nuisance fold, regress the pseudo-outcome
d (I(y <= pilot) - tau) / g^2 on x, then solve the orthogonal equation
on the estimation fold by bisection (the empirical score is a
nondecreasing step function of beta).  The variance divides the mean
squared score by the squared density of Y(1) at beta-hat, estimated by
a Gaussian kernel on the IPW-weighted treated outcomes with Silverman
bandwidth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Dataset, EstimationResult, derive_seed, split_folds
from .learners import (MlpArchitecture, TrainConfig, expit, fit_least_squares,
                       fit_logistic, fit_mlp, pipeline_train_config)
from .late import clip_propensity

__all__ = [
    "QteConfig",
    "ipw_quantile_score",
    "orthogonal_quantile_score",
    "solve_monotone",
    "qte_crossfit",
]


@dataclass(frozen=True)
class QteConfig:
    tau: float = 0.5
    clip_epsilon: float = 0.01
    bisection_tol: float = 1e-8
    learner: str = "linear"  # linear | mlp
    arch: MlpArchitecture = field(default_factory=MlpArchitecture)
    train: TrainConfig = field(default_factory=pipeline_train_config)
    level: float = 0.95
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.tau < 1.0):
            raise ValueError("tau must lie in (0, 1)")
        if not (0.0 < self.clip_epsilon < 0.5):
            raise ValueError("clip_epsilon must lie in (0, 0.5)")
        if self.bisection_tol <= 0.0:
            raise ValueError("bisection_tol must be positive")
        if self.learner not in ("linear", "mlp"):
            raise ValueError("learner must be linear or mlp")


def ipw_quantile_score(beta, y, d, g, tau) -> np.ndarray:
    """Per-observation d/g * (I(y <= beta) - tau); d/g = d(1+e^{-f})."""
    y = np.asarray(y, dtype=float)
    ind = (y <= beta).astype(float)
    return np.asarray(d, dtype=float) / np.asarray(g, dtype=float) * (ind - tau)


def orthogonal_quantile_score(beta, y, d, g, h_values, tau) -> np.ndarray:
    """IPW score plus the correction (g - d) h(x)."""
    d = np.asarray(d, dtype=float)
    g = np.asarray(g, dtype=float)
    return ipw_quantile_score(beta, y, d, g, tau) + (g - d) * np.asarray(h_values, dtype=float)


def solve_monotone(score_fn, lo: float, hi: float, tol: float = 1e-8,
                   max_expansions: int = 60) -> float:
    """Bisection root of a nondecreasing empirical mean score.

    The bracket is expanded outward by doubling (up to `max_expansions`
    times in total) until score(lo) <= 0 <= score(hi), then bisected to
    width tol.  For a step-function score the result is a generalized
    root: the location where the sign changes.
    """
    lo, hi = float(lo), float(hi)
    if hi < lo:
        lo, hi = hi, lo
    f_lo, f_hi = score_fn(lo), score_fn(hi)
    expansions = 0
    while f_lo > 0.0 or f_hi < 0.0:
        if expansions >= max_expansions:
            raise ValueError("root not bracketed")
        width = max(hi - lo, 1.0)
        if f_lo > 0.0:
            lo -= width
            f_lo = score_fn(lo)
        else:
            hi += width
            f_hi = score_fn(hi)
        expansions += 1
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if score_fn(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _weighted_quantile(values, weights, q):
    order = np.argsort(values)
    v, w = values[order], weights[order]
    cum = np.cumsum(w)
    return float(np.interp(q * cum[-1], cum, v))


def _ipw_density(y, d, g, at: float) -> float:
    """Gaussian-kernel density of Y(1) at `at` from IPW-weighted treated."""
    treated = d == 1.0
    yt = y[treated]
    w = 1.0 / g[treated]
    n_t = yt.size
    if n_t == 0:
        raise ValueError("no treated observations in fold")
    mean = float(np.average(yt, weights=w))
    sd = float(np.sqrt(np.average((yt - mean) ** 2, weights=w)))
    iqr = _weighted_quantile(yt, w, 0.75) - _weighted_quantile(yt, w, 0.25)
    spread = min(sd, iqr / 1.34) if iqr > 0.0 else sd
    bandwidth = 0.9 * spread * n_t ** (-0.2)
    if bandwidth <= 0.0:
        bandwidth = 1e-6 * (1.0 + abs(at))
    u = (at - yt) / bandwidth
    kern = np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)
    return float(np.sum(w * kern) / (bandwidth * np.sum(w)))


def _fit_h(x, pseudo, config: QteConfig, seed_tag: int):
    if config.learner == "linear":
        return fit_least_squares(x, pseudo)
    cfg = replace(config.train, seed=derive_seed(config.seed, 50, seed_tag))
    return fit_mlp(x, pseudo, "squared_error", arch=config.arch, config=cfg)


def qte_crossfit(data: Dataset, config: QteConfig) -> EstimationResult:
    """Two-fold cross-fitted tau-quantile of Y(1) with plug-in variance."""
    if data.z is not None:
        raise ValueError("expected no instrument")
    if np.all(data.d == data.d[0]):
        raise ValueError("degenerate treatment arms")
    tau, eps = config.tau, config.clip_epsilon
    split = split_folds(data.n, derive_seed(config.seed, 0))
    fold_betas, fold_vars = [], []
    for k in (0, 1):
        train = data.subset(split.indices(1 - k))
        est = data.subset(split.indices(k))
        if config.learner == "mlp":
            f_hat = fit_mlp(train.x, train.d, "cross_entropy_on_logits",
                            arch=config.arch,
                            config=replace(config.train,
                                           seed=derive_seed(config.seed, 51, k)))
        else:
            f_hat = fit_logistic(train.x, train.d)
        g_train = clip_propensity(expit(f_hat(train.x)), eps)
        bracket = (float(np.min(train.y)), float(np.max(train.y)))
        pilot = solve_monotone(
            lambda b: float(np.mean(ipw_quantile_score(b, train.y, train.d,
                                                       g_train, tau))),
            *bracket, tol=config.bisection_tol)
        pseudo = train.d * ((train.y <= pilot).astype(float) - tau) / g_train ** 2
        h_hat = _fit_h(train.x, pseudo, config, k)

        g_est = clip_propensity(expit(f_hat(est.x)), eps)
        h_est = h_hat(est.x)

        def mean_score(b):
            return float(np.mean(orthogonal_quantile_score(
                b, est.y, est.d, g_est, h_est, tau)))

        beta_k = solve_monotone(mean_score, float(np.min(est.y)),
                                float(np.max(est.y)), tol=config.bisection_tol)
        scores = orthogonal_quantile_score(beta_k, est.y, est.d, g_est, h_est, tau)
        density = _ipw_density(est.y, est.d, g_est, beta_k)
        fold_betas.append(beta_k)
        fold_vars.append(float(np.mean(scores * scores)) / density ** 2)
    return EstimationResult.from_folds(fold_betas, float(np.mean(fold_vars)),
                                       data.n, "qte", config.seed, config.level)
