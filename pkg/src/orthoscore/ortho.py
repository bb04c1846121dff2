"""Generic construction of Neyman-orthogonal scores.

Three estimation regimes are covered, each described by a small record
of per-observation derivative callbacks supplied by the caller:

* Fully coupled: the target beta and the nuisance function f jointly
  minimize P m(beta, f; W).  The orthogonal score is
      psi*(beta, f, h; w) = d_beta m + d_f m * h(x),
  with direction
      h0(x) = -E[d2_{beta f} m | X=x] / E[d2_{ff} m | X=x].

* Partially decoupled: beta solves P psi(beta, f0; W) = 0 while f0
  minimizes its own criterion P m1(f; W).  The correction direction is
      h0(x) = -E[d_f psi | X=x] / E[d2_{ff} m1 | X=x],
  and psi* = psi + d_f m1 * h.

* Sequential: two nuisance stages, f0 minimizing P m1 and mu0
  minimizing P m2(mu, f0), feeding an estimating equation psi(beta,
  mu0, f0).  Three directions h10, h20, h30 are needed; h30 transports
  the sensitivity of mu0 to f0 through the curvature of m2:
      h10 = -E[d_f psi | X] / E[d2_{ff} m1 | X]
      h20 = -E[d_mu psi | X] / E[d2_{mumu} m2 | X]
      h30 = -E[d2_{muf} m2 * h20(X) | X] / E[d2_{ff} m1 | X]
  and psi* = psi + d_f m1 * (h1 + h3) + d_mu m2 * h2.

The conditional expectations in the direction ratios are estimated by
regressing the derivative pseudo-outcomes on X with a pluggable
regressor; the fitted denominator is kept away from zero by a
sign-preserving clip.  ``check_orthogonality`` verifies the defining
property by a central finite difference of the mean score along a
supplied direction under a known truth.

Callbacks are vectorized: each receives the scalar beta, the nuisance
values already evaluated at the sample's covariates, and the Dataset,
and returns one value per observation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .core import Dataset, FunctionEstimate, derive_seed, shifted

__all__ = [
    "CoupledModel",
    "DecoupledModel",
    "SequentialModel",
    "RatioDirection",
    "ScoreFamily",
    "fit_coupled_direction",
    "build_coupled_score",
    "fit_decoupled_direction",
    "build_decoupled_score",
    "fit_sequential_directions",
    "build_sequential_score",
    "check_orthogonality",
]

DENOM_CLIP = 1e-3


@dataclass(frozen=True)
class CoupledModel:
    """Derivatives of a joint criterion m(beta, f; w).

    Each callback maps (beta, f_values, data) to per-observation reals.
    """

    d_beta_m: Callable
    d_f_m: Callable
    d2_beta_f_m: Callable
    d2_ff_m: Callable
    solve: str = "monotone"


@dataclass(frozen=True)
class DecoupledModel:
    """Estimating equation psi(beta, f; w) plus the f-criterion m1(f; w).

    psi and d_f_psi map (beta, f_values, data); the m1 derivatives map
    (f_values, data).
    """

    psi: Callable
    d_f_psi: Callable
    d_f_m1: Callable
    d2_ff_m1: Callable
    solve: str = "monotone"


@dataclass(frozen=True)
class SequentialModel:
    """Two-stage nuisances: f from m1, mu from m2(mu, f), then psi.

    psi, d_mu_psi, d_f_psi map (beta, mu_values, f_values, data); the
    m2 derivatives map (mu_values, f_values, data); the m1 derivatives
    map (f_values, data).
    """

    psi: Callable
    d_mu_psi: Callable
    d_f_psi: Callable
    d_mu_m2: Callable
    d2_mumu_m2: Callable
    d2_muf_m2: Callable
    d_f_m1: Callable
    d2_ff_m1: Callable
    solve: str = "monotone"


class RatioDirection(FunctionEstimate):
    """Direction h(x) = -num(x)/den(x) with a sign-preserving floor.

    Denominator values with magnitude below `clip` are replaced by
    clip * sign (zeros count as positive).  Activations are counted in
    `clip_count`; on well-behaved designs it must stay 0.
    """

    def __init__(self, numerator: FunctionEstimate, denominator: FunctionEstimate,
                 clip: float = DENOM_CLIP, label: str = "direction"):
        self.numerator = numerator
        self.denominator = denominator
        self.clip = float(clip)
        self.clip_count = 0

        def batch(x):
            num = numerator(x)
            den = denominator(x)
            small = np.abs(den) < self.clip
            self.clip_count += int(np.count_nonzero(small))
            den = np.where(den >= 0.0, np.maximum(den, self.clip),
                           np.minimum(den, -self.clip))
            return -num / den

        super().__init__(batch, label)


def _fit_ratio(x, num_targets, den_targets, regressor, clip, label):
    num_fit = regressor(x, np.asarray(num_targets, dtype=float))
    den_fit = regressor(x, np.asarray(den_targets, dtype=float))
    if np.max(np.abs(den_fit(x))) == 0.0:
        raise ValueError("direction undefined")
    return RatioDirection(num_fit, den_fit, clip=clip, label=label), den_fit


def fit_coupled_direction(model: CoupledModel, beta_pilot: float,
                          f_hat: FunctionEstimate, data: Dataset,
                          regressor, clip: float = DENOM_CLIP) -> RatioDirection:
    """Estimate h0 for the coupled regime on one fold.

    Regresses the cross-derivative and curvature pseudo-outcomes of m,
    both evaluated at (beta_pilot, f_hat), on the fold's covariates.
    """
    fv = f_hat(data.x)
    num = model.d2_beta_f_m(beta_pilot, fv, data)
    den = model.d2_ff_m(beta_pilot, fv, data)
    direction, _ = _fit_ratio(data.x, num, den, regressor, clip, "coupled h")
    return direction


def fit_decoupled_direction(model: DecoupledModel, beta_pilot: float,
                            f_hat: FunctionEstimate, data: Dataset,
                            regressor, clip: float = DENOM_CLIP) -> RatioDirection:
    """Estimate h0 for the decoupled regime on one fold."""
    fv = f_hat(data.x)
    num = model.d_f_psi(beta_pilot, fv, data)
    den = model.d2_ff_m1(fv, data)
    direction, _ = _fit_ratio(data.x, num, den, regressor, clip, "decoupled h")
    return direction


@dataclass
class SequentialDirections:
    h1: RatioDirection
    h2: RatioDirection
    h3: RatioDirection

    @property
    def clip_count(self):
        return self.h1.clip_count + self.h2.clip_count + self.h3.clip_count


def fit_sequential_directions(model: SequentialModel, beta_pilot: float,
                              mu_hat: FunctionEstimate, f_hat: FunctionEstimate,
                              data: Dataset, regressor,
                              clip: float = DENOM_CLIP) -> SequentialDirections:
    """Estimate (h10, h20, h30) on one fold.

    h10 and h20 come from ratio-of-regression recipes; h30 reuses the
    fitted m1-curvature denominator and regresses the transported
    pseudo-outcome d2_{muf} m2 * h20(x).
    """
    fv = f_hat(data.x)
    mv = mu_hat(data.x)
    m1_curv = model.d2_ff_m1(fv, data)
    h1, den1_fit = _fit_ratio(data.x, model.d_f_psi(beta_pilot, mv, fv, data),
                              m1_curv, regressor, clip, "sequential h1")
    h2, _ = _fit_ratio(data.x, model.d_mu_psi(beta_pilot, mv, fv, data),
                       model.d2_mumu_m2(mv, fv, data), regressor, clip,
                       "sequential h2")
    num3 = model.d2_muf_m2(mv, fv, data) * h2(data.x)
    num3_fit = regressor(data.x, num3)
    h3 = RatioDirection(num3_fit, den1_fit, clip=clip, label="sequential h3")
    return SequentialDirections(h1=h1, h2=h2, h3=h3)


@dataclass(frozen=True)
class ScoreFamily:
    """Per-observation score evaluator psi(beta; w) with frozen nuisances.

    `evaluate(beta, data)` returns one score per observation.  `solve`
    declares how the estimating equation behaves in beta ("linear" or
    "monotone").  `with_nuisances` rebuilds the family with some
    nuisance functions replaced, which the orthogonality checker uses
    to form perturbed copies.
    """

    evaluate: Callable[[float, Dataset], np.ndarray]
    solve: str
    nuisances: Mapping[str, FunctionEstimate] = field(default_factory=dict)
    rebuild: Callable[[Mapping[str, FunctionEstimate]], "ScoreFamily"] | None = None

    def with_nuisances(self, **replacements) -> "ScoreFamily":
        if self.rebuild is None:
            raise ValueError("this score family does not support rebinding")
        unknown = set(replacements) - set(self.nuisances)
        if unknown:
            raise ValueError(f"unknown nuisance names: {sorted(unknown)}")
        merged = dict(self.nuisances)
        merged.update(replacements)
        return self.rebuild(merged)


def build_coupled_score(model: CoupledModel, f_hat: FunctionEstimate,
                        h_hat: FunctionEstimate) -> ScoreFamily:
    """psi*(beta; w) = d_beta m + d_f m * h(x) at the fitted nuisances."""
    def make(nus):
        f, h = nus["f"], nus["h"]

        def evaluate(beta, data):
            fv = f(data.x)
            return (model.d_beta_m(beta, fv, data)
                    + model.d_f_m(beta, fv, data) * h(data.x))

        return ScoreFamily(evaluate, model.solve, dict(nus), make)

    return make({"f": f_hat, "h": h_hat})


def build_decoupled_score(model: DecoupledModel, f_hat: FunctionEstimate,
                          h_hat: FunctionEstimate) -> ScoreFamily:
    """psi*(beta; w) = psi + d_f m1 * h(x) at the fitted nuisances."""
    def make(nus):
        f, h = nus["f"], nus["h"]

        def evaluate(beta, data):
            fv = f(data.x)
            return model.psi(beta, fv, data) + model.d_f_m1(fv, data) * h(data.x)

        return ScoreFamily(evaluate, model.solve, dict(nus), make)

    return make({"f": f_hat, "h": h_hat})


def build_sequential_score(model: SequentialModel, mu_hat: FunctionEstimate,
                           f_hat: FunctionEstimate,
                           directions) -> ScoreFamily:
    """psi* = psi + d_f m1 * (h1 + h3) + d_mu m2 * h2.

    `directions` is a SequentialDirections record or any object with
    h1/h2/h3 FunctionEstimate attributes.
    """
    def make(nus):
        mu, f = nus["mu"], nus["f"]
        h1, h2, h3 = nus["h1"], nus["h2"], nus["h3"]

        def evaluate(beta, data):
            fv = f(data.x)
            mv = mu(data.x)
            corr_f = h1(data.x) + h3(data.x)
            return (model.psi(beta, mv, fv, data)
                    + model.d_f_m1(fv, data) * corr_f
                    + model.d_mu_m2(mv, fv, data) * h2(data.x))

        return ScoreFamily(evaluate, model.solve, dict(nus), make)

    return make({"mu": mu_hat, "f": f_hat,
                 "h1": directions.h1, "h2": directions.h2, "h3": directions.h3})


def check_orthogonality(score: ScoreFamily, sampler, beta0: float,
                        direction: FunctionEstimate, which_nuisance: str,
                        epsilon: float = 1e-3, n_mc: int = 1_000_000,
                        seed: int = 0,
                        shard_size: int = 1 << 17) -> tuple[float, float]:
    """Finite-difference Gateaux derivative of the mean score at truth.

    Draws n_mc observations from `sampler(n, seed)` in shards with
    per-shard derived seeds, evaluates the score at beta0 with the
    named nuisance shifted by +-epsilon * direction, and returns the
    central-difference derivative estimate with its Monte Carlo
    standard error.  The same draws feed both signs, so a zero
    direction gives exactly zero.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    if n_mc < 2:
        raise ValueError("n_mc must be at least 2")
    base = score.nuisances[which_nuisance]
    plus = score.with_nuisances(**{which_nuisance: shifted(base, epsilon, direction)})
    minus = score.with_nuisances(**{which_nuisance: shifted(base, -epsilon, direction)})
    total, total_sq, count = 0.0, 0.0, 0
    shard = 0
    while count < n_mc:
        m = min(shard_size, n_mc - count)
        data = sampler(m, derive_seed(seed, shard))
        diff = (plus.evaluate(beta0, data) - minus.evaluate(beta0, data)) / (2.0 * epsilon)
        total += float(np.sum(diff))
        total_sq += float(np.sum(diff * diff))
        count += m
        shard += 1
    mean = total / count
    var = max(total_sq / count - mean * mean, 0.0) * count / (count - 1)
    return mean, float(np.sqrt(var / count))
