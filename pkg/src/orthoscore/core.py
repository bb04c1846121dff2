"""Shared data model: samples, fitted functions, fold splits, intervals.

Everything downstream works with three small contracts defined here.
A ``Dataset`` is an immutable columnar sample (covariates, outcome,
treatment, optional instrument).  A ``FunctionEstimate`` is a frozen
fitted map from a covariate vector to a real number; every nuisance
estimate in the library (log-odds, correction directions, regression
fits) is one.  ``split_folds`` produces the balanced two-way random
partition used by the cross-fitting algorithm, and ``make_ci`` builds
the normal-approximation confidence interval from a variance estimate.

All randomness flows through explicit integer seeds.  ``derive_seed``
is the single place where child seeds (per replicate, per fold, per
shard) are derived from a master seed, so any unit of work is
individually reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Dataset",
    "FunctionEstimate",
    "FoldSplit",
    "EstimationResult",
    "split_folds",
    "make_ci",
    "normal_quantile",
    "derive_seed",
    "shifted",
]

# Two-sided 95% standard-normal quantile, fixed so that reported
# intervals are bit-stable across platforms and library versions.
Q95 = 1.959964


def _check_binary(name, values):
    if not np.all((values == 0.0) | (values == 1.0)):
        raise ValueError(f"{name} entries must be exactly 0 or 1")


@dataclass(frozen=True)
class Dataset:
    """Columnar sample (x, y, d[, z]) with validation at construction.

    ``d`` must be binary whenever an instrument is present (the IV and
    QTE paths rely on it).  For regression designs with a real-valued
    treatment and no instrument, pass ``real_treatment=True``.
    """

    x: np.ndarray
    y: np.ndarray
    d: np.ndarray
    z: np.ndarray | None = None
    real_treatment: bool = field(default=False, compare=False)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        d = np.asarray(self.d, dtype=float).ravel()
        z = None if self.z is None else np.asarray(self.z, dtype=float).ravel()
        n = x.shape[0]
        if y.shape[0] != n or d.shape[0] != n or (z is not None and z.shape[0] != n):
            raise ValueError("all columns must have the same length")
        for name, col in (("x", x), ("y", y), ("d", d)):
            if not np.all(np.isfinite(col)):
                raise ValueError(f"{name} contains non-finite values")
        if z is not None:
            if not np.all(np.isfinite(z)):
                raise ValueError("z contains non-finite values")
            _check_binary("z", z)
        if z is not None or not self.real_treatment:
            _check_binary("d", d)
        for name, col in (("x", x), ("y", y), ("d", d), ("z", z)):
            if col is not None:
                col.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "Dataset":
        """Row subset as a new Dataset (used for fold restriction)."""
        z = None if self.z is None else self.z[idx]
        return Dataset(self.x[idx], self.y[idx], self.d[idx], z,
                       real_treatment=self.real_treatment)


class FunctionEstimate:
    """A frozen fitted function of the covariates.

    Wraps a deterministic vectorized implementation: calling the object
    on an (n, p) matrix returns an (n,) vector, and ``evaluate`` maps a
    single length-p vector to a float.  Identical input must yield
    identical output, and finite input must yield finite output; the
    learners are responsible for returning parameters that satisfy this.
    """

    def __init__(self, batch_fn, label: str = "fn"):
        self._batch = batch_fn
        self.label = label

    def __call__(self, x_matrix) -> np.ndarray:
        x = np.asarray(x_matrix, dtype=float)
        if x.ndim != 2:
            raise ValueError("batch evaluation expects an (n, p) matrix")
        out = np.asarray(self._batch(x), dtype=float)
        return out.reshape(x.shape[0])

    def evaluate(self, x_vector) -> float:
        x = np.asarray(x_vector, dtype=float).ravel()
        return float(self(x[None, :])[0])

    def __repr__(self):
        return f"FunctionEstimate({self.label})"

    @staticmethod
    def constant(value: float, label: str | None = None) -> "FunctionEstimate":
        c = float(value)
        return FunctionEstimate(lambda x: np.full(x.shape[0], c),
                                label or f"const {c:g}")


def shifted(base: FunctionEstimate, scale: float,
            direction: FunctionEstimate) -> FunctionEstimate:
    """base + scale * direction, as a new FunctionEstimate."""
    s = float(scale)
    return FunctionEstimate(lambda x: base(x) + s * direction(x),
                            label=f"{base.label}{s:+g}*{direction.label}")


@dataclass(frozen=True)
class FoldSplit:
    """Balanced random 2-way partition of indices 0..n-1."""

    fold_assignment: np.ndarray
    seed: int

    def indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_assignment == fold)


def split_folds(n: int, seed: int) -> FoldSplit:
    """Uniformly random balanced split into two folds.

    Fold sizes are n//2 and n - n//2 (equal for even n, differing by
    one for odd n).  Reproducible from the seed.
    """
    if n < 4:
        raise ValueError("sample too small to split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    assignment = np.zeros(n, dtype=np.int8)
    assignment[order[n // 2:]] = 1
    assignment.setflags(write=False)
    return FoldSplit(fold_assignment=assignment, seed=int(seed))


# Acklam's rational approximation to the inverse standard-normal CDF.
# Refined below by one Halley step, which brings the error to the
# 1e-15 scale (requirement is 1e-8).
_ICDF_A = (-3.969683028665376e+01, 2.209460984245205e+02,
           -2.759285104469687e+02, 1.383577518672690e+02,
           -3.066479806614716e+01, 2.506628277459239e+00)
_ICDF_B = (-5.447609879822406e+01, 1.615858368580409e+02,
           -1.556989798598866e+02, 6.680131188771972e+01,
           -1.328068155288572e+01)
_ICDF_C = (-7.784894002430293e-03, -3.223964580411365e-01,
           -2.400758277161838e+00, -2.549732539343734e+00,
           4.374664141464968e+00, 2.938163982698783e+00)
_ICDF_D = (7.784695709041462e-03, 3.224671290700398e-01,
           2.445134137142996e+00, 3.754408661907416e+00)


def normal_quantile(p: float) -> float:
    """Inverse standard-normal CDF, accurate to well below 1e-8."""
    if not (0.0 < p < 1.0):
        raise ValueError("quantile level must lie in (0, 1)")
    a, b, c, d = _ICDF_A, _ICDF_B, _ICDF_C, _ICDF_D
    p_low = 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    elif p <= 1.0 - p_low:
        q = p - 0.5
        r = q * q
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    # One Halley refinement against the normal CDF.  Work on the side
    # where x <= 0 so the CDF comes from erfc of a nonnegative argument
    # (no cancellation in the tails), mirroring back afterwards.
    sign = 1.0
    if x > 0.0:
        sign, x, p = -1.0, -x, 1.0 - p
    cdf = 0.5 * math.erfc(-x / math.sqrt(2.0))
    e = cdf - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    return sign * (x - u / (1.0 + x * u / 2.0))


def make_ci(beta_hat: float, sigma2_hat: float, n: int,
            level: float = 0.95) -> tuple[float, float]:
    """Normal-approximation interval beta_hat +- q(level)*sqrt(sigma2/n)."""
    if not (0.0 < level < 1.0):
        raise ValueError("level must lie in (0, 1)")
    if sigma2_hat < 0.0:
        raise ValueError("sigma2_hat must be nonnegative")
    if n < 1:
        raise ValueError("n must be at least 1")
    q = Q95 if level == 0.95 else normal_quantile(0.5 + level / 2.0)
    half = q * math.sqrt(sigma2_hat / n)
    return (beta_hat - half, beta_hat + half)


@dataclass(frozen=True)
class EstimationResult:
    """Cross-fitted point estimate with its plug-in interval."""

    beta_hat: float
    sigma2_hat: float
    std_err: float
    ci_low: float
    ci_high: float
    fold_betas: tuple[float, ...]
    method: str
    n: int
    seed: int
    level: float = 0.95

    @staticmethod
    def from_folds(fold_betas, sigma2_hat, n, method, seed,
                   level=0.95) -> "EstimationResult":
        """Canonical constructor: averages folds, derives SE and CI."""
        fold_betas = tuple(float(b) for b in fold_betas)
        beta_hat = float(np.mean(fold_betas))
        sigma2_hat = float(sigma2_hat)
        std_err = math.sqrt(sigma2_hat / n)
        lo, hi = make_ci(beta_hat, sigma2_hat, n, level)
        return EstimationResult(beta_hat=beta_hat, sigma2_hat=sigma2_hat,
                                std_err=std_err, ci_low=lo, ci_high=hi,
                                fold_betas=fold_betas, method=str(method),
                                n=int(n), seed=int(seed), level=float(level))


def derive_seed(master_seed: int, *path: int) -> int:
    """Stable 64-bit child seed for the given position in the work tree."""
    ss = np.random.SeedSequence([int(master_seed), *[int(q) for q in path]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
