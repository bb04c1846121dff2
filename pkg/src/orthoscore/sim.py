"""Synthetic instrumented data and the replication study harness.

Covariates are independent standard normals rejection-truncated to
[-1, 1].  The instrument follows a logistic model in the nonlinear
log-odds f0; compliance strata (always-taker, complier, never-taker)
are drawn with probabilities (0.2, 0.6, 0.2) independently of
everything else, and the observed treatment is D = I(U=always) +
Z * I(U=complier).  Outcomes are stratum-specific means plus standard
normal noise (the noise is added in every stratum).  Complier means
follow one of two scenarios whose arms differ by exactly 3, so the
target is beta0 = 0.6 * 3 = 1.8.

``run_replications`` replays the estimator over freshly seeded
datasets and aggregates the three study metrics:

    bias     = | mean_j (beta_j - beta0) |
    smse     = (sqrt(n) / r) * sum_j (beta_j - beta0)^2
    coverage = fraction of intervals containing beta0

Each replicate derives its own seed from (master_seed, index), so the
set of results is independent of execution order and of the number of
workers.  Failed replicates are excluded from the metrics and counted.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Dataset, derive_seed
from .late import LateConfig, late_crossfit
from .learners import expit

__all__ = [
    "BETA0",
    "DgpConfig",
    "DgpTruth",
    "MethodSummary",
    "SimulationReport",
    "gen_covariates",
    "f0_true",
    "mu_true",
    "gen_dataset",
    "summarize_replicates",
    "run_replications",
]

BETA0 = 1.8
SCENARIOS = ("s1", "s2")
STRATUM_PROBS = (0.2, 0.6, 0.2)  # always-taker, complier, never-taker


@dataclass(frozen=True)
class DgpConfig:
    scenario: str = "s1"
    n: int = 2000
    p: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario: {self.scenario!r}")
        if self.p < 4:
            raise ValueError("p must be at least 4")
        if self.n < 1:
            raise ValueError("n must be at least 1")


@dataclass(frozen=True)
class DgpTruth:
    """True quantities recorded at generation time."""

    beta0: float
    g0: np.ndarray      # instrument propensity at each draw
    u: np.ndarray       # stratum label: 1 always, 2 complier, 3 never
    scenario: str


def gen_covariates(n: int, p: int, rng) -> np.ndarray:
    """Standard normal entries, each redrawn until it lands in [-1, 1]."""
    if p < 1:
        raise ValueError("p must be at least 1")
    x = rng.standard_normal((n, p))
    while True:
        out = np.abs(x) > 1.0
        count = int(np.count_nonzero(out))
        if count == 0:
            return x
        x[out] = rng.standard_normal(count)


def f0_true(x) -> np.ndarray:
    """Instrument log-odds x1^2 x2^3 + log(x2 x3 + 4) - exp(x3 x4 / 2) - 0.5."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x1, x2, x3, x4 = x[:, 0], x[:, 1], x[:, 2], x[:, 3]
    return x1 ** 2 * x2 ** 3 + np.log(x2 * x3 + 4.0) - np.exp(x3 * x4 / 2.0) - 0.5


def mu_true(x, t, scenario: str) -> np.ndarray:
    """Complier response mean for arm t; the arms differ by exactly 3."""
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario: {scenario!r}")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x1, x2, x3, x4 = x[:, 0], x[:, 1], x[:, 2], x[:, 3]
    t = np.asarray(t, dtype=float)
    if scenario == "s1":
        base = (np.cos(np.pi * x1 * x2) + x1 * x2 * x3 ** 3
                + np.exp(x2 * x3 - 1.0) + np.log(3.0 + x3 * x4))
    else:
        base = (np.sin(np.pi * x1 * x2 / 2.0) + np.log(x2 * x3 + 1.5)
                + np.exp(x3 * x4 / 2.0))
    return base + 3.0 * t


def gen_dataset(config: DgpConfig) -> tuple[Dataset, DgpTruth]:
    """Draw one sample and its truth record."""
    rng = np.random.default_rng(config.seed)
    n = config.n
    x = gen_covariates(n, config.p, rng)
    g0 = expit(f0_true(x))
    z = (rng.random(n) < g0).astype(float)
    u = rng.choice(np.array([1, 2, 3]), size=n, p=STRATUM_PROBS)
    d = ((u == 1) | ((u == 2) & (z == 1.0))).astype(float)
    x1, x2, x3, x4 = x[:, 0], x[:, 1], x[:, 2], x[:, 3]
    mean = np.empty(n)
    always, complier, never = u == 1, u == 2, u == 3
    mean[always] = (x1 + x2 + x3 + x4 + 2.0 * d)[always]
    mean[complier] = np.where(d[complier] == 1.0,
                              mu_true(x[complier], 1, config.scenario),
                              mu_true(x[complier], 0, config.scenario))
    mean[never] = (0.6 * x1 + 0.8 * x2 + x3 + 1.2 * x4 - 2.0 * d)[never]
    y = mean + rng.standard_normal(n)
    data = Dataset(x, y, d, z)
    g0.setflags(write=False)
    u.setflags(write=False)
    return data, DgpTruth(beta0=BETA0, g0=g0, u=u, scenario=config.scenario)


@dataclass(frozen=True)
class MethodSummary:
    method: str
    bias: float
    smse: float
    coverage: float
    reps_done: int
    failures: int


@dataclass(frozen=True)
class SimulationReport:
    scenario: str
    n: int
    p: int
    reps: int
    master_seed: int
    methods: tuple[MethodSummary, ...]

    def by_method(self, method: str) -> MethodSummary:
        for s in self.methods:
            if s.method == method:
                return s
        raise KeyError(method)


def summarize_replicates(method: str, betas, covered, failures: int,
                         n: int, beta0: float = BETA0) -> MethodSummary:
    """Study metrics over the successful replicates of one method."""
    betas = np.asarray(betas, dtype=float)
    covered = np.asarray(covered, dtype=bool)
    r = betas.size
    if r == 0:
        return MethodSummary(method, float("nan"), float("nan"),
                             float("nan"), 0, failures)
    err = betas - beta0
    return MethodSummary(method=method,
                         bias=float(abs(np.mean(err))),
                         smse=float(np.sqrt(n) * np.mean(err * err)),
                         coverage=float(np.mean(covered)),
                         reps_done=int(r),
                         failures=int(failures))


def _one_replicate(dgp: DgpConfig, methods, master_seed: int, index: int,
                   base_config: LateConfig):
    """Run every method on one fresh dataset; return per-method outcomes."""
    data, truth = gen_dataset(replace(dgp, seed=derive_seed(master_seed, index, 0)))
    out = {}
    for mi, method in enumerate(methods):
        cfg = replace(base_config, method=method,
                      seed=derive_seed(master_seed, index, 1 + mi))
        try:
            res = late_crossfit(data, cfg)
            out[method] = (res.beta_hat,
                           bool(res.ci_low <= truth.beta0 <= res.ci_high))
        except Exception as exc:
            out[method] = str(exc) or repr(exc)
    return index, out


def run_replications(dgp: DgpConfig, methods, reps: int, master_seed: int,
                     jobs: int = 1,
                     base_config: LateConfig | None = None) -> SimulationReport:
    """Replay the study `reps` times and aggregate the metrics.

    `jobs` > 1 fans replicates out to a process pool; results are
    reduced in replicate order, so the report is identical for any
    worker count.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    methods = tuple(methods)
    for m in methods:
        if m not in ("robust_np", "robust_lr", "moment", "reg_np", "reg_lr"):
            raise ValueError(f"unknown method: {m!r}")
    base_config = base_config or LateConfig()
    results = [None] * reps
    if jobs <= 1:
        for i in range(reps):
            results[i] = _one_replicate(dgp, methods, master_seed, i, base_config)[1]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_one_replicate, dgp, methods, master_seed, i,
                                   base_config) for i in range(reps)]
            for fut in futures:
                index, out = fut.result()
                results[index] = out
    summaries = []
    for method in methods:
        betas, covered, failures = [], [], 0
        for out in results:
            got = out[method]
            if isinstance(got, str):
                failures += 1
            else:
                betas.append(got[0])
                covered.append(got[1])
        summaries.append(summarize_replicates(method, betas, covered,
                                              failures, dgp.n))
    return SimulationReport(scenario=dgp.scenario, n=dgp.n, p=dgp.p,
                            reps=reps, master_seed=int(master_seed),
                            methods=tuple(summaries))
