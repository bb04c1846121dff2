"""Nuisance-function learners: weighted least squares, logistic
regression, and a small from-scratch ReLU multilayer perceptron.

All three return :class:`~orthoscore.core.FunctionEstimate` objects and
are exactly reproducible from their seed.  The linear and logistic fits
are affine in x and solved by closed form / damped Newton; the MLP is
trained with Adam on shuffled minibatches.  Weighted losses accept
SIGNED weights, which the complier-reweighting criterion needs; nothing
here assumes positivity of the weight vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FunctionEstimate

__all__ = [
    "TrainConfig",
    "pipeline_train_config",
    "MlpArchitecture",
    "TrainingDiverged",
    "fit_least_squares",
    "fit_logistic",
    "fit_mlp",
    "gradient_check",
    "expit",
    "linear_regressor",
    "mlp_regressor",
]

LOSS_KINDS = ("squared_error", "weighted_squared_error", "cross_entropy_on_logits")


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings shared by the iterative learners.

    ``weight_decay`` is decoupled L2 shrinkage applied to weight
    matrices only (never biases) after each Adam step.  It defaults to
    off; the estimator pipelines switch it on for their net fits, where
    an unpenalized wide net interpolates the training fold and produces
    useless out-of-fold values.
    """

    learning_rate: float = 0.001
    epochs: int = 200
    batch_size: int = 64
    seed: int = 0
    weight_init_scale: float = 1.0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")


@dataclass(frozen=True)
class MlpArchitecture:
    """Hidden-layer plan of the ReLU net: `depth` layers of `width` units."""

    depth: int = 4
    width: int = 80

    def __post_init__(self):
        if self.depth < 1 or self.width < 1:
            raise ValueError("depth and width must be at least 1")


# Net fits inside the estimator pipelines run with weight decay on.
# An unpenalized wide net interpolates its training fold (driving the
# fold-fitted log-odds to label-memorizing extremes and wrecking the
# out-of-fold weights); decay at this strength restores smooth fits
# across the fold sizes the pipelines see, down to a few hundred rows.
PIPELINE_DECAY = 8.0


def pipeline_train_config() -> TrainConfig:
    """Training defaults for net fits owned by the estimator pipelines."""
    return TrainConfig(weight_decay=PIPELINE_DECAY)


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, epoch: int):
        super().__init__(f"training diverged at epoch {epoch}")
        self.epoch = epoch


def expit(f):
    """Numerically stable logistic function."""
    return 0.5 * (1.0 + np.tanh(np.asarray(f, dtype=float) / 2.0))


class AffineEstimate(FunctionEstimate):
    """intercept + x @ coef, with the coefficients exposed."""

    def __init__(self, intercept: float, coef: np.ndarray, label: str = "affine"):
        self.intercept = float(intercept)
        coef = np.array(coef, dtype=float)
        coef.setflags(write=False)
        self.coef = coef
        super().__init__(lambda x: self.intercept + x @ self.coef, label)


def _validate_design(x, y):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if x.shape[0] != y.shape[0]:
        raise ValueError("x and targets must have matching length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in inputs")
    return x, y


def fit_least_squares(x, y, weights=None) -> AffineEstimate:
    """Affine fit minimizing sum_i w_i (y_i - b0 - x_i'b)^2.

    Solved through the weighted normal equations.  Weights may be
    signed.  When the condition estimate of the weighted Gram matrix
    exceeds 1e12 (or the matrix is singular), a ridge of
    1e-8 * trace / ncol is added to the diagonal before solving.
    """
    x, y = _validate_design(x, y)
    n, p = x.shape
    if n <= p:
        raise ValueError("underdetermined")
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape[0] != n:
            raise ValueError("weights must have length n")
        if not np.all(np.isfinite(w)):
            raise ValueError("non-finite values in weights")
    a = np.column_stack([np.ones(n), x])
    gram = a.T @ (a * w[:, None])
    rhs = a.T @ (w * y)
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e12:
        gram = gram + (1e-8 * np.trace(gram) / gram.shape[0]) * np.eye(gram.shape[0])
    try:
        theta = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError("degenerate weighted design") from exc
    return AffineEstimate(theta[0], theta[1:], label="least squares")


def _cross_entropy(f, labels):
    return float(np.mean(np.logaddexp(0.0, f) - labels * f))


def fit_logistic(x, labels, config: TrainConfig | None = None,
                 max_iter: int = 100, grad_tol: float = 1e-8) -> AffineEstimate:
    """Affine log-odds fit by damped Newton on the cross-entropy loss.

    Iterates until the gradient norm falls below `grad_tol` or
    `max_iter` steps, halving the step whenever it would increase the
    loss, so the recorded loss path is non-increasing.  On separable
    data the iteration simply stops at the cap with finite coefficients.
    The returned estimate carries the loss path as `newton_losses`.
    `config` is accepted for signature parity with the other learners;
    the Newton solver is deterministic and has no stochastic knobs.
    """
    del config
    x, labels = _validate_design(x, labels)
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise ValueError("labels must be 0/1")
    if np.all(labels == labels[0]):
        raise ValueError("degenerate labels")
    n, p = x.shape
    a = np.column_stack([np.ones(n), x])
    theta = np.zeros(p + 1)
    f = a @ theta
    losses = [_cross_entropy(f, labels)]
    for _ in range(max_iter):
        g = expit(f)
        grad = a.T @ (g - labels) / n
        if np.linalg.norm(grad) <= grad_tol:
            break
        curv = np.clip(g * (1.0 - g), 1e-12, None)
        hess = (a * curv[:, None]).T @ a / n
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            hess = hess + (1e-12 * np.trace(hess)) * np.eye(p + 1)
            step = np.linalg.solve(hess, grad)
        t = 1.0
        moved = False
        while t > 1e-14:
            cand = theta - t * step
            cand_loss = _cross_entropy(a @ cand, labels)
            if cand_loss <= losses[-1]:
                theta, moved = cand, True
                losses.append(cand_loss)
                break
            t /= 2.0
        if not moved:
            break
        f = a @ theta
    est = AffineEstimate(theta[0], theta[1:], label="logistic log-odds")
    est.newton_losses = tuple(losses)
    return est


# ---------------------------------------------------------------------------
# Multilayer perceptron
# ---------------------------------------------------------------------------

def _init_params(p_in: int, arch: MlpArchitecture, rng,
                 scale: float = 1.0) -> list:
    """He-style initialization: N(0, 2/fan_in) weights, zero biases."""
    params = []
    fan_in = p_in
    for _ in range(arch.depth):
        w = rng.standard_normal((arch.width, fan_in)) * np.sqrt(2.0 / fan_in) * scale
        params.append([w, np.zeros(arch.width)])
        fan_in = arch.width
    w_out = rng.standard_normal(fan_in) * np.sqrt(2.0 / fan_in) * scale
    params.append([w_out, np.zeros(1)])
    return params


def _forward(params, x):
    """Returns per-sample predictions and the activation stack."""
    acts = [x]
    h = x
    for w, b in params[:-1]:
        h = np.maximum(h @ w.T + b, 0.0)
        acts.append(h)
    w_out, b_out = params[-1]
    pred = h @ w_out + b_out[0]
    return pred, acts


def _loss_value(pred, targets, kind, w):
    if kind == "squared_error":
        return float(np.mean((pred - targets) ** 2))
    if kind == "weighted_squared_error":
        return float(np.mean(w * (pred - targets) ** 2))
    return float(np.mean(np.logaddexp(0.0, pred) - targets * pred))


def _loss_grad_pred(pred, targets, kind, w):
    m = pred.shape[0]
    if kind == "squared_error":
        return 2.0 * (pred - targets) / m
    if kind == "weighted_squared_error":
        return 2.0 * w * (pred - targets) / m
    return (expit(pred) - targets) / m


def _backward(params, acts, dpred):
    """Gradients of the scalar loss with respect to every parameter."""
    grads = [[np.zeros_like(w), np.zeros_like(b)] for w, b in params]
    w_out = params[-1][0]
    h_last = acts[-1]
    grads[-1][0] = h_last.T @ dpred
    grads[-1][1] = np.array([np.sum(dpred)])
    delta = np.outer(dpred, w_out)
    for layer in range(len(params) - 2, -1, -1):
        delta = delta * (acts[layer + 1] > 0.0)
        grads[layer][0] = delta.T @ acts[layer]
        grads[layer][1] = delta.sum(axis=0)
        if layer > 0:
            delta = delta @ params[layer][0]
    return grads


class MlpEstimate(FunctionEstimate):
    """Frozen feedforward ReLU net."""

    def __init__(self, params, label="mlp"):
        self.params = [[w.copy(), b.copy()] for w, b in params]
        for w, b in self.params:
            w.setflags(write=False)
            b.setflags(write=False)
        super().__init__(lambda x: _forward(self.params, x)[0], label)


def _check_loss_args(kind, weights, n):
    if kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind: {kind!r}")
    if kind == "weighted_squared_error":
        if weights is None:
            raise ValueError("weighted loss requires a weight vector")
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape[0] != n:
            raise ValueError("weights must have length n")
        if not np.all(np.isfinite(w)):
            raise ValueError("non-finite values in weights")
        return w
    return None


def fit_mlp(x, targets, loss: str = "squared_error", weights=None,
            arch: MlpArchitecture | None = None,
            config: TrainConfig | None = None) -> MlpEstimate:
    """Train the ReLU net with Adam (b1=0.9, b2=0.999, eps=1e-8).

    Minibatches are reshuffled every epoch from the seeded generator;
    the final-epoch weights are returned as the estimate.  A non-finite
    batch loss raises :class:`TrainingDiverged` with the epoch index.
    With ``config.weight_decay`` set, every weight matrix is shrunk by
    the factor (1 - lr * decay) after each step; biases are exempt so a
    constant signal can always be represented exactly.
    """
    arch = arch or MlpArchitecture()
    config = config or TrainConfig()
    x, targets = _validate_design(x, targets)
    n, p = x.shape
    if n < config.batch_size:
        raise ValueError("batch size exceeds sample size")
    w_full = _check_loss_args(loss, weights, n)
    if loss == "cross_entropy_on_logits" and not np.all((targets == 0) | (targets == 1)):
        raise ValueError("labels must be 0/1")

    rng = np.random.default_rng(config.seed)
    params = _init_params(p, arch, rng, config.weight_init_scale)
    m_state = [[np.zeros_like(w), np.zeros_like(b)] for w, b in params]
    v_state = [[np.zeros_like(w), np.zeros_like(b)] for w, b in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    lr = config.learning_rate
    decay = config.weight_decay
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            pred, acts = _forward(params, x[idx])
            wb = None if w_full is None else w_full[idx]
            if not np.isfinite(_loss_value(pred, targets[idx], loss, wb)):
                raise TrainingDiverged(epoch)
            dpred = _loss_grad_pred(pred, targets[idx], loss, wb)
            grads = _backward(params, acts, dpred)
            step += 1
            corr1 = 1.0 - b1 ** step
            corr2 = 1.0 - b2 ** step
            for layer in range(len(params)):
                for slot in range(2):
                    g = grads[layer][slot]
                    m_state[layer][slot] = b1 * m_state[layer][slot] + (1 - b1) * g
                    v_state[layer][slot] = b2 * v_state[layer][slot] + (1 - b2) * g * g
                    m_hat = m_state[layer][slot] / corr1
                    v_hat = v_state[layer][slot] / corr2
                    params[layer][slot] = params[layer][slot] - lr * m_hat / (np.sqrt(v_hat) + eps)
                    if decay > 0.0 and slot == 0:
                        params[layer][slot] = params[layer][slot] * (1.0 - lr * decay)
    pred, _ = _forward(params, x)
    if not np.isfinite(_loss_value(pred, targets, loss, w_full)):
        raise TrainingDiverged(config.epochs - 1)
    return MlpEstimate(params)


def _flatten(params):
    return np.concatenate([arr.ravel() for layer in params for arr in layer])


def _unflatten(flat, template):
    out, pos = [], 0
    for w, b in template:
        nw, nb = w.size, b.size
        out.append([flat[pos:pos + nw].reshape(w.shape),
                    flat[pos + nw:pos + nw + nb].reshape(b.shape)])
        pos += nw + nb
    return out


def gradient_check(arch: MlpArchitecture, loss: str, x, targets,
                   weights=None, seed: int = 0,
                   fd_step: float = 1e-5) -> float:
    """Max relative error of backprop against central finite differences.

    Initializes a seeded net at random parameters, computes the full
    analytic gradient of the batch loss, then perturbs every parameter
    coordinate by +-fd_step and compares.
    """
    x, targets = _validate_design(x, targets)
    w = _check_loss_args(loss, weights, x.shape[0])
    rng = np.random.default_rng(seed)
    params = _init_params(x.shape[1], arch, rng)
    pred, acts = _forward(params, x)
    dpred = _loss_grad_pred(pred, targets, loss, w)
    analytic = _flatten(_backward(params, acts, dpred))
    flat = _flatten(params)
    fd = np.empty_like(flat)
    for i in range(flat.size):
        bump = np.zeros_like(flat)
        bump[i] = fd_step
        up, _ = _forward(_unflatten(flat + bump, params), x)
        dn, _ = _forward(_unflatten(flat - bump, params), x)
        fd[i] = (_loss_value(up, targets, loss, w)
                 - _loss_value(dn, targets, loss, w)) / (2.0 * fd_step)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-8)
    return float(np.max(np.abs(analytic - fd) / denom))


def linear_regressor():
    """Regressor callback backed by the closed-form least-squares fit."""
    return lambda x, t: fit_least_squares(x, t)


def mlp_regressor(arch: MlpArchitecture | None = None,
                  config: TrainConfig | None = None):
    """Regressor callback backed by the squared-error MLP."""
    def fit(x, t):
        return fit_mlp(x, t, "squared_error", arch=arch, config=config)
    return fit
