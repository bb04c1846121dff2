"""Tests for the generic orthogonal-score builders and the FD checker."""

import numpy as np
import pytest

from orthoscore.core import Dataset, FunctionEstimate
from orthoscore.late import LateConfig, clip_propensity, estimate_h, \
    estimate_log_odds, robust_score
from orthoscore.learners import expit, linear_regressor
from orthoscore.ortho import (
    CoupledModel,
    DecoupledModel,
    RatioDirection,
    SequentialModel,
    build_coupled_score,
    build_decoupled_score,
    build_sequential_score,
    check_orthogonality,
    fit_coupled_direction,
    fit_decoupled_direction,
    fit_sequential_directions,
)

# Partially linear regression as a coupled criterion:
#   m(beta, f; w) = (beta*d + f(x) - y)^2
# so d2_{beta f} m = 2d and d2_{ff} m = 2.
PLR_MODEL = CoupledModel(
    d_beta_m=lambda b, fv, data: 2.0 * data.d * (b * data.d + fv - data.y),
    d_f_m=lambda b, fv, data: 2.0 * (b * data.d + fv - data.y),
    d2_beta_f_m=lambda b, fv, data: 2.0 * data.d,
    d2_ff_m=lambda b, fv, data: np.full(data.n, 2.0),
    solve="linear",
)


def _plr_data(n, seed, beta0=1.0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    d = 0.7 * x[:, 0] - 0.2 * x[:, 1] + rng.normal(size=n)
    y = beta0 * d + np.cos(x[:, 1]) + rng.normal(size=n)
    return Dataset(x, y, d, None, real_treatment=True)


class TestCoupledDirection:
    def test_plr_direction_is_minus_treatment_regression(self):
        # With a linear regressor, the fitted ratio -E[2d|x]/E[2|x]
        # must equal minus the least-squares fit of d on x exactly.
        data = _plr_data(300, seed=1)
        f_hat = FunctionEstimate.constant(0.0)
        h = fit_coupled_direction(PLR_MODEL, 0.5, f_hat, data,
                                  linear_regressor())
        from orthoscore.learners import fit_least_squares
        d_fit = fit_least_squares(data.x, data.d)
        np.testing.assert_allclose(h(data.x), -d_fit(data.x), atol=1e-10)

    def test_zero_cross_derivative_gives_zero_direction(self):
        model = CoupledModel(
            d_beta_m=lambda b, fv, data: data.y,
            d_f_m=lambda b, fv, data: fv,
            d2_beta_f_m=lambda b, fv, data: np.zeros(data.n),
            d2_ff_m=lambda b, fv, data: np.full(data.n, 2.0),
        )
        data = _plr_data(100, seed=2)
        h = fit_coupled_direction(model, 0.0, FunctionEstimate.constant(0.0),
                                  data, linear_regressor())
        np.testing.assert_allclose(h(data.x), 0.0, atol=1e-12)

    def test_independent_bernoulli_gives_flat_direction(self):
        rng = np.random.default_rng(3)
        n = 60000
        x = rng.normal(size=(n, 2))
        d = (rng.random(n) < 0.3).astype(float)
        data = Dataset(x, rng.normal(size=n), d, None, real_treatment=True)
        h = fit_coupled_direction(PLR_MODEL, 0.0,
                                  FunctionEstimate.constant(0.0), data,
                                  linear_regressor())
        probe = rng.normal(size=(50, 2))
        np.testing.assert_allclose(h(probe), -0.3, atol=0.02)

    def test_all_zero_denominator_rejected(self):
        model = CoupledModel(
            d_beta_m=PLR_MODEL.d_beta_m,
            d_f_m=PLR_MODEL.d_f_m,
            d2_beta_f_m=PLR_MODEL.d2_beta_f_m,
            d2_ff_m=lambda b, fv, data: np.zeros(data.n),
        )
        data = _plr_data(50, seed=4)
        with pytest.raises(ValueError, match="direction undefined"):
            fit_coupled_direction(model, 0.0, FunctionEstimate.constant(0.0),
                                  data, linear_regressor())


class TestCoupledScore:
    def test_plr_reduces_to_partialled_form(self):
        data = _plr_data(150, seed=5)
        f_hat = FunctionEstimate(lambda x: np.sin(x[:, 0]))
        m_hat = FunctionEstimate(lambda x: 0.3 * x[:, 1])
        h_hat = FunctionEstimate(lambda x: -m_hat(x))
        family = build_coupled_score(PLR_MODEL, f_hat, h_hat)
        beta = 0.8
        expected = 2.0 * (data.d - m_hat(data.x)) * (
            beta * data.d + f_hat(data.x) - data.y)
        np.testing.assert_allclose(family.evaluate(beta, data), expected,
                                   atol=1e-12)

    def test_zero_direction_recovers_base_derivative(self):
        data = _plr_data(80, seed=6)
        f_hat = FunctionEstimate.constant(0.0)
        family = build_coupled_score(PLR_MODEL, f_hat,
                                     FunctionEstimate.constant(0.0))
        expected = PLR_MODEL.d_beta_m(0.4, f_hat(data.x), data)
        np.testing.assert_allclose(family.evaluate(0.4, data), expected,
                                   atol=0)

    def test_hand_evaluated_observations(self):
        # Three rows evaluated by hand for m=(beta*d+f-y)^2 with f=0,
        # h=-1: psi = 2d(beta*d - y) + 2(beta*d - y)*(-1), beta=1.
        x = np.zeros((3, 1))
        d = np.array([1.0, 0.0, 2.0])
        y = np.array([2.0, 1.0, 0.0])
        data = Dataset(x, y, d, None, real_treatment=True)
        family = build_coupled_score(PLR_MODEL,
                                     FunctionEstimate.constant(0.0),
                                     FunctionEstimate.constant(-1.0))
        # row1: 2*1*(1-2) + 2*(1-2)*(-1) = -2 + 2 = 0
        # row2: 0 + 2*(0-1)*(-1) = 2
        # row3: 2*2*(2-0) + 2*(2-0)*(-1) = 8 - 4 = 4
        np.testing.assert_allclose(family.evaluate(1.0, data),
                                   [0.0, 2.0, 4.0], atol=1e-12)


# Quantile-style decoupled toy: psi = d*(I(y<=beta)-tau) + f-correction
# channel; m1 is the cross-entropy criterion for the log-odds f, so
# d_f m1 = expit(f) - d and d2_ff m1 = expit(f)(1-expit(f)).
def _qte_model(tau):
    return DecoupledModel(
        psi=lambda b, fv, data: data.d * (1.0 + np.exp(-fv))
        * ((data.y <= b) - tau),
        d_f_psi=lambda b, fv, data: -data.d * np.exp(-fv)
        * ((data.y <= b) - tau),
        d_f_m1=lambda fv, data: expit(fv) - data.d,
        d2_ff_m1=lambda fv, data: expit(fv) * (1.0 - expit(fv)),
    )


class TestDecoupledDirection:
    def test_zero_sensitivity_gives_zero_direction(self):
        model = DecoupledModel(
            psi=lambda b, fv, data: data.y - b,
            d_f_psi=lambda b, fv, data: np.zeros(data.n),
            d_f_m1=lambda fv, data: expit(fv) - data.d,
            d2_ff_m1=lambda fv, data: expit(fv) * (1.0 - expit(fv)),
        )
        data = _plr_data(100, seed=7)
        h = fit_decoupled_direction(model, 0.0,
                                    FunctionEstimate.constant(0.0), data,
                                    linear_regressor())
        np.testing.assert_allclose(h(data.x), 0.0, atol=1e-12)

    def test_constant_means_give_constant_direction(self):
        rng = np.random.default_rng(8)
        n = 50000
        x = rng.normal(size=(n, 2))
        d = (rng.random(n) < 0.5).astype(float)
        y = rng.normal(size=n)
        data = Dataset(x, y, d, None, real_treatment=True)
        model = _qte_model(tau=0.5)
        f_hat = FunctionEstimate.constant(0.0)
        h = fit_decoupled_direction(model, 0.0, f_hat, data,
                                    linear_regressor())
        # Closed form at f=0: num = E[-d(I(y<=0)-.5)] = -.5*.25... the
        # exact level is checked by Monte Carlo flatness instead.
        probe = rng.normal(size=(40, 2))
        vals = h(probe)
        assert np.std(vals) < 0.02

    def test_direction_matches_independent_fit_ratio(self):
        # The fitted direction must equal -num_fit/den_fit where both
        # fits solve the normal equations; checked against an
        # independently solved least-squares oracle.
        rng = np.random.default_rng(9)
        n = 500
        x = rng.normal(size=(n, 2))
        g = expit(0.8 * x[:, 0])
        d = (rng.random(n) < g).astype(float)
        y = x[:, 0] + rng.normal(size=n)
        data = Dataset(x, y, d, None, real_treatment=True)
        model = _qte_model(tau=0.5)
        f_hat = FunctionEstimate(lambda xs: 0.8 * xs[:, 0])
        h = fit_decoupled_direction(model, 0.0, f_hat, data,
                                    linear_regressor())
        fv = f_hat(data.x)
        num_t = model.d_f_psi(0.0, fv, data)
        den_t = model.d2_ff_m1(fv, data)
        design = np.column_stack([np.ones(n), x])
        num_coef = np.linalg.lstsq(design, num_t, rcond=None)[0]
        den_coef = np.linalg.lstsq(design, den_t, rcond=None)[0]
        probe = rng.normal(size=(30, 2))
        probe_design = np.column_stack([np.ones(30), probe])
        expected = -(probe_design @ num_coef) / (probe_design @ den_coef)
        np.testing.assert_allclose(h(probe), expected, atol=1e-9)


class TestDecoupledScore:
    def test_cross_entropy_correction_form(self):
        data = _plr_data(60, seed=10)
        model = _qte_model(tau=0.3)
        f_hat = FunctionEstimate(lambda x: 0.2 * x[:, 0])
        h_hat = FunctionEstimate(lambda x: x[:, 1] ** 2)
        family = build_decoupled_score(model, f_hat, h_hat)
        fv = f_hat(data.x)
        expected = (data.d * (1 + np.exp(-fv)) * ((data.y <= 0.1) - 0.3)
                    + (expit(fv) - data.d) * h_hat(data.x))
        np.testing.assert_allclose(family.evaluate(0.1, data), expected,
                                   atol=1e-12)

    def test_zero_direction_reduces_to_psi(self):
        data = _plr_data(60, seed=11)
        model = _qte_model(tau=0.5)
        f_hat = FunctionEstimate.constant(0.4)
        family = build_decoupled_score(model, f_hat,
                                       FunctionEstimate.constant(0.0))
        expected = model.psi(0.0, f_hat(data.x), data)
        np.testing.assert_allclose(family.evaluate(0.0, data), expected)


# Sequential toy with analytic directions.  Observables (y, u, s, q)
# ride along in the covariate matrix so the Dataset stays standard:
# columns are [x1, x2, u, s, q] and y/d fill their usual slots.
#   m1(f; w) = (f - s)^2            with E[s|x] = 0.3*x1
#   m2(mu, f; w) = (mu - q - f)^2   with E[q|x] = x2
#   psi(beta, mu, f; w) = y*mu + u*f - beta
# giving h10 = -E[u|x]/2, h20 = -E[y|x]/2, h30 = h20 exactly.
def _seq_model():
    return SequentialModel(
        psi=lambda b, mv, fv, data: data.y * mv + data.x[:, 2] * fv - b,
        d_mu_psi=lambda b, mv, fv, data: data.y,
        d_f_psi=lambda b, mv, fv, data: data.x[:, 2],
        d_mu_m2=lambda mv, fv, data: 2.0 * (mv - data.x[:, 4] - fv),
        d2_mumu_m2=lambda mv, fv, data: np.full(data.n, 2.0),
        d2_muf_m2=lambda mv, fv, data: np.full(data.n, -2.0),
        d_f_m1=lambda fv, data: 2.0 * (fv - data.x[:, 3]),
        d2_ff_m1=lambda fv, data: np.full(data.n, 2.0),
        solve="linear",
    )


def _seq_data(n, seed):
    rng = np.random.default_rng(seed)
    x12 = rng.normal(size=(n, 2))
    u = -x12[:, 1] + rng.normal(size=n)
    s = 0.3 * x12[:, 0] + rng.normal(size=n)
    q = x12[:, 1] + rng.normal(size=n)
    y = 1.0 + 2.0 * x12[:, 0] + rng.normal(size=n)
    x = np.column_stack([x12, u, s, q])
    return Dataset(x, y, np.zeros(n), None, real_treatment=True)


class TestSequentialDirections:
    def test_toy_closed_forms(self):
        data = _seq_data(120000, seed=12)
        model = _seq_model()
        mu_hat = FunctionEstimate.constant(0.0)
        f_hat = FunctionEstimate.constant(0.0)

        def regressor(x, t):
            # Regress on the structural covariates only, so the
            # pseudo-outcome columns cannot leak into the fit.
            from orthoscore.learners import fit_least_squares
            fit = fit_least_squares(x[:, :2], t)
            return FunctionEstimate(lambda xs: fit(xs[:, :2]))

        dirs = fit_sequential_directions(model, 0.0, mu_hat, f_hat, data,
                                         regressor)
        probe = _seq_data(200, seed=13).x
        x1, x2 = probe[:, 0], probe[:, 1]
        np.testing.assert_allclose(dirs.h1(probe), x2 / 2.0, atol=0.03)
        np.testing.assert_allclose(dirs.h2(probe), -(1 + 2 * x1) / 2.0,
                                   atol=0.04)
        np.testing.assert_allclose(dirs.h3(probe), dirs.h2(probe), atol=1e-10)

    def test_zero_mu_sensitivity_cascades(self):
        model = SequentialModel(
            psi=lambda b, mv, fv, data: data.y - b,
            d_mu_psi=lambda b, mv, fv, data: np.zeros(data.n),
            d_f_psi=lambda b, mv, fv, data: data.x[:, 2],
            d_mu_m2=lambda mv, fv, data: np.zeros(data.n),
            d2_mumu_m2=lambda mv, fv, data: np.full(data.n, 2.0),
            d2_muf_m2=lambda mv, fv, data: np.full(data.n, -2.0),
            d_f_m1=lambda fv, data: np.zeros(data.n),
            d2_ff_m1=lambda fv, data: np.full(data.n, 2.0),
        )
        data = _seq_data(500, seed=14)
        dirs = fit_sequential_directions(model, 0.0,
                                         FunctionEstimate.constant(0.0),
                                         FunctionEstimate.constant(0.0),
                                         data, linear_regressor())
        np.testing.assert_allclose(dirs.h2(data.x), 0.0, atol=1e-12)
        np.testing.assert_allclose(dirs.h3(data.x), 0.0, atol=1e-12)

    def test_zero_muf_curvature_kills_h3_only(self):
        model = SequentialModel(
            psi=_seq_model().psi,
            d_mu_psi=_seq_model().d_mu_psi,
            d_f_psi=_seq_model().d_f_psi,
            d_mu_m2=_seq_model().d_mu_m2,
            d2_mumu_m2=_seq_model().d2_mumu_m2,
            d2_muf_m2=lambda mv, fv, data: np.zeros(data.n),
            d_f_m1=_seq_model().d_f_m1,
            d2_ff_m1=_seq_model().d2_ff_m1,
        )
        data = _seq_data(2000, seed=15)
        dirs = fit_sequential_directions(model, 0.0,
                                         FunctionEstimate.constant(0.0),
                                         FunctionEstimate.constant(0.0),
                                         data, linear_regressor())
        np.testing.assert_allclose(dirs.h3(data.x), 0.0, atol=1e-12)
        assert np.max(np.abs(dirs.h2(data.x))) > 0.1


class TestSequentialScore:
    def test_mu_free_psi_reduces_to_decoupled(self):
        # When psi ignores mu and h2=h3=0, the sequential evaluator
        # must agree with the decoupled one pointwise.
        data = _plr_data(70, seed=16)
        tau = 0.4
        dec = _qte_model(tau)
        seq = SequentialModel(
            psi=lambda b, mv, fv, d_: dec.psi(b, fv, d_),
            d_mu_psi=lambda b, mv, fv, d_: np.zeros(d_.n),
            d_f_psi=lambda b, mv, fv, d_: dec.d_f_psi(b, fv, d_),
            d_mu_m2=lambda mv, fv, d_: np.zeros(d_.n),
            d2_mumu_m2=lambda mv, fv, d_: np.full(d_.n, 2.0),
            d2_muf_m2=lambda mv, fv, d_: np.zeros(d_.n),
            d_f_m1=dec.d_f_m1,
            d2_ff_m1=dec.d2_ff_m1,
        )
        f_hat = FunctionEstimate(lambda x: 0.1 * x[:, 0])
        h_hat = FunctionEstimate(lambda x: np.cos(x[:, 1]))
        zero = FunctionEstimate.constant(0.0)

        class Dirs:
            h1, h2, h3 = h_hat, zero, zero

        fam_seq = build_sequential_score(seq, FunctionEstimate.constant(0.0),
                                         f_hat, Dirs)
        fam_dec = build_decoupled_score(dec, f_hat, h_hat)
        np.testing.assert_allclose(fam_seq.evaluate(0.2, data),
                                   fam_dec.evaluate(0.2, data), atol=1e-12)

    def test_iv_cast_matches_dedicated_robust_score(self):
        # The binary-instrument estimator's orthogonal score, cast into
        # the generic sequential regime (mu-free psi, cross-entropy m1,
        # h1 = -h/(g(1-g))), must agree with the dedicated module.
        rng = np.random.default_rng(17)
        n = 100
        x = rng.normal(size=(n, 3))
        z = (rng.random(n) < 0.6).astype(float)
        d = (rng.random(n) < 0.5).astype(float)
        y = rng.normal(size=n)
        data = Dataset(x, y, d, z)
        cfg = LateConfig(method="robust_lr", seed=0)
        f_hat = estimate_log_odds(data, cfg)
        h_hat = estimate_h(data, f_hat, cfg)
        eps = cfg.clip_epsilon

        def kappa_diff(fv, data):
            g = clip_propensity(expit(fv), eps)
            k0 = (1 - data.d) * ((1 - data.z) - (1 - g)) / ((1 - g) * g)
            k1 = data.d * (data.z - g) / ((1 - g) * g)
            return k1 - k0

        model = DecoupledModel(
            psi=lambda b, fv, d_: kappa_diff(fv, d_) * d_.y - b,
            d_f_psi=lambda b, fv, d_: np.zeros(d_.n),
            d_f_m1=lambda fv, d_: expit(fv) - d_.z,
            d2_ff_m1=lambda fv, d_: expit(fv) * (1 - expit(fv)),
            solve="linear",
        )

        def h1_batch(xs):
            g = clip_propensity(expit(f_hat(xs)), eps)
            return -h_hat(xs) / (g * (1 - g))

        family = build_decoupled_score(model, f_hat,
                                       FunctionEstimate(h1_batch))
        beta = 0.7
        expected = robust_score(beta, f_hat, h_hat, data,
                                clip_epsilon=eps)
        np.testing.assert_allclose(family.evaluate(beta, data), expected,
                                   atol=1e-12)


class TestRatioDirection:
    def test_clip_inactive_on_healthy_denominator(self):
        num = FunctionEstimate.constant(1.0)
        den = FunctionEstimate.constant(2.0)
        h = RatioDirection(num, den)
        h(np.zeros((10, 1)))
        assert h.clip_count == 0

    def test_clip_activates_and_counts(self):
        num = FunctionEstimate.constant(1.0)
        den = FunctionEstimate(lambda x: x[:, 0])  # tiny near 0
        h = RatioDirection(num, den, clip=1e-3)
        x = np.array([[1e-6], [0.5], [-1e-7]])
        vals = h(x)
        assert h.clip_count == 2
        assert vals[0] == pytest.approx(-1.0 / 1e-3)
        assert vals[2] == pytest.approx(1.0 / 1e-3)

    def test_sign_preserved(self):
        num = FunctionEstimate.constant(1.0)
        den = FunctionEstimate(lambda x: x[:, 0])
        h = RatioDirection(num, den, clip=1e-3)
        vals = h(np.array([[-1e-9], [1e-9]]))
        assert vals[0] > 0 > vals[1]


class TestCheckOrthogonality:
    @staticmethod
    def _plr_sampler(m, seed):
        return _plr_data(m, seed)

    def _family_at_truth(self):
        f0 = FunctionEstimate(lambda x: np.cos(x[:, 1]))
        m0 = FunctionEstimate(lambda x: 0.7 * x[:, 0] - 0.2 * x[:, 1])
        return build_coupled_score(PLR_MODEL, f0,
                                   FunctionEstimate(lambda x: -m0(x)))

    def test_orthogonal_at_truth_within_three_se(self):
        family = self._family_at_truth()
        for direction in (FunctionEstimate.constant(1.0),
                          FunctionEstimate(lambda x: x[:, 0]),
                          FunctionEstimate(lambda x: np.cos(x[:, 0]))):
            for which in ("f", "h"):
                deriv, se = check_orthogonality(
                    family, self._plr_sampler, beta0=1.0,
                    direction=direction, which_nuisance=which,
                    n_mc=40000, seed=5)
                assert abs(deriv) <= 3.0 * se, (which, direction.label)

    def test_non_orthogonal_control_detected(self):
        # The unpartialled score d*(beta*d + f(x) - y) is sensitive to
        # f perturbations: its derivative is E[2d * dir(x)] != 0.
        def make(nus):
            from orthoscore.ortho import ScoreFamily

            def evaluate(beta, data):
                return 2.0 * data.d * (beta * data.d + nus["f"](data.x)
                                       - data.y)

            return ScoreFamily(evaluate, "linear", dict(nus), make)

        family = make({"f": FunctionEstimate(lambda x: np.cos(x[:, 1]))})
        deriv, se = check_orthogonality(
            family, self._plr_sampler, beta0=1.0,
            direction=FunctionEstimate(lambda x: x[:, 0]),
            which_nuisance="f", n_mc=40000, seed=6)
        assert abs(deriv) > 5.0 * se

    def test_zero_direction_is_exactly_zero(self):
        family = self._family_at_truth()
        deriv, se = check_orthogonality(
            family, self._plr_sampler, beta0=1.0,
            direction=FunctionEstimate.constant(0.0), which_nuisance="f",
            n_mc=5000, seed=7)
        assert deriv == 0.0
        assert se == 0.0

    def test_bad_epsilon_rejected(self):
        family = self._family_at_truth()
        with pytest.raises(ValueError, match="epsilon"):
            check_orthogonality(family, self._plr_sampler, 1.0,
                                FunctionEstimate.constant(1.0), "f",
                                epsilon=0.0, n_mc=100, seed=0)

    def test_rebinding_unknown_name_rejected(self):
        family = self._family_at_truth()
        with pytest.raises(ValueError, match="unknown nuisance"):
            family.with_nuisances(zirconium=FunctionEstimate.constant(0.0))

    def test_deterministic_given_seed(self):
        family = self._family_at_truth()
        args = dict(direction=FunctionEstimate.constant(1.0),
                    which_nuisance="h", n_mc=20000, seed=11)
        a = check_orthogonality(family, self._plr_sampler, 1.0, **args)
        b = check_orthogonality(family, self._plr_sampler, 1.0, **args)
        assert a == b
