import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atomrb.analysis import (
    InvalidDataError,
    _infidelities,
    binomial_sigma,
    echo_envelope,
    error_budget,
    eta_model,
    fit_echo_decay,
    fit_eta,
    fit_gaussian,
    fit_least_squares,
    fit_rb_curve,
    fit_rb_decay,
    fit_sinusoid,
    gaussian,
    rb_model,
    sample_curve,
    sinusoid,
    visibility_sigma,
    write_curve_csv,
)
from atomrb.clifford import generate_group
from atomrb.engine import REFERENCE_LENGTHS, ExperimentTrace, RBDataset, run_ramsey
from atomrb.noise import NoiseConfig
from atomrb.pulse import REFERENCE_IDLE, REFERENCE_T_HALF_PI, rabi_from_t_half_pi, schedules

T_CG = 75.73e-6
LENGTHS = np.array(REFERENCE_LENGTHS, dtype=float)


class TestLeastSquares:
    def test_linear_model_exact(self):
        x = np.linspace(0, 1, 11)
        fit = fit_least_squares(lambda x, a, b: a * x + b, x, 3 * x - 2, None, {"a": 0.0, "b": 0.0})
        assert fit.converged
        assert fit["a"] == pytest.approx(3, abs=1e-10) and fit["b"] == pytest.approx(-2, abs=1e-10)

    def test_linear_errors_match_closed_form(self):
        x = np.linspace(0, 1, 11)
        sigma = 0.1
        fit = fit_least_squares(lambda x, a, b: a * x + b, x, x, sigma, {"a": 0.5, "b": 0.5})
        design = np.column_stack([x, np.ones_like(x)]) / sigma
        cov = np.linalg.inv(design.T @ design)
        assert fit.err("a") == pytest.approx(math.sqrt(cov[0, 0]), rel=1e-5)
        assert fit.err("b") == pytest.approx(math.sqrt(cov[1, 1]), rel=1e-5)

    def test_bounds_respected(self):
        x = np.linspace(0, 1, 11)
        fit = fit_least_squares(lambda x, a: a * x, x, -x, None, {"a": 1.0}, bounds={"a": (0.0, 5.0)})
        assert fit["a"] == 0.0 and fit.converged

    def test_nonpositive_sigma_rejected(self):
        with pytest.raises(InvalidDataError):
            fit_least_squares(lambda x, a: a * x, [1, 2], [1, 2], [1.0, 0.0], {"a": 1.0})

    def test_underdetermined_rejected(self):
        with pytest.raises(InvalidDataError):
            fit_least_squares(lambda x, a, b: a * x + b, [1.0], [1.0], None, {"a": 1.0, "b": 0.0})

    def test_unidentifiable_reports_not_converged(self):
        x = np.linspace(0, 1, 10)
        fit = fit_least_squares(lambda x, a, b: (a + b) * x, x, x, None, {"a": 0.3, "b": 0.3})
        assert not fit.converged
        assert "singular" in fit.message


class TestRBFit:
    def test_frozen_curve_value(self):
        expected = 0.5 + 0.5 * 0.97 * math.exp(1300 * math.log1p(-6e-5))
        assert rb_model(1300, 3e-5, 0.03) == pytest.approx(expected, rel=1e-14)
        assert rb_model(1300, 3e-5, 0.03) == pytest.approx(0.9478, abs=1e-3)

    @pytest.mark.parametrize("eps,d", [(3e-5, 0.03), (1e-4, 0.0), (5e-6, 0.2), (2e-3, 0.05)])
    def test_recovers_noiseless_parameters(self, eps, d):
        fit = fit_rb_curve(LENGTHS, rb_model(LENGTHS, eps, d), 1e-3)
        assert fit.converged
        assert fit["eps"] == pytest.approx(eps, abs=1e-8)
        assert fit["d_if"] == pytest.approx(d, abs=1e-8)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        y = rb_model(LENGTHS, 3e-5, 0.03) + rng.normal(0, 2e-3, LENGTHS.size)
        sig = np.full_like(y, 2e-3)
        perm = rng.permutation(LENGTHS.size)
        a, b = fit_rb_curve(LENGTHS, y, sig), fit_rb_curve(LENGTHS[perm], y[perm], sig[perm])
        assert a["eps"] == pytest.approx(b["eps"], rel=1e-8)
        assert a.err("eps") == pytest.approx(b.err("eps"), rel=1e-6)

    def test_error_coverage(self):
        # with known Gaussian errors, eps +/- 2 sigma should cover the truth ~95 % of the time
        rng = np.random.default_rng(1)
        truth, sig = 3e-5, 3e-3
        hits = 0
        trials = 300
        for _ in range(trials):
            y = rb_model(LENGTHS, truth, 0.03) + rng.normal(0, sig, LENGTHS.size)
            fit = fit_rb_curve(LENGTHS, y, sig)
            hits += abs(fit["eps"] - truth) < 2 * fit.err("eps")
        assert 0.90 <= hits / trials <= 0.99

    def test_errors_scale_as_inverse_sqrt_n(self):
        base = rb_model(LENGTHS, 3e-5, 0.03)
        e1 = fit_rb_curve(LENGTHS, base, binomial_sigma(base, 250)).err("eps")
        e4 = fit_rb_curve(LENGTHS, base, binomial_sigma(base, 1000)).err("eps")
        assert e1 / e4 == pytest.approx(2.0, rel=1e-3)

    def test_too_few_lengths(self):
        with pytest.raises(InvalidDataError):
            fit_rb_curve([1, 200], [0.98, 0.97])

    def test_dataset_wrapper(self):
        surv = np.repeat(rb_model(LENGTHS, 3e-5, 0.03)[:, None], 5, axis=1)
        ds = RBDataset(REFERENCE_LENGTHS, surv, 50)
        fit = fit_rb_decay(ds)
        assert fit["eps"] == pytest.approx(3e-5, abs=1e-8)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(1e-6, 1e-3), st.floats(0.0, 0.2))
    def test_recovery_property(self, eps, d):
        fit = fit_rb_curve(LENGTHS, rb_model(LENGTHS, eps, d), 1e-3)
        assert fit["eps"] == pytest.approx(eps, rel=1e-5, abs=1e-9)


class TestEtaFit:
    def test_single_point_inverts_exactly(self):
        fit = fit_eta([(1.72, 3.386e-5)], T_CG)
        closed = -T_CG / (1.72 * math.log1p(-3.386e-5))
        assert fit["eta"] == pytest.approx(closed, abs=1e-6)
        assert fit["eta"] == pytest.approx(1.30, abs=1e-3)

    def test_recovers_eta_from_curve(self):
        t2s = np.linspace(0.4, 1.72, 5)
        pts = [(t, eta_model(t, 1.3, t_cg=T_CG), 1e-6) for t in t2s]
        assert fit_eta(pts, T_CG)["eta"] == pytest.approx(1.3, rel=1e-8)

    def test_doubling_errors_halves_eta(self):
        t2s = np.linspace(0.4, 1.72, 5)
        eps = eta_model(t2s, 1.3, t_cg=T_CG)
        a = fit_eta(list(zip(t2s, eps)), T_CG)["eta"]
        b = fit_eta(list(zip(t2s, 2 * eps)), T_CG)["eta"]
        assert b == pytest.approx(a / 2, rel=1e-3)

    @pytest.mark.parametrize("bad", [1.0, 1.5, 0.0, -1e-5])
    def test_invalid_eps(self, bad):
        with pytest.raises(InvalidDataError):
            fit_eta([(1.72, bad)], T_CG)

    def test_invalid_t_cg(self):
        with pytest.raises(InvalidDataError):
            fit_eta([(1.72, 3e-5)], 0.0)


class TestCurveFits:
    def test_sinusoid_recovers_frequency(self):
        x = np.linspace(0, 0.12, 61)
        y = sinusoid(x, 17.0, 0.45, 0.3, 0.5)
        fit = fit_sinusoid(x, y, 0.01)
        assert fit.converged
        assert fit["frequency"] == pytest.approx(17.0, rel=1e-8)
        assert fit["amplitude"] == pytest.approx(0.45, rel=1e-8)

    def test_sinusoid_on_ramsey_trace(self):
        trace = run_ramsey(17.0, np.linspace(0, 0.12, 61), 50, noise=NoiseConfig.reference(), seed=1)
        assert fit_sinusoid(trace)["frequency"] == pytest.approx(17.0, abs=0.2)

    def test_gaussian_recovers_parameters(self):
        x = np.linspace(20.4e-6, 21.2e-6, 39)
        y = gaussian(x, 20.78e-6, 0.1e-6, 0.9, 0.05)
        fit = fit_gaussian(x, y, 0.01)
        assert fit["center"] == pytest.approx(20.78e-6, rel=1e-9)
        assert fit["width"] == pytest.approx(0.1e-6, rel=1e-7)

    def test_gaussian_on_flat_data_does_not_claim_a_peak(self):
        x = np.linspace(0, 1, 20)
        fit = fit_gaussian(x, np.full_like(x, 0.5), 0.01)
        assert not fit.converged or fit["amplitude"] == pytest.approx(0.0, abs=1e-9)

    def test_echo_decay(self):
        t = np.linspace(0, 3, 31)
        fit = fit_echo_decay(t, echo_envelope(t, 0.97, 1.72), 0.01)
        assert fit["t2s"] == pytest.approx(1.72, rel=1e-8)
        assert fit["amplitude"] == pytest.approx(0.97, rel=1e-8)

    def test_echo_trace_uses_visibility_errors(self):
        t = np.linspace(0, 3, 31)
        v = echo_envelope(t, 1.0, 1.72)
        trace = ExperimentTrace(t, v, 200, kind="echo")
        a = fit_echo_decay(trace)
        b = fit_echo_decay(t, v, visibility_sigma(v, 200))
        assert a.err("t2s") == pytest.approx(b.err("t2s"))

    def test_too_few_points(self):
        with pytest.raises(InvalidDataError):
            fit_sinusoid([0, 1, 2], [0, 1, 0])

    def test_sample_and_write_curve(self, tmp_path):
        x = np.linspace(0, 3, 31)
        fit = fit_echo_decay(x, echo_envelope(x, 1.0, 1.5), 0.01)
        xs, ys = sample_curve(echo_envelope, fit, 0, 3, n=7)
        path = tmp_path / "c.csv"
        write_curve_csv(path, xs, ys, ["h"])
        lines = path.read_text().splitlines()
        assert lines[:2] == ["# h", "x,model"] and len(lines) == 9

    def test_fit_result_serialisable(self):
        fit = fit_rb_curve(LENGTHS, rb_model(LENGTHS, 3e-5, 0.03), 1e-3)
        json.dumps(fit.to_dict())


class TestSigmas:
    def test_binomial(self):
        assert binomial_sigma(0.5, 100) == pytest.approx(0.05)
        assert binomial_sigma(1.0, 50) > 0
        assert binomial_sigma(0.0, 50) == pytest.approx(binomial_sigma(1.0, 50))

    def test_visibility(self):
        assert visibility_sigma(0.0, 200) == pytest.approx(math.sqrt(1 / 400))
        assert visibility_sigma(1.0, 200) == pytest.approx(math.sqrt(1 / 200 / 400))


class TestBudget:
    def test_noiseless_budget_is_zero(self):
        r = error_budget(NoiseConfig(), T_CG)
        assert r.detuning == pytest.approx(0, abs=1e-15)
        assert r.pulse_area == pytest.approx(0, abs=1e-15)
        assert r.dephasing_exponential == 0 and r.total == pytest.approx(0, abs=1e-14)

    def test_area_term_is_quadratic(self):
        a = error_budget(NoiseConfig(area_rms=0.0015), T_CG).pulse_area
        b = error_budget(NoiseConfig(area_rms=0.003), T_CG).pulse_area
        assert b / a == pytest.approx(4.0, rel=1e-3)

    def test_detuning_term_is_quadratic(self):
        a = error_budget(NoiseConfig(detuning_rms=1.0), T_CG).detuning
        b = error_budget(NoiseConfig(detuning_rms=2.0), T_CG).detuning
        assert b / a == pytest.approx(4.0, rel=1e-3)

    def test_sign_symmetry(self):
        table = generate_group()
        scheds = schedules(REFERENCE_T_HALF_PI, REFERENCE_IDLE)
        ideal = [e.unitary for e in table.elements]
        rabi = rabi_from_t_half_pi(REFERENCE_T_HALF_PI)
        d = 2 * math.pi * 5.0
        plus = _infidelities(scheds, ideal, rabi, d).mean()
        minus = _infidelities(scheds, ideal, rabi, -d).mean()
        # leading order is quadratic in the detuning; odd terms are tiny
        assert plus == pytest.approx(minus, rel=1e-3)
        r = error_budget(NoiseConfig(detuning_rms=5.0), T_CG)
        assert r.detuning == pytest.approx((plus + minus) / 2, rel=1e-12)

    def test_dephasing_terms(self):
        r = error_budget(NoiseConfig(t2s=1.72, eta=1.3), T_CG)
        assert r.dephasing_ratio_estimate == pytest.approx(T_CG / 1.72)
        assert r.dephasing_exponential == pytest.approx(-math.expm1(-T_CG / (1.3 * 1.72)))
        assert r.total == pytest.approx(r.detuning + r.pulse_area + r.dephasing_exponential)


class TestFitterInvariants:
    FAMILIES = [
        (rb_model, LENGTHS, {"eps": 3e-5, "d_if": 0.03}, {"eps": 1e-4, "d_if": 0.0}),
        (sinusoid, np.linspace(0, 1, 40), {"frequency": 3.0, "amplitude": 0.4, "phase": 0.5, "offset": 0.5},
         {"frequency": 2.9, "amplitude": 0.3, "phase": 0.3, "offset": 0.45}),
        (gaussian, np.linspace(-3, 3, 40), {"center": 0.2, "width": 0.7, "amplitude": 0.9, "offset": 0.05},
         {"center": 0.0, "width": 1.0, "amplitude": 1.0, "offset": 0.0}),
        (echo_envelope, np.linspace(0, 3, 31), {"amplitude": 0.97, "t2s": 1.72}, {"amplitude": 1.0, "t2s": 1.0}),
    ]

    @pytest.mark.parametrize("model,x,truth,init", FAMILIES, ids=["rb", "sinusoid", "gaussian", "echo"])
    def test_exact_data_recovered(self, model, x, truth, init):
        y = model(x, *truth.values())
        fit = fit_least_squares(model, x, y, 0.01, init)
        assert fit.converged
        assert fit.residual_norm < 1e-9
        for name, value in truth.items():
            assert fit[name] == pytest.approx(value, rel=1e-6)

    def test_errors_shrink_with_replication(self):
        rng = np.random.default_rng(12)
        x0 = np.linspace(0, 3, 16)
        errs = {}
        for n in (1, 4, 16):
            x = np.tile(x0, n)
            y = echo_envelope(x, 1.0, 1.5) + rng.normal(0, 0.02, x.size)
            errs[n] = fit_echo_decay(x, y, 0.02).err("t2s")
        assert errs[1] / errs[4] == pytest.approx(2.0, rel=0.05)
        assert errs[4] / errs[16] == pytest.approx(2.0, rel=0.05)

    @pytest.mark.parametrize("kind", ["detuning", "area"])
    def test_per_clifford_sign_flip_below_ten_percent(self, kind):
        table = generate_group()
        scheds = schedules(REFERENCE_T_HALF_PI, REFERENCE_IDLE)
        ideal = [e.unitary for e in table.elements]
        rabi = rabi_from_t_half_pi(REFERENCE_T_HALF_PI)
        if kind == "detuning":
            plus = _infidelities(scheds, ideal, rabi, 2 * math.pi * 1.0)
            minus = _infidelities(scheds, ideal, rabi, -2 * math.pi * 1.0)
        else:
            plus = _infidelities(scheds, ideal, rabi * 1.0015, 0.0)
            minus = _infidelities(scheds, ideal, rabi * 0.9985, 0.0)
        nonzero = plus > 1e-15
        assert np.all(np.abs(plus - minus)[nonzero] < 0.1 * plus[nonzero])
