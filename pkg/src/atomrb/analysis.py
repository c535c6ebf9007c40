"""Least-squares fitting of the experiment models and the per-gate error budget."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import qubit
from .clifford import CliffordTable, generate_group
from .engine import ExperimentTrace, RBDataset
from .noise import NoiseConfig, dephasing_error_per_gate
from .pulse import REFERENCE_IDLE, REFERENCE_T_HALF_PI, PulseSchedule, rabi_from_t_half_pi, schedules


class InvalidDataError(ValueError):
    """Data cannot be fitted by the requested model."""


@dataclass
class FitResult:
    params: dict[str, float]
    std_errors: dict[str, float]
    residual_norm: float
    converged: bool
    iterations: int
    dof: int = 0
    message: str = ""
    covariance: Optional[np.ndarray] = field(default=None, repr=False)

    def __getitem__(self, name: str) -> float:
        return self.params[name]

    def err(self, name: str) -> float:
        return self.std_errors[name]

    @property
    def chi2(self) -> float:
        return self.residual_norm**2

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("covariance")
        return out


# ---------------------------------------------------------------------------
# generic damped Gauss-Newton


def _numeric_jacobian(f, p: np.ndarray, scale: np.ndarray, rel_step: float) -> np.ndarray:
    cols = []
    for i in range(len(p)):
        # floor at the initial scale so a parameter sitting near zero still gets a usable step
        h = rel_step * max(abs(p[i]), scale[i])
        up, dn = p.copy(), p.copy()
        up[i] += h
        dn[i] -= h
        cols.append((f(up) - f(dn)) / (2 * h))
    return np.column_stack(cols)


def fit_least_squares(
    model: Callable[..., np.ndarray],
    x: Sequence[float],
    y: Sequence[float],
    sigma: Sequence[float] | float | None,
    init: Mapping[str, float],
    bounds: Mapping[str, tuple[float, float]] | None = None,
    *,
    xtol: float = 1e-10,
    max_iter: int = 200,
    rel_step: float = 1e-6,
    scale_errors: bool = False,
) -> FitResult:
    """Minimise sum(((y - model(x, *p)) / sigma)^2) by damped Gauss-Newton.

    Levenberg-Marquardt damping on the diagonal, central-difference
    Jacobians, and box bounds enforced by clamping each step. Standard errors
    come from the inverse of J^T J at the solution (multiplied by the reduced
    chi-square when ``scale_errors``). A singular problem gives a result with
    ``converged=False`` and a diagnostic message instead of raising.
    """
    names = list(init)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sig = np.ones_like(y) if sigma is None else np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
    if np.any(~(sig > 0)):
        raise InvalidDataError("all sigma must be positive")
    if len(y) < len(names):
        raise InvalidDataError(f"{len(y)} points cannot determine {len(names)} parameters")

    bounds = bounds or {}
    lo = np.array([bounds.get(n, (-np.inf, np.inf))[0] for n in names], dtype=float)
    hi = np.array([bounds.get(n, (-np.inf, np.inf))[1] for n in names], dtype=float)
    p = np.clip(np.array([init[n] for n in names], dtype=float), lo, hi)
    scale = np.where(p != 0, np.abs(p), 1.0)

    def resid(q):
        return (model(x, *q) - y) / sig

    r = resid(p)
    chi2 = float(r @ r)
    lam = 1e-3
    converged = False
    message = "maximum iterations reached"
    it = 0
    jac = _numeric_jacobian(resid, p, scale, rel_step)

    for it in range(1, max_iter + 1):
        a = jac.T @ jac
        g = jac.T @ r
        # a parameter pinned on a bound whose descent direction points outward is held fixed
        free = ~(((p <= lo) & (g > 0)) | ((p >= hi) & (g < 0)))
        if not np.any(free):
            converged, message = True, "all parameters at bounds"
            break
        af, gf = a[np.ix_(free, free)], g[free]
        diag = np.diag(af)
        if np.any(diag <= 0) or np.linalg.cond(af) > 1e15:
            message = "singular Jacobian: parameters are not identifiable from the data"
            break

        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(af + lam * np.diag(diag), -gf)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = p.copy()
            trial[free] += step
            trial = np.clip(trial, lo, hi)
            r_trial = resid(trial)
            chi2_trial = float(r_trial @ r_trial)
            if np.isfinite(chi2_trial) and chi2_trial <= chi2:
                accepted = True
                break
            lam *= 10

        if not accepted:
            # no downhill step left at machine precision
            converged, message = True, "stationary point"
            break

        change = np.abs(trial - p)
        p, r, chi2 = trial, r_trial, chi2_trial
        lam = max(lam / 10, 1e-12)
        jac = _numeric_jacobian(resid, p, scale, rel_step)
        if np.all(change <= xtol * (np.abs(p) + xtol)) or chi2 == 0.0:
            converged, message = True, "parameter change below tolerance"
            break

    cov = None
    errors = {n: math.nan for n in names}
    a = jac.T @ jac
    dof = len(y) - len(names)
    try:
        if np.linalg.cond(a) > 1e15:
            raise np.linalg.LinAlgError
        cov = np.linalg.inv(a)
        if scale_errors:
            cov = cov * (chi2 / dof if dof > 0 else math.inf)
        errors = {n: float(math.sqrt(max(cov[i, i], 0.0))) for i, n in enumerate(names)}
    except np.linalg.LinAlgError:
        converged = False
        message = "singular Jacobian: parameters are not identifiable from the data"

    if converged:
        g = jac.T @ r
        free = ~(((p <= lo) & (g > 0)) | ((p >= hi) & (g < 0)))
        if np.any(free):
            gf = g[free]
            decrement = float(gf @ np.linalg.solve(a[np.ix_(free, free)], gf))
            if decrement > 1e-8 * (1 + chi2):
                converged, message = False, f"gradient not small at stop (decrement {decrement:.3g})"

    return FitResult(
        params={n: float(v) for n, v in zip(names, p)},
        std_errors=errors,
        residual_norm=math.sqrt(chi2),
        converged=converged,
        iterations=it,
        dof=dof,
        message=message,
        covariance=cov,
    )


def binomial_sigma(p, n) -> np.ndarray:
    """Binomial standard error, with the Agresti-Coull estimate at p = 0 or 1."""
    p = np.asarray(p, dtype=float)
    n = np.asarray(n, dtype=float)
    plain = np.sqrt(p * (1 - p) / n)
    n_ac = n + 1.0
    p_ac = (p * n + 0.5) / n_ac
    ac = np.sqrt(p_ac * (1 - p_ac) / n_ac)
    return np.where((p <= 0) | (p >= 1), ac, plain)


# ---------------------------------------------------------------------------
# RB decay


def rb_model(length, eps, d_if):
    return 0.5 + 0.5 * (1 - d_if) * (1 - 2 * eps) ** np.asarray(length, dtype=float)


def rb_sigma(ds: RBDataset) -> np.ndarray:
    """Per-length uncertainty of the mean survival: SEM, floored by shot noise."""
    return np.maximum(ds.sem, binomial_sigma(ds.mean, ds.total_shots))


def fit_rb_curve(lengths, survival, sigma=None) -> FitResult:
    lengths = np.asarray(lengths, dtype=float)
    survival = np.asarray(survival, dtype=float)
    if len(np.unique(lengths)) < 3:
        raise InvalidDataError("RB fit needs at least 3 distinct lengths")

    contrast = 2 * survival - 1
    ok = contrast > 0
    eps0 = 1e-4
    if np.count_nonzero(ok) >= 2 and np.ptp(lengths[ok]) > 0:
        slope = np.polyfit(lengths[ok], np.log(contrast[ok]), 1)[0]
        eps0 = (1 - math.exp(min(slope, 0.0))) / 2
    eps0 = min(max(eps0, 0.0), 0.49)
    i_min = int(np.argmin(lengths))
    d0 = 1 - contrast[i_min] / (1 - 2 * eps0) ** lengths[i_min]
    d0 = min(max(d0, 0.0), 1.0)

    return fit_least_squares(
        rb_model,
        lengths,
        survival,
        sigma,
        {"eps": eps0, "d_if": d0},
        bounds={"eps": (0.0, 0.5), "d_if": (0.0, 1.0)},
    )


def fit_rb_decay(ds: RBDataset) -> FitResult:
    """Fit mean survival per length to 1/2 + 1/2 (1 - d_if)(1 - 2 eps)^length."""
    return fit_rb_curve(ds.lengths, ds.mean, rb_sigma(ds))


# ---------------------------------------------------------------------------
# dephasing-limited error vs coherence time


def eta_model(t2s, eta, *, t_cg: float):
    return -np.expm1(-t_cg / (eta * np.asarray(t2s, dtype=float)))


def fit_eta(points: Sequence[Sequence[float]], t_cg: float) -> FitResult:
    """Fit eps(T_2s) = 1 - exp(-t_cg / (eta T_2s)) for eta.

    ``points`` holds ``(t2s, eps)`` or ``(t2s, eps, sigma)`` tuples. Without
    sigmas the points are equally weighted and the error is scaled by the
    scatter.
    """
    if t_cg <= 0:
        raise InvalidDataError("t_cg must be positive")
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 1 or pts.shape[1] not in (2, 3):
        raise InvalidDataError("points must be (t2s, eps[, sigma]) rows")
    t2s, eps = pts[:, 0], pts[:, 1]
    if np.any(eps >= 1) or np.any(eps <= 0) or np.any(t2s <= 0):
        raise InvalidDataError("need 0 < eps < 1 and t2s > 0 for every point")
    sigma = pts[:, 2] if pts.shape[1] == 3 else None
    eta0 = float(np.median(-t_cg / (t2s * np.log1p(-eps))))

    def model(t, eta):
        return eta_model(t, eta, t_cg=t_cg)

    return fit_least_squares(
        model, t2s, eps, sigma, {"eta": eta0}, bounds={"eta": (1e-12, np.inf)},
        scale_errors=sigma is None and len(pts) > 1,
    )


# ---------------------------------------------------------------------------
# sinusoid / gaussian / echo envelope


def sinusoid(x, frequency, amplitude, phase, offset):
    return offset + amplitude * np.cos(2 * np.pi * frequency * np.asarray(x) + phase)


def gaussian(x, center, width, amplitude, offset):
    return offset + amplitude * np.exp(-((np.asarray(x) - center) ** 2) / (2 * width**2))


def echo_envelope(t, amplitude, t2s):
    return amplitude * np.exp(-((np.asarray(t) / t2s) ** 2))


def visibility_sigma(v, n) -> np.ndarray:
    """Standard error of p(+) - p(-) estimated from ``n`` shots each.

    With p(+/-) = (1 +/- v) / 2 the variance is (1 - v^2) / (2 n); the
    1/n floor keeps saturated points from getting infinite weight.
    """
    v = np.asarray(v, dtype=float)
    n = np.asarray(n, dtype=float)
    return np.sqrt(np.maximum(1 - v**2, 1 / n) / (2 * n))


def _trace_arrays(trace, y=None, sigma=None):
    if isinstance(trace, ExperimentTrace):
        x, y = trace.x, trace.p
        if sigma is None and trace.kind == "echo":
            sigma = visibility_sigma(y, trace.shots)
        elif sigma is None:
            sigma = binomial_sigma(y, trace.shots)
    else:
        x = np.asarray(trace, dtype=float)
        y = np.asarray(y, dtype=float)
    return x, y, sigma


def _rescale(fit: FitResult, factors: Mapping[str, float], shifts: Mapping[str, float] = {}) -> FitResult:
    for name, f in factors.items():
        fit.params[name] = fit.params[name] * f + shifts.get(name, 0.0)
        fit.std_errors[name] = fit.std_errors[name] * abs(f)
    if fit.covariance is not None:
        names = list(fit.params)
        d = np.array([factors.get(n, 1.0) for n in names])
        fit.covariance = fit.covariance * np.outer(d, d)
    return fit


def fit_sinusoid(trace, y=None, sigma=None) -> FitResult:
    """offset + amplitude cos(2 pi f x + phase), seeded from the best periodogram bin."""
    x, y, sigma = _trace_arrays(trace, y, sigma)
    if len(x) < 5:
        raise InvalidDataError("sinusoid fit needs at least 5 points")
    span = float(np.ptp(x)) or 1.0
    xs = x / span

    # least-squares periodogram on a fine grid up to the mean-spacing Nyquist limit
    nyq = 0.5 * (len(x) - 1)
    grid = np.linspace(0.25, nyq, max(200, 40 * len(x)))
    best = None
    for f in grid:
        basis = np.column_stack([np.ones_like(xs), np.cos(2 * np.pi * f * xs), np.sin(2 * np.pi * f * xs)])
        coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
        res = float(np.sum((basis @ coef - y) ** 2))
        if best is None or res < best[0]:
            best = (res, f, coef)
    _, f0, (c0, a, b) = best
    init = {"frequency": f0, "amplitude": math.hypot(a, b), "phase": math.atan2(-b, a), "offset": c0}
    fit = fit_least_squares(
        sinusoid, xs, y, sigma, init,
        bounds={"frequency": (0.0, np.inf), "amplitude": (0.0, np.inf)},
    )
    fit.params["phase"] = float((fit.params["phase"] + np.pi) % (2 * np.pi) - np.pi)
    return _rescale(fit, {"frequency": 1 / span})


def fit_gaussian(trace, y=None, sigma=None) -> FitResult:
    """offset + amplitude exp(-(x - center)^2 / (2 width^2)), seeded from moments."""
    x, y, sigma = _trace_arrays(trace, y, sigma)
    if len(x) < 5:
        raise InvalidDataError("gaussian fit needs at least 5 points")
    mid = float(np.mean(x))
    span = float(np.std(x)) or 1.0
    xs = (x - mid) / span

    offset0 = float(np.min(y))
    w = y - offset0
    if np.sum(w) > 0:
        c0 = float(np.sum(w * xs) / np.sum(w))
        width0 = float(np.sqrt(np.sum(w * (xs - c0) ** 2) / np.sum(w))) or 1.0
    else:
        c0, width0 = 0.0, 1.0
    init = {"center": c0, "width": width0, "amplitude": float(np.max(y)) - offset0, "offset": offset0}
    fit = fit_least_squares(gaussian, xs, y, sigma, init, bounds={"width": (1e-9, np.inf)})
    if fit.converged and fit.params["amplitude"] == 0:
        fit.message = "zero-amplitude gaussian: data carry no peak"
    return _rescale(fit, {"center": span, "width": span}, {"center": mid})


def fit_echo_decay(trace, y=None, sigma=None) -> FitResult:
    """Gaussian coherence envelope amplitude exp(-(t / t2s)^2) through the origin."""
    x, y, sigma = _trace_arrays(trace, y, sigma)
    if len(x) < 3:
        raise InvalidDataError("echo fit needs at least 3 points")
    span = float(np.max(np.abs(x))) or 1.0
    xs = x / span
    ok = y > 0.05
    if np.count_nonzero(ok) >= 2:
        slope, icpt = np.polyfit(xs[ok] ** 2, np.log(y[ok]), 1)
        t0 = 1 / math.sqrt(-slope) if slope < 0 else 1.0
        a0 = math.exp(icpt)
    else:
        t0, a0 = 1.0, float(np.max(y))
    fit = fit_least_squares(
        echo_envelope, xs, y, sigma, {"amplitude": a0, "t2s": t0},
        bounds={"amplitude": (0.0, np.inf), "t2s": (1e-9, np.inf)},
    )
    return _rescale(fit, {"t2s": span})


def sample_curve(model, fit: FitResult, x_min: float, x_max: float, n: int = 500, **kw):
    xs = np.linspace(x_min, x_max, n)
    return xs, model(xs, *fit.params.values(), **kw)


def write_curve_csv(path, xs, ys, header: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "model"])
        for a, b in zip(xs, ys):
            writer.writerow([repr(float(a)), repr(float(b))])


# ---------------------------------------------------------------------------
# error budget


@dataclass
class BudgetReport:
    detuning: float
    pulse_area: float
    dephasing_ratio_estimate: float
    dephasing_exponential: float
    total: float
    measured_eps: Optional[float] = None
    # uncorrected phase (2 pi rms t_cg) over a whole gate, infidelity theta^2/6
    detuning_phase_only: float = 0.0
    per_clifford_detuning: list = field(default_factory=list, repr=False)
    per_clifford_area: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return asdict(self)


def schedule_unitary(sched: PulseSchedule, rabi: float, detuning: float) -> np.ndarray:
    u = qubit.SIGMA_I.copy()
    for p in sched.pulses:
        u = qubit.pulse_propagator(rabi, detuning, p.axis_phase, p.duration) @ u
    return qubit.free_precession(detuning, sched.idle_time) @ u


def _infidelities(scheds, ideal, rabi, detuning) -> np.ndarray:
    return np.array(
        [1 - qubit.avg_gate_fidelity(u, schedule_unitary(s, rabi, detuning)) for s, u in zip(scheds, ideal)]
    )


def error_budget(
    noise: NoiseConfig,
    t_cg: float,
    table: CliffordTable | None = None,
    scheds: Sequence[PulseSchedule] | None = None,
    rabi: float | None = None,
    measured_eps: float | None = None,
) -> BudgetReport:
    """Per-gate error from detuning, pulse-area and dephasing sources.

    Detuning and area terms are Clifford averages of the coherent infidelity
    at +/- one rms excursion. The dephasing terms are the plain ratio
    t_cg / T_2s and the exponential form 1 - exp(-t_cg / (eta T_2s)).
    """
    table = table or generate_group()
    scheds = scheds or schedules(REFERENCE_T_HALF_PI, REFERENCE_IDLE, table=table)
    rabi = rabi if rabi is not None else rabi_from_t_half_pi(REFERENCE_T_HALF_PI)
    ideal = [e.unitary for e in table.elements]

    delta = 2 * np.pi * noise.detuning_rms
    det = 0.5 * (_infidelities(scheds, ideal, rabi, delta) + _infidelities(scheds, ideal, rabi, -delta))
    area = 0.5 * (
        _infidelities(scheds, ideal, rabi * (1 + noise.area_rms), 0.0)
        + _infidelities(scheds, ideal, rabi * (1 - noise.area_rms), 0.0)
    )
    det = np.maximum(det, 0.0)
    area = np.maximum(area, 0.0)
    if math.isfinite(noise.t2s):
        ratio = t_cg / noise.t2s
        exp_form = dephasing_error_per_gate(t_cg, noise.t2s, noise.eta)
    else:
        ratio = exp_form = 0.0
    return BudgetReport(
        detuning=float(det.mean()),
        pulse_area=float(area.mean()),
        dephasing_ratio_estimate=float(ratio),
        dephasing_exponential=float(exp_form),
        total=float(det.mean() + area.mean() + exp_form),
        measured_eps=measured_eps,
        detuning_phase_only=float((delta * t_cg) ** 2 / 6),
        per_clifford_detuning=[float(v) for v in det],
        per_clifford_area=[float(v) for v in area],
    )
