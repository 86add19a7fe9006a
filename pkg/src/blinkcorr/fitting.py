"""Fitting measured correlation curves to the blinking model.

The analytic curve factorizes at a split delay (default 100 ns): above it
only the dark-period bunching survives, below it only the two-level
structure scaled by the bunching plateau. The full protocol therefore
runs three stages:

1. :func:`fit_slow` fits the bunching factor above the split and yields
   the period statistics (mean light period, two mean dark periods,
   branching fraction).
2. :func:`fit_fast` fits the two-level shape below the split, with the
   plateau pinned by stage one, and yields ``A31``, ``Omega31`` and the
   background rate.
3. :func:`fit_isc` refits the slow side parameterized directly in the
   shelving and deshelving coefficients, with ``A31`` and ``Omega31``
   pinned by stage two.

:func:`fit_full` chains the stages and optionally wraps them in a
residual bootstrap for uncertainties. The optimizer is a small damped
least-squares routine with box bounds and forward-difference Jacobians;
it is deliberately self-contained so its behaviour is fully pinned by the
tests in this package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .correlation import CorrelationSeries, blink_factor, g2, g_total
from .errors import (
    DegenerateFitError,
    FitConvergenceError,
    InsufficientDataError,
)
from .params import (
    PeriodStatistics,
    PhotoPhysicalParams,
    light_intensity,
    period_statistics,
    rates_from_statistics,
    saturation_factor,
)

__all__ = [
    "FitConfig",
    "FitStage",
    "FitResult",
    "LeastSquaresResult",
    "least_squares",
    "fit_slow",
    "fit_fast",
    "fit_isc",
    "fit_full",
]


# Keys accepted in FitConfig.initial_guess and FitConfig.bounds. The
# background rate is fit through the background-to-signal intensity
# ratio, whose box moves with A31/Omega31, so I_sc takes no static bound.
_GUESS_KEYS = frozenset(
    (
        "T_L",
        "T_D1",
        "T_D2",
        "p1",
        "A31",
        "Omega31",
        "I_sc",
        "A32_1",
        "A32_2",
        "A21_1",
        "A21_2",
        "amplitude",
    )
)
_BOUND_KEYS = _GUESS_KEYS - {"I_sc"}


@dataclass(frozen=True)
class FitConfig:
    """Knobs of the fitting protocol.

    ``split_tau`` separates the fast and slow fitting windows.
    ``initial_guess`` may carry any subset of the reported parameter
    names; present values replace the corresponding heuristic start
    coordinates. ``bounds`` maps parameter names to ``[lo, hi]`` boxes
    that replace the built-in ones (a zero lower bound on a
    log-parameterized rate keeps the built-in floor). ``free_amplitude``
    adds one overall scale factor to absorb data normalization.
    ``bootstrap_resamples`` of zero disables the bootstrap and falls back
    to Jacobian uncertainties.
    """

    split_tau: float = 1e-7
    initial_guess: dict[str, float] | None = None
    bounds: dict[str, tuple[float, float]] | None = None
    free_amplitude: bool = False
    bootstrap_resamples: int = 200
    bootstrap_seed: int = 0
    max_iterations: int = 200
    convergence_tol: float = 1e-10
    lambda0: float = 1e-3

    def __post_init__(self) -> None:
        if self.split_tau <= 0.0:
            raise ValueError("split_tau must be positive")
        if self.bootstrap_resamples < 0:
            raise ValueError("bootstrap_resamples must be non-negative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.convergence_tol <= 0.0 or self.lambda0 <= 0.0:
            raise ValueError("convergence_tol and lambda0 must be positive")
        if self.initial_guess is not None:
            for key, value in self.initial_guess.items():
                if key not in _GUESS_KEYS:
                    raise ValueError(f"unknown initial_guess key {key!r}")
                if not math.isfinite(value):
                    raise ValueError(f"initial_guess[{key!r}] must be finite")
        if self.bounds is not None:
            for key, box in self.bounds.items():
                if key not in _BOUND_KEYS:
                    raise ValueError(f"bounds not supported for {key!r}")
                lo, hi = box
                if not (math.isfinite(lo) and math.isfinite(hi)):
                    raise ValueError(f"bounds[{key!r}] must be finite")
                if lo < 0.0 or lo >= hi:
                    raise ValueError(
                        f"bounds[{key!r}] must satisfy 0 <= lo < hi"
                    )


@dataclass(frozen=True)
class LeastSquaresResult:
    """Outcome of :func:`least_squares`."""

    x: np.ndarray
    cost: float
    cov: np.ndarray
    iterations: int
    converged: bool
    message: str


def least_squares(
    residual,
    x0,
    bounds=None,
    *,
    max_iterations: int = 200,
    rel_tol: float = 1e-10,
    lambda0: float = 1e-3,
) -> LeastSquaresResult:
    """Damped least squares with box bounds.

    ``residual`` maps a parameter vector to a residual vector; the cost
    is its squared norm. Iterates solve the damped normal equations,
    candidates are clipped into the bounds, the damping shrinks on
    accepted steps and grows on rejected ones. Convergence requires both
    the relative step and the relative cost change to drop below
    ``rel_tol``; a state where no damping produces any improvement also
    counts as converged (the iterate cannot be bettered in float
    arithmetic). The covariance estimate is ``pinv(J^T J)`` scaled by the
    reduced chi square.

    Parameters are never evaluated outside the bounds; the finite
    difference step flips direction at the upper bound.
    """
    x = np.asarray(x0, dtype=float).copy()
    npar = x.size
    if npar == 0:
        raise ValueError("need at least one parameter")
    if bounds is None:
        lo = np.full(npar, -np.inf)
        hi = np.full(npar, np.inf)
    else:
        lo = np.asarray(bounds[0], dtype=float)
        hi = np.asarray(bounds[1], dtype=float)
        if lo.shape != (npar,) or hi.shape != (npar,):
            raise ValueError("bounds must match the parameter vector")
        if np.any(lo >= hi):
            raise ValueError("lower bounds must lie below upper bounds")
        x = np.clip(x, lo, hi)
    # Finite-difference scale: relative to the start, unit for exact-zero
    # coordinates (a relative step off zero underflows to a null step).
    scale = np.abs(x)
    scale[scale == 0.0] = 1.0

    def eval_residual(xv: np.ndarray) -> np.ndarray:
        r = np.asarray(residual(xv), dtype=float)
        if r.ndim != 1:
            raise ValueError("residual must return a vector")
        return r

    def jacobian(xv: np.ndarray, rv: np.ndarray) -> np.ndarray:
        jac = np.empty((rv.size, npar))
        for j in range(npar):
            h = 1e-6 * max(abs(xv[j]), scale[j])
            step = h if xv[j] + h <= hi[j] else -h
            xp = xv.copy()
            xp[j] += step
            jac[:, j] = (eval_residual(xp) - rv) / step
        return jac

    r = eval_residual(x)
    cost = float(r @ r)
    lam = lambda0
    converged = False
    message = "maximum iterations reached"
    iterations = 0

    for iterations in range(1, max_iterations + 1):
        jac = jacobian(x, r)
        jtj = jac.T @ jac
        grad = jac.T @ r
        diag = np.maximum(np.diag(jtj), 1e-300)

        accepted = False
        while lam <= 1e12:
            try:
                delta = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = np.clip(x + delta, lo, hi)
            r_new = eval_residual(x_new)
            cost_new = float(r_new @ r_new)
            if math.isfinite(cost_new) and cost_new <= cost:
                accepted = True
                break
            lam *= 10.0

        if not accepted:
            converged = True
            message = "no damping produced further improvement"
            break

        step_rel = float(np.max(np.abs(x_new - x) / np.maximum(np.abs(x_new), scale)))
        cost_rel = (cost - cost_new) / max(cost, 1e-300)
        x, r, cost = x_new, r_new, cost_new
        lam = max(lam / 3.0, 1e-12)
        if step_rel < rel_tol and cost_rel < rel_tol:
            converged = True
            message = "step and cost change below tolerance"
            break

    jac = jacobian(x, r)
    jtj = jac.T @ jac
    dof = max(r.size - npar, 1)
    cov = np.linalg.pinv(jtj) * (cost / dof)
    return LeastSquaresResult(
        x=x,
        cost=cost,
        cov=cov,
        iterations=iterations,
        converged=converged,
        message=message,
    )


@dataclass(frozen=True)
class FitStage:
    """One stage of the protocol: point values, uncertainties, optimizer
    diagnostics."""

    values: dict[str, float]
    sigma: dict[str, float]
    cost: float
    iterations: int
    converged: bool
    n_points: int


@dataclass(frozen=True)
class FitResult:
    """Assembled outcome of the full three-stage protocol."""

    params: PhotoPhysicalParams
    stats: PeriodStatistics
    sigma: dict[str, float]
    stages: dict[str, FitStage]
    config: FitConfig
    diagnostics: dict[str, float] = field(default_factory=dict)


def _weights(sub: CorrelationSeries) -> np.ndarray:
    if sub.sigma is not None:
        return 1.0 / sub.sigma
    # Unweighted data: give every point the same pull per log interval,
    # which keeps dense regions of a non-uniform grid from dominating.
    dlog = np.gradient(np.log(sub.tau))
    return np.sqrt(dlog / dlog.mean())


def _propagated_sigma(func, theta: np.ndarray, cov: np.ndarray) -> float:
    # Delta method with a forward-difference gradient.
    base = func(theta)
    grad = np.empty(theta.size)
    for j in range(theta.size):
        h = 1e-6 * max(abs(theta[j]), 1e-12)
        tp = theta.copy()
        tp[j] += h
        grad[j] = (func(tp) - base) / h
    var = float(grad @ cov @ grad)
    return math.sqrt(max(var, 0.0))


def _best_start(residual, starts, bounds, cfg: FitConfig) -> LeastSquaresResult:
    best = None
    for x0 in starts:
        res = least_squares(
            residual,
            x0,
            bounds,
            max_iterations=cfg.max_iterations,
            rel_tol=cfg.convergence_tol,
            lambda0=cfg.lambda0,
        )
        if best is None or res.cost < best.cost:
            best = res
    if not best.converged:
        raise FitConvergenceError(
            f"optimizer stopped after {best.iterations} iterations "
            f"at cost {best.cost:.3e}: {best.message}"
        )
    return best


def _box(cfg: FitConfig, key: str, lo: float, hi: float, log: bool) -> tuple[float, float]:
    """Stage-coordinate bounds for ``key``, honoring any user override."""
    if cfg.bounds is None or key not in cfg.bounds:
        return lo, hi
    user_lo, user_hi = cfg.bounds[key]
    if not log:
        return user_lo, user_hi
    return (math.log10(user_lo) if user_lo > 0.0 else lo), math.log10(user_hi)


def _merged_guess(
    cfg: FitConfig, init: dict[str, float] | None
) -> dict[str, float]:
    merged = dict(cfg.initial_guess or {})
    merged.update(init or {})
    return merged


def _patch_starts(starts, positions: dict[str, int], guess: dict[str, float], log_keys):
    """Overwrite start coordinates named in ``guess``; collapse to a
    single start when every coordinate is pinned."""
    patched = []
    pinned = sum(key in guess for key in positions)
    for x0 in starts:
        x = x0.copy()
        for key, pos in positions.items():
            if key in guess:
                value = guess[key]
                x[pos] = math.log10(value) if key in log_keys else value
        patched.append(x)
        if pinned == len(positions):
            break
    return patched


def _slow_stats(theta: np.ndarray) -> PeriodStatistics:
    t_l = 10.0 ** theta[0]
    t_d = (10.0 ** theta[1], 10.0 ** theta[2])
    return period_statistics(*rates_from_statistics(t_l, t_d, theta[3]))


def fit_slow(
    series: CorrelationSeries,
    config: FitConfig | None = None,
    init: dict[str, float] | None = None,
) -> FitStage:
    """Fit the bunching factor above the split delay.

    Returns mean period durations ``T_L``, ``T_D1``, ``T_D2``, branching
    fraction ``p1`` and the implied ``P_L``, ordered so that ``T_D1`` is
    the longer dark period. Raises :class:`DegenerateFitError` when the
    data show no bunching to fit.
    """
    cfg = config or FitConfig()
    sub = series.restrict(tau_min=cfg.split_tau)
    if len(sub) < 8:
        raise InsufficientDataError("need at least 8 points above the split delay")
    tau, y = sub.tau, sub.g
    w = _weights(sub)
    free_amp = cfg.free_amplitude

    def residual(theta: np.ndarray) -> np.ndarray:
        amp = theta[4] if free_amp else 1.0
        return w * (amp * blink_factor(tau, _slow_stats(theta)) - y)

    boxes = [
        _box(cfg, "T_L", -8.0, 5.0, log=True),
        _box(cfg, "T_D1", -8.0, 5.0, log=True),
        _box(cfg, "T_D2", -8.0, 5.0, log=True),
        _box(cfg, "p1", 1e-4, 1.0 - 1e-4, log=False),
    ]
    if free_amp:
        boxes.append(_box(cfg, "amplitude", 0.1, 10.0, log=False))
    bounds = (np.array([b[0] for b in boxes]), np.array([b[1] for b in boxes]))

    head = max(3, len(sub) // 20)
    amp = max(float(np.mean(y[:head])) - 1.0, 1e-8)
    target = 1.0 + amp / math.e
    below = np.nonzero(y < target)[0]
    tau_e = float(tau[below[0]]) if below.size else float(np.median(tau))
    starts = []
    for f1, f2, p in ((1.0, 0.2, 0.3), (2.0, 0.5, 0.1), (0.5, 0.1, 0.5), (3.0, 1.0, 0.15)):
        t_d1 = f1 * tau_e
        t_d2 = f2 * tau_e
        t_l = (p * t_d1 + (1.0 - p) * t_d2) / amp
        x0 = [math.log10(t_l), math.log10(t_d1), math.log10(t_d2), p]
        if free_amp:
            x0.append(1.0)
        starts.append(np.array(x0))

    positions = {"T_L": 0, "T_D1": 1, "T_D2": 2, "p1": 3}
    if free_amp:
        positions["amplitude"] = 4
    starts = _patch_starts(
        starts, positions, _merged_guess(cfg, init), ("T_L", "T_D1", "T_D2")
    )

    best = _best_start(residual, starts, bounds, cfg)
    stats = _slow_stats(best.x)

    amp_fit = float(best.x[4]) if free_amp else 1.0
    # Residual scale in g units, not in weighted units, so the
    # resolvability threshold does not depend on the weighting scheme.
    rms = float(np.sqrt(np.mean((amp_fit * blink_factor(tau, stats) - y) ** 2)))
    bunching = 1.0 / stats.P_L - 1.0
    if bunching < max(1e-4, 3.0 * rms / math.sqrt(len(sub))):
        raise DegenerateFitError(
            "no resolvable bunching above the split delay; the record looks "
            "like a non-blinking emitter"
        )

    values = {
        "T_L": stats.T_L,
        "T_D1": stats.T_D[0],
        "T_D2": stats.T_D[1],
        "p1": stats.p1,
        "P_L": stats.P_L,
    }
    ln10 = math.log(10.0)
    sigma = {
        "T_L": stats.T_L * ln10 * math.sqrt(max(best.cov[0, 0], 0.0)),
        "T_D1": stats.T_D[0] * ln10 * math.sqrt(max(best.cov[1, 1], 0.0)),
        "T_D2": stats.T_D[1] * ln10 * math.sqrt(max(best.cov[2, 2], 0.0)),
        "p1": math.sqrt(max(best.cov[3, 3], 0.0)),
        "P_L": _propagated_sigma(lambda t: _slow_stats(t).P_L, best.x, best.cov),
    }
    if free_amp:
        values["amplitude"] = amp_fit
        sigma["amplitude"] = math.sqrt(max(best.cov[4, 4], 0.0))

    if values["T_D1"] < values["T_D2"]:
        values["T_D1"], values["T_D2"] = values["T_D2"], values["T_D1"]
        sigma["T_D1"], sigma["T_D2"] = sigma["T_D2"], sigma["T_D1"]
        values["p1"] = 1.0 - values["p1"]

    return FitStage(
        values=values,
        sigma=sigma,
        cost=best.cost,
        iterations=best.iterations,
        converged=best.converged,
        n_points=len(sub),
    )


def fit_fast(
    series: CorrelationSeries,
    plateau: float,
    config: FitConfig | None = None,
    init: dict[str, float] | None = None,
    slow_stats: PeriodStatistics | None = None,
) -> FitStage:
    """Fit the two-level structure below the split delay.

    The bunching plateau enters as a fixed scale determined by the slow
    stage. With ``slow_stats`` the constant is sharpened into the full
    slow-factor shape, which removes the small residual slope the factor
    still has below the split; the full protocol always passes it.
    Returns ``A31``, ``Omega31`` and the background rate ``I_sc``.
    """
    cfg = config or FitConfig()
    if not (plateau >= 1.0 and math.isfinite(plateau)):
        raise ValueError("plateau must be finite and at least one")
    sub = series.restrict(tau_max=cfg.split_tau)
    if len(sub) < 6:
        raise InsufficientDataError("need at least 6 points below the split delay")
    tau, y = sub.tau, sub.g
    w = _weights(sub)
    if slow_stats is None:
        envelope = np.full(tau.size, plateau)
    else:
        envelope = plateau * slow_stats.P_L * blink_factor(tau, slow_stats)

    def model(theta: np.ndarray) -> np.ndarray:
        a = 10.0 ** theta[0]
        omega = 10.0 ** theta[1]
        ratio = theta[2]
        return envelope * (g2(tau, a, omega) + ratio) / (1.0 + ratio)

    def residual(theta: np.ndarray) -> np.ndarray:
        return w * (model(theta) - y)

    boxes = [
        _box(cfg, "A31", 2.0, 14.0, log=True),
        _box(cfg, "Omega31", 2.0, 14.0, log=True),
        (0.0, 1e3),
    ]
    bounds = (np.array([b[0] for b in boxes]), np.array([b[1] for b in boxes]))

    v0 = min(max(float(y[0]) / plateau, 1e-4), 0.98)
    ratio0 = v0 / (1.0 - v0)
    level = plateau * (v0 + (1.0 - v0) * (1.0 - 1.0 / math.e))
    above = np.nonzero(y >= level)[0]
    tau_r = float(tau[above[0]]) if above.size else float(tau[len(sub) // 2])
    a0 = 4.0 / (3.0 * tau_r)
    starts = [
        np.array([math.log10(a0), math.log10(f * a0), ratio0])
        for f in (0.5, 1.0, 2.0)
    ]
    starts.append(np.array([math.log10(3.0 * a0), math.log10(a0), ratio0]))

    guess = _merged_guess(cfg, init)
    starts = _patch_starts(starts, {"A31": 0, "Omega31": 1}, guess, ("A31", "Omega31"))
    if "I_sc" in guess:
        # The ratio coordinate depends on the start's own fast rates.
        for x0 in starts:
            x0[2] = guess["I_sc"] / light_intensity(10.0 ** x0[0], 10.0 ** x0[1])

    best = _best_start(residual, starts, bounds, cfg)
    a31 = 10.0 ** best.x[0]
    omega31 = 10.0 ** best.x[1]
    ratio = float(best.x[2])
    i_sc = ratio * light_intensity(a31, omega31)

    def isc_of(theta: np.ndarray) -> float:
        return theta[2] * light_intensity(10.0 ** theta[0], 10.0 ** theta[1])

    ln10 = math.log(10.0)
    values = {"A31": a31, "Omega31": omega31, "I_sc": i_sc, "ratio": ratio}
    sigma = {
        "A31": a31 * ln10 * math.sqrt(max(best.cov[0, 0], 0.0)),
        "Omega31": omega31 * ln10 * math.sqrt(max(best.cov[1, 1], 0.0)),
        "I_sc": _propagated_sigma(isc_of, best.x, best.cov),
        "ratio": math.sqrt(max(best.cov[2, 2], 0.0)),
    }
    return FitStage(
        values=values,
        sigma=sigma,
        cost=best.cost,
        iterations=best.iterations,
        converged=best.converged,
        n_points=len(sub),
    )


def fit_isc(
    series: CorrelationSeries,
    A31: float,
    Omega31: float,
    stats_init: PeriodStatistics,
    config: FitConfig | None = None,
    init: dict[str, float] | None = None,
    amplitude: float = 1.0,
) -> FitStage:
    """Refit the slow side in shelving/deshelving coefficients.

    ``A31`` and ``Omega31`` stay pinned at the fast-stage values, as is
    the overall ``amplitude`` when the protocol frees one; the slow-stage
    statistics provide the starting point through the exact parameter
    map, so this stage mostly converts units and sharpens the covariance
    in rate space. Shelving coefficients may converge to zero, which
    reduces the model to a single dark level.
    """
    cfg = config or FitConfig()
    sub = series.restrict(tau_min=cfg.split_tau)
    if len(sub) < 8:
        raise InsufficientDataError("need at least 8 points above the split delay")
    tau, y = sub.tau, sub.g
    w = _weights(sub)
    sat = saturation_factor(A31, Omega31)

    def stats_of(theta: np.ndarray) -> PeriodStatistics:
        p_ld = (theta[0] * sat, theta[1] * sat)
        p_dl = (10.0 ** theta[2], 10.0 ** theta[3])
        return period_statistics(p_ld, p_dl)

    def residual(theta: np.ndarray) -> np.ndarray:
        return w * (amplitude * blink_factor(tau, stats_of(theta)) - y)

    x0 = np.array(
        [
            stats_init.p_LD[0] / sat,
            stats_init.p_LD[1] / sat,
            math.log10(stats_init.p_DL[0]),
            math.log10(stats_init.p_DL[1]),
        ]
    )
    positions = {"A32_1": 0, "A32_2": 1, "A21_1": 2, "A21_2": 3}
    starts = _patch_starts(
        [x0], positions, _merged_guess(cfg, init), ("A21_1", "A21_2")
    )
    boxes = [
        _box(cfg, "A32_1", 0.0, 1e10, log=False),
        _box(cfg, "A32_2", 0.0, 1e10, log=False),
        _box(cfg, "A21_1", -6.0, 10.0, log=True),
        _box(cfg, "A21_2", -6.0, 10.0, log=True),
    ]
    bounds = (np.array([b[0] for b in boxes]), np.array([b[1] for b in boxes]))
    best = _best_start(residual, starts, bounds, cfg)

    ln10 = math.log(10.0)
    a21_1 = 10.0 ** best.x[2]
    a21_2 = 10.0 ** best.x[3]
    values = {
        "A32_1": float(best.x[0]),
        "A32_2": float(best.x[1]),
        "A21_1": a21_1,
        "A21_2": a21_2,
    }
    sigma = {
        "A32_1": math.sqrt(max(best.cov[0, 0], 0.0)),
        "A32_2": math.sqrt(max(best.cov[1, 1], 0.0)),
        "A21_1": a21_1 * ln10 * math.sqrt(max(best.cov[2, 2], 0.0)),
        "A21_2": a21_2 * ln10 * math.sqrt(max(best.cov[3, 3], 0.0)),
    }

    if 1.0 / values["A21_1"] < 1.0 / values["A21_2"]:
        values["A32_1"], values["A32_2"] = values["A32_2"], values["A32_1"]
        values["A21_1"], values["A21_2"] = values["A21_2"], values["A21_1"]
        sigma["A32_1"], sigma["A32_2"] = sigma["A32_2"], sigma["A32_1"]
        sigma["A21_1"], sigma["A21_2"] = sigma["A21_2"], sigma["A21_1"]

    return FitStage(
        values=values,
        sigma=sigma,
        cost=best.cost,
        iterations=best.iterations,
        converged=best.converged,
        n_points=len(sub),
    )


_RESULT_KEYS = (
    "A31",
    "Omega31",
    "I_sc",
    "A32_1",
    "A32_2",
    "A21_1",
    "A21_2",
    "T_L",
    "T_D1",
    "T_D2",
    "p1",
)


def _pipeline(
    series: CorrelationSeries, cfg: FitConfig, init: dict[str, float] | None = None
) -> tuple[dict[str, FitStage], dict[str, float]]:
    slow = fit_slow(series, cfg, init=init)
    amp = slow.values.get("amplitude", 1.0)
    stats_init = period_statistics(
        *rates_from_statistics(
            slow.values["T_L"],
            (slow.values["T_D1"], slow.values["T_D2"]),
            slow.values["p1"],
        )
    )
    fast = fit_fast(
        series, amp / slow.values["P_L"], cfg, init=init, slow_stats=stats_init
    )
    isc = fit_isc(
        series,
        fast.values["A31"],
        fast.values["Omega31"],
        stats_init,
        cfg,
        init=init,
        amplitude=amp,
    )
    stages = {"slow": slow, "fast": fast, "isc": isc}
    flat = {
        key: stage.values[key]
        for stage, keys in (
            (slow, ("T_L", "T_D1", "T_D2", "p1")),
            (fast, ("A31", "Omega31", "I_sc")),
            (isc, ("A32_1", "A32_2", "A21_1", "A21_2")),
        )
        for key in keys
    }
    if cfg.free_amplitude:
        flat["amplitude"] = amp
    return stages, flat


def fit_full(
    series: CorrelationSeries, config: FitConfig | None = None
) -> FitResult:
    """Run the three-stage protocol and assemble the full parameter set.

    Uncertainties come from a residual bootstrap (resampling the fit
    residuals onto the fitted curve and refitting) when
    ``config.bootstrap_resamples`` is positive, otherwise from the
    per-stage Jacobians. The bootstrap is deterministic for a fixed
    ``bootstrap_seed``.
    """
    cfg = config or FitConfig()
    stages, flat = _pipeline(series, cfg)

    params = PhotoPhysicalParams(
        A31=flat["A31"],
        Omega31=flat["Omega31"],
        A32=(flat["A32_1"], flat["A32_2"]),
        A21=(flat["A21_1"], flat["A21_2"]),
        I_sc=flat["I_sc"],
    )
    stats = period_statistics(
        *rates_from_statistics(flat["T_L"], (flat["T_D1"], flat["T_D2"]), flat["p1"])
    )

    sigma = {}
    for name, stage_key in (
        ("T_L", "slow"),
        ("T_D1", "slow"),
        ("T_D2", "slow"),
        ("p1", "slow"),
        ("A31", "fast"),
        ("Omega31", "fast"),
        ("I_sc", "fast"),
        ("A32_1", "isc"),
        ("A32_2", "isc"),
        ("A21_1", "isc"),
        ("A21_2", "isc"),
    ):
        sigma[name] = stages[stage_key].sigma[name]
    diagnostics: dict[str, float] = {"bootstrap_resamples": 0.0}
    if cfg.free_amplitude:
        diagnostics["amplitude"] = flat["amplitude"]
        sigma["amplitude"] = stages["slow"].sigma["amplitude"]

    if cfg.bootstrap_resamples > 0:
        model = flat.get("amplitude", 1.0) * g_total(series.tau, params)
        resid = series.g - model
        rng = np.random.Generator(
            np.random.Philox(key=[int(cfg.bootstrap_seed), 3])
        )
        inner = replace(cfg, bootstrap_resamples=0)
        samples: dict[str, list[float]] = {k: [] for k in _RESULT_KEYS}
        failures = 0
        npts = len(series)
        for _ in range(cfg.bootstrap_resamples):
            draw = resid[rng.integers(0, npts, npts)]
            try:
                resampled = CorrelationSeries(
                    series.tau, model + draw, series.sigma
                )
                _, flat_b = _pipeline(resampled, inner, init=flat)
            except (FitConvergenceError, DegenerateFitError, ValueError):
                failures += 1
                continue
            for key in _RESULT_KEYS:
                samples[key].append(flat_b[key])
        n_ok = cfg.bootstrap_resamples - failures
        diagnostics["bootstrap_resamples"] = float(n_ok)
        diagnostics["bootstrap_failures"] = float(failures)
        if n_ok >= 2:
            for key in _RESULT_KEYS:
                sigma[key] = float(np.std(samples[key], ddof=1))
        else:
            raise FitConvergenceError(
                "bootstrap produced fewer than two successful refits"
            )

    return FitResult(
        params=params,
        stats=stats,
        sigma=sigma,
        stages=stages,
        config=cfg,
        diagnostics=diagnostics,
    )
