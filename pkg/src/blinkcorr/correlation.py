"""Analytic intensity correlation of a blinking driven emitter.

The full normalized correlation factorizes into a fast part, the
antibunching and Rabi structure of the driven transition, and a slow part,
the bunching hump produced by dark periods. :func:`g_total` evaluates the
product on arbitrary delay grids; the pieces are exposed separately
because the fitting stages work on one factor at a time.

Delays are in seconds, rates in 1/s. All evaluators accept scalars or
arrays and return float arrays of matching shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError
from .fileio import atomic_write_text, format_float
from .params import (
    PeriodStatistics,
    PhotoPhysicalParams,
    light_intensity,
    statistics_from_params,
)

__all__ = [
    "CorrelationSeries",
    "g2",
    "g2_mod",
    "p_ll",
    "blink_factor",
    "g_total",
    "eval_curve",
    "log_grid",
    "read_series",
    "write_series",
]

# Relative eigenvalue gap below which the two-exponential closed forms
# switch to the matrix-exponential route.
_DEGENERATE_GAP = 1e-9


def _as_delay_array(tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    if tau.size and (not np.all(np.isfinite(tau)) or np.any(tau < 0.0)):
        raise ValueError("delays must be finite and non-negative")
    return tau


def g2(tau, A31: float, Omega31: float) -> np.ndarray:
    """Normalized second-order correlation of the driven two-level
    transition alone.

    Starts at zero (antibunching), relaxes to one with rate 3*A31/4 and,
    for 16*Omega31^2 > A31^2, oscillates at the effective Rabi frequency
    on the way. The over- and critically damped regimes are the analytic
    continuation of the same expression and join it smoothly.
    """
    tau = _as_delay_array(tau)
    A = float(A31)
    W = float(Omega31)
    if A <= 0.0:
        raise ValueError("A31 must be positive")
    if W < 0.0:
        raise ValueError("Omega31 must be non-negative")

    r = 0.75 * A
    disc = 16.0 * W * W - A * A
    scale = 16.0 * W * W + A * A

    if abs(disc) <= 1e-12 * scale:
        # Removable point: both trig branches limit to (1 + r*tau).
        envelope = np.exp(-r * tau) * (1.0 + r * tau)
    elif disc > 0.0:
        gamma = 0.25 * math.sqrt(disc)
        envelope = np.exp(-r * tau) * (
            np.cos(gamma * tau) + (0.75 * A / gamma) * np.sin(gamma * tau)
        )
    else:
        kappa = 0.25 * math.sqrt(-disc)
        c = 0.75 * A / kappa
        x = kappa * tau
        # cosh/sinh are exact for moderate arguments; far out only the
        # slow exponential survives, which avoids overflow in cosh.
        grow = (kappa - r) * tau
        small = x < 20.0
        envelope = np.where(
            small,
            np.exp(-r * tau) * (np.cosh(np.minimum(x, 20.0)) + c * np.sinh(np.minimum(x, 20.0))),
            0.5 * (1.0 + c) * np.exp(grow),
        )
    return 1.0 - envelope


def g2_mod(tau, A31: float, Omega31: float, I_sc: float) -> np.ndarray:
    """Two-level correlation diluted by an uncorrelated background.

    The background adds a flat rate ``I_sc`` on top of the emitter rate,
    so the contrast of the fast structure shrinks by the intensity
    weights: ``(I_L * g2 + I_sc) / (I_L + I_sc)``.
    """
    I_sc = float(I_sc)
    if I_sc < 0.0:
        raise ValueError("I_sc must be non-negative")
    base = g2(tau, A31, Omega31)
    if I_sc == 0.0:
        return base
    ratio = I_sc / light_intensity(A31, Omega31)
    return (base + ratio) / (1.0 + ratio)


def _three_state_pll_expm(tau: np.ndarray, stats: PeriodStatistics) -> np.ndarray:
    # Fallback route through the period rate matrix; import here to keep
    # the module dependency one-way at import time.
    from .markov import build_rate_matrix, propagator, three_state_chain

    chain = three_state_chain(stats, 1.0)
    prop = propagator(build_rate_matrix(chain), tau)
    return prop[..., 0, 0]


def p_ll(tau, stats: PeriodStatistics) -> np.ndarray:
    """Probability of the emitter being light a delay ``tau`` after a
    moment at which it was light.

    Decays from one to the stationary weight ``stats.P_L`` on the two
    relaxation eigenvalues of the period process. Near-degenerate
    eigenvalues are routed through the matrix exponential instead of the
    closed two-exponential form.
    """
    tau = _as_delay_array(tau)
    mu1, mu2 = stats.mu1, stats.mu2
    if (mu1 - mu2) <= _DEGENERATE_GAP * abs(mu2):
        return _three_state_pll_expm(tau, stats)

    ld1, ld2 = stats.p_LD
    dl1, dl2 = stats.p_DL
    split = mu1 - mu2

    def weight(mu: float) -> float:
        return ld1 * (dl2 + mu) + ld2 * (dl1 + mu)

    c1 = -weight(mu1) / (mu1 * split)
    c2 = weight(mu2) / (mu2 * split)
    return stats.P_L + c1 * np.exp(mu1 * tau) + c2 * np.exp(mu2 * tau)


def blink_factor(tau, stats: PeriodStatistics) -> np.ndarray:
    """Slow bunching factor contributed by the dark periods.

    Equals ``p_ll(tau) / P_L``: one at long delays, ``1 / P_L`` at zero
    delay. Written directly in the switching rates so that molecules
    which never blink (infinite ``T_L``) evaluate to exactly one.
    """
    tau = _as_delay_array(tau)
    ld1, ld2 = stats.p_LD
    dl1, dl2 = stats.p_DL
    mu1, mu2 = stats.mu1, stats.mu2
    gamma = stats.Gamma

    if 2.0 * gamma <= _DEGENERATE_GAP * abs(mu2):
        return _three_state_pll_expm(tau, stats) / stats.P_L

    sigma_l = ld1 + ld2
    alpha = ld1 / dl1 + ld2 / dl2
    beta = (
        ld1 * dl2 / dl1
        + ld2 * dl1 / dl2
        - alpha * sigma_l
        - sigma_l
    )
    c_plus = 0.5 * alpha + 0.25 * beta / gamma
    c_minus = 0.5 * alpha - 0.25 * beta / gamma
    return 1.0 + c_plus * np.exp(mu1 * tau) + c_minus * np.exp(mu2 * tau)


def g_total(tau, params: PhotoPhysicalParams, form: str = "explicit") -> np.ndarray:
    """Full normalized intensity correlation of the blinking emitter.

    ``form="explicit"`` multiplies the background-diluted two-level
    correlation by the closed-form bunching factor. ``form="product"``
    assembles the same quantity as ``g2_mod * p_ll / P_L``; the two routes
    share no exponential bookkeeping and serve as mutual checks.
    """
    tau = _as_delay_array(tau)
    stats = statistics_from_params(params)
    fast = g2_mod(tau, params.A31, params.Omega31, params.I_sc)
    if form == "explicit":
        slow = blink_factor(tau, stats)
    elif form == "product":
        slow = p_ll(tau, stats) / stats.P_L
    else:
        raise ValueError(f"unknown form {form!r}, expected 'explicit' or 'product'")
    return fast * slow


def log_grid(tau_min: float, tau_max: float, points_per_decade: int = 60) -> np.ndarray:
    """Logarithmic delay grid with a fixed point density per decade."""
    tau_min = float(tau_min)
    tau_max = float(tau_max)
    if not (0.0 < tau_min < tau_max):
        raise ValueError("need 0 < tau_min < tau_max")
    if points_per_decade < 1:
        raise ValueError("points_per_decade must be at least 1")
    decades = math.log10(tau_max / tau_min)
    n = max(2, int(round(decades * points_per_decade)) + 1)
    return np.geomspace(tau_min, tau_max, n)


def eval_curve(params: PhotoPhysicalParams, tau=None) -> "CorrelationSeries":
    """Evaluate :func:`g_total` on a delay grid and wrap it as a series.

    Without an explicit grid a default one spanning 0.1 ns to 1 s at 60
    points per decade is used.
    """
    if tau is None:
        tau = log_grid(1e-10, 1.0, 60)
    tau = np.atleast_1d(_as_delay_array(tau))
    return CorrelationSeries(tau=tau, g=g_total(tau, params))


@dataclass(frozen=True)
class CorrelationSeries:
    """A sampled correlation curve.

    ``tau`` must be strictly increasing and positive; ``sigma`` is an
    optional per-point standard error.
    """

    tau: np.ndarray
    g: np.ndarray
    sigma: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        tau = np.asarray(self.tau, dtype=float)
        g = np.asarray(self.g, dtype=float)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "g", g)
        if tau.ndim != 1 or g.shape != tau.shape:
            raise ValueError("tau and g must be one-dimensional and equally long")
        if tau.size == 0:
            raise ValueError("series must hold at least one point")
        if not np.all(np.isfinite(tau)) or not np.all(np.isfinite(g)):
            raise ValueError("tau and g must be finite")
        if np.any(tau <= 0.0) or np.any(np.diff(tau) <= 0.0):
            raise ValueError("tau must be positive and strictly increasing")
        if self.sigma is not None:
            sigma = np.asarray(self.sigma, dtype=float)
            object.__setattr__(self, "sigma", sigma)
            if sigma.shape != tau.shape:
                raise ValueError("sigma must match tau in shape")
            if not np.all(np.isfinite(sigma)) or np.any(sigma <= 0.0):
                raise ValueError("sigma must be finite and positive")

    def __len__(self) -> int:
        return int(self.tau.size)

    def restrict(self, tau_min: float = 0.0, tau_max: float = math.inf) -> "CorrelationSeries":
        """Sub-series with ``tau_min < tau < tau_max``."""
        keep = (self.tau > tau_min) & (self.tau < tau_max)
        if not np.any(keep):
            raise DegenerateInputError("no points left in the requested delay window")
        sigma = self.sigma[keep] if self.sigma is not None else None
        return CorrelationSeries(self.tau[keep], self.g[keep], sigma)


def write_series(series: CorrelationSeries, path: str) -> None:
    """Write a series as CSV with header ``tau_s,g`` or ``tau_s,g,sigma``."""
    rows = []
    if series.sigma is None:
        rows.append("tau_s,g")
        for t, g in zip(series.tau, series.g):
            rows.append(f"{format_float(t)},{format_float(g)}")
    else:
        rows.append("tau_s,g,sigma")
        for t, g, s in zip(series.tau, series.g, series.sigma):
            rows.append(f"{format_float(t)},{format_float(g)},{format_float(s)}")
    atomic_write_text(path, "\n".join(rows) + "\n")


def read_series(path: str) -> CorrelationSeries:
    """Read a CSV written by :func:`write_series`."""
    with open(path) as handle:
        header = handle.readline().strip()
        if header == "tau_s,g":
            ncols = 2
        elif header == "tau_s,g,sigma":
            ncols = 3
        else:
            raise ValueError(
                f"{path}: header must be 'tau_s,g' or 'tau_s,g,sigma', got {header!r}"
            )
        tau, g, sigma = [], [], []
        for lineno, raw in enumerate(handle, start=2):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != ncols:
                raise ValueError(f"{path}:{lineno}: expected {ncols} columns")
            try:
                values = [float(p) for p in parts]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad number") from exc
            tau.append(values[0])
            g.append(values[1])
            if ncols == 3:
                sigma.append(values[2])
    return CorrelationSeries(
        tau=np.array(tau),
        g=np.array(g),
        sigma=np.array(sigma) if ncols == 3 else None,
    )
