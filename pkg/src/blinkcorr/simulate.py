"""Photon stream simulation and correlation estimation.

The generative model mirrors the analytic one: an alternating renewal
process of light and dark periods, photon emission inside light periods
from the driven two-level transition, and an independent Poisson
background over the whole record.

Randomness comes from counter-based generators keyed on (seed, stream) so
that period structure, molecule photons and background photons draw from
disjoint streams and every output is reproducible from the seed alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .correlation import CorrelationSeries, log_grid
from .errors import InsufficientDataError
from .fileio import atomic_write_text, format_float
from .params import PeriodStatistics, PhotoPhysicalParams

__all__ = [
    "Trajectory",
    "simulate_periods",
    "simulate_photons",
    "estimate_g",
    "light_fraction",
    "log_edges",
    "read_trajectory",
    "write_trajectory",
]

_STREAM_PERIODS = 0
_STREAM_MOLECULE = 1
_STREAM_BACKGROUND = 2

# estimate_g tuning: target number of explicitly enumerated photon pairs,
# and the largest coincidence count vector the binned stage may allocate.
_PAIR_BUDGET = 1.5e8
_MAX_VECTOR = 25_000_000


def _stream_rng(seed: int, stream: int) -> np.random.Generator:
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise ValueError("seed must be an integer")
    if seed < 0 or seed >= 2**63:
        raise ValueError("seed must lie in [0, 2**63)")
    return np.random.Generator(np.random.Philox(key=[int(seed), int(stream)]))


@dataclass(frozen=True)
class Trajectory:
    """Photon arrival times over a fixed observation window.

    ``times`` are sorted seconds in ``[0, duration]``. ``periods`` keeps
    the generating period record when the trajectory was simulated; it is
    ``None`` for trajectories read back from disk.
    """

    times: np.ndarray
    duration: float
    seed: int | None = None
    periods: np.ndarray | None = None

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        if times.ndim != 1:
            raise ValueError("times must be a vector")
        duration = float(self.duration)
        object.__setattr__(self, "duration", duration)
        if not math.isfinite(duration) or duration <= 0.0:
            raise ValueError("duration must be positive and finite")
        if times.size:
            if not np.all(np.isfinite(times)):
                raise ValueError("arrival times must be finite")
            if np.any(np.diff(times) < 0.0):
                raise ValueError("arrival times must be sorted")
            if times[0] < 0.0 or times[-1] > duration:
                raise ValueError("arrival times must lie within [0, duration]")

    def __len__(self) -> int:
        return int(self.times.size)


class _EmissionSampler:
    """Draws waiting times between consecutive photons of the driven
    transition by inverting the no-jump survival probability.

    Between photon emissions the two-level amplitude evolves under the
    damped drive; the survival probability is the squared norm of that
    conditional state and decreases monotonically. It is tabulated once
    on a dense grid and inverted by interpolation.
    """

    _POINTS = 1 << 19
    _TAIL = 1e-26

    def __init__(self, A31: float, Omega31: float) -> None:
        self.A31 = float(A31)
        self.Omega31 = float(Omega31)
        if self.A31 <= 0.0 or self.Omega31 <= 0.0:
            raise ValueError("A31 and Omega31 must be positive")
        a, w = self.A31, self.Omega31
        self.mean_wait = (a * a + 2.0 * w * w) / (a * w * w)

        t_max = 8.0 * self.mean_wait
        while self._survival(np.array([t_max]))[0] > self._TAIL:
            t_max *= 2.0
            if t_max > 1e9 * self.mean_wait:  # pragma: no cover
                break
        grid = np.linspace(0.0, t_max, self._POINTS)
        surv = self._survival(grid)
        surv = np.minimum.accumulate(surv)
        # Reverse so the abscissa is increasing for interpolation.
        self._surv_rev = surv[::-1].copy()
        self._grid_rev = grid[::-1].copy()

    def _survival(self, t: np.ndarray) -> np.ndarray:
        a, w = self.A31, self.Omega31
        h_sq = 0.25 * a * a - w * w
        decay = np.exp(-0.25 * a * t)
        if h_sq > (1e-6 * a) ** 2:
            # Overdamped: assemble from the two real exponentials; both
            # decay, which keeps large arguments overflow free.
            h = math.sqrt(h_sq)
            e_slow = np.exp((h - 0.5 * a) * 0.5 * t)
            e_fast = np.exp(-(h + 0.5 * a) * 0.5 * t)
            c1 = 0.5 * ((1.0 + 0.5 * a / h) * e_slow + (1.0 - 0.5 * a / h) * e_fast)
            c3_sq = (w / h) ** 2 * 0.25 * (e_slow - e_fast) ** 2
            return c1 * c1 + c3_sq
        if h_sq < -((1e-6 * a) ** 2):
            g = math.sqrt(-h_sq)
            x = 0.5 * g * t
            c1 = decay * (np.cos(x) + (0.25 * a * t) * _sinc(x))
            c3_sq = decay**2 * (0.5 * w * t) ** 2 * _sinc(x) ** 2
            return c1 * c1 + c3_sq
        # Near the critical drive both branches collapse onto polynomials.
        c1 = decay * (1.0 + 0.25 * a * t)
        c3_sq = decay**2 * (0.5 * w * t) ** 2
        return c1 * c1 + c3_sq

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u = rng.random(n)
        return np.interp(u, self._surv_rev, self._grid_rev)


def _sinc(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-6
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x * x / 6.0, np.sin(safe) / safe)


def simulate_periods(
    stats: PeriodStatistics, duration: float, seed: int
) -> np.ndarray:
    """Draw one alternating light/dark period record.

    Returns an array of shape ``(n, 3)`` with rows ``(state, start,
    end)``; state 0 is light, 1 and 2 the dark types. Dwell times are
    exponential, the dark type is drawn from the branching fractions and
    the initial state from the stationary occupation, so time averages
    are unbiased from the start of the record.
    """
    duration = float(duration)
    if not math.isfinite(duration) or duration <= 0.0:
        raise ValueError("duration must be positive and finite")
    rng = _stream_rng(seed, _STREAM_PERIODS)

    ld1, ld2 = stats.p_LD
    dl1, dl2 = stats.p_DL
    sigma_l = ld1 + ld2

    occupation = np.array(
        [stats.P_L, stats.P_L * ld1 / dl1, stats.P_L * ld2 / dl2]
    )
    state = int(np.searchsorted(np.cumsum(occupation), rng.random()))
    state = min(state, 2)

    records = []
    t = 0.0
    while t < duration:
        if state == 0:
            dwell = rng.exponential(1.0 / sigma_l) if sigma_l > 0.0 else math.inf
            end = min(t + dwell, duration)
            records.append((0.0, t, end))
            if end >= duration:
                break
            state = 1 if rng.random() < ld1 / sigma_l else 2
        else:
            rate = dl1 if state == 1 else dl2
            end = min(t + rng.exponential(1.0 / rate), duration)
            records.append((float(state), t, end))
            if end >= duration:
                break
            state = 0
        t = end
    return np.array(records)


def light_fraction(periods: np.ndarray) -> float:
    """Fraction of the record spent in light periods."""
    periods = np.asarray(periods, dtype=float)
    if periods.ndim != 2 or periods.shape[1] != 3 or periods.shape[0] == 0:
        raise ValueError("periods must be a non-empty (n, 3) record")
    span = periods[-1, 2] - periods[0, 1]
    if span <= 0.0:
        raise ValueError("period record spans no time")
    light = periods[periods[:, 0] == 0.0]
    return float((light[:, 2] - light[:, 1]).sum() / span)


def simulate_photons(
    periods: np.ndarray, params: PhotoPhysicalParams, seed: int
) -> Trajectory:
    """Emit photons along a period record.

    Light periods produce molecule photons as a renewal sequence of
    two-level waiting times starting fresh at each dark-to-light
    transition; dark periods are silent. Background photons arrive as a
    homogeneous Poisson process at ``params.I_sc`` over the whole record
    and are merged in.
    """
    periods = np.asarray(periods, dtype=float)
    if periods.ndim != 2 or periods.shape[1] != 3 or periods.shape[0] == 0:
        raise ValueError("periods must be a non-empty (n, 3) record")
    duration = float(periods[-1, 2])

    rng_mol = _stream_rng(seed, _STREAM_MOLECULE)
    rng_bg = _stream_rng(seed, _STREAM_BACKGROUND)

    sampler = _EmissionSampler(params.A31, params.Omega31)
    mean = sampler.mean_wait

    pieces: list[np.ndarray] = []
    for state, start, end in periods:
        if state != 0.0:
            continue
        span = end - start
        if span <= 0.0:
            continue
        offset = 0.0
        while True:
            expect = (span - offset) / mean
            block = int(expect + 4.0 * math.sqrt(expect + 1.0) + 16.0)
            arrivals = offset + np.cumsum(sampler.sample(rng_mol, block))
            inside = arrivals[arrivals < span]
            if inside.size:
                pieces.append(start + inside)
            if arrivals[-1] >= span:
                break
            offset = arrivals[-1]

    n_bg = rng_bg.poisson(params.I_sc * duration) if params.I_sc > 0.0 else 0
    if n_bg:
        pieces.append(rng_bg.uniform(0.0, duration, n_bg))

    if pieces:
        times = np.sort(np.concatenate(pieces))
    else:
        times = np.empty(0)
    return Trajectory(times=times, duration=duration, seed=int(seed), periods=periods)


def log_edges(tau_min: float, tau_max: float, bins_per_decade: int = 20) -> np.ndarray:
    """Logarithmic bin edges for :func:`estimate_g`."""
    return log_grid(tau_min, tau_max, bins_per_decade)


def estimate_g(
    trajectory: Trajectory,
    edges: np.ndarray,
    with_windows: bool = False,
):
    """Estimate the normalized intensity correlation from arrival times.

    Counts ordered photon pairs per delay bin and normalizes by the pair
    density of a Poisson process with the record's mean rate, so a flat
    stream estimates one. Short-delay bins enumerate pairs exactly;
    longer bins correlate coarse coincidence counts at a lag resolution
    of a twentieth of a decade, which quantizes those bins onto the lag
    lattice. Bins beyond a tenth of the record length are dropped.

    The per-bin standard error combines the pair shot noise with the
    uncertainty of the squared-rate normalization; the latter is
    estimated from block counts of the record and floored at its Poisson
    value. For strongly bunched records the normalization term dominates
    in high-count bins and shot noise alone would be far too optimistic
    there.

    Returns a series with one standard error per bin; with
    ``with_windows`` also the actually covered window per bin as an
    ``(n, 2)`` array.
    """
    times = trajectory.times
    t_total = trajectory.duration
    n = times.size
    if n < 2:
        raise InsufficientDataError("need at least two photons to correlate")

    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2:
        raise ValueError("edges must hold at least two values")
    if np.any(edges <= 0.0) or np.any(np.diff(edges) <= 0.0) or not np.all(
        np.isfinite(edges)
    ):
        raise ValueError("edges must be positive, finite and increasing")
    edges = edges[edges <= 0.1 * t_total]
    if edges.size < 2:
        raise InsufficientDataError(
            "record too short: every requested delay exceeds a tenth of it"
        )

    rate = n / t_total
    nbins = edges.size - 1

    # Split point between exact pair enumeration and lattice correlation.
    t_switch = _PAIR_BUDGET / (rate * n)
    n_exact = 0
    for i in range(nbins):
        width = 10.0 ** math.floor(math.log10(edges[i])) / 20.0
        viable = t_total / width <= _MAX_VECTOR
        if edges[i + 1] <= t_switch or not viable:
            n_exact = i + 1
        else:
            break

    counts = np.zeros(nbins)
    windows = np.empty((nbins, 2))
    denom = np.empty(nbins)

    if n_exact:
        lo_delay = edges[0]
        hi_delay = edges[n_exact]
        exact_edges = edges[: n_exact + 1]
        per_chunk = max(1, int(1.5e7 / max(rate * hi_delay, 1.0)))
        for a in range(0, n, per_chunk):
            sources = times[a : a + per_chunk]
            lo = np.searchsorted(times, sources + lo_delay, side="left")
            hi = np.searchsorted(times, sources + hi_delay, side="left")
            pair_counts = hi - lo
            total = int(pair_counts.sum())
            if total == 0:
                continue
            flat = np.repeat(lo - np.cumsum(pair_counts) + pair_counts, pair_counts)
            flat += np.arange(total)
            delays = times[flat] - np.repeat(sources, pair_counts)
            which = np.searchsorted(exact_edges, delays, side="right") - 1
            good = (which >= 0) & (which < n_exact)
            counts[:n_exact] += np.bincount(which[good], minlength=n_exact)
        for i in range(n_exact):
            a_e, b_e = edges[i], edges[i + 1]
            windows[i] = (a_e, b_e)
            denom[i] = rate * rate * (b_e - a_e) * (t_total - 0.5 * (a_e + b_e))

    lattice: dict[float, np.ndarray] = {}
    for i in range(n_exact, nbins):
        width = 10.0 ** math.floor(math.log10(edges[i])) / 20.0
        ka = int(math.ceil(edges[i] / width - 1e-9))
        kb = int(math.ceil(edges[i + 1] / width - 1e-9))
        if kb <= ka:
            kb = ka + 1
        if width not in lattice:
            # Bins come in delay order, so a new width means the previous
            # (finer) lattice is finished; keep only the current one.
            idx = (times * (1.0 / width)).astype(np.int64)
            lattice = {width: np.bincount(idx).astype(np.float64)}
        vec = lattice[width]
        total = 0.0
        norm = 0.0
        for k in range(ka, kb):
            total += float(np.dot(vec[: vec.size - k], vec[k:]))
            norm += width * (t_total - k * width)
        counts[i] = total
        denom[i] = rate * rate * norm
        windows[i] = (ka * width, kb * width)

    g = counts / denom
    shot = np.maximum(np.sqrt(counts), 1.0) / denom

    # Normalization term: the estimate divides by rate^2, and for bunched
    # records the rate carries cluster noise well above Poisson. Block
    # counts capture it without any model assumption.
    k_blocks = 64
    block_counts, _ = np.histogram(times, bins=np.linspace(0.0, t_total, k_blocks + 1))
    block_rates = block_counts * (k_blocks / t_total)
    var_rate = np.var(block_rates, ddof=1) / k_blocks
    var_rate = max(var_rate, n / t_total**2)
    norm_rel = 2.0 * math.sqrt(var_rate) / rate
    sigma = np.sqrt(shot**2 + (g * norm_rel) ** 2)

    centers = np.sqrt(windows[:, 0] * windows[:, 1])
    series = CorrelationSeries(tau=centers, g=g, sigma=sigma)
    if with_windows:
        return series, windows
    return series


def write_trajectory(trajectory: Trajectory, path: str) -> None:
    """Write arrival times as text, one per line, after a short header."""
    lines = [f"# duration = {format_float(trajectory.duration)}"]
    if trajectory.seed is not None:
        lines.append(f"# seed = {trajectory.seed}")
    lines.extend(format_float(t) for t in trajectory.times)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_trajectory(path: str) -> Trajectory:
    """Read a trajectory written by :func:`write_trajectory`.

    The period record is not serialized, so it comes back as ``None``.
    """
    duration = None
    seed = None
    values: list[float] = []
    with open(path) as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, text = body.partition("=")
                    key = key.strip()
                    if key == "duration":
                        duration = float(text.strip())
                    elif key == "seed":
                        seed = int(text.strip())
                continue
            try:
                values.append(float(line))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad arrival time") from exc
    if duration is None:
        raise ValueError(f"{path}: missing '# duration = ...' header")
    return Trajectory(
        times=np.array(values), duration=duration, seed=seed, periods=None
    )
