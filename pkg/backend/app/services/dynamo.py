"""Kinematic-dynamo time scales of noisy toral automorphisms.

A frozen-in field advected by F and smoothed by the noise has the exact
push-forward norm

    ‖Pⁿ‖ = exp(-ε·M(n; A)) · ‖Fⁿ‖₂,   A = (F⁻¹)ᵀ,

so growth rates, peak times and threshold times are read off the certified
minima of arithmin and exact matrix powers. No field is ever evolved.
"""

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np

from app.config import get_settings
from app.errors import ComputationError, PreconditionError
from app.linalg.matrix import IntMatrix, inverse, log_operator_two_norm, mat_pow
from app.services.arithmin import InsufficientData, MinSolver, get_solver, mean_minimum
from app.services.dissipation import NoiseModel, as_float
from app.services.spectral import (
    entropy,
    h_hat,
    is_diagonalizable,
    is_ergodic,
    periodic_orbit,
    spectral_radius,
    zero_entropy_class,
)

logger = logging.getLogger(__name__)

# Log-norm above which the field counts as amplified (‖Pⁿ‖ > e)
THRESHOLD_LOG_NORM = 1.0

# Default scan cap per unit of 1/ε; zero-entropy peaks sit near (d - 1)/ε
CAP_PER_INVERSE_EPS = 100


class NoPeak(ComputationError):
    """Raised when the push-forward norm has no finite peak."""

    pass


class DynamoClass(StrEnum):
    """Asymptotic dynamo behavior."""

    FAST_DYNAMO = "fast_dynamo"
    SLOW_DYNAMO = "slow_dynamo"
    ANTI_DYNAMO = "anti_dynamo"


@dataclass(frozen=True)
class PeakScan:
    """Result of a peak-time scan."""

    n_p: int
    peak_log_norm: float
    entries: list[tuple[int, float]]


@dataclass(frozen=True)
class ThresholdScan:
    """Largest scanned n with ‖Pⁿ‖ > e, or None."""

    n_th: int | None
    cap_reached: bool
    scanned: int


@dataclass(frozen=True)
class PeakScaling:
    """Fit of the peak log-norm against ln(1/ε)."""

    gamma_fit: float
    gamma_predicted: float | None
    peaks: list[tuple[float, int, float]]


@dataclass
class DynamoReport:
    """Push-forward curve with rates, time scales and classification."""

    epsilon: float
    alpha: float
    entries: list[tuple[int, float]]
    r_dyn: float
    r_dyn_divergent: bool
    r_dyn_predicted: float
    n_p: int | None
    peak_log_norm: float | None
    n_th: int | None
    cap_reached: bool
    gamma_fit: float | None
    gamma_predicted: float | None
    classification: DynamoClass
    notes: list[str] = field(default_factory=list)


def fourier_side(f: IntMatrix) -> IntMatrix:
    """A = (F⁻¹)ᵀ, the matrix acting on the wave vectors of an advected field."""
    return inverse(f).transpose()


def _require_scalar_noise(noise: NoiseModel) -> None:
    noise.require_positive()
    if noise.degeneracy is not None:
        raise PreconditionError("Dynamo time scales are defined for nondegenerate noise only")


class _PushCurve:
    """Memoized n -> log‖Pⁿ‖ with the matching minima, evaluated at any n."""

    def __init__(self, f: IntMatrix, noise: NoiseModel) -> None:
        _require_scalar_noise(noise)
        self.f = f
        self.noise = noise
        self.solver: MinSolver = get_solver(fourier_side(f), noise.alpha)
        self._points: dict[int, tuple[float, float]] = {0: (0.0, 0.0)}
        self._lock = threading.Lock()

    def _point(self, n: int) -> tuple[float, float]:
        with self._lock:
            cached = self._points.get(n)
        if cached is not None:
            return cached
        minimum = as_float(self.solver.minimum(n).value)
        value = -self.noise.epsilon * minimum + log_operator_two_norm(mat_pow(self.f, n))
        with self._lock:
            return self._points.setdefault(n, (value, minimum))

    def value(self, n: int) -> float:
        """log‖Pⁿ‖."""
        return self._point(n)[0]

    def minimum(self, n: int) -> float:
        """M(n; A) as a float (0 at n = 0)."""
        return self._point(n)[1]

    def entries(self, n_max: int) -> list[tuple[int, float]]:
        """(n, log‖Pⁿ‖) for n = 0..n_max."""
        return [(n, self.value(n)) for n in range(n_max + 1)]

    def evaluated(self) -> list[tuple[int, float]]:
        """Every (n, log‖Pⁿ‖) evaluated so far, by n."""
        with self._lock:
            return sorted((n, point[0]) for n, point in self._points.items())


def push_norm(f: IntMatrix, noise: NoiseModel, n: int) -> float:
    """
    log‖Pⁿ‖ = -ε·M(n; A) + ln‖Fⁿ‖₂ with A = (F⁻¹)ᵀ.

    Args:
        f: Unimodular map F (not its Fourier-side matrix)
        noise: Nondegenerate noise model with ε > 0
        n: Number of steps (n = 0 gives 0)

    Returns:
        Natural log of the push-forward norm
    """
    if n < 0:
        raise PreconditionError(f"n must be nonnegative, got {n}")
    return _PushCurve(f, noise).value(n)


def fast_dynamo_certificate(f: IntMatrix, noise: NoiseModel) -> bool:
    """
    True when a periodic wave vector proves exponential growth.

    If A^m k* = k* then M(n) <= (n/m + 1)·S with S = Σ_{l=1..m} |A^l k*|^{2α},
    so ln ρ_F > ε·S/m forces log‖Pⁿ‖ to grow linearly in n.
    """
    a = fourier_side(f)
    orbit = periodic_orbit(a)
    if orbit is None:
        return False
    k, m = orbit
    total = 0.0
    image: tuple[int, ...] = k
    for _ in range(m):
        image = tuple(int(x) for x in a.matvec(image))
        total += float(sum(x * x for x in image)) ** noise.alpha
    return math.log(spectral_radius(f)) > noise.epsilon * total / m


def default_scan_cap(noise: NoiseModel) -> int:
    """scan_cap, raised to CAP_PER_INVERSE_EPS/ε so slow peaks near 1/ε stay in range."""
    return max(get_settings().scan_cap, math.ceil(CAP_PER_INVERSE_EPS / noise.epsilon))


def _envelope(curve: _PushCurve, n: int, log_rho: float) -> float:
    return -curve.noise.epsilon * curve.minimum(n) + n * log_rho


def _locate_peak(curve: _PushCurve, window: int, cap: int) -> tuple[int, float] | None:
    """
    First maximizer of log‖Pⁿ‖, or None when the cap comes first.

    Powers of two bracket the peak: the search stops at the first power of two
    whose value falls below the previous one while the envelope -ε·M(n) + n·ln ρ_F also falls.
    A ternary search narrows the bracket, and the peak is accepted once the
    `window` steps after it hold no larger value.
    """
    log_rho = math.log(spectral_radius(curve.f))
    previous, n = 0, 1
    while True:
        if n > cap:
            return None
        falling = curve.value(n) < curve.value(previous)
        if falling and _envelope(curve, n, log_rho) < _envelope(curve, previous, log_rho):
            break
        previous, n = n, 2 * n

    lo, hi = previous // 2, n
    while hi - lo > 2:
        third = (hi - lo) // 3
        left, right = lo + third, hi - third
        if curve.value(left) < curve.value(right):
            lo = left + 1
        else:
            hi = right - 1

    start = max(0, lo - window)
    n_p = max(range(start, hi + 1), key=lambda m: (curve.value(m), -m))
    peak = curve.value(n_p)
    m, quiet = n_p, 0
    while quiet < window:
        m += 1
        if m > cap:
            return None
        if curve.value(m) > peak:
            n_p, peak, quiet = m, curve.value(m), 0
        else:
            quiet += 1
    logger.debug("Push-forward peak at n=%d after %d evaluations", n_p, len(curve.evaluated()))
    return n_p, peak


def peak_time(
    f: IntMatrix, noise: NoiseModel, window: int | None = None, cap: int | None = None
) -> PeakScan:
    """
    First n attaining the maximum of log‖Pⁿ‖.

    The curve is bracketed by doubling and narrowed by ternary search, so a
    peak near 1/ε costs O(log 1/ε) certified minima.

    Args:
        f: Unimodular map F
        noise: Nondegenerate noise model with ε > 0
        window: Steps after the peak that must hold no larger value (defaults to peak_window)
        cap: Largest n considered (defaults to default_scan_cap)

    Returns:
        PeakScan with n_p, the peak log-norm and every evaluated (n, log-norm)

    Raises:
        NoPeak: For a certified fast dynamo or when the cap is reached first
    """
    window = window or get_settings().peak_window
    cap = cap or default_scan_cap(noise)
    curve = _PushCurve(f, noise)
    if fast_dynamo_certificate(f, noise):
        raise NoPeak(f"Fast dynamo at eps={noise.epsilon}: the push-forward norm grows forever")
    located = _locate_peak(curve, window, cap)
    if located is None:
        raise NoPeak(f"No peak within {cap} steps at eps={noise.epsilon}")
    n_p, peak = located
    return PeakScan(n_p=n_p, peak_log_norm=peak, entries=curve.evaluated())


def threshold_time(f: IntMatrix, noise: NoiseModel, cap: int | None = None) -> ThresholdScan:
    """
    Largest n with log‖Pⁿ‖ > 1.

    Past the peak the norm decreases, so the last crossing of e is found by
    doubling and bisection from n_p. A fast dynamo is scanned step by step
    to the cap (scan_cap by default) and reported with cap_reached.

    Returns:
        ThresholdScan; n_th is None when the norm never exceeds e
    """
    settings = get_settings()
    curve = _PushCurve(f, noise)
    if fast_dynamo_certificate(f, noise):
        cap = cap or settings.scan_cap
        above = [n for n, v in curve.entries(cap) if v > THRESHOLD_LOG_NORM]
        return ThresholdScan(n_th=above[-1] if above else None, cap_reached=True, scanned=cap)

    cap = cap or default_scan_cap(noise)
    located = _locate_peak(curve, settings.peak_window, cap)
    if located is None:
        above = [n for n, v in curve.evaluated() if v > THRESHOLD_LOG_NORM]
        return ThresholdScan(n_th=max(above, default=None), cap_reached=True, scanned=cap)
    n_p, peak = located
    if peak <= THRESHOLD_LOG_NORM:
        return ThresholdScan(n_th=None, cap_reached=False, scanned=curve.evaluated()[-1][0])

    lo, step = n_p, 1
    while curve.value(n_p + step) > THRESHOLD_LOG_NORM:
        lo, step = n_p + step, 2 * step
        if n_p + step > cap:
            logger.warning("Threshold search reached its cap of %d steps", cap)
            return ThresholdScan(n_th=lo, cap_reached=True, scanned=cap)
    hi = n_p + step
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if curve.value(mid) > THRESHOLD_LOG_NORM:
            lo = mid
        else:
            hi = mid
    return ThresholdScan(n_th=lo, cap_reached=False, scanned=curve.evaluated()[-1][0])


def dynamo_rate(f: IntMatrix, noise: NoiseModel, n_max: int) -> float:
    """
    R_dyn as the slope of log‖Pⁿ‖ over the last half of 1..n_max.

    Returns -inf for ergodic F, whose norm decays faster than any exponential
    once past the peak.

    Raises:
        PreconditionError: If n_max < 10
    """
    if n_max < 10:
        raise PreconditionError(f"dynamo_rate needs n_max >= 10, got {n_max}")
    if is_ergodic(fourier_side(f)):
        return -math.inf
    curve = _PushCurve(f, noise)
    ns = np.arange(n_max // 2, n_max + 1)
    values = [curve.value(int(n)) for n in ns]
    return float(np.polyfit(ns, values, 1)[0])


def predicted_rate(f: IntMatrix, noise: NoiseModel, n_ref: int) -> float:
    """ln ρ_F - ε·lim M(n)/n, with the limit estimated at n_ref (-inf when ergodic)."""
    a = fourier_side(f)
    if is_ergodic(a):
        return -math.inf
    return math.log(spectral_radius(f)) - noise.epsilon * mean_minimum(a, noise.alpha, n_ref)


def peak_scaling_fit(
    f: IntMatrix, alpha: float, eps_grid: list[float], threads: int | None = None
) -> PeakScaling:
    """
    Exponent γ in ‖P^{n_p}‖ ~ (1/ε)^γ from peaks over an ε grid.

    Args:
        f: Ergodic F, or nonergodic zero-entropy nondiagonalizable F
        alpha: Stability index
        eps_grid: At least two noise levels
        threads: Worker count

    Returns:
        PeakScaling; gamma_predicted = ln ρ_F / (2αĥ) for ergodic F

    Raises:
        PreconditionError: If F has no transient growth law
        InsufficientData: With fewer than 2 epsilons
    """
    a = fourier_side(f)
    ergodic = is_ergodic(a)
    if not ergodic and not (zero_entropy_class(f) and not is_diagonalizable(f)):
        raise PreconditionError(
            "Peak scaling needs an ergodic map or a nondiagonalizable zero-entropy map"
        )
    if len(eps_grid) < 2:
        raise InsufficientData(f"Peak scaling needs at least 2 epsilons, got {len(eps_grid)}")

    def one(epsilon: float) -> tuple[float, int, float]:
        scan = peak_time(f, NoiseModel(epsilon=epsilon, alpha=alpha))
        return epsilon, scan.n_p, scan.peak_log_norm

    workers = threads or get_settings().threads
    with ThreadPoolExecutor(max_workers=workers) as pool:
        peaks = list(pool.map(one, sorted(eps_grid, reverse=True)))

    x = np.array([math.log(1.0 / e) for e, _, _ in peaks])
    y = np.array([p for _, _, p in peaks])
    gamma = float(np.polyfit(x, y, 1)[0])
    predicted = math.log(spectral_radius(f)) / (2.0 * alpha * h_hat(a)) if ergodic else None
    logger.info("Peak scaling exponent %.4g (predicted %s)", gamma, predicted)
    return PeakScaling(gamma_fit=gamma, gamma_predicted=predicted, peaks=peaks)


def dynamo_report(
    f: IntMatrix, noise: NoiseModel, n_max: int, eps_grid: list[float] | None = None
) -> DynamoReport:
    """
    Assemble the push-forward curve, rates, time scales and classification.

    Classification: ergodic F is an anti-dynamo; a positive rate with
    positive entropy is a fast dynamo; zero entropy with transient growth
    is a slow dynamo; everything else is an anti-dynamo.

    Args:
        f: Unimodular map F
        noise: Nondegenerate noise model with ε > 0
        n_max: Length of the reported curve (>= 10)
        eps_grid: Optional grid for the peak-scaling fit

    Returns:
        DynamoReport
    """
    curve = _PushCurve(f, noise)
    a = fourier_side(f)
    ergodic = is_ergodic(a)
    notes: list[str] = []

    rate = dynamo_rate(f, noise, n_max)
    predicted = predicted_rate(f, noise, max(n_max // 2, 1))
    fast = fast_dynamo_certificate(f, noise)

    n_p: int | None = None
    peak: float | None = None
    if fast:
        notes.append("fast dynamo certified by a periodic wave vector; no peak")
    else:
        try:
            scan = peak_time(f, noise)
            n_p, peak = scan.n_p, scan.peak_log_norm
        except NoPeak as e:
            notes.append(str(e))

    threshold = threshold_time(f, noise, cap=n_max if fast else None)
    if threshold.cap_reached:
        notes.append(f"threshold scan capped at n={threshold.scanned}")

    gamma: float | None = None
    gamma_predicted: float | None = None
    if eps_grid:
        try:
            scaling = peak_scaling_fit(f, noise.alpha, eps_grid)
            gamma, gamma_predicted = scaling.gamma_fit, scaling.gamma_predicted
        except PreconditionError as e:
            notes.append(f"peak scaling skipped: {e}")

    entries = curve.entries(n_max)
    growth = max(v for _, v in entries) > 0.0 or (peak is not None and peak > 0.0)
    if ergodic:
        classification = DynamoClass.ANTI_DYNAMO
    elif rate > 0 and entropy(f) > 0:
        classification = DynamoClass.FAST_DYNAMO
    elif zero_entropy_class(f) and growth:
        classification = DynamoClass.SLOW_DYNAMO
    else:
        classification = DynamoClass.ANTI_DYNAMO

    logger.info("Dynamo classification %s (R_dyn %.6g)", classification, rate)
    return DynamoReport(
        epsilon=noise.epsilon,
        alpha=noise.alpha,
        entries=entries,
        r_dyn=rate,
        r_dyn_divergent=math.isinf(rate),
        r_dyn_predicted=predicted,
        n_p=n_p,
        peak_log_norm=peak,
        n_th=threshold.n_th,
        cap_reached=threshold.cap_reached,
        gamma_fit=gamma,
        gamma_predicted=gamma_predicted,
        classification=classification,
        notes=notes,
    )
