"""Dissipation times of noisy toral automorphisms.

For an automorphism the n-step noisy operator has the exact norm
‖Tⁿ‖ = exp(-ε·M(n)), so dissipation times follow from the certified
minima of arithmin without simulating anything.
"""

import logging
import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np

from app.config import get_settings
from app.errors import BudgetError, PreconditionError
from app.linalg.matrix import IntMatrix, Number, RatMatrix
from app.services.arithmin import (
    InsufficientData,
    MinResult,
    MinSolver,
    Variant,
    get_solver,
    mean_minimum,
)
from app.services.spectral import DegeneracyCase, h_hat, is_ergodic, periodic_orbit

logger = logging.getLogger(__name__)

DEFAULT_ETA = math.exp(-1.0)

# Relative margin under which ε·M(n) = ln(1/η) counts as not yet dissipated
BOUNDARY_TOLERANCE = 1e-12

# Steps before a bisected coarse crossing that are rechecked for an earlier one
COARSE_RECHECK = 8


class InfiniteDissipation(PreconditionError):
    """Raised when the operator norm never drops below the threshold."""

    pass


class Regime(StrEnum):
    """Asymptotic dissipation regime."""

    SIMPLE = "simple"
    LOGARITHMIC = "logarithmic"
    NONE = "none"


@dataclass(frozen=True)
class NoiseModel:
    """Noise level ε, stability index α, optional degeneracy B and threshold η."""

    epsilon: float
    alpha: float = 1.0
    degeneracy: RatMatrix | None = None
    threshold_eta: float = DEFAULT_ETA

    def __post_init__(self) -> None:
        if self.epsilon < 0:
            raise PreconditionError(f"epsilon must be nonnegative, got {self.epsilon}")
        if not 0 < self.alpha <= 1:
            raise PreconditionError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0 < self.threshold_eta < 1:
            raise PreconditionError(f"eta must lie in (0, 1), got {self.threshold_eta}")

    @property
    def log_threshold(self) -> float:
        """L = ln(1/η)."""
        return -math.log(self.threshold_eta)

    @property
    def variant(self) -> Variant:
        """Minimization variant implied by the degeneracy."""
        return Variant.DEGENERATE if self.degeneracy is not None else Variant.FULL_SUM

    def require_positive(self) -> None:
        """Raise PreconditionError unless ε > 0."""
        if self.epsilon <= 0:
            raise PreconditionError("Dissipation needs epsilon > 0")


@dataclass(frozen=True)
class OperatorNorm:
    """‖Tⁿ‖ with its log and the minimum it came from."""

    n: int
    norm: float
    log_norm: float
    minimum: MinResult


@dataclass(frozen=True)
class DissipationEntry:
    """One row of a sweep."""

    epsilon: float
    n_diss: int
    log_norm: float


@dataclass
class DissipationReport:
    """Dissipation times over an ε grid with fitted and predicted rate constants."""

    alpha: float
    coarse: bool
    entries: list[DissipationEntry]
    classification: Regime
    r_diss_fit: float
    r_diss_predicted: float
    fit_residual: float
    fit_points: int = 0
    notes: list[str] = field(default_factory=list)


def _solver(a: IntMatrix, noise: NoiseModel, variant: Variant | None = None) -> MinSolver:
    solver = get_solver(a, noise.alpha, variant or noise.variant, noise.degeneracy)
    analysis = solver.analysis
    if analysis is not None and analysis.case is DegeneracyCase.NO_DISSIPATION:
        raise InfiniteDissipation(
            f"Degenerate noise does not dissipate: span rank {analysis.rank} < {a.dim}"
        )
    return solver


def operator_norm(a: IntMatrix, noise: NoiseModel, n: int) -> OperatorNorm:
    """
    ‖Tⁿ‖ = exp(-ε·M(n)) on zero-mean functions, computed in log space.

    Args:
        a: Fourier-side matrix
        noise: Noise model
        n: Number of steps (>= 1)

    Returns:
        OperatorNorm with norm, log-norm and the certified minimum

    Raises:
        InfiniteDissipation: For degenerate noise that does not dissipate
    """
    minimum = _solver(a, noise).minimum(n)
    log_norm = -noise.epsilon * as_float(minimum.value)
    return OperatorNorm(n=n, norm=math.exp(log_norm), log_norm=log_norm, minimum=minimum)


def as_float(value: Number | float) -> float:
    """Float value of an exact minimum, inf beyond the float range."""
    try:
        return float(value)
    except OverflowError:
        return math.inf


def _dissipated(noise: NoiseModel, value: float) -> bool:
    return noise.epsilon * value > noise.log_threshold * (1.0 + BOUNDARY_TOLERANCE)


def _bisect_crossing(predicate: Callable[[int], bool], cap: int, what: str) -> int:
    """Crossing found by doubling then bisection; the smallest n when predicate stays true."""
    lo, hi = 0, 1
    while not predicate(hi):
        if hi >= cap:
            raise BudgetError(f"{what} exceeds the cap of {cap} steps")
        lo, hi = hi, min(2 * hi, cap)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if predicate(mid):
            hi = mid
        else:
            lo = mid
    return hi


def n_diss(a: IntMatrix, noise: NoiseModel) -> int:
    """
    Smallest n with ‖Tⁿ‖ < η, i.e. ε·M(n) > ln(1/η).

    Doubling brackets the answer, bisection finds it; M(n) is memoized in
    the shared solver.

    Args:
        a: Fourier-side matrix
        noise: Noise model with ε > 0

    Returns:
        Dissipation time n_diss >= 1

    Raises:
        InfiniteDissipation: For degenerate noise that does not dissipate
        BudgetError: If n passes max_dissipation_steps
    """
    noise.require_positive()
    solver = _solver(a, noise)
    cap = get_settings().max_dissipation_steps

    def dissipated(n: int) -> bool:
        return _dissipated(noise, as_float(solver.minimum(n).value))

    hi = _bisect_crossing(dissipated, cap, "Dissipation time")
    logger.debug("n_diss(eps=%g) = %d", noise.epsilon, hi)
    return hi


def classify(a: IntMatrix) -> Regime:
    """Logarithmic iff A is ergodic, simple otherwise."""
    return Regime.LOGARITHMIC if is_ergodic(a) else Regime.SIMPLE


def coarse_saturation_bound(a: IntMatrix, alpha: float) -> float | None:
    """
    Upper bound on the coarse minimum for nonergodic A, or None if A is ergodic.

    A periodic integer orbit k*, A^m k* = k*, keeps the coarse minimum below
    |k*|^{2α} + max_l |A^l k*|^{2α} for every n.
    """
    orbit = periodic_orbit(a)
    if orbit is None:
        return None
    k, m = orbit
    orbit_max = 0
    image: tuple[int, ...] = k
    for _ in range(m):
        image = tuple(int(x) for x in a.matvec(image))
        orbit_max = max(orbit_max, sum(x * x for x in image))
    return float(sum(x * x for x in k)) ** alpha + float(orbit_max) ** alpha


def n_diss_coarse(a: IntMatrix, noise: NoiseModel) -> int:
    """
    Smallest n >= 1 with ε·M̂(n) > ln(1/η) for the coarse-grained minimum.

    Doubling and bisection locate a crossing as in n_diss. M̂ need not be
    monotone, so the COARSE_RECHECK steps before that crossing are scanned
    for an earlier one.

    Raises:
        InfiniteDissipation: When a periodic orbit keeps M̂ below the threshold
        BudgetError: If the bracket passes coarse_scan_cap
    """
    noise.require_positive()
    bound = coarse_saturation_bound(a, noise.alpha)
    if bound is not None and not _dissipated(noise, bound):
        logger.warning(
            "Coarse minimum saturates below %.6g for eps=%g; no finite coarse dissipation time",
            noise.log_threshold / noise.epsilon,
            noise.epsilon,
        )
        raise InfiniteDissipation(
            f"Coarse minimum stays below {bound:.6g} <= ln(1/eta)/eps for eps={noise.epsilon}"
        )

    solver = get_solver(a, noise.alpha, Variant.COARSE)
    cap = get_settings().coarse_scan_cap

    def dissipated(n: int) -> bool:
        return _dissipated(noise, as_float(solver.minimum(n).value))

    hi = _bisect_crossing(dissipated, cap, "Coarse dissipation time")
    for n in range(max(1, hi - COARSE_RECHECK), hi):
        if dissipated(n):
            logger.debug("Coarse crossing at %d precedes the bisection result %d", n, hi)
            return n
    return hi


def dissipation_sweep(
    a: IntMatrix,
    alpha: float,
    eps_grid: list[float],
    eta: float = DEFAULT_ETA,
    degeneracy: RatMatrix | None = None,
    coarse: bool = False,
    threads: int | None = None,
) -> list[DissipationEntry]:
    """
    n_diss (or the coarse time) for every ε, computed concurrently.

    Returns:
        Entries sorted by decreasing ε, with log-norm -ε·M(n_diss)
    """
    grid = sorted(eps_grid, reverse=True)
    if coarse:
        variant = Variant.COARSE
    else:
        variant = Variant.DEGENERATE if degeneracy is not None else Variant.FULL_SUM

    def one(epsilon: float) -> DissipationEntry:
        noise = NoiseModel(epsilon=epsilon, alpha=alpha, degeneracy=degeneracy, threshold_eta=eta)
        n = n_diss_coarse(a, noise) if coarse else n_diss(a, noise)
        value = get_solver(a, alpha, variant, None if coarse else degeneracy).minimum(n).value
        return DissipationEntry(epsilon=epsilon, n_diss=n, log_norm=-epsilon * as_float(value))

    workers = threads or get_settings().threads
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, grid))


def _no_dissipation(
    a: IntMatrix, alpha: float, degeneracy: RatMatrix | None, coarse: bool
) -> DissipationReport | None:
    if degeneracy is None or coarse:
        return None
    analysis = get_solver(a, alpha, Variant.DEGENERATE, degeneracy).analysis
    if analysis is None or analysis.case is not DegeneracyCase.NO_DISSIPATION:
        return None
    return DissipationReport(
        alpha=alpha,
        coarse=coarse,
        entries=[],
        classification=Regime.NONE,
        r_diss_fit=math.nan,
        r_diss_predicted=math.inf,
        fit_residual=math.nan,
        notes=["degenerate noise does not dissipate"],
    )


def _predicted_rate(
    a: IntMatrix, alpha: float, eta: float, regime: Regime, entries: list[DissipationEntry]
) -> float:
    if regime is Regime.LOGARITHMIC:
        return 1.0 / (2.0 * alpha * h_hat(a))
    longest = max(e.n_diss for e in entries)
    return -math.log(eta) / mean_minimum(a, alpha, longest)


def sweep_report(
    a: IntMatrix,
    alpha: float,
    eps_grid: list[float],
    eta: float = DEFAULT_ETA,
    degeneracy: RatMatrix | None = None,
    coarse: bool = False,
    threads: int | None = None,
) -> DissipationReport:
    """Dissipation times and the predicted rate for a grid too short to fit."""
    none = _no_dissipation(a, alpha, degeneracy, coarse)
    if none is not None:
        return none
    entries = dissipation_sweep(a, alpha, eps_grid, eta, degeneracy, coarse, threads)
    regime = classify(a)
    if len(eps_grid) == 1:
        note = "single epsilon; no rate fit"
    else:
        note = f"{len(eps_grid)} epsilons; rate fit needs {get_settings().fit_points}"
    return DissipationReport(
        alpha=alpha,
        coarse=coarse,
        entries=entries,
        classification=regime,
        r_diss_fit=math.nan,
        r_diss_predicted=_predicted_rate(a, alpha, eta, regime, entries),
        fit_residual=math.nan,
        notes=[note],
    )


def r_diss_fit(
    a: IntMatrix,
    alpha: float,
    eps_grid: list[float],
    eta: float = DEFAULT_ETA,
    degeneracy: RatMatrix | None = None,
    coarse: bool = False,
    threads: int | None = None,
) -> DissipationReport:
    """
    Fit the dissipation rate constant over an ε grid.

    Logarithmic class: least-squares slope of n_diss against ln(1/ε) over
    the smallest `fit_points` epsilons, predicted 1/(2αĥ). Simple class:
    mean of ε·n_diss, predicted ln(1/η) / lim M(n)/n.

    Args:
        a: Fourier-side matrix
        alpha: Stability index
        eps_grid: Noise levels (at least `fit_points`)
        eta: Threshold
        degeneracy: Optional noise degeneracy B
        coarse: Use the coarse-grained dissipation time
        threads: Worker count

    Returns:
        DissipationReport

    Raises:
        InsufficientData: With fewer than `fit_points` grid points
    """
    points = get_settings().fit_points
    if len(eps_grid) < points:
        raise InsufficientData(f"Rate fit needs at least {points} epsilons, got {len(eps_grid)}")

    none = _no_dissipation(a, alpha, degeneracy, coarse)
    if none is not None:
        return none

    entries = dissipation_sweep(a, alpha, eps_grid, eta, degeneracy, coarse, threads)
    tail = entries[-points:]
    regime = classify(a)
    notes: list[str] = []

    if regime is Regime.LOGARITHMIC:
        x = np.array([math.log(1.0 / e.epsilon) for e in tail])
        y = np.array([e.n_diss for e in tail], dtype=float)
        slope, intercept = np.polyfit(x, y, 1)
        residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
        fit = float(slope)
    else:
        products = np.array([e.epsilon * e.n_diss for e in tail])
        fit = float(np.mean(products))
        residual = float(np.std(products))
        if coarse:
            notes.append("coarse times of nonergodic maps may saturate")
    predicted = _predicted_rate(a, alpha, eta, regime, entries)

    logger.info("R_diss fit %.6g (predicted %.6g, %s)", fit, predicted, regime)
    return DissipationReport(
        alpha=alpha,
        coarse=coarse,
        entries=entries,
        classification=regime,
        r_diss_fit=fit,
        r_diss_predicted=predicted,
        fit_residual=residual,
        fit_points=points,
        notes=notes,
    )


@dataclass(frozen=True)
class RobustnessRow:
    """n_diss at one (ε, η) compared with the reference threshold."""

    epsilon: float
    eta: float
    n_diss: int
    ratio: float
    bound: int
    within_bounds: bool


def threshold_robustness(
    a: IntMatrix, alpha: float, eps_grid: list[float], etas: list[float]
) -> list[RobustnessRow]:
    """
    Compare dissipation times for different thresholds.

    The first η is the reference. For each other η' the ratio
    n_diss(η')/n_diss(η) must lie in [1/k, k] with
    k = ceil(ln min(η, η') / ln max(η, η')).

    Returns:
        One row per (ε, η), reference rows included with ratio 1
    """
    if not etas:
        raise InsufficientData("threshold_robustness needs at least one eta")
    reference = etas[0]
    rows = []
    for epsilon in sorted(eps_grid, reverse=True):
        base = n_diss(a, NoiseModel(epsilon=epsilon, alpha=alpha, threshold_eta=reference))
        for eta in etas:
            n = n_diss(a, NoiseModel(epsilon=epsilon, alpha=alpha, threshold_eta=eta))
            k = math.ceil(math.log(min(eta, reference)) / math.log(max(eta, reference)))
            ratio = n / base
            within = 1.0 / k <= ratio <= k
            if not within:
                logger.warning(
                    "Threshold ratio %.4g outside [1/%d, %d] at eps=%g, eta=%g",
                    ratio,
                    k,
                    k,
                    epsilon,
                    eta,
                )
            rows.append(
                RobustnessRow(
                    epsilon=epsilon, eta=eta, n_diss=n, ratio=ratio, bound=k, within_bounds=within
                )
            )
    return rows
