"""Truncated Fourier-mode simulator of noisy toral maps.

The noisy Koopman step sends the coefficient at wave vector k to A k
(A = Fᵀ), multiplied by the damping exp(-ε|A k|^{2α}) (or |B A k| for
degenerate noise) and the phase exp(2πi k·c). Modes leaving the box
|k|∞ <= K are dropped, so the truncated operator is a compression of the
true one.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, reduce
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.fft import ifftn
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, LinearOperator, splu, svds
from scipy.special import entr

from app.config import get_settings
from app.errors import ComputationError, PreconditionError
from app.reports.io import write_csv
from app.services.arithmin import Variant, get_solver
from app.services.dissipation import NoiseModel
from app.services.spectral import ToralMap

logger = logging.getLogger(__name__)

# Grid values below this count as a genuinely negative density
NEGATIVE_TOLERANCE = 1e-6

# Int64 images are promoted to Python ints past this magnitude
_INT64_SAFE = 2**40

# Relative agreement of successive power-iteration norms
POWER_TOLERANCE = 1e-10

TRAJECTORY_COLUMNS = ["n", "l2_fluct", "bg_entropy", "dropped_mass", "norm"]


class SolveDivergence(ComputationError):
    """Raised when the resolvent solve or its singular-value iteration fails."""

    pass


class PowerIterationStall(ComputationError):
    """Raised when the norm power iteration does not settle."""

    pass


class NegativeDensity(ComputationError):
    """Raised when a density goes negative on the sampling grid."""

    def __init__(self, message: str, minimum: float) -> None:
        super().__init__(message)
        self.minimum = minimum


def default_cutoff(d: int) -> int:
    """Configured mode cutoff K for dimension d."""
    settings = get_settings()
    return settings.default_cutoff_2d if d <= 2 else settings.default_cutoff_3d


@dataclass(frozen=True)
class ModeBox:
    """All integer wave vectors with |k|∞ <= K, laid out in C order with 0 at the centre."""

    d: int
    cutoff: int

    def __post_init__(self) -> None:
        if self.d < 1 or self.cutoff < 1:
            raise PreconditionError(
                f"ModeBox needs d >= 1 and K >= 1, got {self.d}, {self.cutoff}"
            )

    @property
    def side(self) -> int:
        """2K + 1."""
        return 2 * self.cutoff + 1

    @property
    def shape(self) -> tuple[int, ...]:
        """Array shape of a coefficient table."""
        return (self.side,) * self.d

    @property
    def total(self) -> int:
        """Number of modes including zero."""
        return self.side**self.d

    @property
    def size(self) -> int:
        """Number of nonzero modes, (2K+1)^d - 1."""
        return self.total - 1

    @property
    def zero_index(self) -> int:
        """Flat index of k = 0."""
        return (self.total - 1) // 2

    @cached_property
    def vectors(self) -> np.ndarray:
        """(total, d) int64 array of wave vectors in flat-index order."""
        grid = np.indices(self.shape).reshape(self.d, -1).T
        return (grid - self.cutoff).astype(np.int64)

    def contains(self, vectors: np.ndarray) -> np.ndarray:
        """Boolean mask of rows inside the box."""
        return np.all(np.abs(vectors) <= self.cutoff, axis=-1)

    def index_of(self, vectors: np.ndarray) -> np.ndarray:
        """Flat indices of the rows, -1 where a row lies outside the box."""
        vectors = np.atleast_2d(vectors)
        inside = self.contains(vectors)
        result = np.full(len(vectors), -1, dtype=np.int64)
        if inside.any():
            shifted = (vectors[inside] + self.cutoff).astype(np.int64).T
            result[inside] = np.ravel_multi_index(tuple(shifted), self.shape)
        return result


@dataclass(frozen=True)
class DensityState:
    """Fourier coefficients over a ModeBox (zero mode included) and the L² mass dropped so far."""

    box: ModeBox
    coefficients: np.ndarray
    dropped_mass: float = 0.0

    @classmethod
    def zeros(cls, box: ModeBox) -> "DensityState":
        """The zero function."""
        return cls(box=box, coefficients=np.zeros(box.total, dtype=complex))

    @classmethod
    def mode(cls, box: ModeBox, k: tuple[int, ...]) -> "DensityState":
        """The single Fourier mode e_k."""
        state = cls.zeros(box)
        index = int(box.index_of(np.array([k]))[0])
        if index < 0:
            raise PreconditionError(f"Mode {k} lies outside the box |k| <= {box.cutoff}")
        state.coefficients[index] = 1.0
        return state

    @classmethod
    def uniform(cls, box: ModeBox) -> "DensityState":
        """The equilibrium density f = 1."""
        state = cls.zeros(box)
        state.coefficients[box.zero_index] = 1.0
        return state

    @classmethod
    def cosine(
        cls, box: ModeBox, wave_vector: tuple[int, ...], amplitude: float = 1.0
    ) -> "DensityState":
        """f = 1 + amplitude·cos(2π z·x); a density for |amplitude| <= 1."""
        state = cls.uniform(box)
        z = np.array([wave_vector])
        index, opposite = box.index_of(z)[0], box.index_of(-z)[0]
        if index < 0 or not any(wave_vector):
            raise PreconditionError(f"Wave vector {wave_vector} must be nonzero and inside the box")
        state.coefficients[index] += amplitude / 2
        state.coefficients[opposite] += amplitude / 2
        return state

    @classmethod
    def preset(cls, box: ModeBox, name: str) -> "DensityState":
        """Named initial densities: uniform, cos1 or cos:k1,k2,..."""
        if name == "uniform":
            return cls.uniform(box)
        if name == "cos1":
            return cls.cosine(box, (1,) + (0,) * (box.d - 1))
        if name.startswith("cos:"):
            try:
                k = tuple(int(x) for x in name[4:].split(","))
            except ValueError as e:
                raise PreconditionError(f"Invalid wave vector in preset {name!r}") from e
            if len(k) != box.d:
                raise PreconditionError(f"Preset {name!r} needs {box.d} components")
            return cls.cosine(box, k)
        raise PreconditionError(f"Unknown density preset {name!r}")

    @property
    def mean(self) -> complex:
        """Coefficient of the zero mode."""
        return complex(self.coefficients[self.box.zero_index])

    def coefficient(self, k: tuple[int, ...]) -> complex:
        """Coefficient at wave vector k (0 outside the box)."""
        index = int(self.box.index_of(np.array([k]))[0])
        return 0j if index < 0 else complex(self.coefficients[index])

    def l2_norm(self) -> float:
        """L² norm over all modes."""
        return float(np.linalg.norm(self.coefficients))

    def fluctuation_norm(self) -> float:
        """L² norm of f - mean."""
        values = np.delete(self.coefficients, self.box.zero_index)
        return float(np.linalg.norm(values))

    def is_real(self, tolerance: float = 1e-12) -> bool:
        """True when c(-k) = conj(c(k)) for every mode."""
        mirrored = self.coefficients[::-1]
        return bool(np.allclose(mirrored, np.conj(self.coefficients), atol=tolerance, rtol=0))

    def grid_values(self, points: int) -> np.ndarray:
        """
        Sample the (real part of the) function on a uniform grid with `points` per axis.

        Raises:
            PreconditionError: If the grid is too coarse to hold the box without wraparound
        """
        box = self.box
        if points < box.side:
            raise PreconditionError(f"Grid of {points} points cannot resolve cutoff {box.cutoff}")
        table = np.zeros((points,) * box.d, dtype=complex)
        indices = np.mod(box.vectors, points).T
        table[tuple(indices)] = self.coefficients
        return np.real(ifftn(table, norm="forward"))


@dataclass
class TruncatedOperator:
    """One noisy Koopman step restricted to a ModeBox with mode-drop truncation."""

    toral_map: ToralMap
    noise: NoiseModel
    box: ModeBox

    def __post_init__(self) -> None:
        if self.box.d != self.toral_map.dim:
            raise PreconditionError(
                f"Box dimension {self.box.d} does not match map dimension {self.toral_map.dim}"
            )

    @cached_property
    def fourier_matrix(self) -> np.ndarray:
        """A = Fᵀ as an int64 array."""
        return np.array(self.toral_map.fourier_matrix.rows, dtype=np.int64)

    @cached_property
    def images(self) -> np.ndarray:
        """A k for every box mode."""
        return self.box.vectors @ self.fourier_matrix.T

    @cached_property
    def targets(self) -> np.ndarray:
        """Flat index of A k, or -1 when the image leaves the box."""
        return self.box.index_of(self.images)

    def damping_exponent(self, images: np.ndarray) -> np.ndarray:
        """|(B) j|^{2α} for rows j (object or int64 arrays accepted)."""
        if self.noise.degeneracy is not None:
            projected = images.astype(float) @ self.noise.degeneracy.to_numpy().T
            squares = np.sum(projected * projected, axis=1)
        else:
            squares = np.sum(images * images, axis=1).astype(float)
        return squares if self.noise.alpha == 1.0 else squares**self.noise.alpha

    @cached_property
    def phases(self) -> np.ndarray:
        """exp(2πi k·c) per box mode, exact modulo 1 for rational shifts."""
        shift = self.toral_map.rational_shift()
        vectors = self.box.vectors
        if shift is None:
            turns = np.mod(vectors @ self.toral_map.shift_floats(), 1.0)
        else:
            denominator = reduce(math.lcm, (c.denominator for c in shift), 1)
            numerators = [int(c * denominator) for c in shift]
            bound = max(abs(x) for x in numerators) * self.box.cutoff * self.box.d
            if bound < 2**62:
                residues = np.mod(vectors @ np.array(numerators, dtype=np.int64), denominator)
            else:
                products = vectors.astype(object) @ np.array(numerators, dtype=object)
                residues = np.mod(products, denominator)
            turns = np.array([float(Fraction(int(r), denominator)) for r in residues])
        return np.exp(2j * np.pi * turns)

    @cached_property
    def weights(self) -> np.ndarray:
        """Complex factor carried from k to A k."""
        return np.exp(-self.noise.epsilon * self.damping_exponent(self.images)) * self.phases

    def apply(self, state: DensityState) -> DensityState:
        """
        One noisy step in mode space.

        Coefficients whose image leaves the box are dropped; their damped L²
        mass is added to the state's dropped_mass counter.
        """
        moved = state.coefficients * self.weights
        kept = self.targets >= 0
        result = np.zeros_like(state.coefficients)
        result[self.targets[kept]] = moved[kept]
        dropped = float(np.sum(np.abs(moved[~kept]) ** 2))
        return DensityState(
            box=self.box, coefficients=result, dropped_mass=state.dropped_mass + dropped
        )

    def sparse_matrix(self) -> sp.csc_matrix:
        """The step on nonzero modes as a sparse matrix (column = source mode)."""
        zero = self.box.zero_index
        sources = np.flatnonzero((self.targets >= 0) & (np.arange(self.box.total) != zero))
        targets = self.targets[sources]

        def reduced(index: np.ndarray) -> np.ndarray:
            return index - (index > zero)

        return sp.csc_matrix(
            (self.weights[sources], (reduced(targets), reduced(sources))),
            shape=(self.box.size, self.box.size),
        )


class _OrbitSums:
    """Exact orbits A^l k of every box mode with the accumulated damping exponents."""

    def __init__(self, op: TruncatedOperator) -> None:
        self.op = op
        self.n = 0
        self.images: np.ndarray = op.box.vectors.copy()
        self.sums = np.zeros(op.box.total)

    def advance(self) -> None:
        if self.images.dtype != object and np.abs(self.images).max() > _INT64_SAFE:
            self.images = self.images.astype(object)
        matrix = self.op.fourier_matrix
        if self.images.dtype == object:
            matrix = matrix.astype(object)
        self.images = self.images @ matrix.T
        self.sums += self.op.damping_exponent(self.images)
        self.n += 1

    def advance_to(self, n: int) -> None:
        while self.n < n:
            self.advance()

    def minimum(self) -> tuple[float, int]:
        """Smallest exponent sum over nonzero modes and its flat index."""
        sums = self.sums.copy()
        sums[self.op.box.zero_index] = np.inf
        index = int(np.argmin(sums))
        return float(sums[index]), index


@dataclass(frozen=True)
class NormEstimate:
    """Truncated ‖Tⁿ‖ against the analytic value exp(-ε·M(n))."""

    n: int
    value: float
    log_value: float
    analytic: float
    log_analytic: float
    valid: bool
    argmax: tuple[int, ...]


def _orbit_inside(op: TruncatedOperator, k: tuple[int, ...], n: int) -> bool:
    image = np.array(k, dtype=object)
    matrix = op.fourier_matrix.astype(object)
    for _ in range(n + 1):
        if max(abs(int(x)) for x in image) > op.box.cutoff:
            return False
        image = matrix @ image
    return True


def _power_apply(matrix: sp.csr_matrix, x: np.ndarray, n: int) -> tuple[np.ndarray, float]:
    """matrixⁿ x as a unit vector and the log of its norm (-inf once it vanishes)."""
    log_scale = 0.0
    for _ in range(n):
        x = matrix @ x
        size = float(np.linalg.norm(x))
        if size == 0.0:
            return x, -math.inf
        x = x / size
        log_scale += math.log(size)
    return x, log_scale


def _seed(op: TruncatedOperator, k: tuple[int, ...] | None) -> np.ndarray:
    seed = np.zeros(op.box.size, dtype=complex)
    index = -1 if k is None else int(op.box.index_of(np.array([k]))[0])
    if index < 0:
        seed[:] = 1.0 / math.sqrt(op.box.size)
    else:
        seed[index - (index > op.box.zero_index)] = 1.0
    return seed


def norm_estimate(op: TruncatedOperator, n: int) -> NormEstimate:
    """
    Norm of the truncated Tⁿ on nonzero box modes, next to exp(-ε·M(n)).

    Power iteration on (Tⁿ)*Tⁿ, with both factors applied one sparse step
    at a time and renormalized, until successive values of ‖Tⁿx‖ agree to
    a relative POWER_TOLERANCE. The iteration starts from the certified
    minimizer mode when it lies in the box. valid is True when the
    minimizer's orbit stays in the box, in which case both values agree.

    Raises:
        PreconditionError: If n < 1
        PowerIterationStall: If the iteration does not settle within power_iterations
    """
    if n < 1:
        raise PreconditionError(f"norm_estimate needs n >= 1, got {n}")
    noise = op.noise
    variant = Variant.DEGENERATE if noise.degeneracy is not None else Variant.FULL_SUM
    solver = get_solver(op.toral_map.fourier_matrix, noise.alpha, variant, noise.degeneracy)
    minimum = solver.minimum(n)
    if minimum.infimum_zero:
        log_analytic, valid, start = 0.0, False, None
    else:
        log_analytic = -noise.epsilon * float(minimum.value)
        valid = _orbit_inside(op, minimum.argmin, n)
        start = minimum.argmin if valid else None

    forward = op.sparse_matrix().tocsr()
    adjoint = forward.conj().T.tocsr()
    x = _seed(op, start)
    previous = -math.inf
    iterations = get_settings().power_iterations
    for iteration in range(1, iterations + 1):
        image, log_value = _power_apply(forward, x, n)
        if log_value == -math.inf:
            break
        back, log_back = _power_apply(adjoint, image, n)
        if abs(log_value - previous) <= math.log1p(POWER_TOLERANCE) or log_back == -math.inf:
            break
        x, previous = back, log_value
    else:
        raise PowerIterationStall(
            f"Power iteration for n={n} did not settle in {iterations} iterations"
        )

    reduced = int(np.argmax(np.abs(x)))
    flat = reduced + (reduced >= op.box.zero_index)
    logger.debug("Power iteration for n=%d settled after %d iterations", n, iteration)
    return NormEstimate(
        n=n,
        value=math.exp(log_value),
        log_value=log_value,
        analytic=math.exp(log_analytic),
        log_analytic=log_analytic,
        valid=valid,
        argmax=tuple(int(v) for v in op.box.vectors[flat]),
    )


def resolvent_norm_estimate(op: TruncatedOperator, tolerance: float = 1e-8) -> float:
    """
    ‖(I - T)⁻¹‖ on the nonzero box modes.

    I - T is factorized once with a sparse LU; the largest singular value of
    its inverse is found by Lanczos iteration on the implicit operator.

    Raises:
        PreconditionError: If ε <= 0
        SolveDivergence: If the factorization or the iteration fails
    """
    op.noise.require_positive()
    n = op.box.size
    system = (sp.identity(n, dtype=complex, format="csc") - op.sparse_matrix()).tocsc()
    try:
        lu = splu(system)
    except RuntimeError as e:
        raise SolveDivergence(f"I - T is singular on the truncated space: {e}") from e

    inverse = LinearOperator(
        (n, n),
        matvec=lambda x: lu.solve(np.asarray(x, dtype=complex).ravel()),
        rmatvec=lambda x: lu.solve(np.asarray(x, dtype=complex).ravel(), trans="H"),
        dtype=complex,
    )
    try:
        values = svds(inverse, k=1, tol=tolerance, return_singular_vectors=False)
    except (ArpackNoConvergence, ArpackError) as e:
        raise SolveDivergence(f"Singular-value iteration did not converge: {e}") from e
    value = float(np.max(values))
    logger.debug("Resolvent norm %.10g on %d modes", value, n)
    return value


@dataclass(frozen=True)
class TrajectoryRow:
    """One step of a density evolution."""

    n: int
    l2_fluct: float
    bg_entropy: float
    dropped_mass: float
    norm: float

    def to_row(self) -> dict[str, float | int]:
        return {name: getattr(self, name) for name in TRAJECTORY_COLUMNS}


@dataclass
class DensityTrajectory:
    """Per-step diagnostics of Tⁿ f0 and the final state."""

    rows: list[TrajectoryRow] = field(default_factory=list)
    final: DensityState | None = None

    def to_csv(self, path: Path) -> None:
        """Write the trajectory as CSV."""
        write_csv(path, TRAJECTORY_COLUMNS, (row.to_row() for row in self.rows))


def entropy_grid_points(box: ModeBox) -> int:
    """Quadrature grid per axis: 4K, and never fewer than 2K + 2."""
    return max(4 * box.cutoff, 2 * box.cutoff + 2)


def bg_entropy(state: DensityState, points: int | None = None) -> float:
    """
    Boltzmann–Gibbs entropy ∫ -f ln f over the torus by grid quadrature.

    Raises:
        NegativeDensity: If the sampled density drops below -1e-6
    """
    values = state.grid_values(points or entropy_grid_points(state.box))
    low = float(values.min())
    if low < -NEGATIVE_TOLERANCE:
        raise NegativeDensity(f"Density reaches {low:.3e} on the grid (aliasing?)", minimum=low)
    return float(np.mean(entr(np.clip(values, 0.0, None))))


def evolve_density(op: TruncatedOperator, f0: DensityState, n: int) -> DensityTrajectory:
    """
    Evolve a density for n steps and record its decay toward equilibrium.

    Args:
        op: Truncated operator
        f0: Initial density (mean 1, real, nonnegative on the grid)
        n: Number of steps

    Returns:
        DensityTrajectory with rows for 0..n: L² norm of f - 1, entropy,
        dropped mass and the restricted operator norm

    Raises:
        PreconditionError: If f0 is not a real density with mean 1
        NegativeDensity: If a sampled density goes negative
    """
    if abs(f0.mean - 1.0) > 1e-12 or not f0.is_real():
        raise PreconditionError("Initial state must be a real density with mean 1")
    points = entropy_grid_points(f0.box)
    sums = _OrbitSums(op)
    state = f0
    rows = [TrajectoryRow(0, state.fluctuation_norm(), bg_entropy(state, points), 0.0, 1.0)]
    for step in range(1, n + 1):
        state = op.apply(state)
        sums.advance()
        exponent, _ = sums.minimum()
        rows.append(
            TrajectoryRow(
                n=step,
                l2_fluct=state.fluctuation_norm(),
                bg_entropy=bg_entropy(state, points),
                dropped_mass=state.dropped_mass,
                norm=math.exp(-op.noise.epsilon * exponent),
            )
        )
    logger.debug("Evolved %d steps, final entropy %.6g", n, rows[-1].bg_entropy)
    return DensityTrajectory(rows=rows, final=state)


def _truncated_power_norm(op: TruncatedOperator, n: int) -> float:
    """Norm of the mode-drop truncated Tⁿ with phases, as the largest column norm.

    Columns of Tⁿ have disjoint supports, so they are orthogonal.
    """
    step = op.sparse_matrix()
    power = sp.identity(op.box.size, dtype=complex, format="csc")
    for _ in range(n):
        power = (step @ power).tocsc()
    column_norms = np.sqrt(np.asarray(abs(power).power(2).sum(axis=0))).ravel()
    return float(column_norms.max()) if column_norms.size else 0.0


def affine_invariance_check(
    toral_map: ToralMap,
    shifts: list[str],
    noise: NoiseModel,
    n: int,
    cutoff: int | None = None,
) -> float:
    """
    Largest change of the truncated ‖Tⁿ‖ when the shift c is varied.

    Args:
        toral_map: Map supplying the linear part F
        shifts: Shift texts; each is paired with F
        noise: Noise model
        n: Number of steps
        cutoff: Box cutoff K (defaults by dimension)

    Returns:
        max over shifts of |‖Tⁿ_c‖ - ‖Tⁿ_0‖|
    """
    box = ModeBox(toral_map.dim, cutoff or default_cutoff(toral_map.dim))
    base = _truncated_power_norm(TruncatedOperator(ToralMap(toral_map.linear), noise, box), n)
    deviation = 0.0
    for text in shifts:
        shifted = ToralMap.parse(toral_map.linear.to_text(), text)
        value = _truncated_power_norm(TruncatedOperator(shifted, noise, box), n)
        deviation = max(deviation, abs(value - base))
    logger.info("Affine invariance deviation %.3e over %d shifts", deviation, len(shifts))
    return deviation
