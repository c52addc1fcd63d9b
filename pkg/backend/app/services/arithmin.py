"""Certified arithmetic minima M(n) of toral automorphisms.

M(n) = min over nonzero integer k of Σ_{l=1..n} |A^l k|^{2α}, plus the
coarse-grained variant |k|^{2α} + |A^n k|^{2α} and the degenerate-noise
variant Σ |B A^l k|^{2α}. Every variant is reduced to a shortest-vector
search for an exact quadratic form:

- α = 1: the objective is the form itself, so the enumeration minimum is exact.
- α < 1: Σ a_l^α >= (Σ a_l)^α, so any k beating a seed value U satisfies
  kᵀQk <= U^{1/α}; that ellipsoid is enumerated and every candidate is
  evaluated in high precision.

For a non-ergodic map with positive entropy the full-sum minimum at large n
lies on the integer points of the zero-entropy invariant subspace; that
lattice is searched on its own once a floor for every other vector beats
it, so forms with astronomically large entries are never built.
"""

import itertools
import logging
import math
import threading
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import StrEnum
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import mpmath
import numpy as np

from app.config import get_settings
from app.errors import BudgetError, ComputationError, PreconditionError
from app.linalg.matrix import (
    ExactMatrix,
    IntMatrix,
    Number,
    RatMatrix,
    adjugate,
    mat_pow,
    rational_kernel,
    require_unimodular,
    weighted_gram_form,
)
from app.linalg.polynomial import IntPolynomial, char_poly
from app.reports.io import read_csv, write_csv
from app.services.lattice import LatticeFailure, ReducedForm, enumerate_ellipsoid, lll_reduce
from app.services.spectral import (
    DegeneracyAnalysis,
    DegeneracyCase,
    cyclotomic_order,
    degeneracy_analysis,
    factor_over_q,
)

logger = logging.getLogger(__name__)

# Float objective values this close (relative) count as tied
TIE_TOLERANCE = 1e-12

# Objective evaluation for α < 1; the context is only read, never reconfigured
_MP = mpmath.MPContext()
_MP.dps = 30


class EnumerationBudgetExceeded(BudgetError):
    """Raised when lattice enumeration passes its node budget."""

    def __init__(self, message: str, partial: "MinResult") -> None:
        super().__init__(message)
        self.partial = partial


class InsufficientData(ComputationError):
    """Raised when a fit has too few usable points."""

    pass


class Variant(StrEnum):
    """Which arithmetic minimization problem to solve."""

    FULL_SUM = "full_sum"
    COARSE = "coarse"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class MinInstance:
    """One minimization problem: matrix, length n, stability index and variant."""

    a: IntMatrix
    n: int
    alpha: float = 1.0
    variant: Variant = Variant.FULL_SUM
    degeneracy: RatMatrix | None = None

    def __post_init__(self) -> None:
        if not 0 < self.alpha <= 1:
            raise PreconditionError(f"alpha must lie in (0, 1], got {self.alpha}")
        minimum_n = 0 if self.variant is Variant.COARSE else 1
        if self.n < minimum_n:
            raise PreconditionError(f"n must be >= {minimum_n} for {self.variant}, got {self.n}")
        if (self.variant is Variant.DEGENERATE) != (self.degeneracy is not None):
            raise PreconditionError(
                "A degeneracy matrix is required exactly for the degenerate variant"
            )
        require_unimodular(self.a)


@dataclass(frozen=True)
class MinResult:
    """Minimum value with its minimizer and certification metadata.

    value is an int (α = 1, full or coarse), a Fraction (α = 1, degenerate)
    or a float (α < 1).
    """

    value: Number | float
    argmin: tuple[int, ...]
    certified: bool
    search_radius: float
    nodes_visited: int
    infimum_zero: bool = False


@dataclass
class MinCurve:
    """Certified minima n -> M(n) for one matrix, α and variant."""

    alpha: float
    variant: Variant
    entries: dict[int, MinResult] = field(default_factory=dict)

    def ns(self) -> list[int]:
        """Sorted lengths n."""
        return sorted(self.entries)

    def values(self) -> list[float]:
        """M(n) as floats in order of n."""
        return [float(self.entries[n].value) for n in self.ns()]

    def to_rows(self) -> list[dict[str, str | int | float | bool]]:
        """CSV rows: n, value, argmin (space separated), certified, nodes."""
        return [
            {
                "n": n,
                "value": str(self.entries[n].value),
                "argmin": " ".join(str(x) for x in self.entries[n].argmin),
                "certified": self.entries[n].certified,
                "nodes": self.entries[n].nodes_visited,
            }
            for n in self.ns()
        ]

    def to_csv(self, path: Path) -> None:
        """Write the curve as CSV."""
        write_csv(path, ["n", "value", "argmin", "certified", "nodes"], self.to_rows())

    @classmethod
    def from_csv(cls, path: Path, alpha: float, variant: Variant = Variant.FULL_SUM) -> "MinCurve":
        """Read a curve written by to_csv."""
        curve = cls(alpha=alpha, variant=variant)
        for row in read_csv(path):
            text = row["value"]
            value: Number | float
            if "." in text or "e" in text or "inf" in text:
                value = float(text)
            else:
                fraction = Fraction(text)
                value = fraction.numerator if fraction.denominator == 1 else fraction
            curve.entries[int(row["n"])] = MinResult(
                value=value,
                argmin=tuple(int(x) for x in row["argmin"].split()),
                certified=row["certified"] == "True",
                search_radius=math.nan,
                nodes_visited=int(row["nodes"]),
            )
        return curve


def canonical_sign(k: tuple[int, ...]) -> tuple[int, ...]:
    """Flip k so its first nonzero component is positive."""
    for x in k:
        if x:
            return k if x > 0 else tuple(-y for y in k)
    return k


def _precedes(
    value: Number | float, k: tuple[int, ...], best_value: Number | float, best_k: tuple[int, ...]
) -> bool:
    if isinstance(value, float) or isinstance(best_value, float):
        scale = max(abs(float(value)), abs(float(best_value)))
        if abs(float(value) - float(best_value)) > TIE_TOLERANCE * scale:
            return value < best_value
    elif value != best_value:
        return value < best_value
    return (sum(x * x for x in k), k) < (sum(x * x for x in best_k), best_k)


class _Best:
    """Running minimum with deterministic tie-breaking on (value, |k|², k)."""

    def __init__(self) -> None:
        self.value: Number | float | None = None
        self.k: tuple[int, ...] = ()

    def offer(self, k: tuple[int, ...], value: Number | float) -> None:
        k = canonical_sign(k)
        if self.value is None or _precedes(value, k, self.value, self.k):
            self.value, self.k = value, k


def _alpha_sum(squares: list[Number], alpha: float) -> Number | float:
    if alpha == 1.0:
        return sum(squares)
    exponent = _MP.mpf(alpha)
    powers = []
    for s in squares:
        if s:
            exact = Fraction(s)
            powers.append(_MP.power(_MP.mpf(exact.numerator) / exact.denominator, exponent))
    return float(_MP.fsum(powers))


def _squared(v: tuple[Number, ...]) -> Number:
    return sum(x * x for x in v)


def objective_terms(inst: MinInstance, k: tuple[int, ...]) -> list[Number]:
    """Exact squared lengths |·|² whose α-powers make up the objective at k."""
    a = inst.a
    if inst.variant is Variant.COARSE:
        return [_squared(k), _squared(mat_pow(a, inst.n).matvec(k))]
    terms = []
    image: tuple[Number, ...] = k
    for _ in range(inst.n):
        image = a.matvec(image)
        if inst.degeneracy is not None:
            terms.append(_squared(inst.degeneracy.matvec(image)))
        else:
            terms.append(_squared(image))
    return terms


def objective(inst: MinInstance, k: tuple[int, ...]) -> Number | float:
    """
    Objective value at an integer vector k.

    Exact (int or Fraction) when α = 1; high-precision float otherwise.
    """
    return _alpha_sum(objective_terms(inst, k), inst.alpha)


def _dot(u: tuple[int, ...], v: tuple[Number, ...]) -> Number:
    return sum(x * y for x, y in zip(u, v, strict=True))


@dataclass(frozen=True)
class InvariantLattice:
    """Integer points Z^d ∩ V of a rational A-invariant subspace V.

    basis is a Z-basis of the points, action the integer matrix of A in
    that basis (A·b_j = Σ_i action[i][j]·b_i) and metric the Gram matrix
    b_i·b_j, so |A^l Σ y_j b_j|² = yᵀ (action^l)ᵀ·metric·action^l y.
    """

    basis: tuple[tuple[int, ...], ...]
    action: IntMatrix
    metric: IntMatrix

    @classmethod
    def kernel(cls, a: IntMatrix, poly: IntPolynomial) -> "InvariantLattice":
        """Lattice of integer vectors in ker p(A)."""
        basis = tuple(rational_kernel(poly.evaluate_matrix(a)))
        if not basis:
            raise PreconditionError(f"p(A) is nonsingular for p = {poly}")
        metric = IntMatrix(tuple(tuple(_dot(u, v) for v in basis) for u in basis))
        images = [a.matvec(b) for b in basis]
        cross = IntMatrix(tuple(tuple(_dot(u, image) for image in images) for u in basis))
        det = int(metric.det())
        action = []
        for row in (adjugate(metric) @ cross).rows:
            entries = []
            for x in row:
                q, r = divmod(int(x), det)
                if r:
                    raise ComputationError(f"A does not preserve the lattice ker {poly}(A)")
                entries.append(q)
            action.append(tuple(entries))
        return cls(basis=basis, action=IntMatrix(tuple(action)), metric=metric)

    @property
    def rank(self) -> int:
        """Number of basis vectors."""
        return len(self.basis)

    def lift(self, coeffs: tuple[int, ...]) -> tuple[int, ...]:
        """The vector Σ coeffs_j·b_j of Z^d."""
        return tuple(
            sum(c * b[j] for c, b in zip(coeffs, self.basis, strict=True))
            for j in range(len(self.basis[0]))
        )

    def form(self, n: int) -> ExactMatrix:
        """Full-sum quadratic form Σ_{l=1..n} |A^l ·|² on this lattice."""
        return weighted_gram_form(self.action, n, self.metric)


@dataclass(frozen=True)
class InvariantSplit:
    """Q^d = ker p_0(A) ⊕ ker p_1(A), p_0 the cyclotomic part of det(xI - A).

    A has zero entropy on the first lattice and only non-cyclotomic factors
    on the second. For k outside ker p_0(A), w = p_0(A)·k is a nonzero point
    of the second lattice and |A^l w| <= spread^{1/2}·|A^l k|, where spread is
    the squared Frobenius norm of p_0(A).
    """

    zero_entropy: InvariantLattice
    expanding: InvariantLattice
    spread: int


def invariant_split(a: IntMatrix) -> InvariantSplit | None:
    """
    Split Z^d along the cyclotomic and non-cyclotomic factors of det(xI - A).

    Returns:
        The split, or None when either part is trivial (A ergodic or zero-entropy)
    """
    cyclotomic = IntPolynomial((1,))
    rest = IntPolynomial((1,))
    for poly, multiplicity in factor_over_q(char_poly(a)):
        if cyclotomic_order(poly) is not None:
            cyclotomic = cyclotomic * poly**multiplicity
        else:
            rest = rest * poly**multiplicity
    if cyclotomic.degree == 0 or rest.degree == 0:
        return None
    projector = cyclotomic.evaluate_matrix(a)
    return InvariantSplit(
        zero_entropy=InvariantLattice.kernel(a, cyclotomic),
        expanding=InvariantLattice.kernel(a, rest),
        spread=int(sum(x * x for row in projector.rows for x in row)),
    )


def _identity_lift(coeffs: tuple[int, ...]) -> tuple[int, ...]:
    return coeffs


class MinSolver:
    """Memoized certified solver for one (matrix, α, variant, degeneracy).

    Thread-safe: the memo table is guarded by a lock and computations for
    different n may run concurrently.
    """

    def __init__(
        self,
        a: IntMatrix,
        alpha: float,
        variant: Variant,
        degeneracy: RatMatrix | None,
        node_budget: int,
    ) -> None:
        self.a = a
        self.alpha = alpha
        self.variant = variant
        self.degeneracy = degeneracy
        self.node_budget = node_budget
        self._memo: dict[int, MinResult] = {}
        self._floors: dict[int, Fraction] = {}
        self._lock = threading.Lock()
        self._analysis: DegeneracyAnalysis | None = None
        self._split: InvariantSplit | None = None
        self._split_ready = False

    def instance(self, n: int) -> MinInstance:
        """MinInstance for length n."""
        return MinInstance(self.a, n, self.alpha, self.variant, self.degeneracy)

    @property
    def analysis(self) -> DegeneracyAnalysis | None:
        """Span test for the degenerate variant (None otherwise)."""
        if self.degeneracy is not None and self._analysis is None:
            self._analysis = degeneracy_analysis(self.a, self.degeneracy)
        return self._analysis

    @property
    def split(self) -> InvariantSplit | None:
        """Invariant split of a non-ergodic map with positive entropy (full-sum variant only)."""
        if not self._split_ready:
            if self.variant is Variant.FULL_SUM:
                self._split = invariant_split(self.a)
            self._split_ready = True
        return self._split

    def form(self, n: int) -> ExactMatrix:
        """Quadratic form whose value at k is the α = 1 objective."""
        d = self.a.dim
        if self.variant is Variant.COARSE:
            power = mat_pow(self.a, n)
            return IntMatrix.identity(d) + power.transpose() @ power
        if self.degeneracy is not None:
            weight = self.degeneracy.transpose() @ self.degeneracy
            return weighted_gram_form(self.a, n, weight)
        return weighted_gram_form(self.a, n, IntMatrix.identity(d))

    def minimum(self, n: int) -> MinResult:
        """
        Certified minimum for length n (memoized).

        Raises:
            EnumerationBudgetExceeded: If the node budget runs out
            NotDiagonalizable: For a degenerate B without eigenvector basis
        """
        with self._lock:
            cached = self._memo.get(n)
        if cached is not None:
            return cached
        result = self._compute(n)
        with self._lock:
            return self._memo.setdefault(n, result)

    def _compute(self, n: int) -> MinResult:
        inst = self.instance(n)
        analysis = self.analysis
        if analysis is not None and analysis.case is DegeneracyCase.NO_DISSIPATION:
            return self._search_ball(inst)

        if self.split is not None:
            inner = self._split_minimum(inst, self.split)
            if inner is not None:
                return inner

        form = self.form(n)
        if form.det() == 0:
            # A rational null direction of the form: every term vanishes there
            k = rational_kernel(form)[0]
            return MinResult(
                value=objective(inst, k),
                argmin=k,
                certified=True,
                search_radius=0.0,
                nodes_visited=0,
            )
        return self._lattice_minimum(inst, form, _identity_lift)

    def _expanding_floor(self, split: InvariantSplit, n0: int) -> Fraction:
        with self._lock:
            cached = self._floors.get(n0)
        if cached is not None:
            return cached
        lattice = split.expanding
        rest = self._lattice_minimum(MinInstance(self.a, n0), lattice.form(n0), lattice.lift)
        floor = Fraction(rest.value) / split.spread
        with self._lock:
            return self._floors.setdefault(n0, floor)

    def _split_minimum(self, inst: MinInstance, split: InvariantSplit) -> MinResult | None:
        """
        Minimum over the zero-entropy lattice, once everything else is certified above it.

        For k outside that lattice and n0 <= n, Σ_{l<=n} |A^l k|^{2α} is at
        least (m(n0)/spread)^α with m(n0) the full-sum minimum of length n0
        on the expanding lattice. n0 doubles until that floor beats the
        zero-entropy minimum; None means n is too short and the full form
        is searched instead.
        """
        lattice = split.zero_entropy
        inner = self._lattice_minimum(inst, lattice.form(inst.n), lattice.lift)
        n0 = 1
        while n0 < inst.n:
            floor = self._expanding_floor(split, n0)
            if self.alpha == 1.0:
                above = floor > inner.value
            else:
                power = _MP.power(_MP.mpf(floor.numerator) / floor.denominator, self.alpha)
                above = power > _MP.mpf(float(inner.value)) * (1 + TIE_TOLERANCE)
            if above:
                logger.debug(
                    "Minimum at n=%d lies on the zero-entropy lattice (floor from n0=%d)",
                    inst.n,
                    n0,
                )
                return inner
            n0 *= 2
        return None

    def _lattice_minimum(
        self,
        inst: MinInstance,
        form: ExactMatrix,
        lift: Callable[[tuple[int, ...]], tuple[int, ...]],
    ) -> MinResult:
        """Certified minimum of the objective over lift(Z^r), r the rank of form."""
        reduced = lll_reduce(form)
        quadratic = _Best()
        for row, value in zip(reduced.basis, _diagonal(reduced), strict=True):
            quadratic.offer(lift(row), value)

        found = enumerate_ellipsoid(reduced, reduced.shortest_basis_value(), self.node_budget)
        for y, value in found.vectors:
            quadratic.offer(lift(y), value)
        if not found.complete:
            partial = MinResult(
                value=objective(inst, quadratic.k),
                argmin=quadratic.k,
                certified=False,
                search_radius=found.radius,
                nodes_visited=found.nodes,
            )
            raise EnumerationBudgetExceeded(
                f"Node budget {self.node_budget} exhausted at n={inst.n}", partial=partial
            )

        if inst.alpha == 1.0:
            assert quadratic.value is not None
            return MinResult(
                value=quadratic.value,
                argmin=quadratic.k,
                certified=True,
                search_radius=found.radius,
                nodes_visited=found.nodes,
            )
        return self._refine_alpha(inst, reduced, lift, quadratic.k, found.nodes)

    def _refine_alpha(
        self,
        inst: MinInstance,
        reduced: ReducedForm,
        lift: Callable[[tuple[int, ...]], tuple[int, ...]],
        seed: tuple[int, ...],
        used: int,
    ) -> MinResult:
        best = _Best()
        for k in [seed] + [lift(row) for row in reduced.basis]:
            best.offer(k, objective(inst, k))

        nodes = used
        while True:
            radius = float(best.value or 0) ** (1.0 / inst.alpha)
            if not math.isfinite(radius):
                raise LatticeFailure(f"Search radius overflows at n={inst.n}")
            before = best.value
            found = enumerate_ellipsoid(reduced, radius, max(self.node_budget - nodes, 1))
            nodes += found.nodes
            for y, _ in found.vectors:
                k = lift(y)
                best.offer(k, objective(inst, k))
            result = MinResult(
                value=best.value or 0,
                argmin=best.k,
                certified=found.complete,
                search_radius=found.radius,
                nodes_visited=nodes,
            )
            if found.complete:
                return result
            # A truncated list still narrows the radius while the best value improves
            if nodes > self.node_budget or best.value == before:
                raise EnumerationBudgetExceeded(
                    f"Node budget {self.node_budget} exhausted at n={inst.n}", partial=result
                )

    def _search_ball(self, inst: MinInstance) -> MinResult:
        radius = get_settings().degenerate_search_radius
        best = _Best()
        nodes = 0
        for k in itertools.product(range(-radius, radius + 1), repeat=self.a.dim):
            if any(k) and canonical_sign(k) == k:
                nodes += 1
                best.offer(k, objective(inst, k))
        logger.info(
            "Degenerate noise does not dissipate; ball minimum at n=%d is %s", inst.n, best.value
        )
        return MinResult(
            value=best.value or 0,
            argmin=best.k,
            certified=False,
            search_radius=float(radius),
            nodes_visited=nodes,
            infimum_zero=True,
        )


def _diagonal(reduced: ReducedForm) -> list[Number]:
    return [reduced.gram[i][i] for i in range(reduced.dim)]


@lru_cache(maxsize=128)
def _cached_solver(
    a: IntMatrix,
    alpha: float,
    variant: Variant,
    degeneracy: RatMatrix | None,
    node_budget: int,
) -> MinSolver:
    return MinSolver(a, alpha, variant, degeneracy, node_budget)


def get_solver(
    a: IntMatrix,
    alpha: float = 1.0,
    variant: Variant = Variant.FULL_SUM,
    degeneracy: RatMatrix | None = None,
    node_budget: int | None = None,
) -> MinSolver:
    """Shared memoized solver; dissipation and dynamo scans reuse the same table."""
    budget = node_budget or get_settings().node_budget
    return _cached_solver(a, alpha, variant, degeneracy, budget)


def _solver_for(inst: MinInstance) -> MinSolver:
    return get_solver(inst.a, inst.alpha, inst.variant, inst.degeneracy)


def min_sum(inst: MinInstance) -> MinResult:
    """
    Certified M(n) = min_k Σ_{l=1..n} |A^l k|^{2α}.

    Raises:
        PreconditionError: If the instance is not the full-sum variant
        EnumerationBudgetExceeded: With a partial result when the node budget runs out
    """
    if inst.variant is not Variant.FULL_SUM:
        raise PreconditionError(f"min_sum needs the full_sum variant, got {inst.variant}")
    return _solver_for(inst).minimum(inst.n)


def min_coarse(inst: MinInstance) -> MinResult:
    """Certified coarse-grained minimum of |k|^{2α} + |A^n k|^{2α}."""
    if inst.variant is not Variant.COARSE:
        raise PreconditionError(f"min_coarse needs the coarse variant, got {inst.variant}")
    return _solver_for(inst).minimum(inst.n)


def min_degenerate(inst: MinInstance) -> MinResult:
    """
    Minimum of Σ_{l=1..n} |B A^l k|^{2α}.

    When the noise does not dissipate the infimum is 0 and not attained;
    the result then carries infimum_zero=True and the minimum over a ball.
    """
    if inst.variant is not Variant.DEGENERATE:
        raise PreconditionError(f"min_degenerate needs the degenerate variant, got {inst.variant}")
    return _solver_for(inst).minimum(inst.n)


def solve(inst: MinInstance) -> MinResult:
    """Dispatch to the solver for the instance's variant."""
    return _solver_for(inst).minimum(inst.n)


def _exact_images(vectors: np.ndarray, matrix: ExactMatrix, radius: int) -> np.ndarray:
    bound = float(matrix.max_abs()) * radius * matrix.dim
    if bound < 2.0**62 and isinstance(matrix, IntMatrix):
        return vectors @ np.array(matrix.rows, dtype=np.int64).T
    return vectors.astype(object) @ np.array(matrix.rows, dtype=object).T


def brute_force_oracle(inst: MinInstance, radius: int) -> MinResult:
    """
    Exhaustive minimum over all nonzero k with |k|∞ <= R.

    Images are formed exactly (int64 when it cannot overflow, Python ints
    otherwise); the float objective only preselects near-minimal vectors,
    which are then re-evaluated exactly.

    Args:
        inst: Problem instance
        radius: Max-norm radius R

    Returns:
        MinResult with certified=False

    Raises:
        PreconditionError: If R exceeds the configured cap for this dimension
    """
    settings = get_settings()
    d = inst.a.dim
    cap = settings.oracle_radius_cap if d <= 3 else settings.oracle_radius_cap_high_dim
    if not 1 <= radius <= cap:
        raise PreconditionError(f"Oracle radius must lie in [1, {cap}] in dimension {d}")

    grid = np.array(list(itertools.product(range(-radius, radius + 1), repeat=d)), dtype=np.int64)
    first = grid[np.arange(len(grid)), np.argmax(grid != 0, axis=1)]
    vectors = grid[first > 0]

    if inst.variant is Variant.COARSE:
        matrices: list[ExactMatrix] = [IntMatrix.identity(d), mat_pow(inst.a, inst.n)]
    else:
        matrices = [mat_pow(inst.a, l) for l in range(1, inst.n + 1)]
    b = inst.degeneracy.to_numpy() if inst.degeneracy is not None else None

    values = np.zeros(len(vectors))
    for matrix in matrices:
        images = np.array(_exact_images(vectors, matrix, radius), dtype=float)
        if b is not None:
            images = images @ b.T
        squares = np.sum(images * images, axis=1)
        values += squares if inst.alpha == 1.0 else squares**inst.alpha

    threshold = values.min() * (1 + 1e-9) + 1e-12
    best = _Best()
    for k in vectors[values <= threshold]:
        candidate = tuple(int(x) for x in k)
        best.offer(candidate, objective(inst, candidate))
    return MinResult(
        value=best.value or 0,
        argmin=best.k,
        certified=False,
        search_radius=float(radius),
        nodes_visited=len(vectors),
    )


def min_curve(
    a: IntMatrix,
    n_max: int,
    alpha: float = 1.0,
    variant: Variant = Variant.FULL_SUM,
    degeneracy: RatMatrix | None = None,
    n_min: int = 1,
    threads: int | None = None,
) -> MinCurve:
    """
    Build the MinCurve n -> M(n) for n_min..n_max concurrently.

    Args:
        a: Fourier-side matrix
        n_max: Largest length
        alpha: Stability index
        variant: Minimization variant
        degeneracy: B for the degenerate variant
        n_min: Smallest length
        threads: Worker count (defaults to TORUSLAB_THREADS)

    Returns:
        MinCurve with one MinResult per n
    """
    solver = get_solver(a, alpha, variant, degeneracy)
    ns = list(range(n_min, n_max + 1))
    workers = threads or get_settings().threads
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(solver.minimum, ns))
    return MinCurve(alpha=alpha, variant=variant, entries=dict(zip(ns, results, strict=True)))


def growth_rate_fit(curve: MinCurve) -> float:
    """
    Empirical dimensionally averaged entropy from the growth of M(n).

    Fits ln M(n) against n over the last half of the curve and returns
    slope / (2α).

    Raises:
        InsufficientData: With fewer than 6 certified positive entries
    """
    ns = [n for n in curve.ns() if curve.entries[n].certified and curve.entries[n].value > 0]
    if len(ns) < 6:
        raise InsufficientData(f"Growth fit needs 6 certified entries, got {len(ns)}")
    tail = ns[len(ns) // 2 :]
    logs = [math.log(curve.entries[n].value) for n in tail]
    slope = float(np.polyfit(tail, logs, 1)[0])
    return slope / (2.0 * curve.alpha)


def has_linear_growth(curve: MinCurve, tolerance: float = 0.25) -> bool:
    """True when M(n) grows like n (log-log slope near 1 over the last half)."""
    ns = [n for n in curve.ns() if curve.entries[n].value > 0]
    if len(ns) < 4:
        raise InsufficientData(f"Growth classification needs 4 entries, got {len(ns)}")
    tail = ns[len(ns) // 2 :]
    slope = float(
        np.polyfit(np.log(tail), [math.log(curve.entries[n].value) for n in tail], 1)[0]
    )
    return abs(slope - 1.0) <= tolerance


def mean_minimum(a: IntMatrix, alpha: float, n: int) -> float:
    """
    Estimate lim M(n)/n with one Richardson step: 2·M(2N)/(2N) - M(N)/N.

    Exact for curves of the form c·n + b.
    """
    solver = get_solver(a, alpha)
    single = float(solver.minimum(n).value) / n
    double = float(solver.minimum(2 * n).value) / (2 * n)
    return 2.0 * double - single


def random_unimodular(d: int, word_length: int, rng: np.random.Generator) -> IntMatrix:
    """
    Random element of SL(d, Z) as a word in elementary matrices I ± E_ij.

    Args:
        d: Dimension (>= 2)
        word_length: Number of elementary factors
        rng: numpy random generator

    Returns:
        IntMatrix with determinant 1
    """
    rows = [[int(i == j) for j in range(d)] for i in range(d)]
    for _ in range(word_length):
        i, j = (int(x) for x in rng.choice(d, size=2, replace=False))
        sign = 1 if rng.random() < 0.5 else -1
        # Row operation r_i += sign * r_j
        rows[i] = [x + sign * y for x, y in zip(rows[i], rows[j], strict=True)]
    return IntMatrix(tuple(tuple(r) for r in rows))
