"""Lattice reduction and enumeration for positive-definite quadratic forms.

The form Q is exact (int or Fraction entries). It is scaled to an integer
Gram matrix and handed to fpylll: LLL runs on the Gram matrix with an mpfr
Gram–Schmidt whose precision follows the entry size, and the Schnorr–Euchner
enumeration returns coefficient vectors that are re-evaluated exactly here.
The radius gets a small relative slack, so floating-point error can only
add candidates.
"""

import logging
import math
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Any

import sympy
from fpylll import GSO, LLL, Enumeration, EnumerationError, EvaluatorStrategy, IntegerMatrix
from fpylll.util import precision as fplll_precision

from app.errors import ComputationError
from app.linalg.matrix import ExactMatrix, Number

logger = logging.getLogger(__name__)

LLL_DELTA = 0.99

# Relative slack added to every enumeration radius
RADIUS_SLACK = Fraction(1, 10**9)

# Most vectors one enumeration call may return before it counts as truncated
MAX_SOLUTIONS = 4096

# mpfr precision is process-wide in fplll
_FPLLL_LOCK = threading.Lock()


class LatticeFailure(ComputationError):
    """Raised when fpylll cannot reduce or enumerate a form."""

    pass


@dataclass(frozen=True)
class ReducedForm:
    """LLL-reduced basis of a quadratic form, its exact Gram matrix and the fpylll GSO."""

    basis: tuple[tuple[int, ...], ...]
    gram: tuple[tuple[Number, ...], ...]
    scale: int
    precision: int
    gso: Any = field(repr=False, compare=False)

    @property
    def dim(self) -> int:
        """Lattice dimension."""
        return len(self.basis)

    def value(self, coeffs: tuple[int, ...]) -> Number:
        """Exact form value of the lattice vector with these basis coefficients."""
        d = self.dim
        return sum(
            coeffs[i] * coeffs[j] * self.gram[i][j]
            for i in range(d)
            if coeffs[i]
            for j in range(d)
            if coeffs[j]
        )

    def to_original(self, coeffs: tuple[int, ...]) -> tuple[int, ...]:
        """Integer vector Σ coeffs_i · basis_i in the original coordinates."""
        return tuple(
            sum(c * row[j] for c, row in zip(coeffs, self.basis, strict=True))
            for j in range(self.dim)
        )

    def shortest_basis_value(self) -> Number:
        """Smallest diagonal Gram entry (an upper bound for the minimum)."""
        return min(self.gram[i][i] for i in range(self.dim))


@dataclass
class EnumerationResult:
    """Lattice vectors found inside the radius, with their exact form values."""

    vectors: list[tuple[tuple[int, ...], Number]]
    nodes: int
    complete: bool
    radius: float


def _gram(basis: list[list[int]], form: ExactMatrix) -> list[list[Number]]:
    images = [form.matvec(tuple(b)) for b in basis]
    return [[sum(x * y for x, y in zip(b, img, strict=True)) for img in images] for b in basis]


def _integer_gram(form: ExactMatrix) -> tuple[list[list[int]], int]:
    scale = reduce(math.lcm, (Fraction(x).denominator for row in form.rows for x in row), 1)
    return [[int(Fraction(x) * scale) for x in row] for row in form.rows], scale


def _precision_for(rows: list[list[int]]) -> int:
    bits = max(abs(x).bit_length() for row in rows for x in row)
    return max(53, 2 * bits + 64)


def lll_reduce(form: ExactMatrix, delta: float = LLL_DELTA) -> ReducedForm:
    """
    LLL-reduce the standard basis of Z^d with respect to the form Q.

    Args:
        form: Symmetric positive-definite exact matrix Q
        delta: Lovász parameter in (1/4, 1)

    Returns:
        ReducedForm with the reduced basis and its exact Gram matrix

    Raises:
        ValueError: If Q is not positive definite
        LatticeFailure: If fpylll rejects the Gram matrix
    """
    d = form.dim
    rows, scale = _integer_gram(form)
    if not sympy.Matrix(rows).is_positive_definite:
        raise ValueError("Quadratic form is not positive definite")
    prec = _precision_for(rows)
    transform = IntegerMatrix.identity(d)
    with _FPLLL_LOCK, fplll_precision(prec):
        try:
            gram = IntegerMatrix.from_matrix(rows)
            gso = GSO.Mat(gram, U=transform, float_type="mpfr", gram=True)
            gso.update_gso()
            LLL.Reduction(gso, delta=delta)()
        except (RuntimeError, ValueError) as e:
            raise LatticeFailure(f"LLL failed on a {d}x{d} Gram matrix: {e}") from e

    basis = [[int(transform[i, j]) for j in range(d)] for i in range(d)]
    logger.debug("LLL finished in dimension %d at %d bits of precision", d, prec)
    return ReducedForm(
        basis=tuple(tuple(b) for b in basis),
        gram=tuple(tuple(row) for row in _gram(basis, form)),
        scale=scale,
        precision=prec,
        gso=gso,
    )


def _mantissa_exponent(value: Fraction) -> tuple[float, int]:
    if value <= 0:
        return 0.0, 0
    exponent = value.numerator.bit_length() - value.denominator.bit_length()
    return float(value / Fraction(2) ** exponent), exponent


def _as_float(value: Fraction) -> float:
    try:
        return float(value)
    except OverflowError:
        return math.inf


def _node_count(enum: Any) -> int:
    nodes = enum.get_nodes()
    if isinstance(nodes, tuple | list):
        return int(sum(nodes))
    return int(nodes)


def enumerate_ellipsoid(
    reduced: ReducedForm,
    radius: Number | float,
    node_budget: int,
    max_solutions: int = MAX_SOLUTIONS,
) -> EnumerationResult:
    """
    Nonzero lattice vectors k (one of ±k) with kᵀQk <= radius.

    fpylll keeps the best max_solutions vectors; when it fills up, or the
    tree grows past node_budget, the result is marked incomplete.

    Args:
        reduced: Output of lll_reduce
        radius: Squared radius (exact or float)
        node_budget: Largest enumeration tree that still counts as complete
        max_solutions: Cap on returned vectors

    Returns:
        EnumerationResult with vectors in original coordinates and exact values
    """
    d = reduced.dim
    limit = Fraction(radius) * (1 + RADIUS_SLACK)
    mantissa, exponent = _mantissa_exponent(limit * reduced.scale)
    with _FPLLL_LOCK, fplll_precision(reduced.precision):
        enum = Enumeration(
            reduced.gso,
            nr_solutions=max_solutions,
            strategy=EvaluatorStrategy.BEST_N_SOLUTIONS,
        )
        try:
            solutions = enum.enumerate(0, d, mantissa, exponent)
        except EnumerationError:
            solutions = []
        nodes = _node_count(enum)

    vectors = []
    seen: set[tuple[int, ...]] = set()
    for _, raw in solutions:
        coeffs = tuple(int(round(c)) for c in raw)
        if not any(coeffs):
            continue
        k = reduced.to_original(coeffs)
        key = max(k, tuple(-x for x in k))
        if key in seen:
            continue
        seen.add(key)
        value = reduced.value(coeffs)
        if value <= limit:
            vectors.append((k, value))

    complete = nodes <= node_budget and len(solutions) < max_solutions
    if not complete:
        logger.warning(
            "Enumeration incomplete: %d nodes (budget %d), %d vectors",
            nodes,
            node_budget,
            len(solutions),
        )
    else:
        logger.debug("Enumeration visited %d nodes", nodes)
    return EnumerationResult(
        vectors=vectors, nodes=nodes, complete=complete, radius=_as_float(limit)
    )
