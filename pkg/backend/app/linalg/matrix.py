"""Exact integer and rational matrices.

Entries are Python ints or fractions.Fraction, so powers of hyperbolic
matrices never overflow. Every value is immutable; every function is pure.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Any, TypeVar

import numpy as np

from app.errors import ParseError, PreconditionError

Number = int | Fraction
Vector = tuple[Number, ...]

# Entries above this many bits are scaled by a power of two before going to float64
_FLOAT_SAFE_BITS = 60


class MatrixParseError(ParseError):
    """Raised when matrix or vector text cannot be parsed."""

    pass


class NonUnimodular(PreconditionError):
    """Raised when an operation needs |det| = 1 and the matrix does not have it."""

    pass


M = TypeVar("M", bound="ExactMatrix")


def _exact_div(a: Number, b: Number) -> Number:
    if isinstance(a, int) and isinstance(b, int):
        q, r = divmod(a, b)
        if r:
            raise ArithmeticError(f"{a} is not divisible by {b}")
        return q
    return Fraction(a) / b


@dataclass(frozen=True)
class ExactMatrix:
    """Square matrix with exact entries, stored as a tuple of row tuples."""

    rows: tuple[tuple[Number, ...], ...]

    def __post_init__(self) -> None:
        rows = tuple(tuple(self._coerce(x) for x in row) for row in self.rows)
        if not rows:
            raise MatrixParseError("Matrix must have at least one row")
        if any(len(row) != len(rows) for row in rows):
            lengths = ", ".join(str(len(row)) for row in rows)
            raise MatrixParseError(
                f"Matrix must be square, got {len(rows)} rows of lengths {lengths}"
            )
        object.__setattr__(self, "rows", rows)

    @staticmethod
    def _coerce(value: Any) -> Number:
        raise NotImplementedError

    @classmethod
    def from_text(cls: type[M], text: str) -> M:
        """
        Parse the matrix text format: rows separated by ';', entries by ','.

        Args:
            text: Matrix text, e.g. "2,1;1,1" or "1/2,0;0,2"

        Returns:
            Parsed matrix

        Raises:
            MatrixParseError: If the text is empty, ragged or has bad entries
        """
        if not text or not text.strip():
            raise MatrixParseError("Empty matrix text")
        rows = []
        for row_text in text.strip().strip(";").split(";"):
            entries = [e.strip() for e in row_text.split(",")]
            if any(not e for e in entries):
                raise MatrixParseError(f"Empty entry in matrix row {row_text!r}")
            rows.append(tuple(_parse_entry(e) for e in entries))
        return cls(tuple(rows))

    @classmethod
    def identity(cls: type[M], d: int) -> M:
        """Return the d×d identity."""
        return cls(tuple(tuple(int(i == j) for j in range(d)) for i in range(d)))

    @classmethod
    def zeros(cls: type[M], d: int) -> M:
        """Return the d×d zero matrix."""
        return cls(tuple((0,) * d for _ in range(d)))

    @property
    def dim(self) -> int:
        """Dimension d of the square matrix."""
        return len(self.rows)

    def __getitem__(self, index: tuple[int, int]) -> Number:
        i, j = index
        return self.rows[i][j]

    def __str__(self) -> str:
        return self.to_text()

    def to_text(self) -> str:
        """Format in the same text format `from_text` reads."""
        return ";".join(",".join(str(x) for x in row) for row in self.rows)

    def to_list(self) -> list[list[str | int]]:
        """Nested lists for JSON (fractions as "p/q" strings)."""
        return [[x if isinstance(x, int) else str(x) for x in row] for row in self.rows]

    def _like(self, other: "ExactMatrix", rows: Any) -> "ExactMatrix":
        if isinstance(self, IntMatrix) and isinstance(other, IntMatrix):
            return IntMatrix(rows)
        return RatMatrix(rows)

    def __matmul__(self, other: "ExactMatrix") -> "ExactMatrix":
        if not isinstance(other, ExactMatrix):
            return NotImplemented
        if other.dim != self.dim:
            raise ValueError(f"Dimension mismatch: {self.dim} vs {other.dim}")
        cols = list(zip(*other.rows, strict=True))
        rows = tuple(
            tuple(sum(a * b for a, b in zip(row, col, strict=True)) for col in cols)
            for row in self.rows
        )
        return self._like(other, rows)

    def __add__(self, other: "ExactMatrix") -> "ExactMatrix":
        if not isinstance(other, ExactMatrix):
            return NotImplemented
        rows = tuple(
            tuple(a + b for a, b in zip(r, s, strict=True))
            for r, s in zip(self.rows, other.rows, strict=True)
        )
        return self._like(other, rows)

    def __sub__(self, other: "ExactMatrix") -> "ExactMatrix":
        if not isinstance(other, ExactMatrix):
            return NotImplemented
        rows = tuple(
            tuple(a - b for a, b in zip(r, s, strict=True))
            for r, s in zip(self.rows, other.rows, strict=True)
        )
        return self._like(other, rows)

    def __neg__(self: M) -> M:
        return type(self)(tuple(tuple(-x for x in row) for row in self.rows))

    def scaled(self, factor: Number) -> "ExactMatrix":
        """Multiply every entry by an exact scalar."""
        rows = tuple(tuple(factor * x for x in row) for row in self.rows)
        if isinstance(self, IntMatrix) and isinstance(factor, int):
            return IntMatrix(rows)
        return RatMatrix(rows)

    def transpose(self: M) -> M:
        """Exact transpose."""
        return type(self)(tuple(zip(*self.rows, strict=True)))

    def trace(self) -> Number:
        """Sum of the diagonal."""
        return sum(self.rows[i][i] for i in range(self.dim))

    def matvec(self, vector: Vector) -> Vector:
        """Exact product M·v."""
        return tuple(sum(a * b for a, b in zip(row, vector, strict=True)) for row in self.rows)

    def quadratic_form(self, vector: Vector) -> Number:
        """Exact value vᵀ·M·v."""
        return sum(v * w for v, w in zip(vector, self.matvec(vector), strict=True))

    def det(self) -> Number:
        """
        Exact determinant by Bareiss fraction-free elimination.

        Returns:
            det(M), an int for integer matrices
        """
        n = self.dim
        m = [list(row) for row in self.rows]
        sign = 1
        prev: Number = 1
        for k in range(n - 1):
            if m[k][k] == 0:
                pivot = next((i for i in range(k + 1, n) if m[i][k] != 0), None)
                if pivot is None:
                    return 0
                m[k], m[pivot] = m[pivot], m[k]
                sign = -sign
            for i in range(k + 1, n):
                for j in range(k + 1, n):
                    m[i][j] = _exact_div(m[i][j] * m[k][k] - m[i][k] * m[k][j], prev)
            prev = m[k][k]
        return sign * m[n - 1][n - 1]

    def is_unimodular(self) -> bool:
        """True iff |det| = 1."""
        return abs(self.det()) == 1

    def max_abs(self) -> Number:
        """Largest absolute entry."""
        return max(abs(x) for row in self.rows for x in row)

    def to_numpy(self, scale_bits: int = 0) -> np.ndarray:
        """
        Convert to float64, dividing every entry by 2**scale_bits first.

        The division happens on the exact value, so huge entries convert
        without overflow as long as the scaled value fits.
        """
        scale = 1 << scale_bits
        return np.array(
            [[float(Fraction(x) / scale) for x in row] for row in self.rows], dtype=float
        )

    def to_rational(self) -> "RatMatrix":
        """View with Fraction entries."""
        return RatMatrix(self.rows)


@dataclass(frozen=True)
class IntMatrix(ExactMatrix):
    """Square matrix of arbitrary-precision integers."""

    @staticmethod
    def _coerce(value: Any) -> Number:
        if isinstance(value, bool):
            raise MatrixParseError(f"Matrix entries must be integers, got {value!r}")
        if isinstance(value, int):
            return value
        if isinstance(value, Fraction | np.integer):
            if value == int(value):
                return int(value)
        raise MatrixParseError(f"Matrix entries must be integers, got {value!r}")

    def is_identity(self) -> bool:
        """True iff this is the identity."""
        return self == IntMatrix.identity(self.dim)


@dataclass(frozen=True)
class RatMatrix(ExactMatrix):
    """Square matrix of rationals in canonical reduced form.

    Float inputs are converted exactly (every float is a dyadic rational).
    """

    @staticmethod
    def _coerce(value: Any) -> Number:
        if isinstance(value, bool):
            raise MatrixParseError(f"Matrix entries must be numbers, got {value!r}")
        try:
            if isinstance(value, np.floating):
                value = float(value)
            return Fraction(value)
        except (TypeError, ValueError) as e:
            raise MatrixParseError(f"Matrix entries must be rational, got {value!r}") from e

    @classmethod
    def from_array(cls, array: Any) -> "RatMatrix":
        """Exact rational copy of a real numpy array (or nested list)."""
        arr = np.asarray(array, dtype=float)
        return cls(tuple(tuple(Fraction(float(x)) for x in row) for row in arr))


def _parse_entry(text: str) -> Number:
    try:
        value = Fraction(text)
    except (ValueError, ZeroDivisionError) as e:
        raise MatrixParseError(f"Invalid matrix entry {text!r}") from e
    return value.numerator if value.denominator == 1 else value


def parse_matrix(text: str) -> IntMatrix:
    """
    Parse an integer matrix.

    Args:
        text: Matrix text, e.g. "2,1;1,1"

    Returns:
        Parsed IntMatrix

    Raises:
        MatrixParseError: On malformed text or non-integer entries
    """
    return IntMatrix.from_text(text)


def parse_vector(text: str) -> tuple[Fraction, ...]:
    """
    Parse a comma-separated rational vector such as "1/2,1/3" or "0.5,0".

    Raises:
        MatrixParseError: If an entry is not an exact rational literal
    """
    if not text or not text.strip():
        raise MatrixParseError("Empty vector text")
    try:
        return tuple(Fraction(e.strip()) for e in text.split(","))
    except (ValueError, ZeroDivisionError) as e:
        raise MatrixParseError(f"Invalid rational vector {text!r}") from e


def block_diag(*blocks: IntMatrix) -> IntMatrix:
    """Block-diagonal matrix with the given square blocks in order."""
    d = sum(b.dim for b in blocks)
    rows = [[0] * d for _ in range(d)]
    offset = 0
    for block in blocks:
        for i, row in enumerate(block.rows):
            for j, x in enumerate(row):
                rows[offset + i][offset + j] = int(x)
        offset += block.dim
    return IntMatrix(tuple(tuple(r) for r in rows))


def faddeev_leverrier(a: IntMatrix) -> tuple[tuple[int, ...], IntMatrix]:
    """
    Fraction-free Faddeev–LeVerrier recurrence.

    With M_0 = 0 and c_d = 1, iterate M_k = A·M_{k-1} + c_{d-k+1}·I and
    c_{d-k} = -tr(A·M_k)/k; every division is exact over the integers.

    Args:
        a: Integer matrix

    Returns:
        (ascending coefficients of det(xI - A), final M_d)
    """
    d = a.dim
    coeffs = [0] * (d + 1)
    coeffs[d] = 1
    identity = IntMatrix.identity(d)
    m: ExactMatrix = IntMatrix.zeros(d)
    for k in range(1, d + 1):
        m = a @ m + identity.scaled(coeffs[d - k + 1])
        coeffs[d - k] = int(_exact_div(-(a @ m).trace(), k))
    return tuple(coeffs), IntMatrix(m.rows)


def adjugate(a: IntMatrix) -> IntMatrix:
    """Exact adjugate, adj(A)·A = det(A)·I."""
    _, m = faddeev_leverrier(a)
    sign = 1 if a.dim % 2 == 1 else -1
    return IntMatrix(m.scaled(sign).rows)


def inverse(a: IntMatrix) -> IntMatrix:
    """
    Exact inverse of a unimodular matrix.

    Raises:
        NonUnimodular: If |det A| != 1
    """
    det = a.det()
    if abs(det) != 1:
        raise NonUnimodular(f"Matrix {a} has determinant {det}, inverse is not integral")
    return IntMatrix(adjugate(a).scaled(det).rows)


def require_unimodular(a: IntMatrix) -> IntMatrix:
    """Return `a` unchanged, or raise NonUnimodular."""
    det = a.det()
    if abs(det) != 1:
        raise NonUnimodular(
            f"Matrix {a} has determinant {det}; a toral automorphism needs |det| = 1"
        )
    return a


def mat_pow(a: IntMatrix, power: int) -> IntMatrix:
    """
    Exact integer power A^l, including negative l.

    Args:
        a: Integer matrix
        power: Any integer; A^0 is the identity

    Returns:
        A^power

    Raises:
        NonUnimodular: If power < 0 and |det A| != 1
    """
    if power < 0:
        a = inverse(a)
        power = -power
    result: ExactMatrix = IntMatrix.identity(a.dim)
    base: ExactMatrix = a
    while power:
        if power & 1:
            result = result @ base
        power >>= 1
        if power:
            base = base @ base
    return IntMatrix(result.rows)


def weighted_gram_form(a: ExactMatrix, n: int, weight: ExactMatrix) -> ExactMatrix:
    """
    Exact S(n) = Σ_{l=1..n} (A^l)ᵀ·W·A^l by binary doubling.

    Uses S(2m) = S(m) + (A^m)ᵀ·S(m)·A^m and S(m+1) = S(m) + (A^{m+1})ᵀ·W·A^{m+1},
    so only O(log n) matrix products are formed.

    Args:
        a: Square matrix A
        n: Number of terms, n >= 0
        weight: Symmetric weight W

    Returns:
        S(n), zero when n = 0
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    total, _ = _gram_and_power(a, n, weight)
    return total


def _gram_and_power(
    a: ExactMatrix, n: int, weight: ExactMatrix
) -> tuple[ExactMatrix, ExactMatrix]:
    if n == 0:
        return weight.scaled(0), IntMatrix.identity(a.dim)
    if n % 2 == 0:
        half, power = _gram_and_power(a, n // 2, weight)
        return half + power.transpose() @ half @ power, power @ power
    prev, power = _gram_and_power(a, n - 1, weight)
    power = power @ a
    return prev + power.transpose() @ weight @ power, power


def gram_form(a: IntMatrix, n: int) -> IntMatrix:
    """
    Exact quadratic form Q_n = Σ_{l=1..n} (A^l)ᵀ·A^l.

    kᵀ·Q_n·k equals Σ_{l=1..n} |A^l k|² for every integer vector k.

    Args:
        a: Integer matrix
        n: Number of terms, n >= 1

    Returns:
        Symmetric positive-definite IntMatrix (for unimodular A)
    """
    if n < 1:
        raise ValueError("gram_form needs n >= 1")
    return IntMatrix(weighted_gram_form(a, n, IntMatrix.identity(a.dim)).rows)


def float_scale_bits(a: ExactMatrix) -> int:
    """Power of two to divide by so every entry of `a` fits float64 comfortably."""
    bits = max(int(abs(x)).bit_length() for row in a.rows for x in row)
    return max(0, bits - _FLOAT_SAFE_BITS)


def log_operator_two_norm(a: ExactMatrix) -> float:
    """
    Natural log of the largest singular value of an exact matrix.

    The matrix is scaled by a power of two before the float64 SVD, so the
    result stays accurate for entries far beyond the float range.
    """
    shift = float_scale_bits(a)
    norm = float(np.linalg.norm(a.to_numpy(shift), 2))
    if norm == 0.0:
        return -math.inf
    return math.log(norm) + shift * math.log(2.0)


def operator_two_norm(a: ExactMatrix) -> float:
    """
    Largest singular value ‖A‖₂ of an exact matrix.

    Returns:
        The norm as a float (inf if it exceeds the float range)
    """
    shift = float_scale_bits(a)
    norm = float(np.linalg.norm(a.to_numpy(shift), 2))
    try:
        return math.ldexp(norm, shift)
    except OverflowError:
        return math.inf


def primitive_vector(vector: Vector) -> tuple[int, ...]:
    """
    Scale a rational vector to a primitive integer vector with first nonzero entry positive.

    Raises:
        ValueError: If the vector is zero
    """
    fractions = [Fraction(x) for x in vector]
    if not any(fractions):
        raise ValueError("Zero vector has no primitive representative")
    denominator = reduce(math.lcm, (f.denominator for f in fractions), 1)
    ints = [int(f * denominator) for f in fractions]
    g = reduce(math.gcd, ints, 0)
    ints = [x // g for x in ints]
    if next(x for x in ints if x) < 0:
        ints = [-x for x in ints]
    return tuple(ints)


def rational_kernel(a: ExactMatrix) -> list[tuple[int, ...]]:
    """
    Exact basis of the integer kernel lattice {k ∈ Z^d : A·k = 0}.

    Denominators are cleared first, then unimodular integer column
    operations bring A to column echelon form; the transformation columns
    matching zero columns form a Z-basis of the kernel lattice (which also
    spans the rational kernel).

    Args:
        a: Integer or rational square matrix

    Returns:
        Kernel lattice basis as integer tuples (empty if A is nonsingular)
    """
    d = a.dim
    denominator = reduce(math.lcm, (Fraction(x).denominator for row in a.rows for x in row), 1)
    h = [[int(Fraction(x) * denominator) for x in row] for row in a.rows]
    u = [[int(i == j) for j in range(d)] for i in range(d)]

    def swap(p: int, q: int) -> None:
        for mat in (h, u):
            for row in mat:
                row[p], row[q] = row[q], row[p]

    def subtract(target: int, source: int, q: int) -> None:
        for mat in (h, u):
            for row in mat:
                row[target] -= q * row[source]

    col = 0
    for r in range(d):
        if col == d:
            break
        while True:
            nonzero = [j for j in range(col, d) if h[r][j] != 0]
            if not nonzero:
                break
            pivot = min(nonzero, key=lambda j: abs(h[r][j]))
            if pivot != col:
                swap(pivot, col)
            done = True
            for j in range(col + 1, d):
                if h[r][j]:
                    subtract(j, col, h[r][j] // h[r][col])
                    done = done and h[r][j] == 0
            if done:
                break
        if h[r][col] != 0:
            col += 1

    basis = []
    for j in range(col, d):
        column = tuple(u[i][j] for i in range(d))
        if any(column):
            basis.append(primitive_vector(column))
    return basis
