"""Spectral and arithmetic classification of toral maps.

Ergodicity, zero entropy, diagonalizability and irreducibility are decided
exactly from the factorization of the characteristic polynomial over Q.
Eigenvalues and entropies are computed per irreducible factor in high
precision, so multiplicities come from the factorization and never from
clustering floating-point roots.
"""

import logging
import math
from dataclasses import dataclass
from enum import StrEnum
from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np
import sympy

from app.config import get_settings
from app.errors import ComputationError, ParseError, PreconditionError
from app.linalg.matrix import (
    ExactMatrix,
    IntMatrix,
    RatMatrix,
    mat_pow,
    parse_matrix,
    rational_kernel,
    require_unimodular,
)
from app.linalg.polynomial import IntPolynomial, char_poly

logger = logging.getLogger(__name__)

# Eigenvalues this close to the unit circle contribute nothing to the entropy
UNIT_CIRCLE_TOLERANCE = 1e-9

_X = sympy.Symbol("x")


class ConvergenceFailure(ComputationError):
    """Raised when polynomial root refinement does not converge."""

    def __init__(self, message: str, residual: float | None = None) -> None:
        super().__init__(message)
        self.residual = residual


class NotDiagonalizable(PreconditionError):
    """Raised when an eigenvector basis is required but numerically unavailable."""

    pass


class AffineVerdict(StrEnum):
    """Ergodicity verdict for an affine toral map."""

    ERGODIC = "ergodic"
    NONERGODIC = "nonergodic"
    HEURISTIC_ERGODIC = "heuristic_ergodic"


class DegeneracyCase(StrEnum):
    """Whether degenerate noise still dissipates."""

    NO_DISSIPATION = "no_dissipation"
    EFFECTIVE = "effective"


@dataclass(frozen=True)
class ToralMap:
    """Affine toral map x -> F x + c with F unimodular.

    Rational shift entries are sympy Rationals (exact); any other real
    entry (sqrt(2), pi, ...) makes the shift inexact.
    """

    linear: IntMatrix
    shift: tuple[sympy.Expr, ...] | None = None

    def __post_init__(self) -> None:
        require_unimodular(self.linear)
        if self.shift is not None and len(self.shift) != self.linear.dim:
            raise ParseError(
                f"Shift has {len(self.shift)} entries, matrix dimension is {self.linear.dim}"
            )

    @classmethod
    def parse(cls, matrix_text: str, shift_text: str | None = None) -> "ToralMap":
        """
        Parse a map from matrix text and optional shift text.

        Shift entries may be integers, p/q, finite decimals or any real
        sympy expression such as sqrt(2).

        Raises:
            ParseError: On malformed input
            NonUnimodular: If |det F| != 1
        """
        linear = parse_matrix(matrix_text)
        shift = parse_shift(shift_text) if shift_text else None
        return cls(linear=linear, shift=shift)

    @property
    def dim(self) -> int:
        """Torus dimension."""
        return self.linear.dim

    @property
    def inexact(self) -> bool:
        """True when some shift entry is irrational."""
        return self.shift is not None and not all(c.is_Rational for c in self.shift)

    @property
    def fourier_matrix(self) -> IntMatrix:
        """A = Fᵀ, the matrix acting on Fourier wave vectors."""
        return self.linear.transpose()

    def rational_shift(self) -> tuple[Fraction, ...] | None:
        """Exact shift as Fractions, or None if absent or irrational."""
        if self.shift is None:
            return tuple(Fraction(0) for _ in range(self.dim))
        if self.inexact:
            return None
        return tuple(Fraction(int(c.p), int(c.q)) for c in self.shift)

    def shift_strings(self, digits: int = 50) -> list[str]:
        """Shift entries as decimal strings with the given number of digits."""
        if self.shift is None:
            return ["0"] * self.dim
        return [str(sympy.N(c, digits)) for c in self.shift]

    def shift_floats(self) -> np.ndarray:
        """Shift entries as float64 (zeros when absent)."""
        if self.shift is None:
            return np.zeros(self.dim)
        return np.array([float(c) for c in self.shift])

    def shift_text(self) -> str | None:
        """Shift in the CLI text format."""
        if self.shift is None:
            return None
        return ",".join(str(c) for c in self.shift)


def parse_shift(text: str) -> tuple[sympy.Expr, ...]:
    """
    Parse a shift vector such as "1/2,1/3", "0.123,0.456" or "sqrt(2),sqrt(3)".

    Raises:
        ParseError: If an entry is not a real number
    """
    entries = []
    for raw in text.split(","):
        raw = raw.strip()
        if not raw:
            raise ParseError(f"Empty entry in shift {text!r}")
        try:
            value = Fraction(raw)
            entries.append(sympy.Rational(value.numerator, value.denominator))
            continue
        except (ValueError, ZeroDivisionError):
            pass
        try:
            expr = sympy.sympify(raw, rational=False)
        except (sympy.SympifyError, TypeError) as e:
            raise ParseError(f"Invalid shift entry {raw!r}") from e
        if not expr.is_real or expr.free_symbols:
            raise ParseError(f"Shift entry {raw!r} is not a real number")
        entries.append(expr)
    return tuple(entries)


@dataclass(frozen=True)
class FactorBlock:
    """One distinct irreducible factor of the characteristic polynomial."""

    poly: IntPolynomial
    multiplicity: int
    entropy: float
    roots: tuple[complex, ...]
    cyclotomic_order: int | None

    @property
    def degree(self) -> int:
        """Degree d_j of the factor."""
        return self.poly.degree

    @property
    def h_hat(self) -> float:
        """Dimensionally averaged block entropy h_j / d_j."""
        return self.entropy / self.degree


@dataclass(frozen=True)
class SpectralReport:
    """Everything the spectral module knows about one automorphism."""

    matrix: IntMatrix
    char_poly: IntPolynomial
    eigenvalues: list[tuple[complex, int]]
    entropy: float
    spectral_radius: float
    ergodic: bool
    diagonalizable: bool
    zero_entropy: bool
    irreducible: bool
    factors: list[FactorBlock]
    h_hat: float
    cyclotomic_orders: list[int]

    @property
    def lambda_hat_geo(self) -> float:
        """exp(ĥ)."""
        return math.exp(self.h_hat)


@dataclass(frozen=True)
class EigenBasisData:
    """Eigenvectors v_j of A and dual eigenvectors u_j of Aᵀ (columns, unit norm)."""

    eigenvalues: np.ndarray
    vectors: np.ndarray
    duals: np.ndarray


@dataclass(frozen=True)
class AffineClassification:
    """Ergodicity verdict with the evidence that decided it."""

    verdict: AffineVerdict
    exact: bool
    witness: tuple[int, ...] | None = None
    relation_height: int | None = None


@dataclass(frozen=True)
class DegeneracyAnalysis:
    """Span test for degenerate noise."""

    case: DegeneracyCase
    rank: int
    nondegenerate: int


@lru_cache(maxsize=None)
def candidate_orders(d: int) -> tuple[int, ...]:
    """All m with Euler φ(m) <= d; every such m satisfies m <= 2d² + 2."""
    return tuple(m for m in range(1, 2 * d * d + 3) if sympy.totient(m) <= d)


@lru_cache(maxsize=None)
def cyclotomic(m: int) -> IntPolynomial:
    """The m-th cyclotomic polynomial Φ_m."""
    return IntPolynomial.from_sympy(sympy.cyclotomic_poly(m, _X, polys=True))


def cyclotomic_order(poly: IntPolynomial) -> int | None:
    """Return m if `poly` equals Φ_m, else None."""
    for m in candidate_orders(poly.degree):
        if sympy.totient(m) == poly.degree and cyclotomic(m) == poly:
            return m
    return None


@lru_cache(maxsize=256)
def factor_over_q(p: IntPolynomial) -> tuple[tuple[IntPolynomial, int], ...]:
    """
    Factor an integer polynomial into irreducibles over Q.

    Args:
        p: Monic integer polynomial

    Returns:
        (factor, multiplicity) pairs, monic factors ordered by degree then coefficients
    """
    content, factors = p.to_sympy().factor_list()
    if content != 1:
        raise ValueError(f"Expected a monic polynomial, got content {content}")
    result = [(IntPolynomial.from_sympy(f), int(e)) for f, e in factors]
    result.sort(key=lambda fe: (fe[0].degree, fe[0].coefficients))
    return tuple(result)


@lru_cache(maxsize=256)
def _factor_roots(poly: IntPolynomial, digits: int) -> tuple[tuple[complex, ...], float]:
    """Conjugate-paired roots of an irreducible factor and its block entropy."""
    ctx = mpmath.MPContext()
    ctx.dps = digits
    coeffs = list(reversed(poly.coefficients))

    if poly.degree == 1:
        roots = [ctx.mpf(-coeffs[1]) / coeffs[0]]
    else:
        try:
            roots = ctx.polyroots(coeffs, maxsteps=400, extraprec=4 * digits)
        except mpmath.libmp.NoConvergence as e:
            raise ConvergenceFailure(f"Root refinement for {poly} did not converge") from e

    residual = max(
        float(abs(ctx.polyval(coeffs, r)) / max(1, abs(r)) ** poly.degree) for r in roots
    )
    if residual > 10.0 ** (-(digits // 2)):
        raise ConvergenceFailure(
            f"Roots of {poly} have residual {residual:.3e}", residual=residual
        )

    # Enforce exact conjugate pairing
    imag_tol = ctx.mpf(10) ** (-(digits // 2))
    reals = [ctx.mpf(ctx.re(r)) for r in roots if abs(ctx.im(r)) <= imag_tol]
    uppers = [r for r in roots if ctx.im(r) > imag_tol]
    if len(reals) + 2 * len(uppers) != poly.degree:
        raise ConvergenceFailure(f"Could not pair the complex roots of {poly}")
    paired = reals + uppers + [ctx.conj(r) for r in uppers]

    entropy = 0.0
    if cyclotomic_order(poly) is None:
        for r in paired:
            modulus = abs(r)
            if modulus >= 1 and abs(float(modulus) - 1.0) > UNIT_CIRCLE_TOLERANCE:
                entropy += float(ctx.log(modulus))

    as_complex = tuple(complex(float(ctx.re(r)), float(ctx.im(r))) for r in paired)
    return as_complex, entropy


def factor_blocks(a: IntMatrix, digits: int | None = None) -> list[FactorBlock]:
    """
    Irreducible factor blocks of char_poly(A) with roots and block entropies.

    Raises:
        ConvergenceFailure: If root refinement stalls
    """
    digits = digits or get_settings().eigen_precision_digits
    blocks = []
    for poly, multiplicity in factor_over_q(char_poly(a)):
        roots, entropy = _factor_roots(poly, digits)
        blocks.append(
            FactorBlock(
                poly=poly,
                multiplicity=multiplicity,
                entropy=entropy,
                roots=roots,
                cyclotomic_order=cyclotomic_order(poly),
            )
        )
    return blocks


def eigenvalues(a: IntMatrix) -> list[tuple[complex, int]]:
    """
    All eigenvalues with algebraic multiplicity.

    Returns:
        (eigenvalue, multiplicity) pairs ordered by decreasing modulus

    Raises:
        ConvergenceFailure: If root refinement stalls
    """
    pairs = [(root, block.multiplicity) for block in factor_blocks(a) for root in block.roots]
    pairs.sort(key=lambda p: (-abs(p[0]), -p[0].real, -p[0].imag))
    return pairs


def entropy(a: IntMatrix) -> float:
    """Kolmogorov–Sinai entropy Σ_{|λ|>=1} ln|λ| (with multiplicity)."""
    return sum(block.entropy * block.multiplicity for block in factor_blocks(a))


def spectral_radius(a: IntMatrix) -> float:
    """Largest eigenvalue modulus ρ."""
    return max(abs(root) for root, _ in eigenvalues(a))


def h_hat(a: IntMatrix) -> float:
    """Minimal dimensionally averaged entropy: min over factors of h_j / d_j."""
    return min(block.h_hat for block in factor_blocks(a))


def cyclotomic_orders(a: IntMatrix) -> list[int]:
    """Sorted list of m with Φ_m dividing the characteristic polynomial."""
    return sorted(
        m for poly, _ in factor_over_q(char_poly(a)) if (m := cyclotomic_order(poly)) is not None
    )


def is_ergodic(a: IntMatrix) -> bool:
    """
    Exact ergodicity test: no eigenvalue is a root of unity.

    Decided by gcd(char_poly, Φ_m) = 1 for every m with φ(m) <= d.
    """
    p = char_poly(a).to_sympy()
    for m in candidate_orders(a.dim):
        if p.gcd(cyclotomic(m).to_sympy()).degree() > 0:
            return False
    return True


def zero_entropy_class(a: IntMatrix) -> bool:
    """Exact test that every eigenvalue is a root of unity."""
    return all(cyclotomic_order(poly) is not None for poly, _ in factor_over_q(char_poly(a)))


def is_diagonalizable(a: IntMatrix) -> bool:
    """
    Exact diagonalizability over C.

    True iff the squarefree part of the characteristic polynomial (the
    product of its distinct irreducible factors) annihilates A.
    """
    radical = IntPolynomial((1,))
    for poly, _ in factor_over_q(char_poly(a)):
        radical = radical * poly
    value = radical.evaluate_matrix(a)
    return all(x == 0 for row in value.rows for x in row)


def is_irreducible(a: IntMatrix) -> bool:
    """True iff char_poly(A) is irreducible over Q."""
    factors = factor_over_q(char_poly(a))
    return len(factors) == 1 and factors[0][1] == 1 and factors[0][0].degree == a.dim


def spectral_report(a: IntMatrix) -> SpectralReport:
    """
    Assemble the full spectral picture of an automorphism.

    Raises:
        NonUnimodular: If |det A| != 1
        ConvergenceFailure: If root refinement stalls
    """
    require_unimodular(a)
    blocks = factor_blocks(a)
    eig = eigenvalues(a)
    return SpectralReport(
        matrix=a,
        char_poly=char_poly(a),
        eigenvalues=eig,
        entropy=sum(b.entropy * b.multiplicity for b in blocks),
        spectral_radius=max(abs(root) for root, _ in eig),
        ergodic=is_ergodic(a),
        diagonalizable=is_diagonalizable(a),
        zero_entropy=all(b.cyclotomic_order is not None for b in blocks),
        irreducible=is_irreducible(a),
        factors=blocks,
        h_hat=min(b.h_hat for b in blocks),
        cyclotomic_orders=sorted(
            b.cyclotomic_order for b in blocks if b.cyclotomic_order is not None
        ),
    )


def eigen_basis(a: ExactMatrix, condition_bound: float | None = None) -> EigenBasisData:
    """
    Unit eigenvectors v_j of A and co-orthogonal eigenvectors u_j of Aᵀ.

    The u_j are the columns of (V⁻¹)ᵀ, so ⟨u_i, v_j⟩ = 0 for i != j.

    Raises:
        NotDiagonalizable: If the eigenvector matrix is too ill-conditioned
    """
    bound = condition_bound or get_settings().eigenvector_condition_bound
    values, vectors = np.linalg.eig(a.to_numpy())
    condition = np.linalg.cond(vectors)
    if not np.isfinite(condition) or condition > bound:
        raise NotDiagonalizable(
            f"Eigenvector matrix of {a} has condition number {condition:.3e} > {bound:.1e}"
        )
    duals = np.linalg.inv(vectors).T
    duals = duals / np.linalg.norm(duals, axis=0)
    return EigenBasisData(eigenvalues=values, vectors=vectors, duals=duals)


def _real_eigenvector(a: IntMatrix, expanding: bool) -> np.ndarray:
    values, vectors = np.linalg.eig(a.to_numpy())
    index = int(np.argmax(np.abs(values)) if expanding else np.argmin(np.abs(values)))
    if abs(values[index].imag) > 1e-12:
        raise PreconditionError(f"Extremal eigenvalue {values[index]} of {a} is not real")
    vector = np.real(vectors[:, index])
    vector = vector / np.linalg.norm(vector)
    first = vector[np.flatnonzero(np.abs(vector) > 1e-12)[0]]
    return vector if first > 0 else -vector


def expanding_eigenvector(a: IntMatrix) -> np.ndarray:
    """Unit real eigenvector of the eigenvalue of largest modulus."""
    return _real_eigenvector(a, expanding=True)


def contracting_eigenvector(a: IntMatrix) -> np.ndarray:
    """Unit real eigenvector of the eigenvalue of smallest modulus."""
    return _real_eigenvector(a, expanding=False)


DEGENERACY_PRESETS = ("stable", "unstable")


def parse_degeneracy(text: str, a: IntMatrix) -> RatMatrix:
    """
    Parse a noise degeneracy matrix B or build a preset.

    Presets build B = u uᵀ from an eigenvector u of the Fourier-side matrix A:
    "stable" uses the contracting direction, "unstable" the expanding one.

    Args:
        text: Matrix text or a preset name
        a: Fourier-side matrix the presets refer to

    Returns:
        B with exact rational entries
    """
    name = text.strip().lower()
    if name in DEGENERACY_PRESETS:
        u = contracting_eigenvector(a) if name == "stable" else expanding_eigenvector(a)
        return RatMatrix.from_array(np.outer(u, u))
    b = RatMatrix.from_text(text)
    if b.dim != a.dim:
        raise ParseError(f"Degeneracy matrix has dimension {b.dim}, expected {a.dim}")
    return b


def degeneracy_analysis(
    a: IntMatrix,
    b: ExactMatrix | np.ndarray,
    tolerance: float | None = None,
    rank_cutoff: float | None = None,
    condition_bound: float | None = None,
) -> DegeneracyAnalysis:
    """
    Decide whether noise degenerate along B still dissipates under A.

    Takes the eigenvectors u_j of Bᵀ with |μ_j| above the tolerance and
    measures the numerical rank of {(Aᵀ)^h u_j : 1 <= h <= d}.

    Args:
        a: Fourier-side matrix
        b: Degeneracy matrix
        tolerance: Eigenvalue cutoff for nondegenerate directions
        rank_cutoff: Relative singular-value cutoff for the span rank
        condition_bound: Largest acceptable eigenvector condition number of Bᵀ

    Returns:
        DegeneracyAnalysis with case, rank and count of nondegenerate directions

    Raises:
        NotDiagonalizable: If B is not numerically diagonalizable
    """
    settings = get_settings()
    tolerance = tolerance if tolerance is not None else settings.degeneracy_tolerance
    rank_cutoff = rank_cutoff if rank_cutoff is not None else settings.rank_cutoff
    bound = condition_bound or settings.eigenvector_condition_bound

    b_array = b.to_numpy() if isinstance(b, ExactMatrix) else np.asarray(b, dtype=float)
    values, vectors = np.linalg.eig(b_array.T)
    condition = np.linalg.cond(vectors)
    if not np.isfinite(condition) or condition > bound:
        raise NotDiagonalizable(f"Degeneracy matrix has eigenvector condition {condition:.3e}")

    selected = [vectors[:, j] for j in range(len(values)) if abs(values[j]) > tolerance]
    d = a.dim
    if not selected:
        return DegeneracyAnalysis(case=DegeneracyCase.NO_DISSIPATION, rank=0, nondegenerate=0)

    at = a.transpose()
    images = [mat_pow(at, h).to_numpy() @ u for h in range(1, d + 1) for u in selected]
    singular = np.linalg.svd(np.column_stack(images), compute_uv=False)
    rank = int(np.sum(singular > rank_cutoff * singular[0]))
    case = DegeneracyCase.EFFECTIVE if rank == d else DegeneracyCase.NO_DISSIPATION
    logger.debug("Degeneracy span rank %d of %d (%d directions)", rank, d, len(selected))
    return DegeneracyAnalysis(case=case, rank=rank, nondegenerate=len(selected))


def degeneracy_case(a: IntMatrix, b: ExactMatrix | np.ndarray) -> DegeneracyCase:
    """no_dissipation iff the span test of degeneracy_analysis falls short of full rank."""
    return degeneracy_analysis(a, b).case


def classify_affine(
    toral_map: ToralMap, relation_height: int | None = None
) -> AffineClassification:
    """
    Ergodicity of x -> F x + c.

    Ergodic F decides ergodic. A root of unity other than 1 in the spectrum
    decides nonergodic. Otherwise the integer kernel lattice of (Fᵀ - I)
    is computed exactly: a rational shift always admits k in it with
    c·k ∈ Z, a real shift is searched for integer relations up to the
    height bound.

    Args:
        toral_map: Map with optional shift (absent means zero)
        relation_height: Largest coefficient for the integer-relation search

    Returns:
        AffineClassification with verdict and witness
    """
    f = toral_map.linear
    if is_ergodic(f):
        return AffineClassification(verdict=AffineVerdict.ERGODIC, exact=True)

    orders = cyclotomic_orders(f)
    if any(m >= 2 for m in orders):
        return AffineClassification(verdict=AffineVerdict.NONERGODIC, exact=True)

    kernel = rational_kernel(f.transpose() - IntMatrix.identity(f.dim))
    shift = toral_map.rational_shift()
    if shift is not None:
        k0 = kernel[0]
        product = sum((c * k for c, k in zip(shift, k0, strict=True)), Fraction(0))
        witness = tuple(product.denominator * k for k in k0)
        return AffineClassification(verdict=AffineVerdict.NONERGODIC, exact=True, witness=witness)

    height = relation_height or get_settings().relation_height
    ctx = mpmath.MPContext()
    ctx.dps = 50
    c = [ctx.mpf(s) for s in toral_map.shift_strings(60)]
    values = [ctx.fsum(ci * k for ci, k in zip(c, basis, strict=True)) for basis in kernel]

    # A kernel vector whose product with c is already an integer
    for basis, value in zip(kernel, values, strict=True):
        if abs(value - ctx.nint(value)) < ctx.mpf(10) ** -40:
            return AffineClassification(
                verdict=AffineVerdict.NONERGODIC, exact=False, witness=basis, relation_height=height
            )

    relation = ctx.pslq(
        values + [ctx.mpf(1)], tol=ctx.mpf(10) ** -30, maxcoeff=height, maxsteps=10**5
    )
    if relation is not None and any(relation[:-1]):
        witness = tuple(
            sum(m * basis[j] for m, basis in zip(relation[:-1], kernel, strict=True))
            for j in range(f.dim)
        )
        logger.info("Integer relation %s found for the shift", relation)
        return AffineClassification(
            verdict=AffineVerdict.NONERGODIC, exact=False, witness=witness, relation_height=height
        )
    return AffineClassification(
        verdict=AffineVerdict.HEURISTIC_ERGODIC, exact=False, relation_height=height
    )


def periodic_orbit(a: IntMatrix) -> tuple[tuple[int, ...], int] | None:
    """
    A nonzero integer vector with a periodic orbit under A, or None if A is ergodic.

    With m the lcm of the cyclotomic orders, A^m - I is singular and its
    integer kernel is nonzero; any kernel vector k satisfies A^m k = k.

    Returns:
        (k, m) or None
    """
    orders = cyclotomic_orders(a)
    if not orders:
        return None
    m = math.lcm(*orders)
    k = rational_kernel(mat_pow(a, m) - IntMatrix.identity(a.dim))[0]
    return k, m
