"""Tests for exact matrices."""

import math
from fractions import Fraction

import numpy as np
import pytest
from app.errors import ParseError, PreconditionError
from app.linalg.matrix import (
    IntMatrix,
    MatrixParseError,
    NonUnimodular,
    RatMatrix,
    block_diag,
    gram_form,
    inverse,
    log_operator_two_norm,
    mat_pow,
    operator_two_norm,
    parse_matrix,
    parse_vector,
    primitive_vector,
    rational_kernel,
    require_unimodular,
    weighted_gram_form,
)
from app.services.arithmin import random_unimodular


def test_parse_matrix_round_trips_text() -> None:
    """Test that matrix text parses and formats back unchanged."""
    a = parse_matrix("2,1;1,1")
    assert a.rows == ((2, 1), (1, 1))
    assert a.to_text() == "2,1;1,1"
    assert IntMatrix.from_text(a.to_text()) == a


def test_parse_matrix_tolerates_spaces_and_trailing_separator() -> None:
    """Test that whitespace and a trailing ';' are accepted."""
    assert parse_matrix(" 1, 0 ; 0, 1 ;") == IntMatrix.identity(2)


@pytest.mark.parametrize("text", ["", "1,2;3", "1,x;0,1", "1,,2;0,1,0;1,1,1", "1/2,0;0,2"])
def test_parse_matrix_rejects_bad_text(text: str) -> None:
    """Test that empty, ragged, non-numeric or non-integer text fails."""
    with pytest.raises(MatrixParseError):
        parse_matrix(text)


def test_matrix_parse_error_is_a_parse_error() -> None:
    """Test that matrix errors carry the parse exit code."""
    assert issubclass(MatrixParseError, ParseError)
    assert MatrixParseError.exit_code == 2


def test_rational_matrix_keeps_fractions() -> None:
    """Test that rational entries stay exact."""
    b = RatMatrix.from_text("1/2,0;0,1/3")
    assert b[0, 0] == Fraction(1, 2)
    assert b.to_list() == [["1/2", "0"], ["0", "1/3"]]


def test_parse_vector() -> None:
    """Test rational vector parsing."""
    assert parse_vector("1/2, 0.25") == (Fraction(1, 2), Fraction(1, 4))
    with pytest.raises(MatrixParseError):
        parse_vector("1/0,1")


def test_det_of_known_matrices(cat: IntMatrix, plastic: IntMatrix) -> None:
    """Test exact determinants."""
    assert cat.det() == 1
    assert plastic.det() == 1
    assert parse_matrix("2,1;1,2").det() == 3
    assert parse_matrix("0,1;1,0").det() == -1
    assert parse_matrix("1,2;2,4").det() == 0


def test_require_unimodular_rejects_det_three() -> None:
    """Test that |det| != 1 raises NonUnimodular."""
    with pytest.raises(NonUnimodular):
        require_unimodular(parse_matrix("2,1;1,2"))
    assert issubclass(NonUnimodular, PreconditionError)


def test_mat_pow_identity_exponent(cat: IntMatrix) -> None:
    """Test that A^0 is the identity."""
    assert mat_pow(cat, 0) == IntMatrix.identity(2)


def test_mat_pow_matches_fibonacci(cat: IntMatrix) -> None:
    """Test that cat-map powers are Fibonacci matrices."""
    assert mat_pow(cat, 5).rows == ((89, 55), (55, 34))


def test_mat_pow_negative_is_inverse(cat: IntMatrix) -> None:
    """Test negative exponents through the exact inverse."""
    assert mat_pow(cat, -1) == inverse(cat) == parse_matrix("1,-1;-1,2")
    assert (mat_pow(cat, -3) @ mat_pow(cat, 3)) == IntMatrix.identity(2)


def test_mat_pow_does_not_overflow(cat: IntMatrix) -> None:
    """Test that large powers stay exact beyond 64 bits."""
    power = mat_pow(cat, 200)
    assert power.det() == 1
    assert int(power[0, 0]).bit_length() > 64


def test_inverse_rejects_non_unimodular() -> None:
    """Test that the inverse requires |det| = 1."""
    with pytest.raises(NonUnimodular):
        inverse(parse_matrix("2,0;0,1"))


def test_gram_form_of_identity_is_scaled_identity() -> None:
    """Test that the gram form of I over 7 steps is 7·I."""
    assert gram_form(IntMatrix.identity(3), 7) == IntMatrix.identity(3).scaled(7)


def test_gram_form_evaluates_orbit_sum(cat: IntMatrix) -> None:
    """Test that kᵀQ_n k equals the sum of squared orbit lengths."""
    k = (2, -3)
    expected = 0
    image: tuple[int, ...] = k
    for _ in range(5):
        image = tuple(int(x) for x in cat.matvec(image))
        expected += sum(x * x for x in image)
    assert gram_form(cat, 5).quadratic_form(k) == expected


def test_weighted_gram_form_with_projection(cat: IntMatrix) -> None:
    """Test the degenerate weight diag(1,0)."""
    weight = RatMatrix.from_text("1,0;0,0")
    form = weighted_gram_form(cat, 2, weight)
    # (Ak)_1 = 1 and (A^2 k)_1 = 2 at k = (1,-1)
    assert form.quadratic_form((1, -1)) == 5


def test_gram_form_needs_positive_n(cat: IntMatrix) -> None:
    """Test that n = 0 is refused."""
    with pytest.raises(ValueError):
        gram_form(cat, 0)


def test_operator_two_norm_identity_is_one() -> None:
    """Test ‖I‖₂ = 1."""
    assert operator_two_norm(IntMatrix.identity(4)) == pytest.approx(1.0)


def test_operator_two_norm_of_cat_is_largest_eigenvalue(cat: IntMatrix) -> None:
    """Test that the symmetric cat map has norm (3+√5)/2."""
    assert operator_two_norm(cat) == pytest.approx((3 + math.sqrt(5)) / 2, rel=1e-12)


def test_log_operator_two_norm_handles_huge_entries(cat: IntMatrix) -> None:
    """Test the scaled log-norm far beyond the float range."""
    n = 2000
    expected = n * math.log((3 + math.sqrt(5)) / 2)
    assert log_operator_two_norm(mat_pow(cat, n)) == pytest.approx(expected, rel=1e-10)
    assert math.isinf(operator_two_norm(mat_pow(cat, n)))


def test_to_numpy_with_scaling() -> None:
    """Test conversion with a power-of-two scale."""
    a = parse_matrix("4,0;0,8")
    assert np.allclose(a.to_numpy(2), [[1.0, 0.0], [0.0, 2.0]])


def test_block_diag(cat: IntMatrix) -> None:
    """Test block-diagonal assembly."""
    b = block_diag(cat, IntMatrix.identity(1))
    assert b.rows == ((2, 1, 0), (1, 1, 0), (0, 0, 1))


def test_primitive_vector_normalises_sign_and_content() -> None:
    """Test scaling to a primitive integer vector."""
    assert primitive_vector((Fraction(-1, 2), Fraction(3, 4))) == (2, -3)
    with pytest.raises(ValueError):
        primitive_vector((0, 0))


def test_rational_kernel_of_shear_minus_identity(shear: IntMatrix) -> None:
    """Test the integer kernel of Fᵀ - I for the shear."""
    kernel = rational_kernel(shear.transpose() - IntMatrix.identity(2))
    assert len(kernel) == 1
    assert kernel[0] in {(0, 1), (0, -1)}


def test_rational_kernel_of_nonsingular_is_empty(cat: IntMatrix) -> None:
    """Test that an invertible matrix has no kernel."""
    assert rational_kernel(cat) == []


def test_rational_kernel_of_zero_is_full_lattice() -> None:
    """Test that the zero matrix has a rank-d kernel lattice."""
    kernel = rational_kernel(IntMatrix.zeros(3))
    assert len(kernel) == 3
    assert abs(IntMatrix(tuple(kernel)).det()) == 1


RANDOM_MAPS = [
    random_unimodular(d, 7, np.random.default_rng(seed)) for d in (2, 3, 4) for seed in range(4)
]


def _flip_first_row(a: IntMatrix) -> IntMatrix:
    return IntMatrix((tuple(-x for x in a.rows[0]),) + a.rows[1:])


@pytest.mark.parametrize("a", RANDOM_MAPS, ids=str)
def test_mat_pow_adds_exponents(a: IntMatrix) -> None:
    """Test A^(m+n) = A^m·A^n, including negative exponents."""
    for m, n in [(1, 1), (2, 3), (5, 4), (-2, 3), (-3, -1)]:
        assert mat_pow(a, m + n) == mat_pow(a, m) @ mat_pow(a, n)


@pytest.mark.parametrize("a", RANDOM_MAPS, ids=str)
def test_det_of_power(a: IntMatrix) -> None:
    """Test det(Aⁿ) = det(A)ⁿ for determinants 1 and -1."""
    for b in (a, _flip_first_row(a)):
        for n in range(1, 6):
            assert mat_pow(b, n).det() == b.det() ** n


@pytest.mark.parametrize("a", RANDOM_MAPS, ids=str)
def test_gram_form_differences(a: IntMatrix) -> None:
    """Test Q_(n+1) - Q_n = (A^(n+1))ᵀA^(n+1) and Q_(m+n) = Q_m + (A^m)ᵀQ_nA^m."""
    for n in range(1, 6):
        step = mat_pow(a, n + 1)
        assert gram_form(a, n + 1) == gram_form(a, n) + step.transpose() @ step
    for m, n in [(2, 3), (4, 1), (3, 3)]:
        power = mat_pow(a, m)
        assert gram_form(a, m + n) == gram_form(a, m) + power.transpose() @ gram_form(a, n) @ power
