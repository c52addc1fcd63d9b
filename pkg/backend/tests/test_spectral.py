"""Tests for the spectral module."""

import math

import numpy as np
import pytest
from app.errors import ParseError
from app.linalg.matrix import (
    IntMatrix,
    NonUnimodular,
    RatMatrix,
    block_diag,
    inverse,
    mat_pow,
    parse_matrix,
)
from app.linalg.polynomial import IntPolynomial, char_poly
from app.services.arithmin import random_unimodular
from app.services.spectral import (
    AffineVerdict,
    DegeneracyCase,
    NotDiagonalizable,
    ToralMap,
    classify_affine,
    contracting_eigenvector,
    cyclotomic,
    cyclotomic_order,
    cyclotomic_orders,
    degeneracy_analysis,
    degeneracy_case,
    eigen_basis,
    eigenvalues,
    entropy,
    expanding_eigenvector,
    factor_over_q,
    h_hat,
    is_diagonalizable,
    is_ergodic,
    is_irreducible,
    parse_degeneracy,
    parse_shift,
    periodic_orbit,
    spectral_radius,
    spectral_report,
    zero_entropy_class,
)

CAT_ENTROPY = math.log((3 + math.sqrt(5)) / 2)
PLASTIC_RATIO = 1.3247179572447460


def test_cat_map_entropy(cat: IntMatrix) -> None:
    """Test h = ln((3+√5)/2) for the cat map."""
    assert entropy(cat) == pytest.approx(0.9624236501192069, abs=1e-10)
    assert entropy(cat) == pytest.approx(CAT_ENTROPY, abs=1e-12)


def test_entropy_of_finite_order_maps(identity2: IntMatrix, shear: IntMatrix) -> None:
    """Test that identity and shear have zero entropy."""
    assert entropy(identity2) == 0.0
    assert entropy(shear) == 0.0


def test_entropy_matches_eigenvalue_sum(plastic: IntMatrix) -> None:
    """Test h = Σ_{|λ|>=1} ln|λ| against numpy eigenvalues."""
    values = np.linalg.eigvals(plastic.to_numpy())
    expected = sum(math.log(abs(v)) for v in values if abs(v) >= 1)
    assert entropy(plastic) == pytest.approx(expected, abs=1e-10)
    assert entropy(plastic) == pytest.approx(math.log(PLASTIC_RATIO), abs=1e-12)


def test_eigenvalues_sorted_by_modulus(cat: IntMatrix) -> None:
    """Test cat-map eigenvalues and their order."""
    values = eigenvalues(cat)
    assert [m for _, m in values] == [1, 1]
    assert values[0][0].real == pytest.approx((3 + math.sqrt(5)) / 2, abs=1e-12)
    assert values[1][0].real == pytest.approx((3 - math.sqrt(5)) / 2, abs=1e-12)
    assert spectral_radius(cat) == pytest.approx((3 + math.sqrt(5)) / 2, abs=1e-12)


def test_eigenvalues_carry_multiplicity(shear: IntMatrix) -> None:
    """Test the double eigenvalue 1 of the shear."""
    assert eigenvalues(shear) == [(1 + 0j, 2)]


def test_ergodicity(
    cat: IntMatrix, shear: IntMatrix, identity2: IntMatrix, rotation: IntMatrix
) -> None:
    """Test ergodic iff no eigenvalue is a root of unity."""
    assert is_ergodic(cat)
    assert not is_ergodic(shear)
    assert not is_ergodic(identity2)
    assert not is_ergodic(rotation)


def test_ergodic_with_complex_eigenvalues(plastic: IntMatrix) -> None:
    """Test that the plastic companion (one real, two complex roots) is ergodic."""
    assert is_ergodic(plastic)
    assert not zero_entropy_class(plastic)


def test_ergodic_needs_every_factor(cat: IntMatrix) -> None:
    """Test that one unit eigenvalue breaks ergodicity."""
    assert not is_ergodic(block_diag(cat, IntMatrix.identity(1)))


def test_zero_entropy_class(shear: IntMatrix, rotation: IntMatrix, cat: IntMatrix) -> None:
    """Test the all-roots-of-unity class."""
    assert zero_entropy_class(shear)
    assert zero_entropy_class(rotation)
    assert not zero_entropy_class(cat)
    assert not zero_entropy_class(block_diag(cat, IntMatrix.identity(1)))


def test_cyclotomic_detection(rotation: IntMatrix) -> None:
    """Test Φ_m recognition and the orders dividing a char poly."""
    assert cyclotomic(4).to_list() == [1, 0, 1]
    assert cyclotomic_order(IntPolynomial((1, 1, 1))) == 3
    assert cyclotomic_order(IntPolynomial((1, -3, 1))) is None
    assert cyclotomic_orders(rotation) == [4]
    hexagonal = parse_matrix("0,-1;1,1")
    assert cyclotomic_orders(hexagonal) == [6]
    assert cyclotomic_orders(block_diag(rotation, IntMatrix.identity(1))) == [1, 4]


def test_factor_over_q_irreducible_quadratic() -> None:
    """Test that x² - 3x + 1 is irreducible."""
    assert factor_over_q(IntPolynomial((1, -3, 1))) == ((IntPolynomial((1, -3, 1)), 1),)


def test_factor_over_q_repeated_linear() -> None:
    """Test (x - 1)³ -> [(x - 1, 3)]."""
    assert factor_over_q(char_poly(IntMatrix.identity(3))) == ((IntPolynomial((-1, 1)), 3),)


def test_factor_over_q_block_diagonal(cat: IntMatrix, plastic: IntMatrix) -> None:
    """Test that block-diagonal char polys split into the blocks' factors."""
    factors = factor_over_q(char_poly(block_diag(cat, plastic)))
    assert factors == (
        (IntPolynomial((1, -3, 1)), 1),
        (IntPolynomial((-1, -1, 0, 1)), 1),
    )


def test_h_hat(cat: IntMatrix, plastic: IntMatrix, identity2: IntMatrix) -> None:
    """Test the dimensionally averaged entropy."""
    assert h_hat(cat) == pytest.approx(0.4812118250596, abs=1e-10)
    assert h_hat(plastic) == pytest.approx(0.0937312, abs=1e-6)
    assert h_hat(block_diag(cat, plastic)) == pytest.approx(0.0937312, abs=1e-6)
    assert h_hat(identity2) == 0.0


def test_h_hat_bounded_by_largest_block(cat: IntMatrix, plastic: IntMatrix) -> None:
    """Test ĥ <= max_j h_j / d_j."""
    report = spectral_report(block_diag(cat, plastic))
    assert report.h_hat <= max(b.h_hat for b in report.factors)


def test_diagonalizable(
    cat: IntMatrix, shear: IntMatrix, identity2: IntMatrix, rotation: IntMatrix
) -> None:
    """Test exact diagonalizability over C."""
    assert is_diagonalizable(identity2)
    assert is_diagonalizable(cat)
    assert is_diagonalizable(rotation)
    assert not is_diagonalizable(shear)
    assert not is_diagonalizable(block_diag(shear, IntMatrix.identity(1)))


def test_irreducible(cat: IntMatrix, plastic: IntMatrix, identity2: IntMatrix) -> None:
    """Test irreducibility over Q."""
    assert is_irreducible(cat)
    assert is_irreducible(plastic)
    assert not is_irreducible(block_diag(cat, cat))
    assert not is_irreducible(identity2)


def test_spectral_report_of_cat(cat: IntMatrix) -> None:
    """Test the assembled report for the cat map."""
    report = spectral_report(cat)
    assert report.ergodic
    assert report.diagonalizable
    assert report.irreducible
    assert not report.zero_entropy
    assert report.char_poly.to_list() == [1, -3, 1]
    assert report.entropy == pytest.approx(CAT_ENTROPY, abs=1e-10)
    assert report.lambda_hat_geo == pytest.approx((1 + math.sqrt(5)) / 2, abs=1e-10)
    assert report.cyclotomic_orders == []


def test_spectral_report_of_shear(shear: IntMatrix) -> None:
    """Test the assembled report for the shear."""
    report = spectral_report(shear)
    assert not report.ergodic
    assert report.zero_entropy
    assert not report.diagonalizable
    assert report.cyclotomic_orders == [1]
    assert report.h_hat == 0.0


def test_spectral_report_rejects_non_unimodular() -> None:
    """Test that det 3 is refused."""
    with pytest.raises(NonUnimodular):
        spectral_report(parse_matrix("2,1;1,2"))


def test_eigen_basis_is_co_orthogonal(cat: IntMatrix) -> None:
    """Test ⟨u_i, v_j⟩ = 0 for i != j."""
    basis = eigen_basis(cat)
    pairing = basis.duals.T @ basis.vectors
    assert abs(pairing[0, 1]) < 1e-12
    assert abs(pairing[1, 0]) < 1e-12


def test_eigen_basis_refuses_jordan_block(shear: IntMatrix) -> None:
    """Test that a nondiagonalizable matrix has no eigenvector basis."""
    with pytest.raises(NotDiagonalizable):
        eigen_basis(shear)


def test_extremal_eigenvectors(cat: IntMatrix) -> None:
    """Test unit expanding and contracting eigenvectors of the cat map."""
    golden = (1 + math.sqrt(5)) / 2
    u = expanding_eigenvector(cat)
    s = contracting_eigenvector(cat)
    assert np.allclose(u, np.array([golden, 1.0]) / math.hypot(golden, 1.0))
    assert abs(float(u @ s)) < 1e-12
    assert s[0] > 0


def test_toral_map_parse_exact_and_inexact_shifts() -> None:
    """Test rational shifts stay exact and irrational ones are flagged."""
    exact = ToralMap.parse("1,1;0,1", "1/2,0.125")
    assert not exact.inexact
    assert exact.rational_shift() is not None
    assert [str(c) for c in exact.rational_shift() or ()] == ["1/2", "1/8"]

    real = ToralMap.parse("1,0;0,1", "sqrt(2),sqrt(3)")
    assert real.inexact
    assert real.rational_shift() is None
    assert real.shift_strings(20)[0].startswith("1.414213562373095")


def test_toral_map_rejects_bad_input() -> None:
    """Test unimodularity, shift length and shift parsing."""
    with pytest.raises(NonUnimodular):
        ToralMap.parse("2,1;1,2")
    with pytest.raises(ParseError):
        ToralMap.parse("2,1;1,1", "1/2")
    with pytest.raises(ParseError):
        parse_shift("1/2,x")
    with pytest.raises(ParseError):
        parse_shift("1/2,")


def test_toral_map_fourier_matrix_is_transpose(shear: IntMatrix) -> None:
    """Test A = Fᵀ."""
    assert ToralMap(shear).fourier_matrix == parse_matrix("1,0;1,1")


def test_classify_affine_ergodic_linear_part() -> None:
    """Test that an ergodic linear part makes every shift ergodic."""
    result = classify_affine(ToralMap.parse("2,1;1,1", "sqrt(2),1/3"))
    assert result.verdict is AffineVerdict.ERGODIC
    assert result.exact


def test_classify_affine_rational_shift_on_shear() -> None:
    """Test k = (0,2) as the witness for the shear with shift (0,1/2)."""
    result = classify_affine(ToralMap.parse("1,1;0,1", "0,1/2"))
    assert result.verdict is AffineVerdict.NONERGODIC
    assert result.exact
    assert result.witness == (0, 2)


def test_classify_affine_finite_order_is_nonergodic(rotation: IntMatrix) -> None:
    """Test that a root of unity other than 1 decides nonergodic."""
    result = classify_affine(ToralMap(rotation, parse_shift("sqrt(2),sqrt(3)")))
    assert result.verdict is AffineVerdict.NONERGODIC


def test_classify_affine_irrational_translation() -> None:
    """Test that √2, √3 admit no integer relation up to the height bound."""
    result = classify_affine(ToralMap.parse("1,0;0,1", "sqrt(2),sqrt(3)"))
    assert result.verdict is AffineVerdict.HEURISTIC_ERGODIC
    assert not result.exact
    assert result.relation_height == 1_000_000


def test_classify_affine_dependent_irrational_translation() -> None:
    """Test that c = (√2, 2√2) is caught by the relation search."""
    result = classify_affine(ToralMap.parse("1,0;0,1", "sqrt(2),2*sqrt(2)"))
    assert result.verdict is AffineVerdict.NONERGODIC
    assert result.witness is not None
    k1, k2 = result.witness
    # k·c = (k1 + 2 k2)√2 is an integer only when k1 + 2 k2 = 0
    assert k1 + 2 * k2 == 0
    assert (k1, k2) != (0, 0)


def test_degeneracy_unstable_projection_does_not_dissipate(cat: IntMatrix) -> None:
    """Test B = uuᵀ along the unstable direction spans only a line."""
    b = parse_degeneracy("unstable", cat)
    analysis = degeneracy_analysis(cat, b)
    assert analysis.case is DegeneracyCase.NO_DISSIPATION
    assert analysis.rank == 1
    assert analysis.nondegenerate == 1


def test_degeneracy_coordinate_projection_is_effective(cat: IntMatrix) -> None:
    """Test B = diag(1,0): e₁ and A e₁ are independent."""
    assert degeneracy_case(cat, RatMatrix.from_text("1,0;0,0")) is DegeneracyCase.EFFECTIVE


def test_degeneracy_identity_is_effective(plastic: IntMatrix) -> None:
    """Test that nondegenerate noise is always effective."""
    assert degeneracy_case(plastic, RatMatrix.identity(3)) is DegeneracyCase.EFFECTIVE


def test_degeneracy_zero_matrix(cat: IntMatrix) -> None:
    """Test that B = 0 does not dissipate."""
    analysis = degeneracy_analysis(cat, RatMatrix.zeros(2))
    assert analysis.case is DegeneracyCase.NO_DISSIPATION
    assert analysis.rank == 0


def test_parse_degeneracy_rejects_wrong_dimension(cat: IntMatrix) -> None:
    """Test that B must match the matrix dimension."""
    with pytest.raises(ParseError):
        parse_degeneracy("1,0,0;0,1,0;0,0,1", cat)


def test_periodic_orbit(cat: IntMatrix, shear: IntMatrix, rotation: IntMatrix) -> None:
    """Test periodic integer orbits of nonergodic maps."""
    assert periodic_orbit(cat) is None

    k, m = periodic_orbit(shear.transpose()) or ((), 0)
    assert m == 1
    assert shear.transpose().matvec(k) == k

    k, m = periodic_orbit(rotation) or ((), 0)
    assert m == 4
    assert any(k)


RANDOM_MAPS = [
    random_unimodular(d, 7, np.random.default_rng(seed)) for d in (2, 3, 4) for seed in range(4)
]
SPECIAL_MAPS = [
    parse_matrix("2,1;1,1"),
    parse_matrix("1,1;0,1"),
    parse_matrix("0,-1;1,0"),
    parse_matrix("0,1,0;0,0,1;1,1,0"),
    block_diag(parse_matrix("2,1;1,1"), IntMatrix.identity(1)),
    block_diag(parse_matrix("0,-1;1,-1"), parse_matrix("1,1;0,1")),
]


@pytest.mark.parametrize("a", RANDOM_MAPS + SPECIAL_MAPS, ids=str)
def test_entropy_of_inverse_and_powers(a: IntMatrix) -> None:
    """Test h(A⁻¹) = h(A) and h(A^m) = m·h(A)."""
    h = entropy(a)
    assert entropy(inverse(a)) == pytest.approx(h, rel=1e-9, abs=1e-9)
    for m in (2, 3):
        assert entropy(mat_pow(a, m)) == pytest.approx(m * h, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("a", RANDOM_MAPS + SPECIAL_MAPS, ids=str)
def test_ergodicity_of_transpose(a: IntMatrix) -> None:
    """Test that A and Aᵀ are ergodic together."""
    assert is_ergodic(a.transpose()) == is_ergodic(a)


@pytest.mark.parametrize("a", RANDOM_MAPS + SPECIAL_MAPS, ids=str)
def test_zero_entropy_class_has_no_entropy(a: IntMatrix) -> None:
    """Test h(A) < 1e-9 whenever every eigenvalue is a root of unity, and h > 0 otherwise."""
    if zero_entropy_class(a):
        assert entropy(a) < 1e-9
    else:
        assert entropy(a) > 1e-9


@pytest.mark.parametrize("a", [a for a in RANDOM_MAPS if a.dim <= 3] + SPECIAL_MAPS, ids=str)
def test_ergodic_low_dimension_is_irreducible(a: IntMatrix) -> None:
    """Test that ergodic maps of T² and T³ are irreducible and diagonalizable."""
    if is_ergodic(a):
        assert is_irreducible(a)
        assert is_diagonalizable(a)


@pytest.mark.parametrize("a", RANDOM_MAPS + SPECIAL_MAPS, ids=str)
def test_eigenvalue_moduli_multiply_to_one(a: IntMatrix) -> None:
    """Test Π|λ| = |det A| = 1 with multiplicity."""
    log_product = sum(mult * math.log(abs(root)) for root, mult in eigenvalues(a))
    assert log_product == pytest.approx(0.0, abs=1e-9)
