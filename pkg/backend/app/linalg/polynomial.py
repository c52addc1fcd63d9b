"""Integer polynomials and exact characteristic polynomials."""

from dataclasses import dataclass
from typing import Any

import sympy

from app.linalg.matrix import ExactMatrix, IntMatrix, faddeev_leverrier

_X = sympy.Symbol("x")


@dataclass(frozen=True)
class IntPolynomial:
    """Polynomial with integer coefficients, stored in ascending degree."""

    coefficients: tuple[int, ...]

    def __post_init__(self) -> None:
        coeffs = tuple(int(c) for c in self.coefficients)
        if not coeffs or coeffs[-1] == 0:
            raise ValueError(f"Leading coefficient must be nonzero, got {coeffs!r}")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def degree(self) -> int:
        """Index of the last (nonzero) coefficient."""
        return len(self.coefficients) - 1

    @property
    def leading(self) -> int:
        """Leading coefficient."""
        return self.coefficients[-1]

    def is_monic(self) -> bool:
        """True iff the leading coefficient is 1."""
        return self.leading == 1

    def __call__(self, x: Any) -> Any:
        # Horner, works for ints, Fractions, floats and mpmath numbers
        result: Any = 0
        for c in reversed(self.coefficients):
            result = result * x + c
        return result

    def __mul__(self, other: "IntPolynomial") -> "IntPolynomial":
        out = [0] * (self.degree + other.degree + 1)
        for i, a in enumerate(self.coefficients):
            for j, b in enumerate(other.coefficients):
                out[i + j] += a * b
        return IntPolynomial(tuple(out))

    def __pow__(self, exponent: int) -> "IntPolynomial":
        result = IntPolynomial((1,))
        for _ in range(exponent):
            result = result * self
        return result

    def __str__(self) -> str:
        return str(self.to_sympy().as_expr())

    def evaluate_matrix(self, a: ExactMatrix) -> ExactMatrix:
        """
        Exact p(A) by Horner's rule with a matrix argument.

        Args:
            a: Square matrix

        Returns:
            p(A) with the same entry type as A
        """
        identity = IntMatrix.identity(a.dim)
        result: ExactMatrix = IntMatrix.zeros(a.dim)
        for c in reversed(self.coefficients):
            result = result @ a + identity.scaled(c)
        return result

    def to_sympy(self) -> sympy.Poly:
        """Convert to a sympy Poly over ZZ in the variable x."""
        return sympy.Poly(list(reversed(self.coefficients)), _X, domain="ZZ")

    @classmethod
    def from_sympy(cls, poly: sympy.Poly) -> "IntPolynomial":
        """Build from a sympy Poly with integer coefficients."""
        return cls(tuple(int(c) for c in reversed(poly.all_coeffs())))

    def to_list(self) -> list[int]:
        """Ascending coefficients as a plain list."""
        return list(self.coefficients)


def char_poly(a: IntMatrix) -> IntPolynomial:
    """
    Characteristic polynomial det(xI - A) with exact integer coefficients.

    Args:
        a: Square integer matrix

    Returns:
        Monic IntPolynomial of degree d
    """
    coeffs, _ = faddeev_leverrier(a)
    return IntPolynomial(coeffs)
