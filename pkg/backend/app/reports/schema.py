"""Pydantic documents for the JSON reports.

Non-finite floats (an infinite dissipation rate, a divergent dynamo rate)
are written as null and carried by explicit flags.
"""

import math

from pydantic import BaseModel, Field

from app.services.arithmin import MinCurve
from app.services.dissipation import DissipationReport
from app.services.dynamo import DynamoReport
from app.services.spectral import (
    AffineClassification,
    DegeneracyAnalysis,
    FactorBlock,
    SpectralReport,
)


def finite(value: float | None) -> float | None:
    """Return value, or None when it is missing or not finite."""
    if value is None or not math.isfinite(value):
        return None
    return value


# Spectral schemas
class FactorDocument(BaseModel):
    """One irreducible factor block."""

    coefficients: list[int]
    degree: int
    multiplicity: int
    entropy_hj: float
    h_hat_j: float
    cyclotomic_order: int | None = None

    @classmethod
    def from_block(cls, block: FactorBlock) -> "FactorDocument":
        return cls(
            coefficients=block.poly.to_list(),
            degree=block.degree,
            multiplicity=block.multiplicity,
            entropy_hj=block.entropy,
            h_hat_j=block.h_hat,
            cyclotomic_order=block.cyclotomic_order,
        )


class SpectralDocument(BaseModel):
    """SpectralReport as JSON; eigenvalues are [re, im, multiplicity] triples."""

    matrix: str
    char_poly: list[int]
    eigenvalues: list[tuple[float, float, int]]
    entropy_h: float
    spectral_radius_rho: float
    ergodic: bool
    diagonalizable: bool
    zero_entropy: bool
    irreducible: bool
    factors: list[FactorDocument]
    h_hat: float
    lambda_hat_geo: float
    cyclotomic_orders: list[int] = Field(default_factory=list)

    @classmethod
    def from_report(cls, report: SpectralReport) -> "SpectralDocument":
        return cls(
            matrix=report.matrix.to_text(),
            char_poly=report.char_poly.to_list(),
            eigenvalues=[(z.real, z.imag, m) for z, m in report.eigenvalues],
            entropy_h=report.entropy,
            spectral_radius_rho=report.spectral_radius,
            ergodic=report.ergodic,
            diagonalizable=report.diagonalizable,
            zero_entropy=report.zero_entropy,
            irreducible=report.irreducible,
            factors=[FactorDocument.from_block(b) for b in report.factors],
            h_hat=report.h_hat,
            lambda_hat_geo=report.lambda_hat_geo,
            cyclotomic_orders=report.cyclotomic_orders,
        )


# Minimum curve schemas
class MinCurveDocument(BaseModel):
    """Summary of a MinCurve; the table itself is written as CSV."""

    matrix: str
    alpha: float
    variant: str
    n_min: int
    n_max: int
    certified: bool
    growth_rate_fit: float | None = None
    h_hat_predicted: float
    linear_growth: bool | None = None

    @classmethod
    def from_curve(
        cls,
        matrix: str,
        curve: MinCurve,
        h_hat_predicted: float,
        growth_rate_fit: float | None,
        linear_growth: bool | None,
    ) -> "MinCurveDocument":
        ns = curve.ns()
        return cls(
            matrix=matrix,
            alpha=curve.alpha,
            variant=str(curve.variant),
            n_min=ns[0],
            n_max=ns[-1],
            certified=all(r.certified for r in curve.entries.values()),
            growth_rate_fit=finite(growth_rate_fit),
            h_hat_predicted=h_hat_predicted,
            linear_growth=linear_growth,
        )


# Dissipation schemas
class DissipationEntryDocument(BaseModel):
    """One row of a dissipation sweep."""

    epsilon: float
    n_diss: int
    log_norm: float


class DissipationDocument(BaseModel):
    """DissipationReport as JSON."""

    matrix: str
    alpha: float
    eta: float
    coarse: bool
    entries: list[DissipationEntryDocument]
    classification: str
    r_diss_fit: float | None = None
    r_diss_predicted: float | None = None
    r_diss_infinite: bool = False
    fit_residual: float | None = None
    fit_points: int = 0
    notes: list[str] = Field(default_factory=list)

    @classmethod
    def from_report(
        cls, matrix: str, eta: float, report: DissipationReport
    ) -> "DissipationDocument":
        return cls(
            matrix=matrix,
            alpha=report.alpha,
            eta=eta,
            coarse=report.coarse,
            entries=[
                DissipationEntryDocument(epsilon=e.epsilon, n_diss=e.n_diss, log_norm=e.log_norm)
                for e in report.entries
            ],
            classification=str(report.classification),
            r_diss_fit=finite(report.r_diss_fit),
            r_diss_predicted=finite(report.r_diss_predicted),
            r_diss_infinite=math.isinf(report.r_diss_predicted),
            fit_residual=finite(report.fit_residual),
            fit_points=report.fit_points,
            notes=report.notes,
        )


# Dynamo schemas
class DynamoDocument(BaseModel):
    """DynamoReport as JSON; the per-n curve is written as CSV."""

    matrix: str
    epsilon: float
    alpha: float
    r_dyn: float | None = None
    r_dyn_divergent: bool = False
    r_dyn_predicted: float | None = None
    n_p: int | None = None
    peak_log_norm: float | None = None
    n_th: int | None = None
    cap_reached: bool = False
    gamma_fit: float | None = None
    gamma_predicted: float | None = None
    classification: str
    notes: list[str] = Field(default_factory=list)

    @classmethod
    def from_report(cls, matrix: str, report: DynamoReport) -> "DynamoDocument":
        return cls(
            matrix=matrix,
            epsilon=report.epsilon,
            alpha=report.alpha,
            r_dyn=finite(report.r_dyn),
            r_dyn_divergent=report.r_dyn_divergent,
            r_dyn_predicted=finite(report.r_dyn_predicted),
            n_p=report.n_p,
            peak_log_norm=report.peak_log_norm,
            n_th=report.n_th,
            cap_reached=report.cap_reached,
            gamma_fit=report.gamma_fit,
            gamma_predicted=report.gamma_predicted,
            classification=str(report.classification),
            notes=report.notes,
        )


# Simulation schemas
class NormCheckDocument(BaseModel):
    """Truncated versus analytic norm at one n."""

    n: int
    truncated: float
    analytic: float
    valid: bool
    deviation: float


class SimulationDocument(BaseModel):
    """Summary of a simulate run."""

    matrix: str
    shift: str | None = None
    epsilon: float
    alpha: float
    cutoff: int
    steps: int
    initial: str
    norm_checks: list[NormCheckDocument]
    max_valid_deviation: float | None = None
    entropy_start: float
    entropy_end: float
    l2_start: float
    l2_end: float
    dropped_mass: float
    resolvent_norm: float | None = None


# Classification schemas
class AffineDocument(BaseModel):
    """Ergodicity verdict of an affine map."""

    matrix: str
    shift: str | None = None
    verdict: str
    exact: bool
    witness: list[int] | None = None
    relation_height: int | None = None

    @classmethod
    def from_classification(
        cls, matrix: str, shift: str | None, result: AffineClassification
    ) -> "AffineDocument":
        return cls(
            matrix=matrix,
            shift=shift,
            verdict=str(result.verdict),
            exact=result.exact,
            witness=list(result.witness) if result.witness is not None else None,
            relation_height=result.relation_height,
        )


class DegeneracyDocument(BaseModel):
    """Span test of degenerate noise."""

    matrix: str
    degeneracy: list[list[float]]
    case: str
    rank: int
    nondegenerate: int

    @classmethod
    def from_analysis(
        cls, matrix: str, degeneracy: list[list[float]], analysis: DegeneracyAnalysis
    ) -> "DegeneracyDocument":
        return cls(
            matrix=matrix,
            degeneracy=degeneracy,
            case=str(analysis.case),
            rank=analysis.rank,
            nondegenerate=analysis.nondegenerate,
        )
