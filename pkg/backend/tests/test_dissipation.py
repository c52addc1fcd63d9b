"""Tests for dissipation times and rate fits."""

import math

import numpy as np
import pytest
from app.config import get_settings, override_settings
from app.errors import BudgetError, PreconditionError
from app.linalg.matrix import IntMatrix, RatMatrix
from app.services.arithmin import InsufficientData, Variant, get_solver, random_unimodular
from app.services.dissipation import (
    InfiniteDissipation,
    NoiseModel,
    Regime,
    classify,
    coarse_saturation_bound,
    dissipation_sweep,
    n_diss,
    n_diss_coarse,
    operator_norm,
    r_diss_fit,
    sweep_report,
    threshold_robustness,
)
from app.services.spectral import parse_degeneracy

CAT_GRID = [10.0**-p for p in range(3, 10)]
CAT_R_DISS = 1.0390483


def test_operator_norm_identity(identity2: IntMatrix) -> None:
    """Test ‖T^100‖ = e⁻¹ for the identity at ε = 0.01."""
    norm = operator_norm(identity2, NoiseModel(epsilon=0.01), 100)
    assert norm.log_norm == pytest.approx(-1.0, abs=1e-12)
    assert norm.norm == pytest.approx(math.exp(-1.0))


def test_operator_norm_cat(cat: IntMatrix) -> None:
    """Test e^{-M(n)} at ε = 1 for n = 1 and n = 3."""
    noise = NoiseModel(epsilon=1.0)
    assert operator_norm(cat, noise, 1).log_norm == pytest.approx(-1.0)
    three = operator_norm(cat, noise, 3)
    assert three.log_norm == pytest.approx(-8.0)
    assert three.minimum.argmin == (2, -3)


def test_operator_norm_stays_in_log_space(cat: IntMatrix) -> None:
    """Test that tiny norms underflow to 0 while the log-norm stays finite."""
    norm = operator_norm(cat, NoiseModel(epsilon=1.0), 30)
    assert norm.norm == 0.0
    assert math.isfinite(norm.log_norm)
    assert norm.log_norm < -1e10


def test_n_diss_identity_and_shear(identity2: IntMatrix, shear: IntMatrix) -> None:
    """Test n_diss = 101 at ε = 0.01 when M(n) = n (strict crossing)."""
    noise = NoiseModel(epsilon=0.01)
    assert n_diss(identity2, noise) == 101
    assert n_diss(shear.transpose(), noise) == 101


def test_n_diss_cat(cat: IntMatrix) -> None:
    """Test the cat-map dissipation times read off M(n) = F_{2n}."""
    expected = [9, 11, 13, 16, 18, 20, 23]
    assert [n_diss(cat, NoiseModel(epsilon=e)) for e in CAT_GRID] == expected


def test_n_diss_brackets_the_threshold(cat: IntMatrix) -> None:
    """Test ε·M(n_diss - 1) <= ln(1/η) < ε·M(n_diss)."""
    noise = NoiseModel(epsilon=1e-6)
    n = n_diss(cat, noise)
    assert n == 16
    assert operator_norm(cat, noise, n).norm < noise.threshold_eta
    assert operator_norm(cat, noise, n - 1).norm >= noise.threshold_eta


def test_n_diss_is_monotone_in_epsilon(plastic: IntMatrix) -> None:
    """Test that smaller noise never dissipates sooner."""
    times = [n_diss(plastic, NoiseModel(epsilon=e)) for e in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert times == sorted(times)


def test_n_diss_needs_positive_noise(cat: IntMatrix) -> None:
    """Test the ε > 0 precondition."""
    with pytest.raises(PreconditionError):
        n_diss(cat, NoiseModel(epsilon=0.0))


def test_noise_model_validation() -> None:
    """Test parameter ranges of the noise model."""
    with pytest.raises(PreconditionError):
        NoiseModel(epsilon=-1.0)
    with pytest.raises(PreconditionError):
        NoiseModel(epsilon=0.1, alpha=1.5)
    with pytest.raises(PreconditionError):
        NoiseModel(epsilon=0.1, threshold_eta=1.0)
    assert NoiseModel(epsilon=0.1).log_threshold == pytest.approx(1.0)


def test_classify(cat: IntMatrix, shear: IntMatrix, plastic: IntMatrix) -> None:
    """Test logarithmic iff ergodic."""
    assert classify(cat) is Regime.LOGARITHMIC
    assert classify(plastic) is Regime.LOGARITHMIC
    assert classify(shear) is Regime.SIMPLE


def test_r_diss_fit_cat(cat: IntMatrix) -> None:
    """Test the fitted rate constant against 1/(2αĥ)."""
    report = r_diss_fit(cat, 1.0, CAT_GRID, threads=2)
    assert report.classification is Regime.LOGARITHMIC
    assert report.r_diss_predicted == pytest.approx(CAT_R_DISS, rel=1e-6)
    assert report.r_diss_fit == pytest.approx(CAT_R_DISS, rel=0.05)
    assert report.fit_points == 5
    assert [e.n_diss for e in report.entries] == [9, 11, 13, 16, 18, 20, 23]


@pytest.mark.slow
def test_r_diss_fit_cat_alpha_half(cat: IntMatrix) -> None:
    """Test the α-scaling of the rate constant."""
    report = r_diss_fit(cat, 0.5, CAT_GRID)
    assert report.r_diss_predicted == pytest.approx(2 * CAT_R_DISS, rel=1e-6)
    assert report.r_diss_fit == pytest.approx(2.0780966, rel=0.05)


@pytest.mark.slow
def test_r_diss_fit_three_torus(plastic: IntMatrix) -> None:
    """Test the rate constant 3/(2 h) of the plastic companion."""
    grid = [10.0**-p for p in range(4, 11)]
    report = r_diss_fit(plastic, 1.0, grid)
    assert report.r_diss_predicted == pytest.approx(5.3345, rel=1e-3)
    assert report.r_diss_fit == pytest.approx(5.3345, rel=0.10)


def test_r_diss_fit_simple_class(identity2: IntMatrix) -> None:
    """Test ε·n_diss -> 1 for the identity."""
    report = r_diss_fit(identity2, 1.0, [1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
    assert report.classification is Regime.SIMPLE
    assert report.r_diss_fit == pytest.approx(1.0, abs=0.02)
    assert report.r_diss_predicted == pytest.approx(1.0, abs=1e-9)
    for entry in report.entries:
        assert 0.98 <= entry.epsilon * entry.n_diss <= 1.02


def test_simple_class_at_small_noise(identity2: IntMatrix, shear: IntMatrix) -> None:
    """Test ε·n_diss within 2% of 1 at ε = 1e-4."""
    noise = NoiseModel(epsilon=1e-4)
    for a in (identity2, shear.transpose()):
        assert 0.98 <= 1e-4 * n_diss(a, noise) <= 1.02


def test_r_diss_fit_needs_fit_points(identity2: IntMatrix) -> None:
    """Test InsufficientData below fit_points epsilons and a fit at exactly fit_points."""
    grid = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
    assert get_settings().fit_points == 5
    for short in (grid[:1], grid[:2], grid[:4]):
        with pytest.raises(InsufficientData):
            r_diss_fit(identity2, 1.0, short)
    report = r_diss_fit(identity2, 1.0, grid)
    assert report.fit_points == 5
    with override_settings(fit_points=3):
        assert r_diss_fit(identity2, 1.0, grid[:3]).fit_points == 3


def test_sweep_report_without_fit(cat: IntMatrix, identity2: IntMatrix) -> None:
    """Test times, regime and predicted rate for grids too short to fit."""
    report = sweep_report(cat, 1.0, [1e-3, 1e-4, 1e-5])
    assert [e.n_diss for e in report.entries] == [9, 11, 13]
    assert report.classification is Regime.LOGARITHMIC
    assert math.isnan(report.r_diss_fit)
    assert report.r_diss_predicted == pytest.approx(CAT_R_DISS, rel=1e-6)
    assert report.notes == ["3 epsilons; rate fit needs 5"]
    single = sweep_report(identity2, 1.0, [0.01])
    assert single.classification is Regime.SIMPLE
    assert single.entries[0].n_diss == 101
    assert single.notes == ["single epsilon; no rate fit"]


def test_sweep_report_unstable_degeneracy(cat: IntMatrix) -> None:
    """Test the none regime without a fit."""
    b = parse_degeneracy("unstable", cat)
    report = sweep_report(cat, 1.0, [1e-3, 1e-4], degeneracy=b)
    assert report.classification is Regime.NONE
    assert report.entries == []


def test_n_diss_of_nonergodic_map_with_entropy(cat_with_fixed_axis: IntMatrix) -> None:
    """Test that a fixed axis gives M(n) = n and n_diss = 1/ε + 1 at small noise."""
    a = cat_with_fixed_axis.transpose()
    assert n_diss(a, NoiseModel(epsilon=1e-5)) == 100001
    assert n_diss(a, NoiseModel(epsilon=1e-3)) == 1001
    norm = operator_norm(a, NoiseModel(epsilon=1e-5), 100001)
    assert norm.log_norm == pytest.approx(-1.00001, rel=1e-12)


def test_n_diss_cap(cat: IntMatrix) -> None:
    """Test BudgetError once the bracket passes max_dissipation_steps."""
    with override_settings(max_dissipation_steps=6):
        with pytest.raises(BudgetError):
            n_diss(cat, NoiseModel(epsilon=1e-8))
        assert n_diss(cat, NoiseModel(epsilon=1.0)) == 2


def test_dissipation_sweep_orders_by_decreasing_epsilon(cat: IntMatrix) -> None:
    """Test sweep ordering and the recorded log-norm."""
    entries = dissipation_sweep(cat, 1.0, [1e-5, 1e-3, 1e-4], threads=3)
    assert [e.epsilon for e in entries] == [1e-3, 1e-4, 1e-5]
    for entry in entries:
        assert entry.log_norm < -1.0


def test_degenerate_unstable_noise_never_dissipates(cat: IntMatrix) -> None:
    """Test InfiniteDissipation and the none regime for B = uuᵀ."""
    b = parse_degeneracy("unstable", cat)
    with pytest.raises(InfiniteDissipation):
        n_diss(cat, NoiseModel(epsilon=1e-3, degeneracy=b))
    report = r_diss_fit(cat, 1.0, [1e-3, 1e-4, 1e-5, 1e-6, 1e-7], degeneracy=b)
    assert report.classification is Regime.NONE
    assert math.isinf(report.r_diss_predicted)
    assert report.entries == []


def test_degenerate_projection_dissipates_later(cat: IntMatrix) -> None:
    """Test n_diss <= n_diss(B) <= n_diss + 4 for B = diag(1,0)."""
    b = RatMatrix.from_text("1,0;0,0")
    for epsilon in (1e-4, 1e-6):
        full = n_diss(cat, NoiseModel(epsilon=epsilon))
        degenerate = n_diss(cat, NoiseModel(epsilon=epsilon, degeneracy=b))
        assert full <= degenerate <= full + 4


@pytest.mark.slow
def test_degenerate_projection_keeps_the_rate(cat: IntMatrix) -> None:
    """Test that B = diag(1,0) stays logarithmic with the B = I rate within 10%."""
    b = RatMatrix.from_text("1,0;0,0")
    full = r_diss_fit(cat, 1.0, CAT_GRID)
    degenerate = r_diss_fit(cat, 1.0, CAT_GRID, degeneracy=b)
    assert degenerate.classification is Regime.LOGARITHMIC
    assert degenerate.r_diss_fit == pytest.approx(full.r_diss_fit, rel=0.10)


def test_coarse_dissipation_of_cat(cat: IntMatrix) -> None:
    """Test n̂ = 1 at ε = 1 and agreement with n_diss at small noise."""
    assert n_diss_coarse(cat, NoiseModel(epsilon=1.0)) == 1
    for epsilon in (1e-6, 1e-8):
        standard = n_diss(cat, NoiseModel(epsilon=epsilon))
        coarse = n_diss_coarse(cat, NoiseModel(epsilon=epsilon))
        assert abs(coarse - standard) <= 2
        assert 0.85 <= coarse / standard <= 1.1


def test_coarse_dissipation_saturates_for_identity(identity2: IntMatrix) -> None:
    """Test that the bounded coarse minimum of the identity never crosses."""
    assert coarse_saturation_bound(identity2, 1.0) == pytest.approx(2.0)
    with pytest.raises(InfiniteDissipation):
        n_diss_coarse(identity2, NoiseModel(epsilon=0.1))


def test_coarse_saturation_bound_of_ergodic_map(cat: IntMatrix) -> None:
    """Test that ergodic maps have no saturation bound."""
    assert coarse_saturation_bound(cat, 1.0) is None


def test_coarse_report(cat: IntMatrix) -> None:
    """Test that the coarse variant flows through the rate fit."""
    report = r_diss_fit(cat, 1.0, [1e-4, 1e-5, 1e-6, 1e-7, 1e-8], coarse=True)
    assert report.coarse
    assert report.classification is Regime.LOGARITHMIC
    assert len(report.entries) == 5


@pytest.mark.parametrize("epsilon", [1.0, 1e-2, 1e-4, 1e-6])
def test_coarse_bisection_matches_linear_scan(cat: IntMatrix, epsilon: float) -> None:
    """Test the bracketed coarse time against the first crossing found step by step."""
    noise = NoiseModel(epsilon=epsilon)
    solver = get_solver(cat, 1.0, Variant.COARSE)
    n = 1
    while epsilon * float(solver.minimum(n).value) <= 1.0 + 1e-12:
        n += 1
    assert n_diss_coarse(cat, noise) == n


def test_coarse_dissipation_cap(cat: IntMatrix) -> None:
    """Test BudgetError once the coarse bracket passes coarse_scan_cap."""
    with override_settings(coarse_scan_cap=4):
        with pytest.raises(BudgetError):
            n_diss_coarse(cat, NoiseModel(epsilon=1e-8))


def test_threshold_robustness_cat(cat: IntMatrix) -> None:
    """Test that changing η stays within the ceil(ln η'/ln η) bound."""
    rows = threshold_robustness(cat, 1.0, [1e-6], [math.exp(-1.0), 0.5, 0.1])
    assert len(rows) == 3
    assert rows[0].ratio == 1.0
    assert all(row.within_bounds for row in rows)
    assert all(0.25 <= row.ratio <= 4 for row in rows)


def test_threshold_robustness_identity(identity2: IntMatrix) -> None:
    """Test n_diss = 201 at η = e⁻² against 101 at η = e⁻¹."""
    rows = threshold_robustness(identity2, 1.0, [0.01], [math.exp(-1.0), math.exp(-2.0)])
    assert [row.n_diss for row in rows] == [101, 201]
    assert rows[1].ratio == pytest.approx(201 / 101)
    assert rows[1].within_bounds


RANDOM_MAPS = [
    random_unimodular(d, 6, np.random.default_rng(200 + seed)) for d in (2, 3) for seed in range(4)
]


@pytest.mark.parametrize("a", RANDOM_MAPS, ids=str)
def test_log_norm_decays_at_least_linearly(a: IntMatrix) -> None:
    """Test log‖Tⁿ‖ <= -εn, since every term of M(n) is at least 1."""
    for epsilon in (1.0, 0.1):
        noise = NoiseModel(epsilon=epsilon)
        for n in range(1, 7):
            assert operator_norm(a, noise, n).log_norm <= -epsilon * n * (1 - 1e-12)


@pytest.mark.parametrize("a", RANDOM_MAPS, ids=str)
def test_n_diss_bounded_by_inverse_noise(a: IntMatrix) -> None:
    """Test n_diss <= ceil(1/ε) + 1."""
    for epsilon in (0.1, 0.01, 3e-3):
        assert n_diss(a, NoiseModel(epsilon=epsilon)) <= math.ceil(1 / epsilon) + 1


@pytest.mark.parametrize("a", RANDOM_MAPS, ids=str)
def test_n_diss_nonincreasing_in_alpha(a: IntMatrix) -> None:
    """Test that a smaller stability index never dissipates sooner."""
    times = [n_diss(a, NoiseModel(epsilon=1e-2, alpha=alpha)) for alpha in (0.25, 0.5, 0.75, 1.0)]
    assert times == sorted(times, reverse=True)
