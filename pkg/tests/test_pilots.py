import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biasaudit.dgp import Design, PropensityModel, SeriesDensity, sample_conditional, sample_density
from biasaudit.functionals import conditional_bias_oracle_density
from biasaudit.pilots import (
    ORACLE_FOLD,
    FitError,
    Fold,
    FoldError,
    PilotDensity,
    PilotRegression,
    check_folds,
    corrupt_pilot,
    fit_series_density,
    fit_series_regression,
    series_least_squares,
)

SQ2 = math.sqrt(2.0)


def test_first_coefficient_is_one():
    pilot = fit_series_density(Fold(np.random.default_rng(0).random(17), "aux"), 1)
    assert pilot.coefficients[0] == 1.0 and pilot.J == 1 and pilot.fold_id == "aux"


def test_density_fit_second_coefficient():
    x = sample_density(SeriesDensity([1.0, 0.3]), 10**5, np.random.default_rng(1))
    pilot = fit_series_density(Fold(x, "aux"), 2)
    se = np.std(SQ2 * np.cos(np.pi * x), ddof=1) / math.sqrt(len(x))
    assert abs(pilot.coefficients[1] - 0.3) <= 4 * se


def test_symmetric_points_cancel():
    pilot = fit_series_density(Fold([0.25, 0.75], "aux"), 2)
    assert abs(pilot.coefficients[1]) < 1e-15


def test_empty_fold_cannot_be_fitted():
    with pytest.raises(FitError):
        fit_series_density(Fold([], "aux"), 2)


def test_constant_response():
    x = np.random.default_rng(2).random(50)
    ridge = 1e-8
    pilot = fit_series_regression(Fold(x, "aux", np.ones(50)), 1, ridge=ridge, clip=0.05)
    assert pilot.coefficients[0] == pytest.approx(1 / (1 + ridge), rel=1e-12)
    assert np.all(pilot(np.linspace(0, 1, 5)) == 0.95)


def test_bernoulli_half_mean():
    x, a = sample_conditional(Design("iid_uniform", 10**5), PropensityModel([0.5]), np.random.default_rng(3))
    pilot = fit_series_regression(Fold(x, "aux", a), 1)
    assert abs(pilot.coefficients[0] - 0.5) <= 4 * 0.5 / math.sqrt(len(a))


def test_series_regression_recovers_projection():
    pi = PropensityModel([0.5, 0.3])
    x, a = sample_conditional(Design("iid_uniform", 10**5), pi, np.random.default_rng(4))
    pilot = fit_series_regression(Fold(x, "aux", a), 3)
    phi = np.column_stack([np.ones_like(x), SQ2 * np.cos(np.pi * x), SQ2 * np.cos(2 * np.pi * x)])
    # influence-function SE of least squares when the truth lies in the span
    resid = a - pi(x)
    se = np.linalg.solve(phi.T @ phi / len(x), (phi * resid[:, None]).T).std(axis=1, ddof=1) / math.sqrt(len(x))
    assert np.all(np.abs(pilot.coefficients - [0.5, 0.3, 0.0]) <= 4 * se)


def test_least_squares_matches_lstsq():
    rng = np.random.default_rng(5)
    x, y = rng.random(80), rng.normal(size=80)
    phi = np.column_stack([np.ones(80)] + [SQ2 * np.cos(j * np.pi * x) for j in range(1, 4)])
    ref = np.linalg.lstsq(phi, y, rcond=None)[0]
    assert np.allclose(series_least_squares(x, y, 4, ridge=0.0), ref, atol=1e-10)


def test_regression_needs_enough_points():
    with pytest.raises(FitError):
        fit_series_regression(Fold([0.1, 0.2], "aux", [0, 1]), 3)


def test_regression_needs_response():
    with pytest.raises(FitError):
        fit_series_regression(Fold([0.1, 0.2, 0.3], "aux"), 1)


def test_zero_deltas_identity():
    p = PilotDensity([1.0, 0.3])
    q = corrupt_pilot(p, [0.0, 0.0])
    assert np.array_equal(q.coefficients, p.coefficients)


def test_corruption_adds():
    q = corrupt_pilot(PilotDensity([1.0, 0.3]), [0.0, 0.2])
    assert np.allclose(q.coefficients, [1.0, 0.5], atol=1e-15)
    assert np.allclose(q.perturbation, [0.0, 0.2])


def test_corruption_changes_oracle_by_closed_form():
    truth = SeriesDensity([1.0, 0.3, 0.1])
    pilot = PilotDensity([1.0, 0.35, 0.05])
    before = conditional_bias_oracle_density(pilot, truth)
    after = conditional_bias_oracle_density(corrupt_pilot(pilot, [0.0, 0.2]), truth)
    expected = -(0.2**2) - 2 * 0.2 * (0.35 - 0.3)
    assert after - before == pytest.approx(expected, abs=1e-14)


def test_too_many_deltas():
    with pytest.raises(ValueError):
        corrupt_pilot(PilotDensity([1.0, 0.3]), [0, 0, 0.1])


def test_corruption_accumulates_and_keeps_fold():
    p = PilotRegression([0.5, 0.1], fold_id="aux1")
    q = corrupt_pilot(corrupt_pilot(p, [0.1]), [0.0, -0.05])
    assert q.fold_id == "aux1"
    assert np.allclose(q.perturbation, [0.1, -0.05])


def test_fold_discipline():
    check_folds("aux1", "aux2", "main")
    check_folds(ORACLE_FOLD, ORACLE_FOLD, "main")
    with pytest.raises(FoldError):
        check_folds("aux1", "aux1")


def test_regression_pilot_clips_and_reports_kinks():
    p = PilotRegression([0.5, 0.5], clip=0.05)
    v = p(np.linspace(0, 1, 201))
    assert v.min() == 0.05 and v.max() == 0.95
    kinks = p.breakpoints()
    assert len(kinks) == 2
    assert np.allclose(p.raw(np.array(kinks)), [0.95, 0.05], atol=1e-12)


def test_fold_copies_are_read_only():
    src = np.array([0.1, 0.2])
    f = Fold(src, "main")
    src[0] = 0.9
    assert f.x[0] == 0.1
    with pytest.raises(ValueError):
        f.x[0] = 0.5


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(min_value=-0.3, max_value=0.3), min_size=1, max_size=4),
    st.lists(st.floats(min_value=-0.3, max_value=0.3), min_size=1, max_size=4),
)
def test_corruption_is_additive(d1, d2):
    p = PilotDensity([1.0, 0.1, 0.0, 0.0])
    twice = corrupt_pilot(corrupt_pilot(p, d1), d2)
    total = np.zeros(4)
    total[: len(d1)] += d1
    total[: len(d2)] += d2
    assert np.allclose(twice.coefficients, p.coefficients + total, atol=1e-14)
