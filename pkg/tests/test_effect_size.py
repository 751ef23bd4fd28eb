import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mixmeta.effect_size import (
    Dataset,
    EffectEstimate,
    TwoByTwoTable,
    escalc_dataset,
    log_odds_ratio,
    wald_ci,
)
from mixmeta.errors import InputError

# log-OR and 95% CI as printed for the migraine data
MIGRAINE_PUBLISHED = [
    (0.454, -0.876, 1.785), (-0.496, -1.034, 0.041), (0.318, -0.207, 0.844),
    (-0.292, -1.033, 0.449), (0.216, -0.797, 1.230), (-0.174, -1.014, 0.666),
    (0.472, 0.068, 0.876), (0.398, -0.076, 0.872), (1.035, 0.406, 1.664),
    (-0.024, -0.412, 0.364), (1.599, 0.982, 2.216), (1.458, 0.350, 2.565),
    (-0.144, -0.506, 0.218), (0.304, -0.013, 0.621), (0.375, -0.477, 1.226),
    (0.533, 0.046, 1.019), (-0.101, -0.579, 0.377), (0.654, 0.300, 1.008),
    (0.300, -0.031, 0.631), (-0.331, -1.019, 0.357), (2.079, 0.246, 3.913),
    (0.941, 0.195, 1.688), (-0.073, -0.630, 0.485),
]

# OR and 95% CI as printed for the transplant data (3 decimals, or 4 significant)
TRANSPLANT_PUBLISHED = [
    ("1.000", "0.057", "17.62"), ("0.775", "0.515", "1.164"), ("0.238", "0.055", "1.030"),
    ("0.942", "0.671", "1.321"), ("0.466", "0.167", "1.301"), ("0.810", "0.386", "1.698"),
    ("0.768", "0.376", "1.569"), ("0.681", "0.165", "2.804"), ("0.433", "0.095", "1.980"),
    ("0.786", "0.454", "1.360"), ("1.213", "0.549", "2.678"), ("0.455", "0.109", "1.890"),
    ("0.547", "0.322", "0.929"), ("0.984", "0.511", "1.893"), ("0.099", "0.031", "0.322"),
    ("0.284", "0.081", "1.000"),
]


def published_tolerance(text):
    decimals = len(text.split(".")[1]) if "." in text else 0
    return 0.5 * 10.0**-decimals + 1e-9


def test_ueberall_row():
    e = log_odds_ratio(TwoByTwoTable("Ueberall (1999)", "children", 12, 14, 6, 14))
    assert e.y == pytest.approx(math.log(8.0))
    lo, hi = wald_ci(e)
    assert round(lo, 3) == 0.246 and round(hi, 3) == 3.913


def test_equal_arms_give_zero():
    e = log_odds_ratio(TwoByTwoTable("s", "g", 1, 15, 1, 15))
    assert e.y == 0.0


def test_heffron_row():
    e = log_odds_ratio(TwoByTwoTable("Heffron (2003)", "children", 14, 61, 15, 20))
    lo, hi = wald_ci(e)
    assert [round(v, 3) for v in np.exp([e.y, lo, hi])] == [0.099, 0.031, 0.322]


def test_wald_ci_standard_normal():
    lo, hi = wald_ci(EffectEstimate("s", "g", 0.0, 1.0), 0.95)
    assert lo == pytest.approx(-1.959964, abs=1e-6)
    assert hi == pytest.approx(1.959964, abs=1e-6)


def test_wald_ci_backsolved_se():
    # se back-solved from the printed half-width (1.785 + 0.876) / 2 / 1.96
    lo, hi = wald_ci(EffectEstimate("s", "g", 0.454, 0.679), 0.95)
    assert lo == pytest.approx(-0.876, abs=1.5e-3)
    assert hi == pytest.approx(1.785, abs=1.5e-3)


@pytest.mark.parametrize("level", [0.0, 1.0, -0.1, 1.5])
def test_wald_ci_rejects_bad_level(level):
    with pytest.raises(InputError):
        wald_ci(EffectEstimate("s", "g", 0.0, 1.0), level)


def test_migraine_table_reproduced(migraine):
    tables, data, _, _ = migraine
    assert len(tables) == 23
    for e, (y, lo, hi) in zip(data.estimates, MIGRAINE_PUBLISHED):
        clo, chi = wald_ci(e)
        assert e.y == pytest.approx(y, abs=1e-3)
        assert clo == pytest.approx(lo, abs=1e-3)
        assert chi == pytest.approx(hi, abs=1e-3)


def test_transplant_table_reproduced(transplant):
    tables, data, _, _ = transplant
    assert len(tables) == 16
    for e, printed in zip(data.estimates, TRANSPLANT_PUBLISHED):
        lo, hi = wald_ci(e)
        for value, text in zip(np.exp([e.y, lo, hi]), printed):
            assert abs(value - float(text)) <= published_tolerance(text)


def test_group_counts(migraine, transplant):
    _, mdata, _, _ = migraine
    _, tdata, _, _ = transplant
    labels = [e.group_label for e in mdata.estimates]
    assert labels.count("adolescents") == 20 and labels.count("children") == 3
    labels = [e.group_label for e in tdata.estimates]
    assert labels.count("adults") == 14 and labels.count("children") == 2


def test_zero_cell_correction_applies_to_that_table_only():
    e = log_odds_ratio(TwoByTwoTable("z", "g", 0, 10, 3, 10))
    a, b, c, d = 0.5, 10.5, 3.5, 7.5
    assert e.y == pytest.approx(math.log(a * d / (b * c)))
    assert e.se == pytest.approx(math.sqrt(1 / a + 1 / b + 1 / c + 1 / d))
    untouched = log_odds_ratio(TwoByTwoTable("n", "g", 2, 10, 3, 10))
    assert untouched.se == pytest.approx(math.sqrt(1 / 2 + 1 / 8 + 1 / 3 + 1 / 7))


@pytest.mark.parametrize("counts", [(5, 4, 1, 4), (-1, 4, 1, 4), (1, 0, 1, 4), (1, 4, 1, 0), (1, 4, 5, 4)])
def test_invalid_tables_rejected(counts):
    with pytest.raises(InputError):
        TwoByTwoTable("s", "g", *counts)


def test_escalc_empty_rejected():
    with pytest.raises(InputError):
        escalc_dataset([])


def test_dataset_invariants():
    with pytest.raises(InputError):
        Dataset(())
    with pytest.raises(InputError):
        Dataset.from_arrays([0.1], [0.0])
    with pytest.raises(InputError):
        Dataset.from_arrays([np.nan], [1.0])


counts = st.integers(min_value=1, max_value=500)


@given(counts, counts, counts, counts)
def test_arm_swap_negates_estimate(a, b, c, d):
    t = TwoByTwoTable("s", "g", a, a + b, c, c + d)
    swapped = TwoByTwoTable("s", "g", c, c + d, a, a + b)
    e, f = log_odds_ratio(t), log_odds_ratio(swapped)
    assert f.y == pytest.approx(-e.y, abs=1e-12)
    assert f.se == pytest.approx(e.se, rel=1e-12)


@given(counts, counts, counts, counts, st.integers(min_value=2, max_value=20))
def test_scaling_counts_shrinks_se(a, b, c, d, factor):
    t = TwoByTwoTable("s", "g", a, a + b, c, c + d)
    big = TwoByTwoTable("s", "g", a * factor, (a + b) * factor, c * factor, (c + d) * factor)
    assert log_odds_ratio(big).se < log_odds_ratio(t).se
