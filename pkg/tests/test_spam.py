import csv

import numpy as np
import pytest

from synlattice.spam import SpamModel, apply_to_table
from synlattice.utils.validation import ValidationError


def test_endpoints_are_exact():
    model = SpamModel.populations()
    result = model.renormalize([0.32, 0.93])
    assert result.values.tolist() == [0.0, 1.0]
    assert not result.flagged


def test_roundtrip(rng):
    model = SpamModel.pair_state()
    p = rng.uniform(0, 1, 200)
    np.testing.assert_allclose(model.renormalize(model.forward(p)).values, p, atol=1e-12)


def test_excursions_are_flagged_not_clamped():
    result = SpamModel().renormalize([0.30, 0.95])
    assert result.values[0] < 0 and result.values[1] > 1
    assert result.out_of_range.tolist() == [True, True]
    assert result.flagged


@pytest.mark.parametrize("upper, lower", [(0.5, 0.5), (0.3, 0.5), (1.2, 0.3), (0.9, -0.1)])
def test_invalid_levels(upper, lower):
    with pytest.raises(ValidationError):
        SpamModel(upper, lower)


def test_non_finite_populations():
    with pytest.raises(ValidationError):
        SpamModel().renormalize([np.nan])


def test_apply_to_table(tmp_path):
    source = tmp_path / "raw.csv"
    source.write_text("t_us,P_0,P_1\n0.0,0.93,0.32\n1.0,0.625,0.20\n")
    destination = tmp_path / "out" / "renormalized.csv"
    flagged = apply_to_table(SpamModel.populations(), source, destination)
    assert flagged == 1
    with open(destination, newline="") as f:
        rows = list(csv.DictReader(f))
    assert rows[0] == {"t_us": "0.0", "P_0": "1.0", "P_1": "0.0"}
    assert float(rows[1]["P_0"]) == pytest.approx(0.5)
    assert float(rows[1]["P_1"]) < 0


def test_apply_to_table_forward_and_missing_columns(tmp_path):
    source = tmp_path / "ideal.csv"
    source.write_text("t_us,P00\n0.0,1.0\n")
    destination = tmp_path / "bare.csv"
    assert apply_to_table(SpamModel.pair_state(), source, destination, inverse=False) == 0
    with open(destination, newline="") as f:
        assert float(next(csv.DictReader(f))["P00"]) == pytest.approx(0.86)
    with pytest.raises(ValidationError):
        apply_to_table(SpamModel(), source, destination, columns=["P_7"])
