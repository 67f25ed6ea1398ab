import json

import numpy as np
import pytest
from hypothesis import given

from trsmse.exceptions import EmptyTable, NegativeCount, ParseError, UnknownDataset
from trsmse.table import (
    CellProbabilities,
    EstimateResult,
    TrsTable,
    builtin_dataset,
    dumps_csv,
    load_table,
    load_tables,
    save_table,
    validate_table,
)

from strategies import tables


def test_validate_all_als():
    t = validate_table((24, 23, 19, 9, 10, 10, 12))
    assert (t.x0, t.n1, t.n2, t.n3) == (107, 76, 66, 64)


def test_validate_symmetric(ones):
    t = validate_table([1] * 7)
    assert t == ones
    assert t.x0 == 7 and t.margins == (4, 4, 4)


def test_validate_empty():
    with pytest.raises(EmptyTable):
        validate_table([0] * 7)


def test_validate_negative():
    with pytest.raises(NegativeCount):
        validate_table([1, 1, 1, -1, 1, 1, 1])


@pytest.mark.parametrize("raw", [[1] * 6, [1] * 8, [1, 1, 1, 1.5, 1, 1, 1], [1, 1, "a", 1, 1, 1, 1],
                                 [True, 1, 1, 1, 1, 1, 1], [1, 1, float("nan"), 1, 1, 1, 1]])
def test_validate_malformed(raw):
    with pytest.raises(ParseError):
        validate_table(raw)


def test_validate_mapping():
    t = validate_table({"x111": 10, "x110": 2, "x101": 12, "x011": 4, "x100": 5, "x010": 2,
                        "x001": 5, "label": "d"})
    assert t.counts.tolist() == [10, 2, 12, 4, 5, 2, 5] and t.label == "d"


def test_load_json_wtc(tmp_path):
    p = tmp_path / "wtc.json"
    p.write_text('{"x111":174,"x110":88,"x101":1658,"x011":750,"x100":1702,"x010":270,"x001":4323}')
    assert load_table(p).x0 == 8965


def test_load_csv_symmetric(tmp_path, ones):
    p = tmp_path / "t.csv"
    p.write_text("x111,x110,x101,x011,x100,x010,x001\n1,1,1,1,1,1,1\n")
    assert load_table(p) == ones


def test_load_json_bad_field(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"x112":1,"x110":1,"x101":1,"x011":1,"x100":1,"x010":1,"x001":1}')
    with pytest.raises(ParseError):
        load_table(p)


def test_load_json_missing_field(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"x110":1,"x101":1,"x011":1,"x100":1,"x010":1,"x001":1}')
    with pytest.raises(ParseError):
        load_table(p)


def test_load_missing_file(tmp_path):
    with pytest.raises(ParseError):
        load_table(tmp_path / "nope.json")


def test_load_csv_bad_header(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("x111,x110,x101,x011,x100,x010,x112\n1,1,1,1,1,1,1\n")
    with pytest.raises(ParseError):
        load_table(p)


@pytest.mark.parametrize("fmt", ["json", "csv"])
def test_round_trip(tmp_path, fmt, deployed, wtc):
    p = tmp_path / f"t.{fmt}"
    save_table([deployed, wtc], p)
    back = load_tables(p)
    assert [b.counts.tolist() for b in back] == [deployed.counts.tolist(), wtc.counts.tolist()]


def test_dumps_csv_header(ones):
    assert dumps_csv([ones]).splitlines()[0].startswith("x111,x110,x101,x011,x100,x010,x001")


@pytest.mark.parametrize("name,counts,x0", [
    ("als_deployed", (10, 2, 12, 4, 5, 2, 5), 40),
    ("als_nondeployed", (14, 21, 7, 5, 5, 8, 7), 67),
    ("als_all", (24, 23, 19, 9, 10, 10, 12), 107),
])
def test_builtin(name, counts, x0):
    t = builtin_dataset(name)
    assert tuple(t.counts) == counts and t.x0 == x0


def test_builtin_wtc(wtc):
    assert wtc.x0 == 8965


def test_builtin_unknown():
    with pytest.raises(UnknownDataset):
        builtin_dataset("als_other")


def test_pair_margins(deployed):
    assert deployed.pair_margin("11.") == 12
    assert deployed.pair_margin("1.0") == 7
    assert deployed.pair_margin(".11") == 14
    with pytest.raises(ValueError):
        deployed.pair_margin("1x.")


@given(tables())
def test_margin_consistency(t):
    assert t.x0 == t.n1 + t.x011 + t.x010 + t.x001
    assert t.x0 == t.n2 + t.x101 + t.x100 + t.x001
    assert t.x0 == t.n3 + t.x110 + t.x100 + t.x010


def test_estimate_result_feasibility():
    assert EstimateResult("X", 41.0, 40).feasible
    assert not EstimateResult("X", 39.0, 40).feasible
    assert not EstimateResult("X", float("nan"), 40).feasible


def test_estimate_result_json():
    d = EstimateResult("X", 43.9123, 40, diagnostics={"a": np.float64(1.5), "b": np.arange(2)}).to_dict()
    assert d["n_hat"] == 43.91 and d["n_hat_rounded"] == 44
    json.dumps(d)


def test_cell_probabilities():
    cp = CellProbabilities((0.125,) * 8)
    assert cp["000"] == 0.125 and cp.observed.shape == (7,)
    with pytest.raises(ValueError):
        CellProbabilities((0.1,) * 8)
