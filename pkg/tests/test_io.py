import numpy as np
import pytest

from mezo import fitkit
from mezo.io import Provenance, load_series, load_wealth_list, write_csv, write_svg

PROV = Provenance(seed=5, scenario_hash="ab" * 32)


def _write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_series_valid(tmp_path):
    t, v = load_series(_write(tmp_path, "time,value\n0,1.0\n2,3.5\n1,2.0\n"))
    assert len(t) == 3
    np.testing.assert_array_equal(t, [0, 1, 2])
    np.testing.assert_array_equal(v, [1.0, 2.0, 3.5])


def test_load_series_skips_comment_header(tmp_path):
    t, v = load_series(_write(tmp_path, "# mezo 0.1.0\n# seed=1\ntime,value\n0,1\n1,2\n"))
    assert t.tolist() == [0, 1]


@pytest.mark.parametrize("text, match", [
    ("time,value\n0,1\n0,2\n", "duplicate time"),
    ("time,value\n0,1\n1,-2\n", "> 0"),
    ("time,value\n0,1\n1\n", "ragged"),
    ("t,v\n0,1\n", "header"),
    ("time,value\n0,abc\n", "not a number"),
    ("time,value\n0,inf\n", "finite"),
    ("time,value\n", "no data"),
])
def test_load_series_errors(tmp_path, text, match):
    with pytest.raises(ValueError, match=match):
        load_series(_write(tmp_path, text))


def test_non_positive_series_caught_before_estimation(tmp_path):
    p = _write(tmp_path, "time,value\n" + "".join(f"{i},{1 + (i % 7) - 3}\n" for i in range(500)))
    with pytest.raises(ValueError, match="> 0"):
        fitkit.beta_from_series(load_series(p)[1])


def test_load_series_allows_signed_values_when_asked(tmp_path):
    _, v = load_series(_write(tmp_path, "time,value\n0,-1\n1,2\n"), positive=False)
    assert v.tolist() == [-1, 2]


def test_missing_file(tmp_path):
    with pytest.raises(ValueError, match="not found"):
        load_series(tmp_path / "nope.csv")


def test_wealth_list_sorted_descending(tmp_path):
    w = load_wealth_list(_write(tmp_path, "size\n3\n10\n1\n7\n"))
    assert w.tolist() == [10, 7, 3, 1]
    w = load_wealth_list(_write(tmp_path, "rank,size\n2,5\n1,9\n3,4\n", "ranked.csv"))
    assert w.tolist() == [9, 5, 4]


@pytest.mark.parametrize("text", ["size\n1\n0\n", "wealth\n1\n", "size\n"])
def test_wealth_list_errors(tmp_path, text):
    with pytest.raises(ValueError):
        load_wealth_list(_write(tmp_path, text))


def test_csv_header_and_exact_round_trip(tmp_path):
    vals = [0.1, 1 / 3, 1e-300, 12345.678901234567]
    p = write_csv(tmp_path / "out.csv", ["time", "value"], enumerate(vals, start=1), PROV)
    lines = p.read_text().splitlines()
    assert lines[:3] == ["# mezo 0.1.0", "# seed=5", f"# scenario_sha256={'ab' * 32}"]
    assert lines[3] == "time,value"
    _, v = load_series(p)
    assert v.tolist() == vals


def test_svg_deterministic_with_provenance(tmp_path):
    x = np.linspace(0, 10, 50)
    series = {"a": (x, np.exp(x)), "b": (x, np.exp(-x) + 1)}
    a = write_svg(tmp_path / "a.svg", series, PROV, title="t", logy=True)
    b = write_svg(tmp_path / "b.svg", series, PROV, title="t", logy=True)
    assert a.read_bytes() == b.read_bytes()
    text = a.read_text()
    assert "seed=5" in text and "<svg" in text


def test_svg_failure_is_a_warning(tmp_path):
    with pytest.warns(UserWarning, match="skipped"):
        out = write_svg(tmp_path / "missing_dir" / "x.svg", {"a": ([0, 1], [1, 2])}, PROV)
    assert out is None
