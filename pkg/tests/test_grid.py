import numpy as np
import pytest
from hypothesis import given, strategies as st

from greenroute.errors import DataError
from greenroute.grid import GridIntensitySeries, constant_grid, intensity_at, load_series, parse_const_spec, write_series


def series(pairs, region="r"):
    ts, vals = zip(*pairs)
    return GridIntensitySeries({region: (np.array(ts, float), np.array(vals, float))})


S = series([(0, 400), (3600, 200)])


@pytest.mark.parametrize("t,expected", [(1800, 400), (3600, 200), (-5, 400), (1e9, 200), (0, 400)])
def test_step_hold(t, expected):
    assert intensity_at(S, t, "r") == expected


def test_unknown_region_named():
    with pytest.raises(DataError, match="'nowhere'"):
        intensity_at(S, 0, "nowhere")


def test_load_two_regions(tmp_path):
    p = tmp_path / "g.csv"
    p.write_text("timestamp_s,region,intensity_g_per_kwh\n0,a,100\n0,b,300\n60,a,120\n60,b,310\n")
    g = load_series(p)
    assert sorted(g.samples) == ["a", "b"]
    assert intensity_at(g, 61, "b") == 310


def test_zero_intensity_rejected_at_line(tmp_path):
    p = tmp_path / "g.csv"
    p.write_text("timestamp_s,region,intensity_g_per_kwh\n0,a,100\n60,a,0\n")
    with pytest.raises(DataError, match=r":3:"):
        load_series(p)


def test_duplicate_timestamp_rejected(tmp_path):
    p = tmp_path / "g.csv"
    p.write_text("timestamp_s,region,intensity_g_per_kwh\n0,a,100\n0,a,200\n")
    with pytest.raises(DataError, match="duplicate"):
        load_series(p)


@given(st.lists(st.tuples(st.integers(0, 10_000), st.floats(1, 1000, allow_nan=False)), min_size=1, max_size=20, unique_by=lambda x: x[0]),
       st.lists(st.floats(-100, 11_000, allow_nan=False), max_size=30))
def test_unsorted_rows_match_presorted(rows, queries):
    import tempfile, os

    fd, a = tempfile.mkstemp(suffix=".csv")
    os.close(fd)
    try:
        with open(a, "w") as fh:
            fh.write("timestamp_s,region,intensity_g_per_kwh\n")
            for t, v in rows:  # deliberately unsorted
                fh.write(f"{t},r,{v!r}\n")
        g = load_series(a)
    finally:
        os.unlink(a)
    ordered = sorted(rows)
    for q in queries:
        # brute force step hold over the sorted copy
        before = [v for t, v in ordered if t <= q]
        expected = before[-1] if before else ordered[0][1]
        assert intensity_at(g, q, "r") == expected


@given(st.lists(st.integers(0, 10_000), min_size=1, max_size=10, unique=True))
def test_left_boundary_rule_around_samples(ts):
    ts = sorted(ts)
    vals = [float(i + 1) for i in range(len(ts))]
    g = series(list(zip(ts, vals)))
    for i, t in enumerate(ts):
        assert intensity_at(g, t, "r") == vals[i]
        assert intensity_at(g, t + 0.5, "r") == vals[i]
        assert intensity_at(g, t - 0.5, "r") == (vals[i - 1] if i else vals[0])


def test_constant_series_is_constant():
    g = constant_grid({"r": 250.0})
    assert {intensity_at(g, t, "r") for t in np.linspace(-10, 1e6, 50)} == {250.0}


def test_round_trip(tmp_path):
    p = tmp_path / "g.csv"
    write_series(p, S)
    g = load_series(p)
    assert all(intensity_at(g, t, "r") == intensity_at(S, t, "r") for t in (-1, 0, 1, 3600, 5000))


def test_const_spec():
    assert parse_const_spec("eu-west=312.5") == ("eu-west", 312.5)
    for bad in ("noval", "=3", "a=x", "a=0"):
        with pytest.raises(DataError):
            parse_const_spec(bad)


def test_merged_prefers_the_other_series():
    from greenroute.grid import GridIntensitySeries, intensity_at

    base = GridIntensitySeries({"a": ([0.0, 10.0], [100.0, 200.0]), "b": ([0.0], [50.0])}, {"c": 70.0})
    other = constant_grid({"a": 300.0})
    m = base.merged(other)
    assert intensity_at(m, 20.0, "a") == 300.0
    assert intensity_at(m, 5.0, "b") == 50.0 and intensity_at(m, 5.0, "c") == 70.0
    m2 = base.merged(GridIntensitySeries({"c": ([0.0], [90.0])}))
    assert intensity_at(m2, 1.0, "c") == 90.0
