import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ulcast.nrphy import arfcn_to_mhz
from ulcast.tracedata import (EmptyDatasetError, FeatureSet, Normalizer,
                              SchemaError, TelemetrySample, Trace,
                              TraceDataError, clamp_nonnegative, make_windows,
                              parse_trace_csv, project_features,
                              write_trace_csv)


def sample(t, thpt=10.0, **kw):
    base = dict(t=t, rsrp_dbm=-95.0, rsrq_db=-14.0, sinr_db=12.0,
                ssb_arfcn=368500, thpt_mbps=thpt)
    base.update(kw)
    return TelemetrySample(**base)


def simple_trace(n=10, trace_id="tr", start=0, **kw):
    return Trace(trace_id, tuple(sample(start + i, thpt=float(i), **kw) for i in range(n)))


CSV_TEXT = """t,rsrp_dbm,rsrq_db,sinr_db,ssb_arfcn,thpt_mbps
0,-95.0,-14.0,12.0,368500,10.5
1,-96.5,-14.2,11.0,368500,8.25
2,-97.0,-15.0,10.5,368500,0.0
"""


def write(tmp_path, text, name="trace.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_parse_well_formed(tmp_path):
    trace = parse_trace_csv(write(tmp_path, CSV_TEXT), schema=FeatureSet.ANDROID_API)
    assert len(trace) == 3
    assert trace.samples[1].thpt_mbps == 8.25
    assert trace.samples[0].rb_alloc is None
    assert trace.trace_id == "trace"


def test_parse_full_schema_missing_column(tmp_path):
    with pytest.raises(SchemaError) as exc:
        parse_trace_csv(write(tmp_path, CSV_TEXT), schema=FeatureSet.FULL)
    assert "rb_alloc" in str(exc.value)


def test_parse_duplicate_timestamp(tmp_path):
    text = CSV_TEXT + "2,-97.0,-15.0,10.5,368500,1.0\n"
    with pytest.raises(TraceDataError) as exc:
        parse_trace_csv(write(tmp_path, text))
    assert "line 5" in str(exc.value)


def test_parse_skipped_timestamp(tmp_path):
    text = CSV_TEXT + "4,-97.0,-15.0,10.5,368500,1.0\n"
    with pytest.raises(TraceDataError) as exc:
        parse_trace_csv(write(tmp_path, text))
    assert "gap" in str(exc.value)


def test_parse_gap_rows(tmp_path):
    text = CSV_TEXT + "3,GAP\n4,-97.0,-15.0,10.5,368500,1.0\n"
    trace = parse_trace_csv(write(tmp_path, text))
    assert trace.gaps == frozenset({3})
    assert len(trace) == 4
    assert trace.segments() == [(0, 3), (3, 4)]


def test_parse_unknown_column(tmp_path):
    with pytest.raises(SchemaError):
        parse_trace_csv(write(tmp_path, "t,rsrp_dbm,bogus\n"))


def test_parse_missing_required_column(tmp_path):
    with pytest.raises(SchemaError) as exc:
        parse_trace_csv(write(tmp_path, "t,rsrp_dbm,rsrq_db,sinr_db,ssb_arfcn\n"))
    assert "thpt_mbps" in str(exc.value)


def test_parse_negative_throughput(tmp_path):
    text = CSV_TEXT + "3,-97.0,-15.0,10.5,368500,-1.0\n"
    with pytest.raises(TraceDataError) as exc:
        parse_trace_csv(write(tmp_path, text))
    assert "line 5" in str(exc.value)


def test_parse_rsrp_out_of_range(tmp_path):
    text = "t,rsrp_dbm,rsrq_db,sinr_db,ssb_arfcn,thpt_mbps\n0,-20.0,-14.0,12.0,368500,1.0\n"
    with pytest.raises(TraceDataError):
        parse_trace_csv(write(tmp_path, text))


def test_roundtrip_field_identical(tmp_path):
    text = ("t,rsrp_dbm,rsrq_db,sinr_db,ssb_arfcn,thpt_mbps,rb_alloc,pucch_tx_dbm\n"
            "0,-95.25,-14.0,12.125,368500,10.5,40,3.5\n"
            "1,GAP\n"
            "2,-96.0,-14.5,11.0,626667,8.0,,\n")
    original = parse_trace_csv(write(tmp_path, text, "a.csv"))
    out = tmp_path / "b.csv"
    write_trace_csv(original, out)
    reparsed = parse_trace_csv(out, trace_id=original.trace_id)
    assert reparsed.samples == original.samples
    assert reparsed.gaps == original.gaps


def test_trace_invariants_programmatic():
    with pytest.raises(TraceDataError):
        Trace("x", (sample(0), sample(0)))
    with pytest.raises(TraceDataError):
        Trace("x", (sample(0), sample(2)))
    Trace("x", (sample(0), sample(2)), gaps=frozenset({1}))  # explicit gap is fine


def test_feature_widths():
    assert FeatureSet.ANDROID_API.width == 5
    assert FeatureSet.FULL.width == 9
    assert FeatureSet.SURE.width == 4


def test_project_android_api_columns():
    trace = simple_trace(3)
    m = project_features(trace, FeatureSet.ANDROID_API)
    assert m.shape == (3, 5)
    assert m[0].tolist() == [-95.0, -14.0, 12.0, arfcn_to_mhz(368500), 0.0]
    # ARFCN column is carrier frequency in MHz, not the raw channel number
    assert m[0, 3] == pytest.approx(1842.5)


def test_project_full_and_sure():
    trace = simple_trace(3, rb_alloc=40, sched_count=900, pucch_tx_dbm=5.0, bw_mhz=15.0)
    full = project_features(trace, FeatureSet.FULL)
    assert full.shape == (3, 9)
    assert full[0, 5:].tolist() == [40.0, 900.0, 5.0, 15.0]
    sure = project_features(trace, FeatureSet.SURE)
    assert sure.shape == (3, 4)
    assert sure[1].tolist() == [-95.0, 40.0, 5.0, 1.0]


def test_project_missing_optional_field():
    trace = simple_trace(3)
    with pytest.raises(SchemaError) as exc:
        project_features(trace, FeatureSet.SURE)
    assert "rb_alloc" in str(exc.value)


def test_normalizer_hand_example():
    nz = Normalizer.fit([np.array([[0.0], [2.0]])], np.array([0.0, 2.0]))
    assert nz.feature_mean[0] == 1.0
    assert nz.feature_std[0] == 1.0  # population std
    np.testing.assert_array_equal(nz.normalize(np.array([[0.0], [2.0]])),
                                  [[-1.0], [1.0]])


def test_normalizer_identity_on_standardized_data():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(500, 3))
    m = (m - m.mean(0)) / m.std(0)
    nz = Normalizer.fit([m], m[:, 0])
    np.testing.assert_allclose(nz.normalize(m), m, atol=1e-9)


def test_normalizer_rejects_constant_feature():
    with pytest.raises(ValueError) as exc:
        Normalizer.fit([np.ones((5, 2))], np.arange(5.0), feature_names=("a", "b"))
    assert "'a'" in str(exc.value)


@given(st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=2, max_size=50)
       .filter(lambda v: max(v) - min(v) > 1e-6))
def test_normalizer_roundtrip_and_order(values):
    col = np.array(values)[:, None]
    nz = Normalizer.fit([col], col[:, 0])
    back = nz.denormalize(nz.normalize(col))
    np.testing.assert_allclose(back, col, rtol=1e-12, atol=1e-9)
    order = np.argsort(col[:, 0], kind="stable")
    norm_order = np.argsort(nz.normalize(col)[:, 0], kind="stable")
    np.testing.assert_array_equal(order, norm_order)


def test_window_counts():
    ds = make_windows([simple_trace(7)], FeatureSet.ANDROID_API)
    assert len(ds) == 2
    with pytest.raises(EmptyDatasetError):
        make_windows([simple_trace(5)], FeatureSet.ANDROID_API)
    two = make_windows([simple_trace(6, trace_id="a"), simple_trace(6, trace_id="b")],
                       FeatureSet.ANDROID_API)
    assert len(two) == 2
    assert set(two.trace_ids) == {"a", "b"}


def test_window_targets_are_next_second():
    ds = make_windows([simple_trace(8)], FeatureSet.ANDROID_API)
    # thpt of sample i is float(i); window starting at 0 targets sample 5
    assert ds.y[0] == 5.0
    assert ds.y[-1] == 7.0
    np.testing.assert_array_equal(ds.X[0, :, 4], np.arange(5.0))


def test_windows_never_cross_gaps():
    samples = tuple(sample(t, thpt=float(t)) for t in list(range(7)) + list(range(8, 15)))
    trace = Trace("g", samples, gaps=frozenset({7}))
    ds = make_windows([trace], FeatureSet.ANDROID_API)
    # segments of length 7 each: 2 windows per segment
    assert len(ds) == 4
    starts = ds.starts.tolist()
    assert all(s + 5 != 7 for s in starts)  # no window targets the gap second
    for i in range(len(ds)):
        np.testing.assert_array_equal(np.diff(ds.X[i, :, 4]), np.ones(4))


@settings(max_examples=30)
@given(st.lists(st.integers(min_value=0, max_value=30), min_size=1, max_size=6))
def test_window_count_property(lengths):
    traces = [simple_trace(n, trace_id=f"t{i}") for i, n in enumerate(lengths) if n > 0]
    expected = sum(max(0, n - 5) for n in lengths)
    if expected == 0 or not traces:
        if traces:
            with pytest.raises(EmptyDatasetError):
                make_windows(traces, FeatureSet.ANDROID_API)
        return
    ds = make_windows(traces, FeatureSet.ANDROID_API)
    assert len(ds) == expected


def test_windows_normalized_when_normalizer_given():
    trace = simple_trace(20)
    nz = Normalizer.fit_traces([trace], FeatureSet.ANDROID_API)
    ds = make_windows([trace], FeatureSet.ANDROID_API, normalizer=nz)
    assert ds.normalized
    raw = make_windows([trace], FeatureSet.ANDROID_API)
    np.testing.assert_allclose(nz.denormalize_target(ds.y), raw.y, atol=1e-9)


def test_clamp_nonnegative():
    np.testing.assert_array_equal(clamp_nonnegative([-5.0, 10.0]), [0.0, 10.0])
    np.testing.assert_array_equal(clamp_nonnegative([1.0, 2.0]), [1.0, 2.0])
    np.testing.assert_array_equal(clamp_nonnegative([-1.0, -2.0]), [0.0, 0.0])
