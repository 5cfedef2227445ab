from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from cv2xsim.metrics_io import (
    VehicleCounters,
    build_report,
    latency_pdf,
    pdr,
    pdr_cdf,
    summarize,
    write_report,
)


def _report(pdrs, lat=(), seed=0):
    counters = {i: VehicleCounters(int(round(p * 200)), 200, 0) for i, p in enumerate(pdrs)}
    serving = {i: 0 for i in counters}
    return build_report(counters, serving, list(lat), meta={"seed": seed})


def test_pdr_examples():
    assert pdr(VehicleCounters(900, 1000, 0)) == pytest.approx(0.9)
    assert pdr(VehicleCounters(900, 950, 50)) == pytest.approx(0.9)
    assert pdr(VehicleCounters(0, 100, 0)) == 0.0
    assert pdr(VehicleCounters(0, 0, 0)) is None


def test_counter_invariants():
    with pytest.raises(ValueError):
        VehicleCounters(5, 4, 0)
    with pytest.raises(ValueError):
        VehicleCounters(0, 0, -1)


def test_zero_denominator_is_excluded():
    rep = build_report({1: VehicleCounters(0, 0, 0), 2: VehicleCounters(3, 4, 0)}, {1: 0, 2: 0}, [])
    assert rep.pdr == {2: 0.75}
    assert rep.excluded == [1]


def test_out_of_range_excluded():
    rep = build_report({1: VehicleCounters(0, 0, 0)}, {1: None}, [])
    assert rep.pdr == {} and rep.excluded == [1]


def test_cdf_properties(rng):
    vals = rng.uniform(0, 1, 300)
    grid, cum = pdr_cdf(vals)
    assert len(grid) == 101 and grid[-1] == 1.0
    assert np.all(np.diff(cum) >= 0)
    assert cum[-1] == 1.0
    assert cum[50] == np.mean(vals <= 0.5)


def test_pdf_sums_to_one(rng):
    lat = rng.integers(1, 202, 5000)
    bins, dens = latency_pdf(lat)
    assert bins[0] == 1 and bins[-1] == lat.max()
    assert abs(dens.sum() - 1) < 1e-9


def test_single_vehicle_summary():
    s = summarize([_report([1.0], [5])]).summary()
    assert s["fraction_pdr_above_0.9"] == 1.0
    assert s["min_pdr"] == 1.0


def test_summary_pools_runs():
    agg = summarize([_report([0.5, 0.95], [10, 20], 0), _report([1.0, 0.95], [30], 1)])
    s = agg.summary()
    assert s["vehicles"] == 4
    assert s["fraction_pdr_above_0.9"] == 0.75
    assert s["min_pdr"] == 0.5
    assert s["mean_latency_ms"] == 20.0
    assert s["fraction_pdr_above_0.9_stderr"] == pytest.approx(0.25)
    with pytest.raises(ValueError):
        summarize([])


def test_write_report_files(tmp_path):
    rep = _report(np.linspace(0.3, 1.0, 120), [1, 2, 2, 5])
    write_report(rep, tmp_path)
    rows = list(csv.reader((tmp_path / "pdr.csv").open()))
    assert rows[0] == ["seed", "vehicle_id", "serving_rsu", "received", "transmitted", "dropped", "pdr"]
    assert len(rows) == 121
    cdf = list(csv.reader((tmp_path / "pdr_cdf.csv").open()))
    assert cdf[0] == ["pdr", "cumulative_fraction"] and cdf[-1] == ["1", "1"]
    pdf = list(csv.reader((tmp_path / "latency_pdf.csv").open()))
    assert pdf[0] == ["bin_ms", "density"] and pdf[1] == ["1", "0.25"]
    summary = json.loads((tmp_path / "summary.json").read_text())
    frac = np.mean([float(r[6]) > 0.9 for r in rows[1:]])
    assert summary["fraction_pdr_above_0.9"] == float(format(frac, ".6g"))


def test_empty_latency_header_only(tmp_path):
    write_report(_report([0.0]), tmp_path)
    assert (tmp_path / "latency_pdf.csv").read_text() == "bin_ms,density\n"


def test_rerun_byte_identical(tmp_path):
    rep = _report([0.2, 0.9, 0.99], [3, 4])
    a = write_report(rep, tmp_path / "a")
    b = write_report(rep, tmp_path / "b")
    for x, y in zip(a, b):
        assert x.read_bytes() == y.read_bytes()


def test_six_significant_digits(tmp_path):
    counters = {0: VehicleCounters(1, 3, 0)}
    write_report(build_report(counters, {0: 0}, []), tmp_path)
    assert (tmp_path / "pdr.csv").read_text().splitlines()[1].endswith(",0.333333")


def test_unwritable_dir_reports_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        write_report(_report([1.0]), blocker / "sub")
