"""End-to-end acceptance checks.

Each test prints one ``PASS``/``FAIL`` line with the measured value and the
tolerance it was held to. The campaign fixtures run the bundled urban
configuration (120 vehicles, 20 seeds, 21 s each) for both MCS settings.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
import pytest
from scipy import stats

from _oracles import post_violation_cr, recount_pdr, sps_brute_force
from cv2xsim.channel import ChannelConfig, noise_floor, path_loss
from cv2xsim.engine import run_seed
from cv2xsim.mac import SensingHistory, SpsConfig, sps_candidates, sps_select
from cv2xsim.metrics_io import summarize, write_report
from cv2xsim.phy import ResourceGrid, mcs_lookup
from cv2xsim.scenario import LinkKind

pytestmark = pytest.mark.slow


@pytest.fixture
def say(capsys):
    def emit(ok: bool, criterion: str, detail: str):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} [{criterion}] {detail}")
        return ok

    return emit


@dataclass
class Campaign:
    reports: list = field(default_factory=list)
    oracle_mismatches: int = 0
    vehicles_checked: int = 0
    latency_violations: int = 0
    latency_samples: int = 0
    bound: int = 0
    seconds: float = 0.0

    @property
    def summary(self):
        return summarize(self.reports).summary()


def _campaign(cfg, mcs, retx=True, oracle=True):
    c = cfg.with_mcs(mcs)
    sim = replace(c.sim, retransmissions_enabled=retx)
    out = Campaign(bound=(2 if retx else 1) * sim.inter_broadcast_interval_ms + 1)
    t0 = time.perf_counter()
    for seed in sim.seeds:
        log, rep = run_seed(c.scenario, sim, c.channel, c.mac, seed)
        lat = rep.latencies
        out.latency_samples += lat.size
        out.latency_violations += int(np.count_nonzero((lat <= 0) | (lat > out.bound)))
        if oracle:
            recount = recount_pdr(log)
            for vid, cnt in rep.counters.items():
                out.vehicles_checked += 1
                if recount[vid] != (cnt.received, cnt.transmitted, cnt.dropped):
                    out.oracle_mismatches += 1
        out.reports.append(rep)
        del log
    out.seconds = time.perf_counter() - t0
    return out


@pytest.fixture(scope="module")
def runs(urban_cfg):
    return {m: _campaign(urban_cfg, m) for m in (7, 11)}


@pytest.fixture(scope="module")
def runs_no_retx(urban_cfg):
    return {m: _campaign(urban_cfg, m, retx=False, oracle=False) for m in (7, 11)}


# 1 ---------------------------------------------------------------------------

@pytest.mark.parametrize("mcs,lo,hi", [(7, 0.75, 0.95), (11, 0.74, 0.95)])
def test_c1_fraction_band(runs, say, mcs, lo, hi):
    s = runs[mcs].summary
    frac = s["fraction_pdr_above_0.9"]
    ok = lo <= frac <= hi and s["runs"] >= 20
    say(ok, f"1 MCS {mcs}", f"fraction PDR>0.9 = {frac:.4f} over {s['vehicles']} vehicles / {s['runs']} seeds, "
        f"band [{lo}, {hi}]")
    assert ok


def test_c1_runtime(runs, say):
    total = sum(r.seconds for r in runs.values())
    ok = total <= 600
    say(ok, "1 runtime", f"{total:.1f} s for {sum(len(r.reports) for r in runs.values())} runs, limit 600 s")
    assert ok


# 2 ---------------------------------------------------------------------------

def test_c2a_latency_ordering(runs, say):
    l7, l11 = runs[7].summary["mean_latency_ms"], runs[11].summary["mean_latency_ms"]
    ok = l11 < l7
    say(ok, "2a", f"mean latency MCS 11 = {l11:.2f} ms < MCS 7 = {l7:.2f} ms")
    assert ok


def test_c2b_min_pdr_ordering(runs, say):
    m7, m11 = runs[7].summary["min_pdr"], runs[11].summary["min_pdr"]
    ok = m11 < m7 and m7 >= 0.5 and m11 <= 0.5
    say(ok, "2b", f"min PDR MCS 11 = {m11:.3f} (<= 0.5) < MCS 7 = {m7:.3f} (>= 0.5)")
    assert ok


# 3 ---------------------------------------------------------------------------

@pytest.mark.parametrize("retx", [False, True])
def test_c3_latency_bound(runs, runs_no_retx, say, retx):
    source = runs if retx else runs_no_retx
    bad = sum(c.latency_violations for c in source.values())
    n = sum(c.latency_samples for c in source.values())
    bound = next(iter(source.values())).bound
    ok = bad == 0 and n > 0
    say(ok, f"3 retx={'on' if retx else 'off'}",
        f"{n - bad}/{n} latencies in (0, {bound}] ms across {sum(len(c.reports) for c in source.values())} runs")
    assert ok


# 4 ---------------------------------------------------------------------------

def test_c4_pdr_oracle(runs, say):
    bad = sum(c.oracle_mismatches for c in runs.values())
    n = sum(c.vehicles_checked for c in runs.values())
    ok = bad == 0 and n > 0
    say(ok, "4", f"event-log recount matches reported counters for {n - bad}/{n} vehicle-runs (exact)")
    assert ok


# 5 ---------------------------------------------------------------------------

def test_c5_sps_oracle(say):
    cfg = SpsConfig(t1_ms=1, t2_ms=100)
    grid = ResourceGrid.partition(2)
    mcs = mcs_lookup(7).fitted_to(grid)
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(1000):
        busy = rng.random()
        rssi = rng.exponential(1e-10, (1000, 2)) * (rng.random((1000, 2)) < busy)
        rsrp = rng.exponential(10 ** rng.uniform(-13, -9), (100, 2)) * (rng.random((100, 2)) < busy)
        now = int(rng.integers(0, 2500))
        c = sps_candidates(SensingHistory(rssi, rsrp), grid, mcs, now, cfg)
        cands, surv, short, _ = sps_brute_force(rssi, rsrp, now, 1, 100, 1, 100, 10, -128.0, 3.0, 0.2)
        got = list(zip(c.subframes.tolist(), c.starts.tolist()))
        if (got != cands or {got[i] for i in np.flatnonzero(c.survivors)} != surv
                or {got[i] for i in c.shortlist} != short):
            mismatches += 1

    h = SensingHistory(rng.exponential(1e-10, (1000, 2)), np.zeros((100, 2)))
    now = 1500
    c = sps_candidates(h, grid, mcs, now, cfg)
    index = {(int(c.subframes[i]), int(c.starts[i])): k for k, i in enumerate(c.shortlist)}
    counts = np.zeros(len(index))
    pick_rng = np.random.default_rng(77)
    outside = 0
    for _ in range(20_000):
        res, _ = sps_select(h, grid, mcs, now, pick_rng, cfg)
        k = index.get((res.subframe, res.start))
        if k is None:
            outside += 1
        else:
            counts[k] += 1
    p = stats.chisquare(counts).pvalue
    ok = mismatches == 0 and outside == 0 and p > 0.01
    say(ok, "5", f"{1000 - mismatches}/1000 histories match brute force; shortlist {len(index)}, "
        f"uniformity chi-square p = {p:.3f} (> 0.01), picks outside shortlist = {outside}")
    assert ok


# 6 ---------------------------------------------------------------------------

def test_c6_determinism(urban_cfg, tmp_path, say):
    outputs = []
    for k in range(2):
        log, rep = run_seed(urban_cfg.scenario, urban_cfg.sim, urban_cfg.channel, urban_cfg.mac, seed=5)
        d = tmp_path / f"run{k}"
        files = write_report(rep, d)
        files.append(log.write(d / "events.csv.gz"))
        outputs.append({f.name: f.read_bytes() for f in files})
    ok = outputs[0] == outputs[1]
    say(ok, "6", f"{len(outputs[0])} files byte-identical across two executions: {', '.join(sorted(outputs[0]))}")
    assert ok


# 7 ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def overload(urban_cfg):
    cfg = replace(urban_cfg,
                  scenario=replace(urban_cfg.scenario, lambda_vehicles=60, theta_trucks=0),
                  sim=replace(urban_cfg.sim, duration_ms=8000))
    out = {}
    for mode in ("off", "drop", "power"):
        c = cfg.with_cc_mode(mode)
        out[mode] = [run_seed(c.scenario, c.sim, c.channel, c.mac, s) for s in (0, 1)]
    return out


def test_c7_drop_mode(overload, say):
    windows = bad = violations = 0
    for log, rep in overload["drop"]:
        grid = rep.diagnostics["grid"]
        checks = rep.diagnostics["cr_checks"]
        limits = {(int(t), int(n)): lim for t, n, _, lim in checks}
        for node, tv, cr, lim in post_violation_cr(log, limits, 1000, grid["subchannels_per_subframe"],
                                                   grid["message_subchannels"]):
            windows += 1
            bad += cr > lim + 1e-12
        violations += sum(1 for r in log if r.event == "cr_violation")
    ok = violations > 0 and windows > 0 and bad == 0
    say(ok, "7 drop", f"{violations} violations; {windows - bad}/{windows} post-violation windows with CR <= limit")
    assert ok


def test_c7_power_mode(overload, say):
    def tail_cbr(runs):
        vals = []
        for _, rep in runs:
            tr = np.array([c for _, c in rep.diagnostics["cbr_trace"]])
            vals.append(tr[-(len(tr) // 4):].mean())
        return float(np.mean(vals))

    off, power = tail_cbr(overload["off"]), tail_cbr(overload["power"])
    ok = power < off
    say(ok, "7 power", f"last-quarter mean CBR power-adapt = {power:.4f} < off = {off:.4f}")
    assert ok


# 8 ---------------------------------------------------------------------------

def test_c8_channel_units(say):
    pl = path_loss(100.0, LinkKind.LOS, ChannelConfig())
    nf = noise_floor(ChannelConfig(bandwidth_mhz=20, noise_figure_db=9))
    pl_ref = 32.4 + 21 * math.log10(100) + 20 * math.log10(5.9)
    nf_ref = -174 + 10 * math.log10(20e6) + 9
    ok = (abs(pl - 89.82) <= 0.01 and abs(nf + 91.99) <= 0.01
          and abs(pl - pl_ref) < 1e-9 and abs(nf - nf_ref) < 1e-9)
    say(ok, "8", f"path_loss(100 m, LOS) = {pl:.4f} dB (89.82 +/- 0.01); noise_floor = {nf:.4f} dBm (-91.99 +/- 0.01)")
    assert ok
