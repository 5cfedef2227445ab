from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from _oracles import sps_brute_force
from cv2xsim.mac import (
    CcAction,
    CcConfig,
    CcMode,
    CongestionState,
    CrLimitTable,
    SensingHistory,
    SpsConfig,
    SpsState,
    compute_cbr,
    enforce_cr,
    on_transmit,
    shortlist_size,
    sps_candidates,
    sps_select,
)
from cv2xsim.phy import ConfigurationError, ResourceGrid, mcs_lookup

GRID2 = ResourceGrid.partition(2)
MCS1 = mcs_lookup(7).fitted_to(GRID2)  # one subchannel per message
COLD = SpsConfig(t1_ms=1, t2_ms=100)


def test_cold_start_shortlist_is_40_of_200(rng):
    h = SensingHistory.empty(2, COLD)
    c = sps_candidates(h, GRID2, MCS1, 0, COLD)
    assert c.total == 200
    assert c.survivors.all()
    assert len(c.shortlist) == 40
    for _ in range(200):
        res, rc = sps_select(h, GRID2, MCS1, 0, rng, COLD)
        assert 1 <= res.subframe <= 100 and 0 <= res.start <= 1
        assert 5 <= rc <= 15


def test_infinite_rssi_candidate_never_chosen(rng):
    h = SensingHistory.empty(2, COLD)
    now = 2000
    target = now + 37
    for k in range(1, 11):
        h.rssi_mw[(target - 100 * k) % 1000, 1] = np.inf
    # make every other candidate tie so the shortlist is arbitrary but excludes target
    for _ in range(2000):
        res, _ = sps_select(h, GRID2, MCS1, now, rng, COLD)
        assert (res.subframe, res.start) != (target, 1)


def test_exclusion_threshold_raised_when_only_10pct_survive():
    h = SensingHistory.empty(2, COLD)
    now = 3000
    # 90% of candidates carry a reservation heard at -110 dBm
    flat = [(tt, s) for tt in range(now + 1, now + 101) for s in range(2)]
    for tt, s in flat[:180]:
        h.rsrp_mw[(tt - 100) % 100, s] = 10 ** (-11.0)
    c = sps_candidates(h, GRID2, MCS1, now, COLD)
    assert c.threshold_raises >= 1
    assert c.survivors.sum() >= 40
    assert c.threshold_dbm > COLD.exclusion_threshold_dbm


def test_selection_window_bounds(rng):
    cfg = SpsConfig()
    grid = ResourceGrid.partition(7)
    mcs = mcs_lookup(11).fitted_to(grid)
    h = SensingHistory(rng.exponential(1e-10, (1000, 7)), rng.exponential(1e-12, (100, 7)))
    for now in rng.integers(0, 10_000, 100):
        res, rc = sps_select(h, grid, mcs, int(now), rng, cfg)
        assert now + cfg.t1_ms <= res.subframe <= now + cfg.t2_ms
        assert res.subchannels.stop <= grid.subchannels_per_subframe
        assert cfg.rc_min <= rc <= cfg.rc_max


def test_randomized_histories_match_brute_force():
    rng = np.random.default_rng(7)
    for trial in range(150):
        rssi = rng.exponential(1e-10, (1000, 2)) * (rng.random((1000, 2)) < 0.7)
        rsrp = rng.exponential(1e-11, (100, 2)) * (rng.random((100, 2)) < 0.5)
        now = int(rng.integers(0, 3000))
        h = SensingHistory(rssi, rsrp)
        c = sps_candidates(h, GRID2, MCS1, now, COLD)
        cands, surv, short, thr = sps_brute_force(rssi, rsrp, now, 1, 100, 1, 100, 10, -128.0, 3.0, 0.2)
        got = list(zip(c.subframes.tolist(), c.starts.tolist()))
        assert got == cands
        assert {got[i] for i in np.flatnonzero(c.survivors)} == surv
        assert {got[i] for i in c.shortlist} == short
        assert c.threshold_dbm == pytest.approx(thr)


def test_wider_message_matches_brute_force(rng):
    grid = ResourceGrid(5, 10)
    mcs = replace(mcs_lookup(7), rbs_for_message=30).fitted_to(grid)
    assert mcs.subchannels_for_message == 3
    for _ in range(20):
        rssi = rng.exponential(1e-10, (1000, 5))
        rsrp = rng.exponential(1e-11, (100, 5)) * (rng.random((100, 5)) < 0.3)
        now = int(rng.integers(1000, 3000))
        c = sps_candidates(SensingHistory(rssi, rsrp), grid, mcs, now)
        cands, surv, short, thr = sps_brute_force(rssi, rsrp, now, 4, 100, 3, 100, 10, -128.0, 3.0, 0.2)
        got = list(zip(c.subframes.tolist(), c.starts.tolist()))
        assert {got[i] for i in c.shortlist} == short


def test_uniform_choice_within_shortlist():
    rng = np.random.default_rng(99)
    h = SensingHistory.empty(2, COLD)
    c = sps_candidates(h, GRID2, MCS1, 0, COLD)
    keys = {(int(c.subframes[i]), int(c.starts[i])): k for k, i in enumerate(c.shortlist)}
    counts = np.zeros(len(keys))
    for _ in range(12_000):
        res, _ = sps_select(h, GRID2, MCS1, 0, rng, COLD)
        counts[keys[(res.subframe, res.start)]] += 1
    assert stats.chisquare(counts).pvalue > 0.01


def test_rc_draws_uniform():
    rng = np.random.default_rng(5)
    h = SensingHistory.empty(2, COLD)
    rcs = np.array([sps_select(h, GRID2, MCS1, 0, rng, COLD)[1] for _ in range(5500)])
    assert rcs.min() >= 5 and rcs.max() <= 15
    counts = np.bincount(rcs, minlength=16)[5:16]
    assert stats.chisquare(counts).pvalue > 0.01


def test_independent_streams_differ():
    h = SensingHistory.empty(2, COLD)
    ra, rb = np.random.default_rng([1, 10]), np.random.default_rng([1, 11])
    picks_a = [sps_select(h, GRID2, MCS1, 0, ra, COLD)[0] for _ in range(20)]
    picks_b = [sps_select(h, GRID2, MCS1, 0, rb, COLD)[0] for _ in range(20)]
    assert picks_a != picks_b


def test_on_transmit():
    s = on_transmit(SpsState(rc=5))
    assert s.rc == 4 and not s.reselect
    s = on_transmit(SpsState(rc=1))
    assert s.rc == 0 and s.reselect
    with pytest.raises(AssertionError):
        on_transmit(SpsState(rc=0))


def test_sps_config_validation():
    with pytest.raises(ConfigurationError):
        SpsConfig(t1_ms=10, t2_ms=5)
    with pytest.raises(ConfigurationError):
        SpsConfig(sensing_window_ms=950)
    with pytest.raises(ConfigurationError):
        SpsConfig(rc_max=16)


def test_shortlist_size():
    assert shortlist_size(200, 0.2) == 40
    assert shortlist_size(679, 0.2) == 136
    assert shortlist_size(3, 0.2) == 1


def test_cbr_examples():
    rssi = np.zeros((100, 2))
    assert compute_cbr(rssi, -94.0) == 0.0
    rssi[:25, :] = 1e-9  # -90 dBm
    assert compute_cbr(rssi, -94.0) == 0.25
    assert compute_cbr(np.full((100, 2), 1e-9), -94.0) == 1.0


def test_cbr_partial_window_normalised():
    h = np.zeros((1000, 2))
    h[:10, 0] = 1e-9
    assert compute_cbr(h, -94.0, 100, now_ms=9) == pytest.approx(0.5)


def test_cbr_relabel_invariant(rng):
    rssi = rng.exponential(1e-9, (1000, 3))
    perm = rng.permutation(3)
    assert compute_cbr(rssi, -94, 100, 500) == compute_cbr(rssi[:, perm], -94, 100, 500)


def test_cr_table_lookup():
    t = CrLimitTable.load()
    assert t.lookup(0.0) == 0.03
    assert t.lookup(0.29) == 0.03
    assert t.lookup(0.3) == 0.006
    assert t.lookup(0.7) == 0.003
    assert t.lookup(0.95) == 0.002
    assert t.lookup(1.0) == 0.002


def test_enforce_examples():
    st = CongestionState(cr=0.02, cr_limit=0.03)
    assert enforce_cr(st, None, CcConfig()) == (CcAction.TRANSMIT, 23.0)
    st = CongestionState(cr=0.04, cr_limit=0.03, enforcement_mode=CcMode.DROP)
    assert enforce_cr(st, None, CcConfig())[0] is CcAction.DROP
    st = CongestionState(cr=0.04, cr_limit=0.03, enforcement_mode=CcMode.POWER, tx_power_dbm=23.0)
    assert enforce_cr(st, None, CcConfig(mode=CcMode.POWER), 0) == (CcAction.TRANSMIT_REDUCED, 20.0)


def test_power_steps_once_per_window_with_floor():
    cfg = CcConfig(mode=CcMode.POWER, min_power_dbm=15.0)
    st = CongestionState(cr=0.5, cr_limit=0.03, enforcement_mode=CcMode.POWER, tx_power_dbm=23.0)
    powers = [enforce_cr(st, None, cfg, t)[1] for t in range(0, 5000, 100)]
    assert powers[0] == 20.0
    assert powers[9] == 20.0 and powers[10] == 17.0
    assert min(powers) == 15.0


def test_cc_off_always_transmits():
    st = CongestionState(cr=0.9, cr_limit=0.002, enforcement_mode=CcMode.OFF)
    assert enforce_cr(st, None, CcConfig(mode=CcMode.OFF))[0] is CcAction.TRANSMIT
