"""Mode 4 sensing-based semi-persistent scheduling and CBR/CR congestion control."""

from __future__ import annotations

import bisect
import csv
import enum
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import kernels
from .phy import ConfigurationError, McsEntry, ResourceGrid


@dataclass(frozen=True)
class SpsConfig:
    rri_ms: int = 100
    sensing_window_ms: int = 1000
    t1_ms: int = 4
    t2_ms: int = 100
    exclusion_threshold_dbm: float = -128.0
    threshold_step_db: float = 3.0
    shortlist_fraction: float = 0.2
    rc_min: int = 5
    rc_max: int = 15
    prob_resource_keep: float = 0.0
    max_threshold_raises: int = 64

    def __post_init__(self):
        if not 0 <= self.t1_ms <= self.t2_ms:
            raise ConfigurationError("need 0 <= t1_ms <= t2_ms")
        if self.sensing_window_ms % self.rri_ms:
            raise ConfigurationError("sensing window must be a whole number of RRIs")
        if not 0 < self.shortlist_fraction <= 1:
            raise ConfigurationError("shortlist_fraction must lie in (0, 1]")
        if not 0 <= self.rc_min <= self.rc_max <= 15:
            raise ConfigurationError("reselection counter bounds must lie in [0, 15]")

    @property
    def n_periods(self) -> int:
        return self.sensing_window_ms // self.rri_ms


@dataclass
class SensingHistory:
    """Per-node sensing record.

    ``rssi_mw[t % window, s]`` is the received signal power on subchannel
    ``s`` in subframe ``t`` (noise excluded, 0 when silent or unobserved).
    ``rsrp_mw[t % rri, s]`` is the strongest decoded reservation announced on
    ``s`` in subframe ``t``; it is overwritten every RRI.
    """

    rssi_mw: np.ndarray
    rsrp_mw: np.ndarray

    @classmethod
    def empty(cls, n_subchannels: int, cfg: SpsConfig | None = None) -> "SensingHistory":
        cfg = cfg or SpsConfig()
        return cls(np.zeros((cfg.sensing_window_ms, n_subchannels)), np.zeros((cfg.rri_ms, n_subchannels)))

    @property
    def window(self) -> int:
        return self.rssi_mw.shape[0]


@dataclass(frozen=True)
class Reservation:
    subframe: int
    subchannels: range

    @property
    def start(self) -> int:
        return self.subchannels.start


@dataclass(frozen=True)
class CandidateSet:
    """Everything sps_select looked at, for inspection and testing."""

    subframes: np.ndarray
    starts: np.ndarray
    avg_rssi_mw: np.ndarray
    rsrp_mw: np.ndarray
    survivors: np.ndarray
    shortlist: np.ndarray
    threshold_dbm: float
    threshold_raises: int

    @property
    def total(self) -> int:
        return len(self.subframes)


def shortlist_size(total: int, fraction: float) -> int:
    return max(1, math.ceil(total * fraction - 1e-9))


def sps_candidates(history: SensingHistory, grid: ResourceGrid, mcs: McsEntry, now_ms: int,
                   cfg: SpsConfig | None = None) -> CandidateSet:
    cfg = cfg or SpsConfig()
    width = mcs.subchannels_for_message
    n_sub = grid.subchannels_per_subframe
    if n_sub < 1 or width > n_sub:
        raise ConfigurationError("message does not fit the resource grid")
    if history.rssi_mw.shape[1] != n_sub:
        raise ConfigurationError("sensing history does not match the grid")
    n_t = cfg.t2_ms - cfg.t1_ms + 1
    n_start = n_sub - width + 1
    t_first = now_ms + cfg.t1_ms
    avg, rsrp = kernels.candidate_scores(
        np.ascontiguousarray(history.rssi_mw), np.ascontiguousarray(history.rsrp_mw),
        t_first, n_t, width, cfg.rri_ms, cfg.n_periods,
    )
    subframes = np.repeat(np.arange(t_first, t_first + n_t), n_start)
    starts = np.tile(np.arange(n_start), n_t)
    total = len(subframes)
    need = shortlist_size(total, cfg.shortlist_fraction)

    threshold = cfg.exclusion_threshold_dbm
    raises = 0
    while True:
        limit_mw = 10.0 ** (threshold / 10.0)
        survivors = ~(rsrp > limit_mw)
        if survivors.sum() >= need or raises >= cfg.max_threshold_raises:
            break
        threshold += cfg.threshold_step_db
        raises += 1
    idx = np.flatnonzero(survivors)
    # stable on enumeration order: equal RSSI keeps the earlier subframe first
    order = np.argsort(avg[idx], kind="stable")
    shortlist = idx[order[:need]]
    return CandidateSet(subframes, starts, avg, rsrp, survivors, shortlist, threshold, raises)


def sps_select(history: SensingHistory, grid: ResourceGrid, mcs: McsEntry, now_ms: int,
               rng: np.random.Generator, cfg: SpsConfig | None = None) -> tuple[Reservation, int]:
    """Pick a resource in ``[now + T1, now + T2]`` and draw a fresh counter.

    Returns ``(reservation, rc)``.
    """
    cfg = cfg or SpsConfig()
    cands = sps_candidates(history, grid, mcs, now_ms, cfg)
    pick = cands.shortlist[rng.integers(len(cands.shortlist))]
    rc = int(rng.integers(cfg.rc_min, cfg.rc_max + 1))
    start = int(cands.starts[pick])
    res = Reservation(int(cands.subframes[pick]), range(start, start + mcs.subchannels_for_message))
    return res, rc


@dataclass
class SpsState:
    rc: int = 0
    rri_ms: int = 100
    reserved: Reservation | None = None
    reselect: bool = True
    history: SensingHistory | None = None
    selection_window: tuple[int, int] = (4, 100)


def on_transmit(state: SpsState, prob_keep: float = 0.0, rng: np.random.Generator | None = None) -> SpsState:
    """Count one transmission against the reselection counter."""
    assert state.rc >= 1, "on_transmit called with an exhausted reselection counter"
    state.rc -= 1
    if state.rc == 0:
        keep = prob_keep > 0 and rng is not None and rng.random() < prob_keep
        state.reselect = not keep
    else:
        state.reselect = False
    if state.reserved is not None:
        r = state.reserved
        state.reserved = Reservation(r.subframe + state.rri_ms, r.subchannels)
    return state


def compute_cbr(history: SensingHistory | np.ndarray, busy_threshold_dbm: float,
                window_subframes: int = 100, now_ms: int | None = None) -> float:
    """Fraction of (subframe, subchannel) cells above the busy threshold.

    With ``now_ms`` the window is the ring-buffer rows ending at ``now_ms``;
    rows before time 0 are unobserved and excluded from the denominator.
    Without it ``history`` is taken as the window itself.
    """
    rssi = history.rssi_mw if isinstance(history, SensingHistory) else np.asarray(history)
    thr = 10.0 ** (busy_threshold_dbm / 10.0)
    if now_ms is None:
        rows = rssi[-window_subframes:]
    else:
        first = max(0, now_ms - window_subframes + 1)
        rows = rssi[np.arange(first, now_ms + 1) % rssi.shape[0]]
    if rows.size == 0:
        return 0.0
    return float(np.count_nonzero(rows > thr)) / rows.size


class CcMode(str, enum.Enum):
    OFF = "off"
    DROP = "drop"
    POWER = "power"


class CcAction(str, enum.Enum):
    TRANSMIT = "transmit"
    DROP = "drop"
    TRANSMIT_REDUCED = "transmit_at_reduced_power"


@dataclass(frozen=True)
class CrLimitTable:
    """Piecewise-constant CBR -> CR limit map; ``upper[i]`` is exclusive."""

    upper: tuple[float, ...]
    limit: tuple[float, ...]

    def lookup(self, cbr: float) -> float:
        i = bisect.bisect_right(self.upper, cbr)
        return self.limit[min(i, len(self.limit) - 1)]

    @classmethod
    def load(cls, path=None) -> "CrLimitTable":
        if path is None:
            fh = resources.files("cv2xsim.data").joinpath("cr_limits.csv").open()
        else:
            fh = open(path)
        with fh:
            rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
        return cls(tuple(float(r["cbr_upper"]) for r in rows), tuple(float(r["cr_limit"]) for r in rows))


@dataclass(frozen=True)
class CcConfig:
    mode: CcMode = CcMode.DROP
    busy_threshold_dbm: float = -94.0
    cbr_window: int = 100
    cr_window: int = 1000
    power_step_db: float = 3.0
    min_power_dbm: float = 0.0
    table: CrLimitTable = field(default_factory=CrLimitTable.load)


@dataclass
class CongestionState:
    cbr: float = 0.0
    cr: float = 0.0
    cr_limit: float = 1.0
    enforcement_mode: CcMode = CcMode.DROP
    tx_power_dbm: float = 23.0
    last_power_step_ms: int | None = None


def enforce_cr(state: CongestionState, pending_tx=None, cfg: CcConfig | None = None,
               now_ms: int = 0) -> tuple[CcAction, float]:
    """Gate one pending transmission. Returns ``(action, tx_power_dbm)``.

    In power mode the power drops one step at most once per CR window and
    never below ``cfg.min_power_dbm``.
    """
    cfg = cfg or CcConfig(mode=state.enforcement_mode)
    mode = CcMode(state.enforcement_mode)
    if mode is CcMode.OFF or state.cr <= state.cr_limit:
        return CcAction.TRANSMIT, state.tx_power_dbm
    if mode is CcMode.DROP:
        return CcAction.DROP, state.tx_power_dbm
    due = state.last_power_step_ms is None or now_ms - state.last_power_step_ms >= cfg.cr_window
    if due and state.tx_power_dbm > cfg.min_power_dbm:
        state.tx_power_dbm = max(cfg.min_power_dbm, state.tx_power_dbm - cfg.power_step_db)
        state.last_power_step_ms = now_ms
    return CcAction.TRANSMIT_REDUCED, state.tx_power_dbm

