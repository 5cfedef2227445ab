"""Subframe-by-subframe Mode 4 simulation driving SPS, congestion control and decoding."""

from __future__ import annotations

import csv
import gzip
import io
import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from . import kernels
from .channel import ChannelConfig, dbm_to_mw, noise_floor, path_loss_matrix
from .mac import (
    CcAction,
    CcConfig,
    CcMode,
    CongestionState,
    SensingHistory,
    SpsConfig,
    compute_cbr,
    enforce_cr,
    sps_select,
)
from .metrics_io import MetricsReport, VehicleCounters, build_report
from .phy import (
    RB_BANDWIDTH_KHZ,
    ConfigurationError,
    McsEntry,
    ResourceGrid,
    RxOutcome,
    load_mcs_table,
    mcs_lookup,
    success_probability,
)
from .scenario import LinkKind, NodeKind, Scenario, ScenarioConfig, deploy_scenario, link_matrices, serving_rsu


@dataclass(frozen=True)
class SimConfig:
    duration_ms: int = 21000
    warmup_ms: int = 1000
    message_rate_hz: float = 10.0
    inter_broadcast_interval_ms: int = 100
    tx_power_dbm: float = 23.0
    rx_sensitivity_dbm: float = -97.28
    mcs_index: int = 7
    subchannels_per_subframe: int | None = None  # None -> the MCS table pairing
    seeds: tuple[int, ...] = (0,)
    retransmissions_enabled: bool = True
    max_retransmissions: int = 1
    decode_mode: str = "threshold"  # or "logistic"
    bler_slope_db: float = 1.0
    cbr_trace_every_ms: int = 100

    def validate(self, sps: SpsConfig | None = None) -> None:
        sps = sps or SpsConfig()
        if not math.isclose(self.message_rate_hz * self.inter_broadcast_interval_ms, 1000.0):
            raise ConfigurationError(
                "message_rate_hz x inter_broadcast_interval_ms must equal 1000 "
                f"(got {self.message_rate_hz} x {self.inter_broadcast_interval_ms})"
            )
        if self.inter_broadcast_interval_ms != sps.rri_ms:
            raise ConfigurationError("inter_broadcast_interval_ms must equal the SPS RRI")
        if self.duration_ms < sps.sensing_window_ms + 10 * self.inter_broadcast_interval_ms:
            raise ConfigurationError(
                f"duration_ms={self.duration_ms} shorter than one sensing window plus 10 message periods"
            )
        if self.warmup_ms < 0 or self.warmup_ms >= self.measure_end_ms:
            raise ConfigurationError("warmup_ms leaves no measurement interval")
        if self.max_retransmissions not in (0, 1):
            raise ConfigurationError("max_retransmissions must be 0 or 1")
        if self.decode_mode not in ("threshold", "logistic"):
            raise ConfigurationError(f"decode_mode {self.decode_mode!r}")
        if self.decode_mode == "logistic" and self.bler_slope_db <= 0:
            raise ConfigurationError("bler_slope_db must be positive")
        if not -30.0 <= self.tx_power_dbm <= 33.0:
            raise ConfigurationError("tx_power_dbm outside [-30, 33] dBm")

    @property
    def retx(self) -> bool:
        return self.retransmissions_enabled and self.max_retransmissions > 0

    @property
    def measure_end_ms(self) -> int:
        """Payloads generated at or after this time are not measured: their
        copies might not finish before the run ends."""
        return self.duration_ms - 2 * self.inter_broadcast_interval_ms - 1


@dataclass(frozen=True)
class MacConfig:
    sps: SpsConfig = field(default_factory=SpsConfig)
    cc: CcConfig = field(default_factory=CcConfig)


class Event(NamedTuple):
    time_ms: int
    event: str
    node: int
    payload: int
    peer: int
    detail: str


EVENT_COLUMNS = Event._fields


class EventLog:
    """Append-only record of what happened during a run."""

    def __init__(self):
        self.rows: list[Event] = []

    def append(self, time_ms, event, node, payload=-1, peer=-1, detail=""):
        self.rows.append(Event(time_ms, event, node, payload, peer, detail))

    def __iter__(self) -> Iterator[Event]:
        return iter(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        w.writerows(self.rows)
        return buf.getvalue()

    def write(self, path) -> Path:
        path = Path(path)
        data = self.to_csv_text().encode()
        if path.suffix == ".gz":
            # mtime=0 keeps the archive byte-stable across runs
            with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as gz:
                gz.write(data)
        else:
            path.write_bytes(data)
        return path

    @classmethod
    def read(cls, path) -> "EventLog":
        path = Path(path)
        opener = gzip.open if path.suffix == ".gz" else open
        log = cls()
        with opener(path, "rt", newline="") as fh:
            r = csv.reader(fh)
            next(r)
            for t, ev, node, payload, peer, detail in r:
                log.append(int(t), ev, int(node), int(payload), int(peer), detail)
        return log


def build_grid(sim: SimConfig, mcs: McsEntry, channel: ChannelConfig) -> tuple[ResourceGrid, McsEntry]:
    n_sub = sim.subchannels_per_subframe or mcs.subchannels_per_subframe
    grid = ResourceGrid.partition(n_sub, channel.bandwidth_mhz)
    return grid, mcs.fitted_to(grid)


def _gain_matrix(scenario: Scenario, nodes, channel: ChannelConfig, seed: int) -> np.ndarray:
    px = np.array([n.x for n in nodes])
    py = np.array([n.y for n in nodes])
    dist = np.hypot(px[:, None] - px[None, :], py[:, None] - py[None, :])
    b_hits, t_hits = link_matrices(scenario, nodes)
    pl = path_loss_matrix(dist, b_hits, t_hits, channel)
    sig = np.where(b_hits > 0, channel.sigma(LinkKind.NLOS_BUILDING),
                   np.where(t_hits > 0, channel.sigma(LinkKind.NLOS_TRUCK), channel.sigma(LinkKind.LOS)))
    if np.any(sig > 0):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5AAD]))
        z = np.triu(rng.standard_normal(pl.shape), 1)
        pl = pl + (z + z.T) * sig
    gain = dbm_to_mw(2 * channel.antenna_gain_dbi - pl)
    np.fill_diagonal(gain, 0.0)
    return gain


class _Emission(NamedTuple):
    node: int
    power_mw: float
    start: int
    width: int
    copies: tuple  # ((payload, gen_ms, is_retx), ...)
    reserves_next: bool


def run(scenario: Scenario, sim_cfg: SimConfig, channel_cfg: ChannelConfig | None = None,
        mac_cfg: MacConfig | None = None, run_seed: int | None = None,
        mcs_table: dict | None = None) -> tuple[EventLog, MetricsReport]:
    """Simulate one deployment and return its event log and metrics.

    Each subframe: due nodes generate messages (reselecting if they hold no
    reservation), reserved nodes pass the CR gate and transmit, every radio
    node senses, vehicles decode their serving RSU, and counters advance.
    """
    channel_cfg = channel_cfg or ChannelConfig()
    mac_cfg = mac_cfg or MacConfig()
    sps, cc = mac_cfg.sps, mac_cfg.cc
    sim_cfg.validate(sps)
    run_seed = scenario.config.rng_seed if run_seed is None else run_seed
    mcs_base = mcs_lookup(sim_cfg.mcs_index, mcs_table if mcs_table is not None else load_mcs_table())
    grid, mcs = build_grid(sim_cfg, mcs_base, channel_cfg)
    return _Run(scenario, sim_cfg, channel_cfg, sps, cc, grid, mcs, run_seed).execute()


class _Run:
    def __init__(self, scenario, sim, channel, sps, cc, grid, mcs, seed):
        self.scenario, self.sim, self.channel = scenario, sim, channel
        self.sps, self.cc, self.grid, self.mcs, self.seed = sps, cc, grid, mcs, seed
        self.nodes = scenario.radio_nodes
        self.n = len(self.nodes)
        self.S = grid.subchannels_per_subframe
        self.W = sps.sensing_window_ms
        self.R = sps.rri_ms
        self.log = EventLog()

        self.gain = _gain_matrix(scenario, self.nodes, channel, seed)
        self.sens_mw = float(dbm_to_mw(sim.rx_sensitivity_dbm))
        occupied_hz = mcs.occupied_rbs(grid) * RB_BANDWIDTH_KHZ * 1e3
        self.noise_mw = float(dbm_to_mw(noise_floor(channel, occupied_hz)))
        self.rssi = np.zeros((self.n, self.W, self.S))
        self.rsrp = np.zeros((self.n, self.R, self.S))

        self.is_rsu = np.array([nd.kind is NodeKind.RSU for nd in self.nodes])
        index = {nd.id: i for i, nd in enumerate(self.nodes)}
        self.serving = np.full(self.n, -1)
        for i, nd in enumerate(self.nodes):
            if nd.kind is NodeKind.VEHICLE:
                rsu = serving_rsu(nd, scenario)
                if rsu is not None:
                    self.serving[i] = index[rsu.id]
        self.attached = {i: np.flatnonzero(self.serving == i) for i in np.flatnonzero(self.is_rsu)}

        ss = np.random.SeedSequence([seed, 0xC0FFEE])
        self.rngs = [np.random.default_rng(np.random.SeedSequence([seed, nd.id, 1])) for nd in self.nodes]
        self.decode_rng = np.random.default_rng(ss)
        period = sim.inter_broadcast_interval_ms
        self.phase = [int(self.rngs[i].integers(period)) for i in range(self.n)]
        self.by_phase = [[] for _ in range(period)]
        for i in range(self.n):
            self.by_phase[self.phase[i]].append(i)

        self.rc = [0] * self.n
        self.next_tx = [-1] * self.n
        self.start = [0] * self.n
        self.pending = [None] * self.n  # (payload, gen_ms)
        self.retx_copy = [None] * self.n
        self.cong = [CongestionState(enforcement_mode=cc.mode, tx_power_dbm=sim.tx_power_dbm) for _ in range(self.n)]
        self.occ = [deque() for _ in range(self.n)]
        self.occ_sum = [0] * self.n
        self.violated = [False] * self.n
        self.schedule: dict[int, list[int]] = {}
        self.payload_seq = 0

        nv = self.n
        self.received = np.zeros(nv, dtype=np.int64)
        self.transmitted = np.zeros(nv, dtype=np.int64)
        self.dropped = np.zeros(nv, dtype=np.int64)
        self.latencies: list[int] = []
        self.got: dict[int, np.ndarray] = {}
        self.measured: dict[int, bool] = {}
        self.cbr_trace: list[tuple[int, float]] = []
        self.cr_checks: list[tuple[int, int, float, float, str]] = []
        self.counts = {"superseded": 0, "cr_drops": 0, "reselections": 0, "rsu_payloads": 0}

    def history(self, i) -> SensingHistory:
        return SensingHistory(self.rssi[i], self.rsrp[i])

    # -- per-subframe steps -------------------------------------------------

    def _drop(self, t, i, payload, gen, reason):
        self.log.append(t, "drop", self.nodes[i].id, payload, -1, reason)
        if self.is_rsu[i] and self.measured.get(payload) and not reason.endswith("retx"):
            self.dropped[self.attached[i]] += 1

    def _generate(self, t):
        for i in self.by_phase[t % self.sim.inter_broadcast_interval_ms]:
            node_id = self.nodes[i].id
            if self.pending[i] is not None:
                old, gen = self.pending[i]
                self.counts["superseded"] += 1
                self._drop(t, i, old, gen, "superseded")
            p = self.payload_seq
            self.payload_seq += 1
            self.pending[i] = (p, t)
            self.log.append(t, "message_generated", node_id, p)
            if self.is_rsu[i]:
                measured = self.sim.warmup_ms <= t < self.sim.measure_end_ms
                self.measured[p] = measured
                self.counts["rsu_payloads"] += measured
            if self.next_tx[i] < 0:
                res, rc = sps_select(self.history(i), self.grid, self.mcs, t, self.rngs[i], self.sps)
                self.rc[i] = rc
                self.next_tx[i] = res.subframe
                self.start[i] = res.start
                self.schedule.setdefault(res.subframe, []).append(i)
                self.counts["reselections"] += 1
                self.log.append(t, "reselection", node_id, -1, -1,
                                f"t={res.subframe} sc={res.start} rc={rc}")

    def _cr_gate(self, t, i):
        st = self.cong[i]
        cc = self.cc
        w = self.mcs.subchannels_for_message
        occ = self.occ[i]
        while occ and occ[0][0] <= t - cc.cr_window:
            self.occ_sum[i] -= occ.popleft()[1]
        st.cr = (self.occ_sum[i] + w) / (cc.cr_window * self.S)
        st.cbr = compute_cbr(self.rssi[i], cc.busy_threshold_dbm, cc.cbr_window, t - 1) if t > 0 else 0.0
        st.cr_limit = cc.table.lookup(st.cbr)
        action, power = enforce_cr(st, None, cc, t)
        if st.cr > st.cr_limit:
            self.violated[i] = True
            self.log.append(t, "cr_violation", self.nodes[i].id, -1, -1, f"cr={st.cr:.6g} limit={st.cr_limit:.6g}")
        cr_after = st.cr if action is not CcAction.DROP else self.occ_sum[i] / (cc.cr_window * self.S)
        self.cr_checks.append((t, self.nodes[i].id, cr_after, st.cr_limit, action.value))
        return action, power

    def _transmit(self, t) -> list[_Emission]:
        due = self.schedule.pop(t, None)
        if not due:
            return []
        emissions = []
        period = self.R
        for i in sorted(due):
            node_id = self.nodes[i].id
            copies = []
            if self.pending[i] is not None:
                copies.append((*self.pending[i], False))
            if self.sim.retx and self.retx_copy[i] is not None:
                copies.append((*self.retx_copy[i], True))
            if not copies:
                self._reschedule(i, t + period)
                continue
            power = self.sim.tx_power_dbm
            if self.cc.mode is not CcMode.OFF:
                action, power = self._cr_gate(t, i)
                if action is CcAction.DROP:
                    self.counts["cr_drops"] += 1
                    for p, gen, is_retx in copies:
                        self._drop(t, i, p, gen, "cr_retx" if is_retx else "cr")
                    self.pending[i] = None
                    self.retx_copy[i] = None
                    self._reschedule(i, t + period)
                    continue
            w = self.mcs.subchannels_for_message
            for p, gen, is_retx in copies:
                self.log.append(t, "tx", node_id, p, -1, "retx" if is_retx else "first")
                if self.is_rsu[i] and not is_retx and self.measured.get(p):
                    self.transmitted[self.attached[i]] += 1
            self.occ[i].append((t, w))
            self.occ_sum[i] += w
            fresh = self.pending[i]
            self.pending[i] = None
            self.retx_copy[i] = fresh if self.sim.retx else None
            self.rc[i] -= 1
            reserves_next = self.rc[i] > 0
            if reserves_next:
                self._reschedule(i, t + period)
            else:
                self.next_tx[i] = -1
            emissions.append(_Emission(i, float(dbm_to_mw(power)), self.start[i], w, tuple(copies), reserves_next))
        return emissions

    def _reschedule(self, i, when):
        self.next_tx[i] = when
        self.schedule.setdefault(when, []).append(i)

    def _radio(self, t, emissions: list[_Emission]):
        row, rrow = t % self.W, t % self.R
        tx_idx = np.array([e.node for e in emissions], dtype=np.int64)
        tx_mw = np.array([e.power_mw for e in emissions])
        starts = np.array([e.start for e in emissions], dtype=np.int64)
        widths = np.array([e.width for e in emissions], dtype=np.int64)
        rx = kernels.rx_power_grid(tx_idx, tx_mw, starts, widths, self.gain, self.S)
        busy = np.zeros(self.n, dtype=bool)
        busy[tx_idx] = True
        rx[busy] = 0.0
        self.rssi[:, row, :] = rx

        for e in emissions:
            if not e.reserves_next:
                continue
            p = e.power_mw * self.gain[e.node]
            p = np.where((p >= self.sens_mw) & ~busy, p, 0.0)
            blk = self.rsrp[:, rrow, e.start:e.start + e.width]
            np.maximum(blk, p[:, None], out=blk)

        for k, e in enumerate(emissions):
            if self.is_rsu[e.node] and len(self.attached[e.node]):
                self._decode_rsu(t, k, emissions, busy)

    def _decode_rsu(self, t, k, emissions, busy):
        e = emissions[k]
        vs = self.attached[e.node]
        sig = e.power_mw * self.gain[e.node, vs]
        interf = np.zeros(len(vs))
        lo, hi = e.start, e.start + e.width
        for j, o in enumerate(emissions):
            if j == k:
                continue
            ov = min(hi, o.start + o.width) - max(lo, o.start)
            if ov > 0:
                interf += o.power_mw * self.gain[o.node, vs] * (ov / o.width)
        with np.errstate(divide="ignore"):
            sinr_db = 10.0 * np.log10(sig / (interf + self.noise_mw))
        hd = busy[vs]
        weak = sig < self.sens_mw
        rsu_id = self.nodes[e.node].id
        thr = self.mcs.sinr_threshold_db
        for payload, gen, is_retx in e.copies:
            got = self.got.get(payload)
            if got is None:
                got = self.got[payload] = np.zeros(len(vs), dtype=bool)
            ok = self._succeeds(sinr_db, thr, is_retx)
            outcome = np.where(hd, 2, np.where(weak, 1, np.where(ok, 0, 3)))
            measured = self.measured.get(payload, False)
            for m, v in enumerate(vs):
                if got[m]:
                    continue
                oc = _OUTCOMES[outcome[m]]
                self.log.append(t, "rx_outcome", self.nodes[v].id, payload, rsu_id, oc)
                if outcome[m] == 0:
                    got[m] = True
                    if measured:
                        self.received[v] += 1
                        self.latencies.append(t + 1 - gen)
            if is_retx or not self.sim.retx:
                self.got.pop(payload, None)

    def _succeeds(self, sinr_db, thr, is_retx):
        if self.sim.decode_mode == "logistic":
            return self.decode_rng.random(len(sinr_db)) < success_probability(sinr_db, thr, self.sim.bler_slope_db)
        return sinr_db >= thr

    def _trace_cbr(self, t):
        lo = max(0, t - self.cc.cbr_window + 1)
        rows = np.arange(lo, t + 1) % self.W
        thr = 10.0 ** (self.cc.busy_threshold_dbm / 10.0)
        cbr = (self.rssi[:, rows, :] > thr).mean(axis=(1, 2))
        self.cbr_trace.append((t, float(cbr.mean())))

    # -- main loop ----------------------------------------------------------

    def execute(self) -> tuple[EventLog, MetricsReport]:
        sim = self.sim
        self.log.append(0, "config", -1, -1, -1,
                        f"warmup={sim.warmup_ms} measure_end={sim.measure_end_ms} duration={sim.duration_ms}")
        for i in range(self.n):
            if self.serving[i] >= 0:
                self.log.append(0, "attach", self.nodes[i].id, -1, self.nodes[self.serving[i]].id)
        every = sim.cbr_trace_every_ms
        for t in range(sim.duration_ms):
            self.rssi[:, t % self.W, :] = 0.0
            self.rsrp[:, t % self.R, :] = 0.0
            self._generate(t)
            emissions = self._transmit(t)
            if emissions:
                self._radio(t, emissions)
            if every and t % every == every - 1:
                self._trace_cbr(t)
        return self.log, self._report()

    def _report(self) -> MetricsReport:
        counters = {}
        serving = {}
        for i, nd in enumerate(self.nodes):
            if nd.kind is NodeKind.VEHICLE:
                s = self.serving[i]
                serving[nd.id] = None if s < 0 else self.nodes[s].id
                counters[nd.id] = VehicleCounters(int(self.received[i]), int(self.transmitted[i]),
                                                  int(self.dropped[i]))
        checks = np.array([(c[0], c[1], c[2], c[3]) for c in self.cr_checks], dtype=float).reshape(-1, 4)
        diagnostics = {
            "cbr_trace": self.cbr_trace,
            "cr_checks": checks,
            "cr_actions": [c[4] for c in self.cr_checks],
            "counts": dict(self.counts),
            "grid": {"subchannels_per_subframe": self.S, "rbs_per_subchannel": self.grid.rbs_per_subchannel,
                     "message_subchannels": self.mcs.subchannels_for_message},
        }
        meta = {"mcs_index": self.mcs.index, "seed": self.seed, "duration_ms": self.sim.duration_ms,
                "warmup_ms": self.sim.warmup_ms, "measure_end_ms": self.sim.measure_end_ms,
                "cc_mode": self.cc.mode.value, "retransmissions": self.sim.retx}
        return build_report(counters, serving, self.latencies, meta=meta, diagnostics=diagnostics)


_OUTCOMES = (RxOutcome.DELIVERED.value, RxOutcome.FAIL_SENSITIVITY.value,
             RxOutcome.FAIL_HALFDUPLEX.value, RxOutcome.FAIL_SINR.value)


def measure_latency(message_generated_at: int, received_at: int) -> int:
    return received_at - message_generated_at


def run_seed(scenario_cfg: ScenarioConfig, sim_cfg: SimConfig, channel_cfg: ChannelConfig | None = None,
             mac_cfg: MacConfig | None = None, seed: int = 0, mcs_table=None):
    """Deploy with ``seed`` and run with the same seed."""
    scenario = deploy_scenario(replace(scenario_cfg, rng_seed=seed))
    return run(scenario, sim_cfg, channel_cfg, mac_cfg, run_seed=seed, mcs_table=mcs_table)


def run_campaign(scenario_cfg: ScenarioConfig, sim_cfg: SimConfig, channel_cfg: ChannelConfig | None = None,
                 mac_cfg: MacConfig | None = None, seeds=None, keep_logs: bool = False, mcs_table=None):
    """Run every seed; returns ``(reports, logs)`` with ``logs`` empty unless kept."""
    seeds = sim_cfg.seeds if seeds is None else seeds
    reports, logs = [], []
    for s in seeds:
        log, rep = run_seed(scenario_cfg, sim_cfg, channel_cfg, mac_cfg, s, mcs_table)
        reports.append(rep)
        if keep_logs:
            logs.append(log)
    return reports, logs
