"""UMi street-canyon path loss, link budgets, noise and SINR."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .scenario import LinkClass, LinkKind

diagnostics: Counter = Counter()

THERMAL_DBM_HZ = -174.0


@dataclass(frozen=True)
class ChannelConfig:
    carrier_freq_ghz: float = 5.9
    bandwidth_mhz: float = 20.0
    noise_figure_db: float = 9.0
    truck_blockage_loss_db: float = 10.0
    max_blocking_trucks: int = 2
    antenna_gain_dbi: float = 0.0
    ue_height_m: float = 1.5
    min_distance_m: float = 1.0
    # per link class std-dev of static log-normal shadowing; 0 disables
    shadowing_sigma_db: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if not 0.5 < self.carrier_freq_ghz < 100.0:
            raise ValueError("carrier_freq_ghz outside the model range (0.5, 100) GHz")
        if self.bandwidth_mhz <= 0:
            raise ValueError("bandwidth_mhz must be positive")
        if self.truck_blockage_loss_db < 0:
            raise ValueError("truck_blockage_loss_db must be >= 0")

    def sigma(self, kind: LinkKind) -> float:
        return dict(self.shadowing_sigma_db).get(kind.value, 0.0)


@dataclass(frozen=True)
class LinkBudget:
    distance_m: float
    link_class: LinkClass
    path_loss_db: float
    blockage_loss_db: float
    tx_power_dbm: float
    gains_db: float
    rx_power_dbm: float
    interference_dbm: float
    noise_dbm: float
    sinr_db: float


def _clamp(d: float, cfg: ChannelConfig) -> float:
    if d < cfg.min_distance_m:
        diagnostics["distance_clamped"] += 1
        return cfg.min_distance_m
    return d


def los_path_loss(d: float, f_ghz: float) -> float:
    return 32.4 + 21.0 * math.log10(d) + 20.0 * math.log10(f_ghz)


def nlos_path_loss(d: float, f_ghz: float, h_ut: float = 1.5) -> float:
    pl_nlos = 35.3 * math.log10(d) + 22.4 + 21.3 * math.log10(f_ghz) - 0.3 * (h_ut - 1.5)
    return max(los_path_loss(d, f_ghz), pl_nlos)


def _n_trucks(link: LinkClass | LinkKind, n_trucks: int | None) -> int:
    if n_trucks is not None:
        return n_trucks
    if isinstance(link, LinkClass):
        return len(link.blocking_node_ids) if link.kind is LinkKind.NLOS_TRUCK else 0
    return 1 if link is LinkKind.NLOS_TRUCK else 0


def blockage_loss(link: LinkClass | LinkKind, cfg: ChannelConfig, n_trucks: int | None = None) -> float:
    kind = link.kind if isinstance(link, LinkClass) else LinkKind(link)
    if kind is not LinkKind.NLOS_TRUCK:
        return 0.0
    n = min(_n_trucks(link, n_trucks), cfg.max_blocking_trucks)
    return n * cfg.truck_blockage_loss_db


def base_path_loss(distance_m: float, link: LinkClass | LinkKind, cfg: ChannelConfig) -> float:
    kind = link.kind if isinstance(link, LinkClass) else LinkKind(link)
    d = _clamp(distance_m, cfg)
    if kind is LinkKind.NLOS_BUILDING:
        return nlos_path_loss(d, cfg.carrier_freq_ghz, cfg.ue_height_m)
    return los_path_loss(d, cfg.carrier_freq_ghz)


def path_loss(distance_m: float, link: LinkClass | LinkKind, cfg: ChannelConfig,
              n_trucks: int | None = None) -> float:
    """Total propagation loss in dB, truck penalties included.

    A bare ``LinkKind.NLOS_TRUCK`` counts as one blocking truck unless
    ``n_trucks`` says otherwise.
    """
    kind = link.kind if isinstance(link, LinkClass) else LinkKind(link)
    if kind is LinkKind.NLOS_TRUCK:
        return base_path_loss(distance_m, LinkKind.LOS, cfg) + blockage_loss(link, cfg, n_trucks)
    return base_path_loss(distance_m, kind, cfg)


def path_loss_matrix(dist: np.ndarray, building_hits: np.ndarray, truck_hits: np.ndarray,
                     cfg: ChannelConfig) -> np.ndarray:
    """Vectorised :func:`path_loss` over a pair matrix. Diagonal is left at 0."""
    d = np.array(dist, dtype=float)
    clamped = d < cfg.min_distance_m
    np.fill_diagonal(clamped, False)
    diagnostics["distance_clamped"] += int(clamped.sum())
    d = np.maximum(d, cfg.min_distance_m)
    lf = 20.0 * math.log10(cfg.carrier_freq_ghz)
    los = 32.4 + 21.0 * np.log10(d) + lf
    nlos = 35.3 * np.log10(d) + 22.4 + 21.3 * math.log10(cfg.carrier_freq_ghz) - 0.3 * (cfg.ue_height_m - 1.5)
    nlos = np.maximum(los, nlos)
    trucks = np.minimum(truck_hits, cfg.max_blocking_trucks) * cfg.truck_blockage_loss_db
    pl = np.where(building_hits > 0, nlos, los + trucks)
    np.fill_diagonal(pl, 0.0)
    return pl


def noise_floor(cfg: ChannelConfig | None = None, bandwidth_hz: float | None = None,
                noise_figure_db: float | None = None) -> float:
    """Thermal noise plus receiver noise figure, in dBm.

    ``bandwidth_hz`` defaults to the whole channel of ``cfg``.
    """
    if bandwidth_hz is None:
        bandwidth_hz = (cfg or ChannelConfig()).bandwidth_mhz * 1e6
    if noise_figure_db is None:
        noise_figure_db = (cfg or ChannelConfig()).noise_figure_db
    return THERMAL_DBM_HZ + 10.0 * math.log10(bandwidth_hz) + noise_figure_db


def dbm_to_mw(p):
    return np.power(10.0, np.asarray(p, dtype=float) / 10.0)


def mw_to_dbm(p):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(p, dtype=float))


def sinr(rx_power_dbm: float, interferer_powers_dbm: Iterable[float], noise_dbm: float) -> float:
    total = sum(10.0 ** (p / 10.0) for p in interferer_powers_dbm) + 10.0 ** (noise_dbm / 10.0)
    if total == 0.0:
        return math.inf
    return rx_power_dbm - 10.0 * math.log10(total)


def link_budget(distance_m: float, link: LinkClass, tx_power_dbm: float, cfg: ChannelConfig,
                interferer_powers_dbm: Iterable[float] = (), bandwidth_hz: float | None = None,
                shadowing_db: float = 0.0) -> LinkBudget:
    interferers = list(interferer_powers_dbm)
    pl = base_path_loss(distance_m, link, cfg) + shadowing_db
    bl = blockage_loss(link, cfg)
    gains = 2 * cfg.antenna_gain_dbi
    rx = tx_power_dbm + gains - pl - bl
    noise = noise_floor(cfg, bandwidth_hz)
    if interferers:
        interference = 10.0 * math.log10(sum(10.0 ** (p / 10.0) for p in interferers))
    else:
        interference = -math.inf
    return LinkBudget(
        distance_m=distance_m,
        link_class=link,
        path_loss_db=pl,
        blockage_loss_db=bl,
        tx_power_dbm=tx_power_dbm,
        gains_db=gains,
        rx_power_dbm=rx,
        interference_dbm=interference,
        noise_dbm=noise,
        sinr_db=sinr(rx, interferers, noise),
    )
