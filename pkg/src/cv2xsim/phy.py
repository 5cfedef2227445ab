"""Resource grid, MCS table and the per-transmission decode decision."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .channel import LinkBudget

RB_BANDWIDTH_KHZ = 180.0
# usable RBs per LTE channel bandwidth
_USABLE_RBS = {1.4: 6, 3.0: 15, 5.0: 25, 10.0: 50, 15.0: 75, 20.0: 100}


class ConfigurationError(ValueError):
    pass


class SelectionError(ValueError):
    """A message does not fit the grid from the requested start subchannel."""


class RxOutcome(str, enum.Enum):
    DELIVERED = "delivered"
    FAIL_SENSITIVITY = "fail_sensitivity"
    FAIL_SINR = "fail_sinr"
    FAIL_HALFDUPLEX = "fail_halfduplex"


def usable_rbs(bandwidth_mhz: float) -> int:
    try:
        return _USABLE_RBS[float(bandwidth_mhz)]
    except KeyError:
        return int(bandwidth_mhz * 1000 // RB_BANDWIDTH_KHZ * 0.9)


@dataclass(frozen=True)
class ResourceGrid:
    subchannels_per_subframe: int
    rbs_per_subchannel: int
    rb_bandwidth_khz: float = RB_BANDWIDTH_KHZ
    channel_bandwidth_mhz: float = 20.0
    subframe_duration_ms: float = 1.0
    slots_per_subframe: int = 2

    def __post_init__(self):
        if not 1 <= self.subchannels_per_subframe <= 10:
            raise ConfigurationError("subchannels_per_subframe must lie in [1, 10]")
        if self.rbs_per_subchannel < 1:
            raise ConfigurationError("rbs_per_subchannel must be >= 1")
        if self.total_rbs > usable_rbs(self.channel_bandwidth_mhz):
            raise ConfigurationError(
                f"{self.subchannels_per_subframe} x {self.rbs_per_subchannel} RBs exceeds the "
                f"{usable_rbs(self.channel_bandwidth_mhz)}-RB budget"
            )

    @property
    def total_rbs(self) -> int:
        return self.subchannels_per_subframe * self.rbs_per_subchannel

    @property
    def slot_duration_ms(self) -> float:
        return self.subframe_duration_ms / self.slots_per_subframe

    @classmethod
    def partition(cls, subchannels: int, channel_bandwidth_mhz: float = 20.0) -> "ResourceGrid":
        """Split the whole channel into ``subchannels`` equal subchannels."""
        rbs = usable_rbs(channel_bandwidth_mhz) // subchannels
        return cls(subchannels, rbs, channel_bandwidth_mhz=channel_bandwidth_mhz)


@dataclass(frozen=True)
class McsEntry:
    index: int
    modulation: str
    modulation_order: int
    code_rate: float
    rbs_for_message: int
    subchannels_per_subframe: int
    subchannels_for_message: int
    sinr_threshold_db: float

    def __post_init__(self):
        if not 0 <= self.index <= 20:
            raise ConfigurationError(f"MCS index {self.index} outside [0, 20]")
        if self.modulation_order not in (2, 4, 6):
            raise ConfigurationError(f"MCS {self.index}: modulation order {self.modulation_order}")
        if not 0.0 < self.code_rate < 1.0:
            raise ConfigurationError(f"MCS {self.index}: code rate {self.code_rate}")

    def fitted_to(self, grid: ResourceGrid) -> "McsEntry":
        """Entry whose message width is recomputed for ``grid``."""
        width = math.ceil(self.rbs_for_message / grid.rbs_per_subchannel)
        if width > grid.subchannels_per_subframe:
            raise ConfigurationError(
                f"MCS {self.index} needs {self.rbs_for_message} RBs; grid holds {grid.total_rbs}"
            )
        return replace(self, subchannels_for_message=width)

    def occupied_rbs(self, grid: ResourceGrid) -> int:
        return min(self.rbs_for_message, self.subchannels_for_message * grid.rbs_per_subchannel)


def _read_table(fh) -> dict[int, McsEntry]:
    table = {}
    for row in csv.DictReader(line for line in fh if not line.startswith("#")):
        e = McsEntry(
            index=int(row["index"]),
            modulation=row["modulation"],
            modulation_order=int(row["modulation_order"]),
            code_rate=float(row["code_rate"]),
            rbs_for_message=int(row["rbs_for_message"]),
            subchannels_per_subframe=int(row["subchannels_per_subframe"]),
            subchannels_for_message=int(row["subchannels_for_message"]),
            sinr_threshold_db=float(row["sinr_threshold_db"]),
        )
        table[e.index] = e
    return table


@lru_cache(maxsize=8)
def load_mcs_table(path: str | None = None) -> dict[int, McsEntry]:
    if path is None:
        with resources.files("cv2xsim.data").joinpath("mcs_table.csv").open() as fh:
            return _read_table(fh)
    with open(Path(path)) as fh:
        return _read_table(fh)


def mcs_lookup(index: int, table: dict[int, McsEntry] | None = None) -> McsEntry:
    table = table if table is not None else load_mcs_table()
    try:
        return table[index]
    except KeyError:
        raise ConfigurationError(f"MCS index {index} not in table") from None


@dataclass(frozen=True)
class Transmission:
    tx_node_id: int
    subframe_index: int
    subchannel_set: range
    mcs_index: int
    payload_id: int
    is_retransmission: bool = False
    tx_power_dbm: float = 23.0


def place_message(mcs: McsEntry, grid: ResourceGrid, start_subchannel: int) -> range:
    width = mcs.subchannels_for_message
    if start_subchannel < 0 or start_subchannel + width > grid.subchannels_per_subframe:
        raise SelectionError(
            f"{width} subchannels from {start_subchannel} exceed a grid of {grid.subchannels_per_subframe}"
        )
    return range(start_subchannel, start_subchannel + width)


def success_probability(sinr_db, threshold_db: float, slope_db: float):
    """Logistic block success curve: 0.9 at the threshold (10% BLER)."""
    z = (np.asarray(sinr_db, dtype=float) - threshold_db) / slope_db + math.log(9.0)
    return 1.0 / (1.0 + np.exp(-z))


def decode(tx: Transmission, budget: LinkBudget, rx_sensitivity_dbm: float, *,
           rx_transmitting: bool = False, mcs: McsEntry | None = None,
           rng: np.random.Generator | None = None, slope_db: float | None = None) -> RxOutcome:
    """Decide one reception.

    Deterministic threshold model unless both ``rng`` and ``slope_db`` are
    given, in which case success is drawn from :func:`success_probability`.
    """
    if rx_transmitting:
        return RxOutcome.FAIL_HALFDUPLEX
    if budget.rx_power_dbm < rx_sensitivity_dbm:
        return RxOutcome.FAIL_SENSITIVITY
    mcs = mcs or mcs_lookup(tx.mcs_index)
    if rng is not None and slope_db:
        p = success_probability(budget.sinr_db, mcs.sinr_threshold_db, slope_db)
        return RxOutcome.DELIVERED if rng.random() < p else RxOutcome.FAIL_SINR
    if budget.sinr_db >= mcs.sinr_threshold_db:
        return RxOutcome.DELIVERED
    return RxOutcome.FAIL_SINR
