"""YAML configuration files mapped onto the module dataclasses."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import yaml

from .channel import ChannelConfig
from .engine import MacConfig, SimConfig
from .mac import CcConfig, CcMode, CrLimitTable, SpsConfig
from .phy import ConfigurationError
from .scenario import Rect, ScenarioConfig


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    mac: MacConfig = field(default_factory=MacConfig)

    def with_mcs(self, index: int) -> "RunConfig":
        return replace(self, sim=replace(self.sim, mcs_index=index, subchannels_per_subframe=None))

    def with_cc_mode(self, mode) -> "RunConfig":
        return replace(self, mac=replace(self.mac, cc=replace(self.mac.cc, mode=CcMode(mode))))

    def with_seeds(self, seeds) -> "RunConfig":
        return replace(self, sim=replace(self.sim, seeds=tuple(seeds)))


def _build(cls, section: dict | None, where: str, **convert):
    section = dict(section or {})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(section) - known)
    if unknown:
        raise ConfigurationError(f"{where}: unknown field(s) {', '.join(unknown)}")
    for key, fn in convert.items():
        if key in section:
            try:
                section[key] = fn(section[key])
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(f"{where}.{key}: {exc}") from exc
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{where}: {exc}") from exc


def from_dict(data: dict) -> RunConfig:
    data = dict(data or {})
    unknown = sorted(set(data) - {"scenario", "channel", "sim", "sps", "congestion"})
    if unknown:
        raise ConfigurationError(f"unknown section(s) {', '.join(unknown)}")
    scenario = _build(
        ScenarioConfig, data.get("scenario"), "scenario",
        junctions=lambda v: tuple(tuple(map(float, j)) for j in v),
        buildings=lambda v: None if v is None else tuple(Rect(*map(float, b)) for b in v),
    )
    channel = _build(
        ChannelConfig, data.get("channel"), "channel",
        shadowing_sigma_db=lambda v: tuple(sorted((str(k), float(s)) for k, s in dict(v).items())),
    )
    sim = _build(SimConfig, data.get("sim"), "sim", seeds=lambda v: tuple(int(s) for s in v))
    sps = _build(SpsConfig, data.get("sps"), "sps")
    cc_section = dict(data.get("congestion") or {})
    table_path = cc_section.pop("cr_limit_table", None)
    cc = _build(CcConfig, cc_section, "congestion", mode=CcMode)
    if table_path:
        cc = replace(cc, table=CrLimitTable.load(table_path))
    cfg = RunConfig(scenario, channel, sim, MacConfig(sps, cc))
    cfg.sim.validate(cfg.mac.sps)
    return cfg


def load_config(path=None) -> RunConfig:
    """Read a YAML run configuration; ``None`` loads the bundled default."""
    if path is None:
        text = resources.files("cv2xsim.data").joinpath("default.yaml").read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return from_dict(yaml.safe_load(text))
