"""Urban grid geometry, random deployment and link blockage classification."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import kernels


class GeometryError(ValueError):
    """Raised when a deployment cannot satisfy the lane spacing constraint."""


class Direction(str, enum.Enum):
    SOUTH_NORTH = "South-North"
    NORTH_SOUTH = "North-South"
    EAST_WEST_1 = "East-West 1"
    WEST_EAST_1 = "West-East 1"
    EAST_WEST_2 = "East-West 2"
    WEST_EAST_2 = "West-East 2"


class NodeKind(str, enum.Enum):
    RSU = "RSU"
    VEHICLE = "Vehicle"
    TRUCK = "Truck"


class Rect(NamedTuple):
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax


@dataclass(frozen=True)
class RoadSegment:
    """Two-way road; ``forward`` travels start -> end, ``backward`` the reverse."""

    name: str
    start: tuple[float, float]
    end: tuple[float, float]
    forward: Direction
    backward: Direction

    @property
    def length(self) -> float:
        return math.dist(self.start, self.end)


def _default_roads() -> list[RoadSegment]:
    return [
        RoadSegment("EW1", (0.0, 130.0), (240.0, 130.0), Direction.WEST_EAST_1, Direction.EAST_WEST_1),
        RoadSegment("EW2", (0.0, 390.0), (240.0, 390.0), Direction.WEST_EAST_2, Direction.EAST_WEST_2),
        RoadSegment("NS", (120.0, 130.0), (120.0, 390.0), Direction.SOUTH_NORTH, Direction.NORTH_SOUTH),
    ]


def default_buildings(
    width: float = 240.0,
    height: float = 520.0,
    roads: Sequence[RoadSegment] | None = None,
    half_corridor: float = 7.0,
    inset: float = 5.0,
) -> list[Rect]:
    """Blocks filling the space between the default road corridors.

    Two horizontal roads split the area into a bottom band, a middle band and
    a top band; the vertical connector splits the middle band in two.
    """
    roads = list(roads) if roads is not None else _default_roads()
    ys = sorted(r.start[1] for r in roads if r.start[1] == r.end[1])
    xs = sorted(r.start[0] for r in roads if r.start[0] == r.end[0])
    if len(ys) != 2 or len(xs) != 1:
        raise ValueError("default buildings need two horizontal roads and one vertical road")
    g = half_corridor + inset
    (y1, y2), (x1,) = ys, xs
    return [
        Rect(0.0, 0.0, width, y1 - g),
        Rect(0.0, y1 + g, x1 - g, y2 - g),
        Rect(x1 + g, y1 + g, width, y2 - g),
        Rect(0.0, y2 + g, width, height),
    ]


@dataclass(frozen=True)
class ScenarioConfig:
    area_width_m: float = 240.0
    area_height_m: float = 520.0
    road_segments: tuple[RoadSegment, ...] = field(default_factory=lambda: tuple(_default_roads()))
    junctions: tuple[tuple[float, float], ...] = ((120.0, 130.0), (120.0, 390.0))
    rsu_range_m: float = 150.0
    lambda_vehicles: float = 20.0
    theta_trucks: float = 2.0
    count_mode: str = "poisson"  # or "fixed"
    buildings: tuple[Rect, ...] | None = None  # None -> default_buildings()
    lanes_per_direction: int = 2
    lane_width_m: float = 3.5
    min_spacing_m: float = 5.0
    truck_length_m: float = 14.0
    truck_width_m: float = 2.6
    tx_power_dbm: float = 23.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.buildings is None:
            object.__setattr__(
                self,
                "buildings",
                tuple(default_buildings(self.area_width_m, self.area_height_m, self.road_segments)),
            )
        self.validate()

    def validate(self) -> None:
        if self.area_width_m <= 0 or self.area_height_m <= 0:
            raise ValueError("area dimensions must be positive")
        if self.lambda_vehicles < 0 or self.theta_trucks < 0:
            raise ValueError("lambda_vehicles and theta_trucks must be >= 0")
        if self.count_mode not in ("poisson", "fixed"):
            raise ValueError(f"count_mode must be 'poisson' or 'fixed', got {self.count_mode!r}")
        if not -30.0 <= self.tx_power_dbm <= 33.0:
            raise ValueError("tx_power_dbm outside [-30, 33] dBm")
        area = Rect(0.0, 0.0, self.area_width_m, self.area_height_m)
        for r in self.road_segments:
            if not (area.contains(*r.start) and area.contains(*r.end)):
                raise ValueError(f"road {r.name} leaves the area")
        for j in self.junctions:
            if not area.contains(*j):
                raise ValueError(f"junction {j} outside the area")
        for b in self.buildings:
            if not (area.contains(b.xmin, b.ymin) and area.contains(b.xmax, b.ymax)):
                raise ValueError(f"building {b} outside the area")
        dirs = [d for r in self.road_segments for d in (r.forward, r.backward)]
        if sorted(dirs) != sorted(Direction) or len(dirs) != 6:
            raise ValueError("road segments must enumerate each of the six directions exactly once")


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind
    x: float
    y: float
    direction: Direction | None = None
    lane_index: int | None = None
    tx_power_dbm: float = 23.0
    extent: Rect | None = None

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


class LinkKind(str, enum.Enum):
    LOS = "LOS"
    NLOS_BUILDING = "NLOS_building"
    NLOS_TRUCK = "NLOS_truck"


@dataclass(frozen=True)
class LinkClass:
    """Blockage class; ``blocking_node_ids`` holds truck ids, or building
    indices for ``NLOS_building``."""

    kind: LinkKind
    blocking_node_ids: tuple[int, ...] = ()


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    nodes: tuple[Node, ...]

    @property
    def buildings(self) -> tuple[Rect, ...]:
        return self.config.buildings

    @property
    def rsus(self) -> list[Node]:
        return [n for n in self.nodes if n.kind is NodeKind.RSU]

    @property
    def vehicles(self) -> list[Node]:
        return [n for n in self.nodes if n.kind is NodeKind.VEHICLE]

    @property
    def trucks(self) -> list[Node]:
        return [n for n in self.nodes if n.kind is NodeKind.TRUCK]

    @property
    def radio_nodes(self) -> list[Node]:
        """Nodes that transmit and receive (trucks are passive obstacles)."""
        return [n for n in self.nodes if n.kind is not NodeKind.TRUCK]

    def node(self, node_id: int) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def lane_geometry(self, direction: Direction, lane: int) -> tuple[np.ndarray, np.ndarray, float]:
        return lane_geometry(self.config, direction, lane)


def lane_geometry(cfg: ScenarioConfig, direction: Direction, lane: int):
    """Return (origin, unit travel vector, length) of a lane centreline."""
    for road in cfg.road_segments:
        if direction in (road.forward, road.backward):
            break
    else:
        raise KeyError(direction)
    a, b = np.array(road.start, dtype=float), np.array(road.end, dtype=float)
    if direction is road.backward:
        a, b = b, a
    length = float(np.linalg.norm(b - a))
    u = (b - a) / length
    right = np.array([u[1], -u[0]])  # right-hand traffic
    origin = a + right * (lane + 0.5) * cfg.lane_width_m
    return origin, u, length


def _footprint(cx: float, cy: float, u: np.ndarray, length: float, width: float) -> Rect:
    hx = abs(u[0]) * length / 2 + abs(u[1]) * width / 2
    hy = abs(u[1]) * length / 2 + abs(u[0]) * width / 2
    return Rect(cx - hx, cy - hy, cx + hx, cy + hy)


def _count(rng: np.random.Generator, mean: float, mode: str) -> int:
    if mode == "fixed":
        return int(round(mean))
    return int(rng.poisson(mean))


def deploy_scenario(config: ScenarioConfig) -> Scenario:
    """Place RSUs at the junctions and draw vehicles and trucks on every lane.

    Per direction the vehicle and truck counts are Poisson with means
    ``lambda_vehicles`` and ``theta_trucks`` (exact counts with
    ``count_mode="fixed"``). Nodes sit uniformly along their lane subject to
    a minimum bumper gap of ``min_spacing_m``.
    """
    rng = np.random.default_rng(np.random.SeedSequence([config.rng_seed, 0x5CE7]))
    nodes: list[Node] = []
    for jx, jy in config.junctions:
        nodes.append(Node(len(nodes), NodeKind.RSU, float(jx), float(jy), tx_power_dbm=config.tx_power_dbm))

    placed: list[tuple[NodeKind, Direction, int, float, float, Rect | None]] = []
    for direction in Direction:
        n_veh = _count(rng, config.lambda_vehicles, config.count_mode)
        n_trk = _count(rng, config.theta_trucks, config.count_mode)
        kinds = np.array([0] * n_veh + [1] * n_trk)
        rng.shuffle(kinds)
        lanes = rng.integers(0, config.lanes_per_direction, size=len(kinds))
        for lane in range(config.lanes_per_direction):
            lane_kinds = kinds[lanes == lane]
            if len(lane_kinds) == 0:
                continue
            origin, u, length = lane_geometry(config, direction, lane)
            lengths = np.where(lane_kinds == 1, config.truck_length_m, 0.0)
            gaps = config.min_spacing_m + (lengths[1:] + lengths[:-1]) / 2
            head = lengths[0] / 2
            tail = lengths[-1] / 2
            slack = length - head - tail - gaps.sum()
            if slack < 0:
                raise GeometryError(
                    f"direction {direction.value} lane {lane}: {len(lane_kinds)} nodes do not fit "
                    f"in {length:.1f} m with {config.min_spacing_m} m spacing"
                )
            offsets = np.sort(rng.uniform(0.0, slack, size=len(lane_kinds)))
            s = head + offsets + np.concatenate([[0.0], np.cumsum(gaps)])
            for kind, pos in zip(lane_kinds, s):
                cx, cy = origin + u * pos
                if kind == 1:
                    ext = _footprint(cx, cy, u, config.truck_length_m, config.truck_width_m)
                    placed.append((NodeKind.TRUCK, direction, lane, cx, cy, ext))
                else:
                    placed.append((NodeKind.VEHICLE, direction, lane, cx, cy, None))

    # vehicles before trucks so radio node ids are contiguous
    for kind in (NodeKind.VEHICLE, NodeKind.TRUCK):
        for k, d, lane, cx, cy, ext in placed:
            if k is kind:
                nodes.append(
                    Node(len(nodes), k, float(cx), float(cy), d, int(lane), config.tx_power_dbm, ext)
                )
    return Scenario(config, tuple(nodes))


def inject_vehicle(scenario: Scenario, x: float, y: float, direction: Direction = Direction.WEST_EAST_1,
                   lane: int = 0) -> Scenario:
    """Return a copy of ``scenario`` with one extra vehicle at (x, y)."""
    nid = max(n.id for n in scenario.nodes) + 1
    v = Node(nid, NodeKind.VEHICLE, float(x), float(y), direction, lane, scenario.config.tx_power_dbm)
    return replace(scenario, nodes=scenario.nodes + (v,))


def _truck_arrays(scenario: Scenario, exclude: Sequence[int] = ()):
    trucks = [t for t in scenario.trucks if t.id not in exclude]
    rects = np.array([t.extent for t in trucks], dtype=float).reshape(-1, 4)
    return trucks, rects


def classify_link(tx: Node, rx: Node, scenario: Scenario) -> LinkClass:
    if tx.id == rx.id:
        raise ValueError("tx and rx must differ")
    b = np.array(scenario.buildings, dtype=float).reshape(-1, 4)
    hits = kernels.segment_rect_hits(tx.x, tx.y, rx.x, rx.y, b)
    if hits.any():
        return LinkClass(LinkKind.NLOS_BUILDING, tuple(int(i) for i in np.flatnonzero(hits)))
    trucks, rects = _truck_arrays(scenario, exclude=(tx.id, rx.id))
    hits = kernels.segment_rect_hits(tx.x, tx.y, rx.x, rx.y, rects)
    if hits.any():
        return LinkClass(LinkKind.NLOS_TRUCK, tuple(trucks[i].id for i in np.flatnonzero(hits)))
    return LinkClass(LinkKind.LOS)


def link_matrices(scenario: Scenario, nodes: Sequence[Node]):
    """Batch blockage for every pair of ``nodes``.

    Returns ``(building_hits, truck_hits)``, two symmetric int32 matrices of
    obstacle counts. A pair is NLOS_building when ``building_hits > 0``.
    """
    px = np.array([n.x for n in nodes], dtype=float)
    py = np.array([n.y for n in nodes], dtype=float)
    b = np.array(scenario.buildings, dtype=float).reshape(-1, 4)
    b_hits = kernels.pair_block_counts(px, py, b, np.full(len(b), -1, dtype=np.int64))
    index = {n.id: i for i, n in enumerate(nodes)}
    trucks, rects = _truck_arrays(scenario)
    owner = np.array([index.get(t.id, -1) for t in trucks], dtype=np.int64)
    t_hits = kernels.pair_block_counts(px, py, rects, owner)
    return b_hits, t_hits


def distance(a: Node, b: Node) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def in_rsu_range(rsu: Node, v: Node, config: ScenarioConfig) -> bool:
    if rsu.kind is not NodeKind.RSU:
        raise ValueError("first argument must be an RSU")
    return distance(rsu, v) <= config.rsu_range_m


def serving_rsu(v: Node, scenario: Scenario) -> Node | None:
    """Nearest in-range RSU, ties to the lower id; None when out of range."""
    best = None
    for rsu in scenario.rsus:
        if in_rsu_range(rsu, v, scenario.config):
            if best is None or distance(rsu, v) < distance(best, v):
                best = rsu
    return best


def dump_scenario_csv(scenario: Scenario, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "kind", "x", "y", "direction", "lane"])
        for n in scenario.nodes:
            w.writerow([
                n.id,
                n.kind.value,
                f"{n.x:.3f}",
                f"{n.y:.3f}",
                n.direction.value if n.direction else "",
                "" if n.lane_index is None else n.lane_index,
            ])
