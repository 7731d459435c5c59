"""Trajectory ingestion, synthetic data, snapshot aggregation and splitting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from . import kernels

FEATURE_NAMES = ("congestion", "count", "delay")
CSV_COLUMNS = ("timestamp", "truck_id", "lat", "lon", "congestion", "delay_flag", "demand")
REQUIRED_COLUMNS = ("timestamp", "truck_id", "lat", "lon", "congestion")

# synthetic data clock: 2024-01-01T00:00:00Z, one GPS fix per truck every 15 min
SYNTH_EPOCH = 1_704_067_200
SYNTH_TICK_S = 900
SYNTH_TICKS_PER_DAY = 96


@dataclass(frozen=True)
class RawRecord:
    timestamp: int
    truck_id: str
    lat: float
    lon: float
    congestion: float
    delay_flag: bool = False
    demand: float = 0.0


@dataclass(frozen=True)
class TrajectorySet:
    """Time-ordered records per truck.

    ``tracks`` preserves the order in which trucks were first seen. ``dropped``
    counts input rows rejected during ingestion.
    """

    tracks: Mapping[str, tuple[RawRecord, ...]]
    dropped: int = 0

    def __post_init__(self):
        for truck, recs in self.tracks.items():
            if not recs:
                raise ValueError(f"truck {truck!r} has no records")
            ts = [r.timestamp for r in recs]
            if any(b < a for a, b in zip(ts, ts[1:])):
                raise ValueError(f"records of truck {truck!r} are not time-sorted")

    def __len__(self) -> int:
        return sum(len(r) for r in self.tracks.values())

    def records(self) -> Iterable[RawRecord]:
        for recs in self.tracks.values():
            yield from recs

    @cached_property
    def columns(self) -> dict[str, np.ndarray]:
        """Columnar view, tracks concatenated; ``starts`` holds track offsets."""
        recs = list(self.records())
        lengths = [len(r) for r in self.tracks.values()]
        return {
            "timestamp": np.array([r.timestamp for r in recs], dtype=np.int64),
            "lat": np.array([r.lat for r in recs], dtype=np.float64),
            "lon": np.array([r.lon for r in recs], dtype=np.float64),
            "congestion": np.array([r.congestion for r in recs], dtype=np.float64),
            "delay": np.array([float(r.delay_flag) for r in recs], dtype=np.float64),
            "demand": np.array([r.demand for r in recs], dtype=np.float64),
            "starts": np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64),
        }

    def points(self) -> np.ndarray:
        c = self.columns
        return np.column_stack([c["lat"], c["lon"]])


def group_records(records: Iterable[RawRecord], dropped: int = 0) -> TrajectorySet:
    tracks: dict[str, list[RawRecord]] = {}
    for r in records:
        tracks.setdefault(r.truck_id, []).append(r)
    # sorted() is stable: equal timestamps keep their input order
    return TrajectorySet(
        {k: tuple(sorted(v, key=lambda r: r.timestamp)) for k, v in tracks.items()},
        dropped=dropped,
    )


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

_TRUE = {"1", "true", "t", "yes", "y"}


def _parse_flag(text: str) -> bool:
    text = text.strip().lower()
    if text in _TRUE:
        return True
    try:
        return float(text) != 0.0
    except ValueError:
        return False


def _parse_float(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(text)
    return v


def ingest_csv(path, schema: Mapping[str, str] | None = None) -> TrajectorySet:
    """Read a trajectory CSV.

    ``schema`` maps logical column names (``timestamp``, ``truck_id``, ``lat``,
    ``lon``, ``congestion`` and optionally ``delay_flag``, ``demand``) to header
    names in the file; unmapped names are looked up verbatim.

    Rows whose coordinates, timestamp or congestion do not parse, or whose
    coordinates fall outside geographic bounds, are dropped and counted in
    ``TrajectorySet.dropped``. Congestion is min-max rescaled to [0, 1] over the
    surviving rows; a constant column maps to 0.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such trajectory file: {path}")
    schema = dict(schema or {})
    cols = {name: schema.get(name, name) for name in CSV_COLUMNS}

    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [cols[n] for n in REQUIRED_COLUMNS if cols[n] not in header]
        if missing:
            raise KeyError(f"{path}: missing column(s) {', '.join(missing)}")
        has_delay = cols["delay_flag"] in header
        has_demand = cols["demand"] in header

        rows = []
        dropped = 0
        for row in reader:
            try:
                lat = _parse_float(row[cols["lat"]])
                lon = _parse_float(row[cols["lon"]])
                ts = int(float(row[cols["timestamp"]]))
                cong = _parse_float(row[cols["congestion"]])
            except (TypeError, ValueError):
                dropped += 1
                continue
            if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                dropped += 1
                continue
            delay = _parse_flag(row[cols["delay_flag"]] or "") if has_delay else False
            demand = 0.0
            if has_demand:
                try:
                    demand = max(0.0, _parse_float(row[cols["demand"]]))
                except (TypeError, ValueError):
                    demand = 0.0
            rows.append((ts, row[cols["truck_id"]], lat, lon, cong, delay, demand))

    if not rows:
        raise ValueError(f"{path}: no valid rows ({dropped} dropped)")

    raw = np.array([r[4] for r in rows])
    lo, hi = raw.min(), raw.max()
    scaled = (raw - lo) / (hi - lo) if hi > lo else np.zeros_like(raw)
    records = (
        RawRecord(ts, truck, lat, lon, float(c), delay, demand)
        for (ts, truck, lat, lon, _, delay, demand), c in zip(rows, scaled)
    )
    return group_records(records, dropped=dropped)


def write_csv(traj: TrajectorySet, path) -> None:
    """Write ``traj`` in the default ingestion schema (truck by truck)."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in traj.records():
            w.writerow([r.timestamp, r.truck_id, repr(r.lat), repr(r.lon),
                        repr(r.congestion), int(r.delay_flag), repr(r.demand)])


# --------------------------------------------------------------------------
# synthetic data
# --------------------------------------------------------------------------


def _plant_centers(rng, k, cell=0.1, origin=(40.0, -74.5)):
    side = math.ceil(math.sqrt(k))
    cells = rng.permutation(side * side)[:k]
    rows, cols = np.divmod(cells, side)
    jitter = rng.uniform(-0.25, 0.25, size=(k, 2))
    lat = origin[0] + (rows + 0.5 + jitter[:, 0]) * cell
    lon = origin[1] + (cols + 0.5 + jitter[:, 1]) * cell
    return np.column_stack([lat, lon])


def _plant_links(centers, n_near=2):
    """Symmetric neighbour sets: each center's nearest few plus a spanning tree."""
    k = len(centers)
    d = np.linalg.norm(centers[:, None] - centers[None], axis=-1)
    links = [set() for _ in range(k)]
    for i in range(k):
        for j in np.argsort(d[i], kind="stable")[1:n_near + 1]:
            links[i].add(int(j))
            links[int(j)].add(i)
    # Prim's tree guarantees one connected component
    inside = {0}
    while len(inside) < k:
        best = None
        for i in sorted(inside):
            for j in range(k):
                if j not in inside and (best is None or d[i, j] < best[0]):
                    best = (d[i, j], i, j)
        _, i, j = best
        links[i].add(j)
        links[j].add(i)
        inside.add(j)
    return [sorted(s) for s in links]


def _hub_congestion(rng, links, n_ticks, *, level=0.3, amp=0.2, incident_rate=0.012,
                    spread=0.2, decay=0.96, noise=0.01):
    """Per-tick congestion of every hub, shape (n_ticks, k).

    All hubs share one daily sinusoid. On top sits a disturbance field:
    incidents strike single hubs at random, and every tick each hub hands a
    fraction ``spread`` of its excess to its linked neighbours while the
    whole field decays. The hubs are otherwise identical, so a hub's future
    depends on its neighbours' present and on where the day is heading.
    """
    k = len(links)
    nb_mean = np.zeros((k, k))
    for i, nb in enumerate(links):
        if nb:
            nb_mean[i, nb] = 1.0 / len(nb)
    out = np.empty((n_ticks, k))
    u = np.zeros(k)
    for t in range(n_ticks):
        hits = rng.random(k) < incident_rate
        u = decay * ((1.0 - spread) * u + spread * (nb_mean @ u))
        u += hits * rng.uniform(0.25, 0.45, size=k) + noise * rng.standard_normal(k)
        daily = np.sin(2 * np.pi * t / SYNTH_TICKS_PER_DAY)
        out[t] = np.clip(level + amp * daily + u, 0.0, 1.0)
    return out


def generate_synthetic(seed: int, n_trucks: int, n_zones_hint: int, n_steps: int,
                       *, jitter_deg: float = 0.004, move_prob: float = 0.35) -> TrajectorySet:
    """Random-walking trucks over planted hubs with structured congestion.

    Each of ``n_steps`` ticks (15 minutes apart) every truck reports one GPS
    fix near its current hub, then moves to a random neighbouring hub with
    probability ``move_prob``. Hub congestion is a daily sinusoid plus random
    incidents that diffuse along hub links (see ``_hub_congestion``); each
    reading adds a little per-truck noise and is clipped to [0, 1].
    """
    if min(n_trucks, n_zones_hint, n_steps) < 1:
        raise ValueError("n_trucks, n_zones_hint and n_steps must all be >= 1")
    rng = np.random.default_rng(seed)
    k = n_zones_hint
    centers = _plant_centers(rng, k)
    links = _plant_links(centers) if k > 1 else [[]]

    cong = _hub_congestion(rng, links, n_steps)

    records = []
    for truck in range(n_trucks):
        tid = f"T{truck:04d}"
        hub = int(rng.integers(k))
        offset = int(rng.integers(SYNTH_TICK_S))
        for t in range(n_steps):
            lat, lon = centers[hub] + jitter_deg * rng.standard_normal(2)
            c = float(np.clip(cong[t, hub] + 0.02 * rng.standard_normal(), 0.0, 1.0))
            delay = bool(rng.random() < c * c)
            demand = float(rng.poisson(2.0 + 6.0 * c))
            records.append(RawRecord(SYNTH_EPOCH + t * SYNTH_TICK_S + offset, tid,
                                     float(lat), float(lon), c, delay, demand))
            if links[hub] and rng.random() < move_prob:
                hub = links[hub][int(rng.integers(len(links[hub])))]
    return group_records(records)


# --------------------------------------------------------------------------
# snapshots
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SnapshotSeries:
    """Node x step x feature tensor. Channel 0 is the congestion target."""

    values: np.ndarray
    feature_names: tuple[str, ...] = FEATURE_NAMES
    counts: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ValueError("values must be N x S x F")
        if self.values.shape[2] != len(self.feature_names):
            raise ValueError("feature_names does not match the feature axis")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("snapshot values must be finite")
        self.values.setflags(write=False)

    @property
    def num_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def num_steps(self) -> int:
        return self.values.shape[1]

    @property
    def num_features(self) -> int:
        return self.values.shape[2]

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node", "step", *(f"f{i}" for i in range(self.num_features))])
            for n in range(self.num_nodes):
                for s in range(self.num_steps):
                    w.writerow([n, s, *(repr(float(v)) for v in self.values[n, s])])

    @classmethod
    def from_csv(cls, path, feature_names=FEATURE_NAMES) -> "SnapshotSeries":
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        n = max(int(r[0]) for r in rows) + 1
        s = max(int(r[1]) for r in rows) + 1
        f = len(rows[0]) - 2
        values = np.zeros((n, s, f))
        for r in rows:
            values[int(r[0]), int(r[1])] = [float(v) for v in r[2:]]
        return cls(values, tuple(feature_names))


def time_bins(timestamps: np.ndarray, num_steps: int) -> np.ndarray:
    """Equal-width bins over [min, max]; the maximum falls in the last bin."""
    t0 = int(timestamps.min())
    span = int(timestamps.max()) - t0
    if span == 0:
        return np.zeros(len(timestamps), dtype=np.int64)
    idx = (timestamps - t0) * num_steps // span
    return np.minimum(idx, num_steps - 1).astype(np.int64)


def aggregate_snapshots(traj: TrajectorySet, zones, num_steps: int) -> SnapshotSeries:
    """Bin records by (zone, time step) into mean congestion, relative count
    and delay rate. Cells without records are all zero."""
    if num_steps < 1:
        raise ValueError("num_steps must be >= 1")
    if len(traj) == 0:
        raise ValueError("empty trajectory set")
    c = traj.columns
    zone_idx = zones.assign_many(traj.points())
    steps = time_bins(c["timestamp"], num_steps)
    cong, cnt, dly = kernels.bin_records(zone_idx, steps, c["congestion"], c["delay"],
                                         zones.k, num_steps)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_cong = np.where(cnt > 0, cong / np.maximum(cnt, 1), 0.0)
        mean_dly = np.where(cnt > 0, dly / np.maximum(cnt, 1), 0.0)
    rel = cnt / cnt.max()
    values = np.stack([mean_cong, rel, mean_dly], axis=-1)
    return SnapshotSeries(values, FEATURE_NAMES, counts=cnt)


@dataclass(frozen=True)
class TrainTestSplit:
    train_steps: range
    test_steps: range


def chronological_split(series: SnapshotSeries, train_fraction: float) -> TrainTestSplit:
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    S = series.num_steps if isinstance(series, SnapshotSeries) else int(series)
    cut = math.floor(S * train_fraction)
    if cut < 1 or cut >= S:
        raise ValueError(f"split of {S} steps at {train_fraction} leaves an empty side")
    return TrainTestSplit(range(0, cut), range(cut, S))
