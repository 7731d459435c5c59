import numpy as np
import pytest

from riskroute import geodata, topology, zoning
from riskroute.geodata import RawRecord


def make_traj(tracks):
    """{truck: [(t, lat, lon), ...]} -> TrajectorySet with congestion 0.5."""
    recs = [RawRecord(t, truck, lat, lon, 0.5) for truck, rows in tracks.items()
            for t, lat, lon in rows]
    return geodata.group_records(recs)


def fixed_zones(centroids, metric="euclidean"):
    return zoning.ZoneModel(np.asarray(centroids, dtype=float), 0.0, metric)


def write_rows(path, header, rows):
    lines = [",".join(header)] + [",".join(map(str, r)) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture(scope="session")
def synthetic_small():
    """A short default-shaped synthetic run: trajectories, zones, series, graph."""
    traj = geodata.generate_synthetic(7, 20, 10, 300)
    zones = zoning.kmeans_fit(traj.points(), 10, seed=7)
    adj = topology.prune(topology.normalize(topology.count_transitions(traj, zones)), 0.01)
    series = geodata.aggregate_snapshots(traj, zones, 60)
    return traj, zones, adj, series


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
