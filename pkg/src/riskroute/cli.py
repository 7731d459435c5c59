"""Command line entry point: ``riskroute {synth,build,train,ablation,route,selftest}``.

Every stage reads and writes inside ``--out``. Files are written to temporary
names and renamed only when the whole stage succeeded, so a failing command
leaves nothing half-written behind.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import forecast, geodata, routing, topology, zoning
from .config import PipelineConfig, check_reference_defaults

log = logging.getLogger("riskroute")

DATASET = "dataset.csv"
ZONES = "zones.json"
GRAPH = "graph.json"
MODEL = "model.json"
LOSS = "loss.csv"
SNAPSHOTS = "snapshots.csv"


class UsageError(Exception):
    """Bad arguments or configuration; exit status 2."""


class Outputs:
    """Collects files for one stage and publishes them atomically."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self._pending: list[tuple[Path, Path]] = []

    def path(self, name: str) -> Path:
        final = self.out_dir / name
        tmp = final.with_name(final.name + ".partial")
        self._pending.append((tmp, final))
        return tmp

    def text(self, name: str, text: str) -> None:
        self.path(name).write_text(text)

    def json(self, name: str, doc) -> None:
        self.text(name, dumps(doc))

    def __enter__(self):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            for tmp, final in self._pending:
                os.replace(tmp, final)
        else:
            for tmp, _ in self._pending:
                tmp.unlink(missing_ok=True)
        return False


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _require(path: Path, hint: str) -> Path:
    if not path.is_file():
        raise FileNotFoundError(f"{path} not found; {hint}")
    return path


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------


def load_trajectories(cfg: PipelineConfig, out: Path) -> geodata.TrajectorySet:
    if cfg.data.source == "csv":
        return geodata.ingest_csv(cfg.data.path, cfg.data.columns)
    return geodata.ingest_csv(_require(out / DATASET, "run `synth` first"))


def cmd_synth(cfg: PipelineConfig, out: Path) -> dict:
    d = cfg.data
    if min(d.n_trucks, d.n_zones_hint, d.n_ticks) < 1:
        raise UsageError("n_trucks, n_zones_hint and n_ticks must all be >= 1")
    traj = geodata.generate_synthetic(cfg.seed, d.n_trucks, d.n_zones_hint, d.n_ticks)
    report = {"seed": cfg.seed, "trucks": len(traj.tracks), "records": len(traj)}
    with Outputs(out) as o:
        geodata.write_csv(traj, o.path(DATASET))
        o.json("synth_report.json", report)
    return report


def build_artifacts(cfg: PipelineConfig, traj: geodata.TrajectorySet):
    zones = zoning.kmeans_fit(traj.points(), cfg.k, seed=cfg.seed,
                              max_iter=cfg.max_iter, metric=cfg.metric)
    counts = topology.count_transitions(traj, zones)
    full = topology.normalize(counts, cfg.epsilon)
    pruned = topology.prune(full, cfg.tau)
    graph = topology.build_graph(pruned, zones)
    n_before = int(np.count_nonzero(full.weights))
    report = {
        "nodes": graph.num_nodes,
        "edges": len(graph.edges),
        "pruned_edges": n_before - len(graph.edges),
        "row_sums": full.row_sums.tolist(),
        "transitions": int(counts.counts.sum()),
        "records": len(traj),
        "dropped_rows": traj.dropped,
        "inertia": zones.inertia,
        "kmeans_iterations": zones.n_iter,
        "epsilon": cfg.epsilon,
        "tau": cfg.tau,
    }
    return zones, graph, report


def cmd_build(cfg: PipelineConfig, out: Path) -> dict:
    traj = load_trajectories(cfg, out)
    zones, graph, report = build_artifacts(cfg, traj)
    with Outputs(out) as o:
        zones.save(o.path(ZONES))
        graph.save(o.path(GRAPH))
        o.json("build_report.json", report)
    return report


def _prepare_training(cfg: PipelineConfig, out: Path):
    traj = load_trajectories(cfg, out)
    zones = zoning.ZoneModel.load(_require(out / ZONES, "run `build` first"))
    graph = topology.LogisticsGraph.load(_require(out / GRAPH, "run `build` first"))
    series = geodata.aggregate_snapshots(traj, zones, cfg.num_steps)
    split = geodata.chronological_split(series, cfg.train_fraction)
    prop = forecast.build_propagator(graph.adjacency())
    return series, split, prop


def _loss_csv(history) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_mse"])
    for i, v in enumerate(history, start=1):
        w.writerow([i, repr(float(v))])
    return buf.getvalue()


def _trend(history) -> dict:
    h = np.asarray(history)
    if len(h) < 2:
        return {"epochs": len(h)}
    return {
        "epochs": len(h),
        "first": float(h[0]),
        "last": float(h[-1]),
        "decreased": bool(h[-1] < h[0]),
        "nonincreasing_fraction": float(np.mean(np.diff(h) <= 0)),
        "epoch50_over_epoch1": float(h[49] / h[0]) if len(h) >= 50 else None,
    }


def fit_variant(cfg: PipelineConfig, series, split, prop, variant: str):
    mcfg = cfg.model_config(variant, input_dim=series.num_features)
    state, history = forecast.train(series, split, prop, mcfg)
    test_mse = forecast.evaluate(state, mcfg, prop, series, split)
    return mcfg, state, history, test_mse


def cmd_train(cfg: PipelineConfig, out: Path) -> dict:
    series, split, prop = _prepare_training(cfg, out)
    mcfg, state, history, test_mse = fit_variant(cfg, series, split, prop, cfg.variant)
    report = {
        "variant": mcfg.variant,
        "test_mse": test_mse,
        "train_steps": [split.train_steps.start, split.train_steps.stop],
        "test_steps": [split.test_steps.start, split.test_steps.stop],
        "loss_trend": _trend(history),
    }
    with Outputs(out) as o:
        forecast.save_model(o.path(MODEL), state, mcfg)
        o.text(LOSS, _loss_csv(history))
        series.to_csv(o.path(SNAPSHOTS))
        o.json("train_report.json", report)
    return report


def degradation_pct(mse: float, reference: float) -> float:
    return 100.0 * (mse - reference) / reference


ABLATION_LABELS = {
    "gru_only": "w/o spatial (GRU-only)",
    "gcn_only": "w/o temporal (GCN-only)",
    "full": "full model",
}


def ablation_table(rows: dict) -> str:
    lines = [f"{'Model':<26}{'MSE':>10}  Degradation"]
    for variant in ("gru_only", "gcn_only", "full"):
        r = rows[variant]
        deg = "--" if variant == "full" else f"{r['degradation_pct']:+.1f}%"
        lines.append(f"{ABLATION_LABELS[variant]:<26}{r['test_mse']:>10.5f}  {deg}")
    return "\n".join(lines)


def cmd_ablation(cfg: PipelineConfig, out: Path) -> dict:
    series, split, prop = _prepare_training(cfg, out)
    mses = {v: fit_variant(cfg, series, split, prop, v)[3] for v in forecast.VARIANTS}
    rows = {v: {"test_mse": m, "degradation_pct": degradation_pct(m, mses["full"])}
            for v, m in mses.items()}
    report = {
        "seed": cfg.seed,
        "variants": rows,
        "full_is_best": bool(mses["full"] < mses["gru_only"] and mses["full"] < mses["gcn_only"]),
    }
    with Outputs(out) as o:
        o.json("ablation_report.json", report)
    print(ablation_table(rows))
    return report


def _risk_from_file(path, graph: topology.LogisticsGraph) -> routing.EdgeRisk:
    doc = json.loads(Path(path).read_text())
    if "nodes" in doc:
        return routing.edge_risk(np.asarray(doc["nodes"], dtype=float), graph)
    values = {(int(e["u"]), int(e["v"])): float(e["risk"]) for e in doc["edges"]}
    missing = [(e.u, e.v) for e in graph.edges if (e.u, e.v) not in values]
    if missing:
        raise ValueError(f"risk file lacks edges {missing}")
    return routing.EdgeRisk(values)


def forecast_at(out: Path, timestep: int):
    state, mcfg = forecast.load_model(_require(out / MODEL, "run `train` first"))
    series = geodata.SnapshotSeries.from_csv(_require(out / SNAPSHOTS, "run `train` first"))
    T = mcfg.window
    if not T - 1 <= timestep < series.num_steps:
        raise UsageError(f"timestep must lie in [{T - 1}, {series.num_steps - 1}] "
                         f"for a window of {T}")
    window = series.values[:, timestep - T + 1: timestep + 1, :]
    graph_prop = forecast.build_propagator(
        topology.LogisticsGraph.load(out / GRAPH).adjacency())
    return forecast.forward(state, mcfg, graph_prop, window)


def cmd_route(cfg: PipelineConfig, out: Path, src: int, dst: int, lam: float,
              timestep: int, risk_file: str | None = None) -> dict:
    graph = topology.LogisticsGraph.load(_require(out / GRAPH, "run `build` first"))
    if risk_file:
        risk = _risk_from_file(risk_file, graph)
        source = {"risk_file": Path(risk_file).name}
    else:
        fc = forecast_at(out, timestep)
        risk = routing.edge_risk(fc, graph)
        source = {"timestep": timestep, "node_risk": fc.values.tolist()}
    comparison = routing.compare(graph, risk, src, dst, lam)
    report = {"src": src, "dst": dst, **source, **comparison.to_json()}
    with Outputs(out) as o:
        o.json("route_report.json", report)
    print(comparison.summary())
    return report


def cmd_selftest(cfg: PipelineConfig) -> list[str]:
    problems = check_reference_defaults()
    for p in problems:
        print(f"FAIL {p}")
    if not problems:
        print("ok: defaults match the reference constants")
    return problems


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _shared_options(defaults: bool) -> argparse.ArgumentParser:
    # Subcommands get SUPPRESS defaults so an option given before the
    # subcommand name is not clobbered by the subparser's own default.
    def d(value):
        return value if defaults else argparse.SUPPRESS

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=d(None), help="JSON pipeline config")
    common.add_argument("--seed", type=int, default=d(None), help="overrides the config seed")
    common.add_argument("--out", type=Path, default=d(Path("out")),
                        help="working directory (default: ./out)")
    common.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _shared_options(defaults=False)
    p = argparse.ArgumentParser(prog="riskroute", description=__doc__.splitlines()[0],
                                parents=[_shared_options(defaults=True)])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    s.add_argument("--n-trucks", type=int, help="number of trucks")
    s.add_argument("--n-zones", type=int, help="number of depot hubs")
    s.add_argument("--n-ticks", type=int, help="GPS readings per truck")

    b = sub.add_parser("build", parents=[common], help="zones + trajectory graph")
    b.add_argument("--k", type=int, help="number of zones")
    b.add_argument("--tau", type=float, help="edge pruning threshold")
    b.add_argument("--metric", choices=sorted(zoning.METRICS), help="k-means distance")

    for name, helptext in (("train", "train one model variant"),
                           ("ablation", "train all three variants")):
        t = sub.add_parser(name, parents=[common], help=helptext)
        if name == "train":
            t.add_argument("--variant", choices=forecast.VARIANTS)
        t.add_argument("--epochs", type=int, help="gradient steps")
        t.add_argument("--learning-rate", type=float)

    r = sub.add_parser("route", parents=[common], help="static vs risk-aware route")
    r.add_argument("--src", type=int, help="origin zone")
    r.add_argument("--dst", type=int, help="destination zone")
    r.add_argument("--lambda", dest="lam", type=float, help="risk weight, >= 0")
    r.add_argument("--timestep", type=int, help="snapshot step to forecast from")
    r.add_argument("--risk", dest="risk_file",
                   help="JSON with fixed edge risks ({'edges': [{u, v, risk}]}) "
                        "or node risks ({'nodes': [...]}) instead of the model")

    sub.add_parser("selftest", parents=[common], help="check defaults")
    return p


def resolve_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    return cfg.override(
        seed=args.seed,
        k=getattr(args, "k", None),
        tau=getattr(args, "tau", None),
        metric=getattr(args, "metric", None),
        variant=getattr(args, "variant", None),
        **{"data.n_trucks": getattr(args, "n_trucks", None),
           "data.n_zones_hint": getattr(args, "n_zones", None),
           "data.n_ticks": getattr(args, "n_ticks", None),
           "model.epochs": getattr(args, "epochs", None),
           "model.learning_rate": getattr(args, "learning_rate", None)},
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = args.out
        if args.command == "synth":
            cmd_synth(cfg, out)
        elif args.command == "build":
            cmd_build(cfg, out)
        elif args.command == "train":
            cmd_train(cfg, out)
        elif args.command == "ablation":
            cmd_ablation(cfg, out)
        elif args.command == "route":
            src, dst = cfg.queries[0]
            cmd_route(cfg, out,
                      src if args.src is None else args.src,
                      dst if args.dst is None else args.dst,
                      cfg.lam if args.lam is None else args.lam,
                      cfg.timestep if args.timestep is None else args.timestep,
                      args.risk_file)
        elif args.command == "selftest":
            return 1 if cmd_selftest(cfg) else 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, TypeError, OSError, KeyError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
