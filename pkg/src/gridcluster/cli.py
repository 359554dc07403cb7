"""``gridcluster`` command line: a file-based pipeline, one artifact per stage.

Every stage reads its inputs from, and writes its outputs to, a working
directory (``--workdir``, default ``.``) under fixed names, so that

    gridcluster bin --k 5 iris.csv
    gridcluster pairs
    gridcluster cocluster --seed 0
    gridcluster report --format svg

runs end to end.  ``manifest.json`` in the working directory records the tool
version, input hashes, parameters and a timestamped command history; the
timestamps live only there so the other artifacts are reproducible byte for
byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .binarize import DEDICATED, POLICIES, BinnedDataset, BinningModel, PairTable, apply_binning, \
    fit_binning, to_pair_table
from .coarsen import build_hierarchy, info_rate, model_at_info, model_at_size
from .compare import Partition, compare_partitions
from .dataset import DEFAULT_MISSING_TOKENS, DataError, Schema, infer_schema, load_dataset
from .mca import McaResult, build_cdt, contributions, fit_mca, kmeans_factor
from .modl import CoclusterModel, build_stats
from .report import characterize_clusters, export_grid, scatter_svg
from .search import SearchConfig, optimize

logger = logging.getLogger("gridcluster")

MANIFEST = "manifest.json"
SCHEMA = "schema.json"
BINNING = "binning.json"
BINNED = "binned.csv"
PAIRS = "pairs.csv"
MODEL = "model.json"
TRACE = "trace.csv"
HIERARCHY = "hierarchy.json"
COARSE = "coarse.json"
MCA = "mca.json"
SCREE = "scree.csv"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# artifacts


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Run:
    def __init__(self, args):
        self.args = args
        self.workdir = Path(args.workdir)
        self.workdir.mkdir(parents=True, exist_ok=True)
        path = self.workdir / MANIFEST
        if path.is_file():
            self.manifest = json.loads(path.read_text(encoding="utf-8"))
        else:
            self.manifest = {"tool": "gridcluster", "parameters": {}, "inputs": {},
                             "artifacts": {}, "history": []}
        self.manifest["version"] = __version__

    def path(self, explicit, default) -> Path:
        return Path(explicit) if explicit else self.workdir / default

    def need(self, explicit, default) -> Path:
        p = self.path(explicit, default)
        if not p.is_file():
            raise DataError(f"{p}: not found (run the earlier pipeline stage first)")
        return p

    def input(self, path) -> None:
        self.manifest["inputs"][str(path)] = _sha256(path)

    def param(self, **kw) -> None:
        self.manifest["parameters"].update(kw)

    def write_json(self, path, payload) -> None:
        payload = {**payload, "manifest": MANIFEST}
        Path(path).write_text(json.dumps(payload, indent=1, ensure_ascii=False) + "\n",
                              encoding="utf-8")
        self.artifact(path)

    def artifact(self, path) -> None:
        self.manifest["artifacts"][str(path)] = _sha256(path)

    def close(self, argv) -> None:
        self.manifest["history"].append({
            "command": self.args.command,
            "argv": list(argv),
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        })
        (self.workdir / MANIFEST).write_text(json.dumps(self.manifest, indent=1) + "\n",
                                             encoding="utf-8")


def _load_model(run: Run, model_path, pairs_path):
    pairs = PairTable.load(run.need(pairs_path, PAIRS))
    stats = build_stats(pairs)
    path = run.need(model_path, MODEL)
    doc = json.loads(path.read_text(encoding="utf-8"))
    return CoclusterModel.from_dict(doc, stats), stats


# ---------------------------------------------------------------------------
# commands


def cmd_schema(run: Run, a) -> None:
    tokens = a.missing_tokens if a.missing_tokens is not None else DEFAULT_MISSING_TOKENS
    schema = infer_schema(a.data, a.sample_rows, id_column=a.id_column, missing_tokens=tokens)
    out = run.path(a.output, SCHEMA)
    schema.save(out)
    run.input(a.data)
    run.artifact(out)
    kinds = [v.kind for v in schema.variables]
    print(f"{len(kinds)} variables: {kinds.count('numeric')} numeric, "
          f"{kinds.count('categorical')} categorical -> {out}")


def cmd_bin(run: Run, a) -> None:
    tokens = a.missing_tokens if a.missing_tokens is not None else DEFAULT_MISSING_TOKENS
    schema_path = run.path(a.schema, SCHEMA)
    if schema_path.is_file():
        schema = Schema.load(schema_path)
    else:
        schema = infer_schema(a.data, id_column=a.id_column, missing_tokens=tokens)
        schema.save(schema_path)
        run.artifact(schema_path)
    data = load_dataset(a.data, schema, id_column=a.id_column, missing_tokens=tokens)
    model = fit_binning(data, a.k, a.missing_policy)
    binned = apply_binning(data, model)
    model_path = run.path(a.model, BINNING)
    run.write_json(model_path, model.to_dict())
    out = run.path(a.output, BINNED)
    binned.save(out)
    run.input(a.data)
    run.artifact(out)
    run.param(k=a.k, missing_policy=a.missing_policy)
    print(f"n={binned.n} m={binned.m} parts={len(model.flat_labels)} -> {model_path}, {out}")


def _load_binned(run: Run, binned_path, model_path) -> BinnedDataset:
    mp = run.need(model_path, BINNING)
    model = BinningModel.from_dict(json.loads(mp.read_text(encoding="utf-8")))
    return BinnedDataset.load(run.need(binned_path, BINNED), model)


def cmd_pairs(run: Run, a) -> None:
    binned = _load_binned(run, a.binned, a.model)
    pairs = to_pair_table(binned)
    out = run.path(a.output, PAIRS)
    pairs.save(out)
    run.artifact(out)
    print(f"N={pairs.N} V={pairs.V} W={pairs.W} -> {out}")


def cmd_cocluster(run: Run, a) -> None:
    pairs_path = run.need(a.pairs, PAIRS)
    stats = build_stats(PairTable.load(pairs_path))
    config = SearchConfig(seed=a.seed, budget_seconds=a.budget_seconds, restarts=a.restarts,
                          initial_groups=a.initial_groups,
                          report_interval_seconds=a.report_interval,
                          checkpoint=a.checkpoint, workers=a.threads)
    result = optimize(stats, config)
    model = result.best_model
    out = run.path(a.output, MODEL)
    run.write_json(out, {**model.to_dict(), "pairs": os.path.relpath(pairs_path, run.workdir)})
    trace = run.path(a.trace, TRACE)
    result.write_trace(trace)
    run.input(pairs_path)
    run.param(seed=a.seed, budget_seconds=a.budget_seconds, restarts=a.restarts)
    print(f"grid {model.I}x{model.J} cost={model.cost:.6f} "
          f"restarts={result.restarts_completed} -> {out}")


def cmd_coarsen(run: Run, a) -> None:
    model, stats = _load_model(run, a.model, a.pairs)
    h = build_hierarchy(model, stats)
    hpath = run.path(a.hierarchy, HIERARCHY)
    run.write_json(hpath, h.to_dict())
    if a.rows is not None or a.cols is not None:
        if a.rows is None or a.cols is None:
            raise UsageError("--rows and --cols go together")
        coarse = model_at_size(h, a.rows, a.cols)
    else:
        coarse = model_at_info(h, a.info)
    out = run.path(a.output, COARSE)
    run.write_json(out, {**coarse.to_dict(), "info": info_rate(coarse.cost, h)})
    print(f"{model.I}x{model.J} -> {coarse.I}x{coarse.J} "
          f"info={100 * info_rate(coarse.cost, h):.1f}% -> {out}")


def cmd_report(run: Run, a) -> None:
    model, stats = _load_model(run, a.model, a.pairs)
    out = run.path(a.output, f"report.{a.format}")
    if a.format == "json":
        from .report import grid_to_dict
        run.write_json(out, grid_to_dict(model, stats, a.top))
    else:
        export_grid(model, stats, a.format, out, a.top)
        run.artifact(out)
    profiles = characterize_clusters(model, stats, a.top)
    for p in profiles["row"]:
        best = p.top[0]
        parts = ", ".join(lab for lab, _ in best.members[:4])
        print(f"instance cluster {p.cluster}: {p.size} instances; top parts: {parts}")
    print(f"-> {out}")


def cmd_partition(run: Run, a) -> None:
    model, stats = _load_model(run, a.model, a.pairs)
    dim = "row" if a.dimension == "instances" else "col"
    labels = stats.row_labels if dim == "row" else stats.col_labels
    part = Partition.from_labels(labels, [g + 1 for g in model.assign(dim)])
    out = run.path(a.output, "partition.csv")
    part.save(out)
    run.artifact(out)
    print(f"{part.n_clusters} clusters -> {out}")


def cmd_mca(run: Run, a) -> None:
    binned = _load_binned(run, a.binned, a.model)
    cdt = build_cdt(binned)
    result = fit_mca(cdt)
    if a.axes is not None:
        keep = min(a.axes, len(result.eigenvalues))
        ctr = contributions(result, cdt)
        ctr = {k: (v[:, :keep] if v.ndim == 2 else v) for k, v in ctr.items()}
        result.category_coords = result.category_coords[:, :keep]
        result.instance_coords = result.instance_coords[:, :keep]
        result.meta["stored_axes"] = keep
    else:
        ctr = contributions(result, cdt)
    out = run.path(a.output, MCA)
    run.write_json(out, result.to_dict(ctr))
    scree = run.path(a.scree, SCREE)
    result.write_scree(scree)
    run.artifact(scree)
    if a.svg:
        pts = np.vstack([result.instance_coords[:, :2], result.category_coords[:, :2]])
        labels = [""] * len(result.instance_ids) + result.category_labels
        groups = [0] * len(result.instance_ids) + [1] * len(result.category_labels)
        Path(a.svg).write_text(scatter_svg(pts, labels, groups), encoding="utf-8")
        run.artifact(a.svg)
    cum = result.cumulative_variance
    print(f"inertia={result.total_inertia:.6f} axes={len(result.eigenvalues)} "
          f"first two axes={100 * cum[min(1, len(cum) - 1)]:.2f}% -> {out}")


def cmd_kmeans(run: Run, a) -> None:
    path = run.need(a.mca, MCA)
    result = McaResult.load(path)
    km = kmeans_factor(result, a.k, a.axes, a.seed)
    part = Partition.from_labels(result.instance_ids, km.instance_labels)
    out = run.path(a.output, "kmeans.csv")
    part.save(out)
    run.artifact(out)
    summary = {
        "k": a.k, "axes": a.axes, "seed": a.seed,
        "clusters": [{
            "cluster": c,
            "instances": int((km.instance_labels == c).sum()),
            "categories": [result.category_labels[s]
                           for s in np.flatnonzero(km.category_labels == c)],
            "withinss": float(km.withinss[c]),
        } for c in range(a.k)],
    }
    run.write_json(run.path(None, "kmeans.json"), summary)
    run.param(kmeans_seed=a.seed)
    sizes = [c["instances"] for c in summary["clusters"]]
    print(f"k={a.k} instance sizes={sizes} -> {out}")


def cmd_compare(run: Run, a) -> None:
    pa, pb = Partition.load(a.a), Partition.load(a.b)
    report = compare_partitions(pa, pb, a.weights)
    out = run.path(a.output, "compare.json")
    run.write_json(out, report)
    run.input(a.a)
    run.input(a.b)
    pairs = ", ".join(f"({i},{j})" for i, j in report["matching"])
    retained = report["retained_mi"]
    print(f"MI={report['mutual_information']:.6f} matching: {pairs}")
    if retained is not None:
        print(f"retained MI: {100 * retained:.1f}%")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gridcluster", description="Co-clustering of mixed-type data tables.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--workdir", default=".", help="directory holding pipeline artifacts")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def missing_opts(sp):
        sp.add_argument("--id-column")
        sp.add_argument("--missing-tokens", nargs="*", default=None,
                        help='tokens read as missing (default: "?" and empty)')

    s = sub.add_parser("schema", help="schema utilities")
    s_sub = s.add_subparsers(dest="action", parser_class=_Parser, required=True)
    si = s_sub.add_parser("infer", help="infer numeric/categorical kinds from a CSV")
    si.add_argument("data")
    si.add_argument("--sample-rows", type=int)
    si.add_argument("-o", "--output")
    missing_opts(si)
    si.set_defaults(func=cmd_schema)

    b = sub.add_parser("bin", help="binarize every variable into at most k parts")
    b.add_argument("data")
    b.add_argument("--k", type=int, required=True)
    b.add_argument("--schema")
    b.add_argument("--missing-policy", choices=POLICIES, default=DEDICATED)
    b.add_argument("--model", help="binning model output (default binning.json)")
    b.add_argument("-o", "--output", help="binned table output (default binned.csv)")
    missing_opts(b)
    b.set_defaults(func=cmd_bin)

    pr = sub.add_parser("pairs", help="emit the (IdInstance, IdVarPart) pair table")
    pr.add_argument("--binned")
    pr.add_argument("--model")
    pr.add_argument("-o", "--output")
    pr.set_defaults(func=cmd_pairs)

    c = sub.add_parser("cocluster", help="optimize the grid model")
    c.add_argument("--pairs")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--budget-seconds", type=float, default=60.0)
    c.add_argument("--restarts", type=int, default=4)
    c.add_argument("--initial-groups", type=int)
    c.add_argument("--report-interval", type=float, default=10.0)
    c.add_argument("--checkpoint")
    c.add_argument("--threads", type=int)
    c.add_argument("--trace")
    c.add_argument("-o", "--output")
    c.set_defaults(func=cmd_cocluster)

    co = sub.add_parser("coarsen", help="merge hierarchy and simplified grid")
    co.add_argument("--model")
    co.add_argument("--pairs")
    co.add_argument("--info", type=float, default=1.0)
    co.add_argument("--rows", type=int)
    co.add_argument("--cols", type=int)
    co.add_argument("--hierarchy")
    co.add_argument("-o", "--output")
    co.set_defaults(func=cmd_coarsen)

    r = sub.add_parser("report", help="cell contrast and cluster profiles")
    r.add_argument("--model")
    r.add_argument("--pairs")
    r.add_argument("--top", type=int, default=3)
    r.add_argument("--format", choices=("json", "csv", "svg"), default="json")
    r.add_argument("-o", "--output")
    r.set_defaults(func=cmd_report)

    pa = sub.add_parser("partition", help="export a flat partition from a grid model")
    pa.add_argument("--model")
    pa.add_argument("--pairs")
    pa.add_argument("--dimension", choices=("instances", "parts"), default="instances")
    pa.add_argument("-o", "--output")
    pa.set_defaults(func=cmd_partition)

    m = sub.add_parser("mca", help="multiple correspondence analysis of the binned table")
    m.add_argument("--binned")
    m.add_argument("--model")
    m.add_argument("--axes", type=int)
    m.add_argument("--scree")
    m.add_argument("--svg", help="first factorial plane as SVG")
    m.add_argument("-o", "--output")
    m.set_defaults(func=cmd_mca)

    k = sub.add_parser("kmeans", help="k-means on MCA factor coordinates")
    k.add_argument("--mca")
    k.add_argument("--k", type=int, required=True)
    k.add_argument("--axes", type=int, required=True)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("-o", "--output")
    k.set_defaults(func=cmd_kmeans)

    cp = sub.add_parser("compare", help="confusion, MI, chi2 and optimal matching")
    cp.add_argument("a")
    cp.add_argument("b")
    cp.add_argument("--weights", choices=("mi", "chi2"), default="mi")
    cp.add_argument("-o", "--output")
    cp.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = Run(args)
        args.func(run, args)
        run.close(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"gridcluster: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        print(f"gridcluster: data error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # out-of-range parameter values (k < 2, restarts < 1, ...)
        print(f"gridcluster: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
