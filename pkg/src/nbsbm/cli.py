"""Command-line interface.

Subcommands: gen, spectrum, bp, em, cluster, sweep, pipeline.  All outputs are
plain text written under --out; identical invocations produce byte-identical
files.  Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from .bp import bp_run
from .cluster import classify_nodes, node_embedding
from .em import em_run, save_fit
from .errors import NumericalError, ValidationError
from .graphs import read_edgelist, write_edgelist
from .nbspec import (companion_eigen, companion_matrix, nonbacktracking_spectrum,
                     save_spectrum_csv, structural_eigenvalues)
from .pipeline import beta_sweep, detect_transitions, run_pipeline, save_report_json, save_sweep_csv
from .sbm import load_labels, load_params, sample_graph, save_labels

__all__ = ["main"]


def _common(sub):
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--params", help="model parameters JSON file")
    sub.add_argument("--out", default=".", help="output directory")
    sub.add_argument("--format", choices=["csv", "json"], default="csv")


def _build_parser():
    parser = argparse.ArgumentParser(prog="nbsbm",
                                     description="non-backtracking spectral community detection")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen", help="sample a planted graph")
    _common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--method", choices=["bernoulli", "skip"], default="bernoulli")

    p = subs.add_parser("spectrum", help="half-edge spectrum of a graph")
    _common(p)
    p.add_argument("--graph", help="edge-list file (otherwise sample from --params)")
    p.add_argument("--n", type=int)

    p = subs.add_parser("bp", help="belief-propagation marginals")
    _common(p)
    p.add_argument("--graph", required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--damping", type=float, default=0.1)

    p = subs.add_parser("em", help="EM fit of block-model parameters")
    _common(p)
    p.add_argument("--graph", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--init-labels", help="labels file to initialize from")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=500)

    p = subs.add_parser("cluster", help="spectral embedding and k-means labels")
    _common(p)
    p.add_argument("--graph", required=True)
    p.add_argument("--k0", type=int, help="number of clusters (default: detected)")
    p.add_argument("--margin", type=float, default=0.02)

    p = subs.add_parser("sweep", help="percolation sweep over a beta grid")
    _common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--grid", default="0.05:1.0:0.05", help="start:stop:step or comma list")
    p.add_argument("--seeds", default=None, help="comma list (default: --seed only)")
    p.add_argument("--margin", type=float, default=0.02)
    p.add_argument("--workers", type=int, default=1)

    p = subs.add_parser("pipeline", help="spectrum -> clusters -> EM report")
    _common(p)
    p.add_argument("--graph")
    p.add_argument("--n", type=int)
    p.add_argument("--margin", type=float, default=0.02)
    return parser


def _parse_grid(text):
    if ":" in text:
        start, stop, step = (float(x) for x in text.split(":"))
        count = int(round((stop - start) / step)) + 1
        return [round(start + i * step, 10) for i in range(count)]
    return [float(x) for x in text.split(",")]


def _need_params(args):
    if not args.params:
        raise ValidationError("this command needs --params")
    return load_params(args.params)


def _load_graph_arg(args):
    if args.graph:
        return read_edgelist(args.graph), None
    params = _need_params(args)
    if args.n is None:
        raise ValidationError("need --graph, or --params with --n to sample one")
    planted = sample_graph(params, args.n, args.seed)
    return planted.graph, planted


def _out(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _write_matrix_csv(path, header, rows):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{float(x)!r}" for x in row) + "\n")


def _cmd_gen(args):
    params = _need_params(args)
    planted = sample_graph(params, args.n, args.seed, method=args.method)
    write_edgelist(planted.graph, _out(args, "edges.txt"))
    save_labels(planted.labels, _out(args, "labels.txt"))
    print(f"n={planted.graph.n} m={planted.graph.m} -> {args.out}")
    return 0


def _cmd_spectrum(args):
    graph, _ = _load_graph_arg(args)
    spec = nonbacktracking_spectrum(graph)
    if args.format == "csv":
        save_spectrum_csv(spec, _out(args, "spectrum.csv"))
    else:
        doc = {"method": spec.method, "fallback": spec.fallback,
               "eigenvalues": [[float(z.real), float(z.imag)] for z in spec.values]}
        with open(_out(args, "spectrum.json"), "w", encoding="ascii") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    print(f"{len(spec)} eigenvalues via {spec.method} -> {args.out}")
    return 0


def _cmd_bp(args):
    graph = read_edgelist(args.graph)
    params = _need_params(args)
    result = bp_run(graph, params, tol=args.tol, max_iter=args.max_iter,
                    damping=args.damping, seed=args.seed)
    header = [f"p{a}" for a in range(params.k)]
    if args.format == "csv":
        _write_matrix_csv(_out(args, "marginals.csv"), header, result.marginals)
    else:
        doc = {"converged": result.converged, "iters": result.iters,
               "marginals": [[float(x) for x in row] for row in result.marginals]}
        with open(_out(args, "marginals.json"), "w", encoding="ascii") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    print(f"bp converged={result.converged} iters={result.iters} -> {args.out}")
    return 0


def _cmd_em(args):
    graph = read_edgelist(args.graph)
    if args.init_labels:
        init = ("labels", load_labels(args.init_labels))
    else:
        init = ("random", args.seed)
    result = em_run(graph, args.k, init=init, tol=args.tol, max_iter=args.max_iter)
    save_fit(result, _out(args, "model.json"))
    save_labels(result.labels, _out(args, "labels.txt"))
    print(f"em loglik={result.state.loglik:.6f} iters={result.iters} -> {args.out}")
    return 0


def _cmd_cluster(args):
    graph = read_edgelist(args.graph)
    c_emp = 2.0 * graph.m / graph.n if graph.n else 0.0
    K = companion_matrix(graph)
    keig = companion_eigen(K)
    extra = graph.m - graph.n
    values = keig.values
    if extra > 0:
        values = np.concatenate([values, np.ones(extra), -np.ones(extra)])
    structural = structural_eigenvalues(values, c_emp, margin=args.margin)
    k0 = args.k0 if args.k0 else structural.size
    if k0 == 0:
        raise ValidationError("no structural eigenvalues detected; pass --k0 to force")
    emb = node_embedding(graph, keig, structural[:k0])
    assignment = classify_nodes(graph, emb, int(k0), seed=args.seed)
    save_labels(assignment.labels, _out(args, "labels.txt"))
    with open(_out(args, "embedding.csv"), "w", encoding="ascii") as fh:
        fh.write("# mu: " + ",".join(f"{float(m)!r}" for m in emb.eigenvalues) + "\n")
        fh.write(",".join(f"mu_{j + 1}" for j in range(emb.points.shape[1])) + "\n")
        for row in emb.points:
            fh.write(",".join(f"{float(x)!r}" for x in row) + "\n")
    print(f"k0={k0} objective={assignment.objective:.6g} -> {args.out}")
    return 0


def _cmd_sweep(args):
    params = _need_params(args)
    grid = _parse_grid(args.grid)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [args.seed]
    records = beta_sweep(params, args.n, beta_grid=grid, seeds=seeds,
                         margin=args.margin, workers=args.workers)
    if args.format == "csv":
        save_sweep_csv(records, _out(args, "sweep.csv"))
    else:
        doc = [{"seed": r.seed, "beta": r.beta, "m": r.realized_m, "c_emp": r.c_emp,
                "k0": r.k0, "structural": [float(x) for x in r.structural],
                "bulk_radius": r.bulk_radius} for r in records]
        with open(_out(args, "sweep.json"), "w", encoding="ascii") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    for s in seeds:
        chunk = [r for r in records if r.seed == s]
        transitions, dips = detect_transitions(chunk)
        desc = " ".join(f"k>={i}@{b:g}" for i, b in transitions) or "none"
        print(f"seed {s}: transitions {desc}; dips {len(dips)}")
    return 0


def _cmd_pipeline(args):
    graph, planted = _load_graph_arg(args)
    report = run_pipeline(graph=planted if planted is not None else graph,
                          seed=args.seed, margin=args.margin)
    save_report_json(report, _out(args, "report.json"))
    if report.labels is not None:
        save_labels(report.labels.labels, _out(args, "labels.txt"))
    print(f"k0={report.k0} c_emp={report.c_emp:.4f} diagnosis={report.diagnosis} -> {args.out}")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "spectrum": _cmd_spectrum,
    "bp": _cmd_bp,
    "em": _cmd_em,
    "cluster": _cmd_cluster,
    "sweep": _cmd_sweep,
    "pipeline": _cmd_pipeline,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
