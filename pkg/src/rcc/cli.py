"""Command-line interface: ``rcc simulate|stats|fit|predict|report``.

Exit codes: 0 success, 2 invalid input or configuration, 3 resource budget
exceeded.  ``--config FILE`` reads a JSON object whose keys (flag names with
dashes or underscores) take precedence over flags given on the command line.
``RCC_THREADS`` caps the worker pool used by ``simulate``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from .estimators import GraphSummarizer, RandomCliqueCover, mean_and_stderr
from .graph import EdgeListError, cover_to_graph, read_edgelist, write_edgelist
from .ibp import CliqueMatrix, Hyperparams
from .inference import load_checkpoint, save_checkpoint, write_trace_csv
from .simulate import loglog_checkpoints, run_grid
from .stats import (
    TABLE_FIELDS,
    CliqueBudgetExceeded,
    degree_distribution,
    iter_maximal_cliques,
    summarize,
    write_histogram_csv,
    write_summary_csv,
    write_summary_json,
)
from .validation import ValidationError

log = logging.getLogger("rcc")

EXIT_OK, EXIT_INVALID, EXIT_BUDGET = 0, 2, 3


class BudgetExceeded(RuntimeError):
    """A run went over a user-set resource limit."""


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover
        return "unknown"


def _dump(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def _manifest(out, command, args, extra=None):
    spec = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}
    data = {"command": command, "spec": spec, "version": _version()}
    if extra:
        data.update(extra)
    _dump(data, Path(out) / "manifest.json")


def _outdir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _floats(text):
    return [float(x) for x in str(text).split(",") if x.strip()]


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args):
    grid = {"alpha": args.alpha, "sigma": args.sigma, "c": args.c}
    grid = {k: (v if isinstance(v, list) else _floats(v)) for k, v in grid.items()}
    for a in grid["alpha"]:
        for s in grid["sigma"]:
            for c in grid["c"]:
                Hyperparams(a, s, c)
    if args.n_cliques < 1:
        raise ValidationError("n_cliques must be >= 1")
    out = _outdir(args.out)
    cps = loglog_checkpoints(args.n_cliques, 1, args.checkpoints)
    results = run_grid(grid, args.n_cliques, args.replicates, args.seed, cps, not args.no_stats, args.workers)

    with (out / "trajectories.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["grid_index", "replicate", "alpha", "sigma", "c", "n_cliques", "vertices", "edges", "multi_edges"])
        for r in results:
            p = r.params
            for row in r.trajectory.rows():
                w.writerow([r.grid_index, r.replicate, p["alpha"], p["sigma"], p["c"], *row])
    with (out / "replicates.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["grid_index", "replicate", "alpha", "sigma", "c", "vertices", "edges",
                    "density", "avg_max_clique", "clustering"])
        for r in results:
            p, s = r.params, r.stats
            w.writerow([r.grid_index, r.replicate, p["alpha"], p["sigma"], p["c"],
                        int(r.trajectory.vertices[-1]), int(r.trajectory.edges[-1]),
                        *(repr(s[k]) if k in s else "" for k in ("density", "avg_max_clique", "clustering"))])
    if not args.no_stats:
        with (out / "degrees.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["grid_index", "replicate", "degree", "count"])
            for r in results:
                vals, counts = np.unique(r.degrees, return_counts=True)
                for d, k in zip(vals.tolist(), counts.tolist()):
                    w.writerow([r.grid_index, r.replicate, d, k])
    _manifest(out, "simulate", args, {"grid_points": len(results) // args.replicates})
    print(f"simulated {len(results)} replicates into {out}")


# ---------------------------------------------------------------------------
# stats


def cmd_stats(args):
    G = read_edgelist(args.graph)
    out = _outdir(args.out)
    s = summarize(G, args.skip_max_clique, args.include_low_degree, args.max_cliques)
    write_summary_json(s, out / "summary.json", {"vertices": G.vertex_count, "edges": G.edge_count})
    write_summary_csv([s], out / "summary.csv")
    write_histogram_csv(degree_distribution(G).degrees, out / "degree_hist.csv")
    if not args.skip_max_clique:
        sizes = [len(q) for q in iter_maximal_cliques(G, args.max_cliques)]
        write_histogram_csv(sizes, out / "max_clique_hist.csv")
    _manifest(out, "stats", args)
    for k, v in s.table_row().items():
        print(f"{k:>16}: {'-' if math.isnan(v) else f'{v:.4g}'}")


# ---------------------------------------------------------------------------
# fit


def _fit_estimator(args):
    hp = None
    if args.alpha is not None:
        hp = Hyperparams(args.alpha, args.sigma, args.c, args.tau)
    return RandomCliqueCover(
        mode=args.mode,
        n_iter=args.iterations,
        burn_in=args.burn_in,
        thin=args.thin,
        init=args.init,
        hyperparams=hp,
        hyper_method=args.hyper_method,
        hyper_every=args.hyper_every,
        pi=args.pi,
        pi_mode=args.pi_mode,
        random_state=args.seed,
        debug=args.debug,
    )


def cmd_fit(args):
    G = read_edgelist(args.graph)
    out = _outdir(args.out)
    est = _fit_estimator(args)
    state = None
    if args.resume:
        state = load_checkpoint(args.resume, G)
    guard = None
    if args.max_seconds:
        deadline = time.monotonic() + args.max_seconds

        def guard(st):
            if time.monotonic() > deadline:
                save_checkpoint(st, out / "checkpoint.json")
                raise BudgetExceeded(f"time budget of {args.max_seconds}s exceeded at iteration {st.iteration}")

    est.fit(G, state=state, callback=guard)

    write_edgelist(G, out / "graph.txt")
    save_checkpoint(est.state_, out / "checkpoint.json")
    write_trace_csv(est.trace_, out / "trace.csv")
    with (out / "samples.jsonl").open("w") as fh:
        for s in est.samples_:
            rec = {
                "iteration": s.iteration,
                "cover": s.cover.to_json(),
                "pi": s.pi,
                "hyperparams": s.hyperparams.to_dict(),
                "log_joint": s.log_joint,
                "log_likelihood": s.log_likelihood,
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    _dump(
        {
            "mode": args.mode,
            "pi_mode": args.pi_mode,
            "hyperparams": est.hyperparams_.to_dict(),
            "pi": est.pi_,
            "acceptance": {k: (None if math.isnan(v) else v) for k, v in est.acceptance_.items()},
            "n_cliques": sum(1 for r in est.cover_.rows if r),
        },
        out / "fit.json",
    )
    _manifest(out, "fit", args)
    print(f"{len(est.samples_)} samples; hyperparameters {est.hyperparams_.to_dict()}")


def _load_fit(path):
    d = Path(path)
    if not (d / "fit.json").exists():
        raise ValidationError(f"{d} does not contain a fit (missing fit.json)")
    fit = json.loads((d / "fit.json").read_text())
    G = read_edgelist(d / "graph.txt")
    samples = [json.loads(line) for line in (d / "samples.jsonl").read_text().splitlines() if line.strip()]
    return fit, G, samples


# ---------------------------------------------------------------------------
# predict


def cmd_predict(args):
    fit, G, _ = _load_fit(args.fit)
    if args.n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    out = _outdir(args.out or Path(args.fit) / "predict")
    est = RandomCliqueCover(mode=fit["mode"])
    est.hyperparams_ = Hyperparams.from_dict(fit["hyperparams"])
    est.pi_ = fit["pi"]
    graphs = est.predict(args.n_samples, random_state=args.seed)
    summ = GraphSummarizer(skip_max_clique=args.skip_max_clique, max_cliques=args.max_cliques)
    X = summ.fit_transform([g for g in graphs if g.vertex_count >= 2])
    truth = summ.transform([G])[0]
    mean, se = mean_and_stderr(X)
    gdir = _outdir(out / "graphs")
    for k, g in enumerate(graphs):
        write_edgelist(g, gdir / f"sample_{k:04d}.txt")
    write_summary_csv([dict(zip(TABLE_FIELDS, row)) for row in X], out / "samples.csv")
    rows = [dict(zip(TABLE_FIELDS, v)) for v in (truth, mean, se)]
    write_summary_csv(rows, out / "table.csv", labels=["truth", "rcc_mean", "rcc_se"])
    _manifest(out, "predict", args, {"used_samples": int(len(X))})
    print(f"{'':>16}  {'truth':>10}  {'rcc (s.e.)':>20}")
    for k, t, m, e in zip(TABLE_FIELDS, truth, mean, se):
        print(f"{k:>16}  {t:>10.4g}  {m:>10.4g} ({e:.2g})")


# ---------------------------------------------------------------------------
# report


def latent_report(cover: CliqueMatrix, G) -> dict:
    """Membership summary of one latent cover against the observed graph."""
    rows = [list(r) for r in cover.rows if r]
    counts = np.zeros(G.vertex_count, dtype=int)
    for r in rows:
        counts[r] += 1
    latent = cover_to_graph(CliqueMatrix(rows, G.vertex_count))
    latent_edges = latent.edge_set()
    only = sorted(latent_edges - G.edge_set())
    hist = {int(k): int(v) for k, v in zip(*np.unique(counts, return_counts=True))}
    return {
        "cliques": rows,
        "clique_counts": counts.tolist(),
        "membership_histogram": hist,
        "latent_edges": len(latent_edges),
        "latent_only_edges": len(only),
        "latent_only_fraction": len(only) / len(latent_edges) if latent_edges else 0.0,
        "largest_membership_vertex": int(np.argmax(counts)) if len(counts) else None,
        "_latent_only": only,
    }


def cmd_report(args):
    fit, G, samples = _load_fit(args.fit)
    if fit["mode"] != "partial":
        raise ValidationError("report needs a partial-mode fit")
    if not samples:
        raise ValidationError("the fit has no retained samples")
    out = _outdir(args.out or Path(args.fit) / "report")
    chosen = samples if args.all_samples else samples[-1:]
    reports = []
    for s in chosen:
        rep = latent_report(CliqueMatrix.from_json(s["cover"]), G)
        rep["iteration"] = s["iteration"]
        rep["pi"] = s["pi"]
        reports.append(rep)
    last = reports[-1]
    with (out / "latent_only_edges.txt").open("w") as fh:
        fh.write(f"# vertices {G.vertex_count}\n")
        fh.writelines(f"{u} {v}\n" for u, v in last["_latent_only"])
    write_edgelist(G, out / "observed_edges.txt")
    for r in reports:
        del r["_latent_only"]
    _dump({"samples": reports}, out / "report.json")
    fracs = [r["latent_only_fraction"] for r in reports]
    pis = np.array([np.mean(r["pi"]) for r in reports])
    _manifest(out, "report", args)
    print(f"latent-only edge fraction {np.mean(fracs):.3f}; mean pi {pis.mean():.3f}; "
          f"{len(last['cliques'])} cliques in the last sample")


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rcc", description="Random clique cover graphs: simulate, summarise, fit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file of option values (overrides flags)")
        sp.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("simulate", help="sample graphs over a hyperparameter grid")
    common(s)
    s.add_argument("--alpha", default="20", help="comma-separated values")
    s.add_argument("--sigma", default="0.2,0.5,0.8")
    s.add_argument("--c", default="1")
    s.add_argument("--n-cliques", type=int, default=100)
    s.add_argument("--replicates", type=int, default=10)
    s.add_argument("--checkpoints", type=int, default=40, help="number of log-spaced trajectory points")
    s.add_argument("--no-stats", action="store_true", help="skip per-replicate graph statistics")
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--out", default="rcc-simulate")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("stats", help="summary statistics of an edge list")
    common(s)
    s.add_argument("graph")
    s.add_argument("--out", default="rcc-stats")
    s.add_argument("--skip-max-clique", action="store_true")
    s.add_argument("--include-low-degree", action="store_true",
                   help="count degree < 2 vertices as zero clustering")
    s.add_argument("--max-cliques", type=int, default=10**6, help="maximal-clique enumeration budget")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("fit", help="infer a latent clique cover by MCMC")
    common(s)
    s.add_argument("graph")
    s.add_argument("--out", default="rcc-fit")
    s.add_argument("--mode", choices=["full", "partial"], default="full")
    s.add_argument("--iterations", type=int, default=10000)
    s.add_argument("--burn-in", type=int, default=0)
    s.add_argument("--thin", type=int, default=10)
    s.add_argument("--init", choices=["two-cliques", "greedy-cover"], default="two-cliques")
    s.add_argument("--pi", type=float, default=0.5)
    s.add_argument("--pi-mode", choices=["shared", "per-clique"], default="shared")
    s.add_argument("--hyper-method", choices=["fixed", "gradient", "mh"], default=None)
    s.add_argument("--hyper-every", type=int, default=None)
    s.add_argument("--alpha", type=float, default=None)
    s.add_argument("--sigma", type=float, default=0.5)
    s.add_argument("--c", type=float, default=1.0)
    s.add_argument("--tau", type=float, default=10.0)
    s.add_argument("--resume", default=None, help="checkpoint to continue from")
    s.add_argument("--max-seconds", type=float, default=None, help="wall-clock budget (exit 3 when exceeded)")
    s.add_argument("--debug", action="store_true", help="verify caches after every move")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", help="posterior-predictive graphs and summary table")
    common(s)
    s.add_argument("fit")
    s.add_argument("--n-samples", type=int, default=25)
    s.add_argument("--out", default=None)
    s.add_argument("--skip-max-clique", action="store_true")
    s.add_argument("--max-cliques", type=int, default=10**6)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("report", help="latent-structure report of a partial-mode fit")
    common(s)
    s.add_argument("fit")
    s.add_argument("--out", default=None)
    s.add_argument("--all-samples", action="store_true")
    s.set_defaults(func=cmd_report)
    return p


def _apply_config(args, parser):
    if not getattr(args, "config", None):
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ValidationError("config must be a JSON object")
    for key, val in cfg.items():
        name = key.replace("-", "_")
        if name in ("func", "command", "config") or not hasattr(args, name):
            raise ValidationError(f"unknown config key {key!r} for '{args.command}'")
        setattr(args, name, val)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _apply_config(args, parser)
        args.func(args)
    except (ValidationError, EdgeListError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (CliqueBudgetExceeded, BudgetExceeded, MemoryError) as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
