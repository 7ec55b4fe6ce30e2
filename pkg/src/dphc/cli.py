"""Command-line entry point: ``dphc <command> ...``.

Exit codes: 0 success, 2 invalid input or arguments, 3 file I/O or format
problems, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as fio
from .affinity import (
    AffinityMatrix,
    affinity_cosine,
    affinity_data,
    affinity_pca,
    cosine_distance,
    pairwise_distance,
)
from .agglomerate import cluster_dot, cluster_generic
from .dendrogram import Dendrogram, DendrogramError, merge_distortion, merge_height_matrix, validate
from .evaluation import (
    ESTIMATORS,
    LabelHierarchy,
    convergence_experiment,
    hierarchy_closeness,
    mean_tau_b,
)
from .genmodel import TreeSpec, builtin_tree_e1, sample_additive
from .spectral import pc_scores, select_rank_wasserstein

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

DEFAULT_R_MAX = 20

# method -> how to cluster a feature matrix (raw data or PCA scores)
METHODS = (
    "dot",
    "cosine-average",
    "upgma-euclidean",
    "ward",
    "complete-euclidean",
    "single-euclidean",
    "complete-cosine",
    "single-cosine",
    "upgma-manhattan",
    "upgma-dot-dissimilarity",
)
INPUTS = ("raw", "pca")
LINKAGE_CHOICES = ("dot", "average", "complete", "single", "ward")
CLUSTER_ESTIMATORS = ESTIMATORS + ("euclidean", "manhattan", "sqeuclidean")


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------- helpers
def _load_spec(tree: str, sigma: float | None) -> TreeSpec:
    if tree == "e1":
        spec = builtin_tree_e1()
    else:
        spec = TreeSpec.from_json(Path(tree).read_text())
    if sigma is not None:
        spec = replace(spec, sigma=sigma)
    return spec


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _choose_rank(y: np.ndarray, r: int | None, r_max: int | None, shuffle_seed: int | None = None):
    """Explicit ``r``, or the Wasserstein choice up to ``r_max``.

    With ``shuffle_seed`` the rows are permuted before the split into halves.
    """
    if r is not None:
        return r, None
    n, p = y.shape
    cap = min(math.ceil(n / 2), p)
    if shuffle_seed is not None:
        y = y[np.random.default_rng(shuffle_seed).permutation(n)]
    selection = select_rank_wasserstein(y, min(r_max or DEFAULT_R_MAX, cap))
    return selection.r_hat, selection


def _cluster_features(x: np.ndarray, method: str, p: int) -> Dendrogram:
    """Run one comparison method on features ``x`` (rows are samples).

    ``p`` is the ambient dimension used to scale dot products.
    """
    if method == "dot":
        return cluster_dot(affinity_pca(x, p))[0]
    if method == "upgma-dot-dissimilarity":
        # smallest dot product first: maximise the negated affinity
        neg = AffinityMatrix(-affinity_pca(x, p).values, "affinity")
        return cluster_generic(neg, "average", "max-affinity")[0]
    if method == "ward":
        return cluster_generic(pairwise_distance(x, "sqeuclidean"), "ward", "min-distance")[0]
    link, _, metric = method.partition("-")
    link = "average" if link in ("upgma", "cosine") else link
    if method == "cosine-average":
        metric = "cosine"
    dist = cosine_distance(x) if metric == "cosine" else pairwise_distance(x, metric)
    return cluster_generic(dist, link, "min-distance")[0]


def _truth_closeness(args, n: int) -> tuple[np.ndarray, Dendrogram | None, list[int] | None]:
    if args.labels:
        names, levels = fio.read_labels(args.labels)
        h = LabelHierarchy(levels)
        if h.n != n:
            raise UsageError(f"label file has {h.n} samples, expected {n}")
        return hierarchy_closeness(h), None, None
    if not (args.truth and args.assignments):
        raise UsageError("give --labels, or both --truth and --assignments")
    truth = Dendrogram.from_json(Path(args.truth).read_text())
    z = fio.read_assignments(args.assignments)
    if len(z) != n:
        raise UsageError(f"assignment file has {len(z)} samples, expected {n}")
    m = merge_height_matrix(truth, z)
    return (m if truth.orientation == "affinity" else -m), truth, z


def _parse_list(text: str, allowed=None, what="value") -> list[str]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise UsageError(f"empty {what} list")
    if allowed is not None:
        bad = [t for t in items if t not in allowed]
        if bad:
            raise UsageError(f"unknown {what} {bad[0]!r}; choose from {', '.join(allowed)}")
    seen, out = set(), []
    for t in items:
        if t in seen:
            print(f"dphc: warning: duplicate {what} {t!r} ignored", file=sys.stderr)
            continue
        seen.add(t)
        out.append(t)
    return out


def _parse_grid(args) -> list[tuple[int, int]]:
    grid = []
    if args.grid:
        for cell in args.grid.split(","):
            try:
                n, p = cell.lower().split("x")
                grid.append((int(n), int(p)))
            except ValueError as exc:
                raise UsageError(f"grid cell {cell!r} is not of the form NxP") from exc
    elif args.n and args.p:
        ns = [int(v) for v in args.n.split(",") if v.strip()]
        ps = [int(v) for v in args.p.split(",") if v.strip()]
        grid = [(n, p) for n in ns for p in ps]
    if not grid:
        raise UsageError("empty grid; give --grid NxP,... or --n and --p")
    return grid


# ---------------------------------------------------------------- commands
def cmd_simulate(args) -> int:
    spec = _load_spec(args.tree, args.sigma)
    sample = sample_additive(spec, args.n, args.p, args.seed)
    out = _out_dir(args.out_dir)
    fio.write_matrix(out / ("data.bin" if args.binary else "data.csv"), sample.y)
    fio.write_assignments(out / "assignments.csv", sample.z)
    (out / "truth.json").write_text(sample.truth.to_json(indent=2) + "\n")
    fio.write_affinity(out / "true_affinity.csv", sample.true_alpha)
    return EXIT_OK


def cmd_cluster(args) -> int:
    y = fio.read_matrix(args.matrix)
    n, p = y.shape
    est, link = args.estimator, args.linkage
    meta: dict = {"estimator": est, "linkage": link, "n": n, "p": p}
    out = _out_dir(args.out_dir)
    affinity_estimators = ("data", "pca", "cosine")
    if link == "dot" and est not in affinity_estimators:
        raise UsageError(f"linkage 'dot' needs an affinity estimator, not {est!r}")
    if link == "ward" and est != "sqeuclidean":
        raise UsageError("ward linkage needs --estimator sqeuclidean")
    if link in ("average", "complete", "single") and est in ("data", "pca"):
        raise UsageError(f"{link} linkage needs a distance; use cosine, euclidean or manhattan")

    if est == "pca":
        r, selection = _choose_rank(y, args.r, args.r_max, args.seed if args.shuffle else None)
        meta["r"] = r
        if selection is not None:
            meta["r_selected"] = True
            (out / "rank_selection.csv").write_text(selection.to_csv())
        mat = affinity_pca(pc_scores(y, r), p)
    elif est == "data":
        mat = affinity_data(y)
    elif est == "cosine":
        mat = affinity_cosine(y) if link == "dot" else cosine_distance(y)
    else:
        mat = pairwise_distance(y, est)

    if link == "dot":
        dendro, trace = cluster_dot(mat)
    else:
        dendro, trace = cluster_generic(mat, link, "min-distance")
    problem = validate(dendro)
    if problem is not None:
        raise ArithmeticError(f"clustering produced an invalid dendrogram: {problem}")

    meta["negative_fraction"] = trace.negative_fraction
    (out / "dendrogram.json").write_text(dendro.to_json(indent=2) + "\n")
    (out / "dendrogram.nwk").write_text(dendro.to_newick() + "\n")
    fio.write_linkage(out / "linkage.csv", trace.linkage)
    if trace.objective == "max-affinity":
        top = float(mat.off_diagonal().max())
        meta["max_affinity"] = top
        fio.write_linkage(out / "linkage_distance.csv", trace.distance_flavour(top))
    (out / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    est = Dendrogram.from_json(Path(args.dendrogram).read_text())
    n = est.n_samples
    closeness, truth, z = _truth_closeness(args, n)
    summary = mean_tau_b(closeness, est)
    report = {
        "n": n,
        "mean_tau_b": summary.mean,
        "stderr": summary.stderr,
        "excluded": summary.excluded,
    }
    if truth is not None:
        report["merge_distortion"] = merge_distortion(truth, z, est)
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_compare(args) -> int:
    methods = _parse_list(args.methods, METHODS, "method")
    inputs = _parse_list(args.inputs, INPUTS, "input")
    y = fio.read_matrix(args.matrix)
    n, p = y.shape
    closeness, _, _ = _truth_closeness(args, n)
    features = {"raw": y}
    if "pca" in inputs:
        r, _ = _choose_rank(y, args.r, args.r_max, args.seed if args.shuffle else None)
        features["pca"] = pc_scores(y, r).values
    rows = []
    for method in methods:
        for inp in inputs:
            dendro = _cluster_features(features[inp], method, p)
            s = mean_tau_b(closeness, dendro)
            rows.append([method, inp, repr(s.mean), repr(s.stderr), s.excluded])
    header = ["method", "input", "mean_tau_b", "stderr", "excluded"]
    if args.out:
        fio.write_csv(args.out, header, rows)
    sys.stdout.write(fio._rows_csv([header] + rows))
    return EXIT_OK


def cmd_convergence(args) -> int:
    if args.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    grid = _parse_grid(args)
    estimators = _parse_list(args.estimators, ESTIMATORS, "estimator")
    spec = _load_spec(args.tree, args.sigma)
    out = _out_dir(args.out_dir)
    summary, long = [], []
    for estimator in estimators:
        rows = convergence_experiment(spec, grid, estimator, args.seeds, args.r, first_seed=args.seed)
        for row in rows:
            summary.append([row.n, row.p, estimator, repr(row.mean_err), repr(row.std_err)])
            for k, err in enumerate(row.errors):
                long.append([row.n, row.p, estimator, args.seed + k, repr(err)])
    fio.write_csv(out / "convergence.csv", ["n", "p", "estimator", "mean_err", "std_err_err"], summary)
    fio.write_csv(out / "convergence_long.csv", ["n", "p", "estimator", "seed", "err"], long)
    return EXIT_OK


# ---------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for every random draw (default 0)")

    parser = argparse.ArgumentParser(prog="dphc", description="Dot-product hierarchical clustering")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="sample data from a latent tree")
    s.add_argument("tree", help="'e1' for the built-in tree, or a tree-spec JSON path")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--sigma", type=float, default=None, help="override the tree's noise level")
    s.add_argument("--binary", action="store_true", help="write data.bin instead of data.csv")
    s.add_argument("--out-dir", default=".")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("cluster", parents=[common], help="cluster a data matrix")
    c.add_argument("matrix")
    c.add_argument("--estimator", choices=CLUSTER_ESTIMATORS, default="data")
    c.add_argument("--linkage", choices=LINKAGE_CHOICES, default="dot")
    c.add_argument("--r", type=int, default=None, help="PCA rank; selected automatically if omitted")
    c.add_argument("--r-max", type=int, default=None)
    c.add_argument("--shuffle", action="store_true", help="shuffle rows (by --seed) before rank selection")
    c.add_argument("--out-dir", default=".")
    c.set_defaults(func=cmd_cluster)

    truth = argparse.ArgumentParser(add_help=False)
    truth.add_argument("--labels", help="label CSV: header of level names, one row per sample")
    truth.add_argument("--truth", help="true dendrogram JSON")
    truth.add_argument("--assignments", help="sample,vertex CSV matching --truth")

    e = sub.add_parser("evaluate", parents=[common, truth], help="score a dendrogram")
    e.add_argument("dendrogram")
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_evaluate)

    m = sub.add_parser("compare", parents=[common, truth], help="tau_b table over methods")
    m.add_argument("matrix")
    m.add_argument("--methods", default="dot,cosine-average,upgma-euclidean,ward",
                   help=f"comma list from: {', '.join(METHODS)}")
    m.add_argument("--inputs", default="raw,pca")
    m.add_argument("--r", type=int, default=None)
    m.add_argument("--r-max", type=int, default=None)
    m.add_argument("--shuffle", action="store_true", help="shuffle rows (by --seed) before rank selection")
    m.add_argument("--out", default=None)
    m.set_defaults(func=cmd_compare)

    g = sub.add_parser("convergence", parents=[common], help="affinity error over an (n, p) grid")
    g.add_argument("tree")
    g.add_argument("--grid", default=None, help="comma list of NxP cells, e.g. 10x100,10x1000")
    g.add_argument("--n", default=None, help="comma list of n (crossed with --p)")
    g.add_argument("--p", default=None, help="comma list of p")
    g.add_argument("--estimators", default="data,pca")
    g.add_argument("--seeds", type=int, default=100)
    g.add_argument("--r", type=int, default=None)
    g.add_argument("--sigma", type=float, default=None)
    g.add_argument("--out-dir", default=".")
    g.set_defaults(func=cmd_convergence)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (fio.FormatError, json.JSONDecodeError) as exc:
        print(f"dphc: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"dphc: {exc}", file=sys.stderr)
        return EXIT_IO
    except (np.linalg.LinAlgError, ArithmeticError, RuntimeError) as exc:
        print(f"dphc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, DendrogramError) as exc:
        print(f"dphc: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
