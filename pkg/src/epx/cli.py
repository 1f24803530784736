"""Command-line entry point: ``epx <subcommand> [options]``.

Options may also come from a config file of ``key = value`` lines
(``--config``); flags given on the command line win. The effective
configuration is logged to stderr in the same ``key = value`` form, so it can
be saved and replayed. Each run writes ``manifest.json`` next to its outputs;
it records the configuration and output digests but no thread count, paths of
the output directory or timestamps, so identical runs give identical bytes.

Exit codes: 0 success, 1 unexpected error, 2 usage or configuration error,
3 missing or unreadable file, 4 invalid data or parameters, 5 bad model file.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, _svg
from ._seeding import default_threads
from .cv import CvError, FixedEpx, PlainForest, ReformEpx, cross_validate, diversity_map, win_count
from .dataset import (
    GroupingPlan,
    DatasetError,
    SynthSpec,
    default_plan,
    group_by_names,
    load_csv,
    read_plan,
    read_schema,
    save_csv,
    singleton_groups,
    synth_generate,
    write_plan,
    write_schema,
)
from .ensemble import ModelFormatError, fit_epx, load_model, member_probabilities, save_model
from .forest import ForestConfig, ForestError
from .formation import FormationConfig, FormationError, form_phalanxes
from .grouping import GroupingError, cluster_groups
from .metrics import MetricError, hit_curve, null_calibration, ranks

log = logging.getLogger("epx")

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DATA = 4
EXIT_MODEL = 5

DATA_ERRORS = (DatasetError, MetricError, ForestError, FormationError, GroupingError, CvError)

# never written to the manifest: they must not change the results
VOLATILE = {"threads", "out", "config", "verbose", "command"}
INPUT_FILES = ("data", "schema", "groups", "phalanxes", "model")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Argument types


def positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return value


def nonnegative_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected an integer >= 0, got {text}")
    return value


def optional_int(text):
    if str(text).lower() in ("", "none", "default"):
        return None
    return positive_int(text)


def probability(text):
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"expected a value strictly between 0 and 1, got {text}")
    return value


def alpha_level(text):
    value = float(text)
    if not 0.5 <= value < 1:
        raise argparse.ArgumentTypeError(f"expected 0.5 <= alpha < 1, got {text}")
    return value


def seed_value(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"seed must be >= 0, got {text}")
    return value


TRUE = {"1", "true", "yes", "on"}
FALSE = {"0", "false", "no", "off"}


# ---------------------------------------------------------------------------
# Parser


def _common(p, seeded: bool):
    p.add_argument("--config", help="file of 'key = value' lines supplying defaults for this subcommand")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("--threads", type=positive_int, help="worker threads (default: $EPX_THREADS or 1)")
    p.add_argument("--verbose", action="store_true", help="debug logging")
    if seeded:
        p.add_argument("--seed", type=seed_value, help="master seed (required)")


def _data(p, labelled=True):
    p.add_argument("--data", help="CSV file with a header row")
    if labelled:
        p.add_argument("--label", default="y", help="name of the 0/1 label column")
    p.add_argument("--id-column", help="column holding observation ids")
    if labelled:
        p.add_argument("--schema", help="file of 'name = binary|continuous' hints")


def _grouping(p):
    p.add_argument(
        "--grouping",
        default="names",
        choices=("names", "singletons", "clusters", "file", "auto"),
        help="initial groups: digit-placeholder names, one per variable, Ward clusters, a file, "
        "or auto (names for binary data, singletons otherwise)",
    )
    p.add_argument("--groups", help="group file for --grouping file (one line of comma-separated names per group)")
    p.add_argument("--clusters", type=optional_int, help="cluster count for --grouping clusters")
    p.add_argument("--squared", action="store_true", help="Ward on squared dissimilarities (ward.D2)")


def _formation(p):
    p.add_argument("--alpha", type=alpha_level, default=0.95, help="screening quantile level")
    p.add_argument("--permutations", type=positive_int, default=1000, help="random rankings for the null")
    p.add_argument("--formation-trees", type=positive_int, default=150, help="trees per forest during formation")


def _forest(p, trees=500):
    p.add_argument("--trees", type=positive_int, default=trees, help="trees per forest")
    p.add_argument("--mtry", type=optional_int, help="variables tried per split (default floor(sqrt(k)))")
    p.add_argument("--min-node-size", type=positive_int, default=1, help="do not split nodes this small")


def _cv(p):
    p.add_argument("--k", type=positive_int, default=10, help="folds")
    p.add_argument("--shortlist", type=positive_int, default=300, help="shortlist size for initial enhancement")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="epx", description="Ensembles of phalanxes for rare-class ranking.")
    parser.add_argument("--version", action="version", version=f"epx {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    subs: dict[str, argparse.ArgumentParser] = {}

    def add(name, help_text, seeded):
        p = sub.add_parser(name, help=help_text, description=help_text)
        _common(p, seeded)
        subs[name] = p
        return p

    p = add("form", "Form phalanxes from initial variable groups.", True)
    _data(p)
    _grouping(p)
    _formation(p)
    p.add_argument("--mtry", type=optional_int, help="variables tried per split during formation")
    p.add_argument("--min-node-size", type=positive_int, default=1, help="do not split nodes this small")

    p = add("fit", "Fit one forest per phalanx and save the model.", True)
    _data(p)
    p.add_argument("--phalanxes", help="phalanx file written by 'form'")
    _forest(p)

    p = add("rank", "Score a feature CSV with a saved model, best first.", False)
    p.add_argument("--model", help="model file written by 'fit'")
    _data(p, labelled=False)

    p = add("cv", "Repeated balanced cross-validation of EPX against a plain forest.", True)
    _data(p)
    p.add_argument("--phalanxes", help="phalanx file (fixed-phalanx EPX)")
    p.add_argument("--reform", action="store_true", help="rerun formation on every training split")
    _grouping(p)
    _formation(p)
    _forest(p)
    _cv(p)
    p.add_argument("--repeats", type=positive_int, default=16, help="CV repeats")
    p.add_argument("--baseline", default="rf", choices=("rf", "none"), help="comparison pipeline")

    p = add("null", "Random-ranking null distribution of AveP.", True)
    p.add_argument("--n", type=positive_int, help="observations")
    p.add_argument("--m", type=positive_int, help="actives")
    p.add_argument("--b", type=positive_int, default=1000, help="random rankings")
    p.add_argument("--alpha", type=alpha_level, default=0.95, help="quantile level")
    p.add_argument("--samples", action="store_true", help="also write every sampled AveP")

    p = add("cluster-groups", "Ward clustering of binary variables on Jaccard dissimilarity.", False)
    _data(p)
    p.add_argument("--clusters", type=optional_int, help="group count (default: number of name groups)")
    p.add_argument("--squared", action="store_true", help="Ward on squared dissimilarities (ward.D2)")

    p = add("synth", "Generate a planted-mechanism dataset.", True)
    p.add_argument("--n-obs", type=positive_int, default=500)
    p.add_argument("--active-fraction", type=probability, default=0.05)
    p.add_argument("--blocks", type=nonnegative_int, default=2, help="informative blocks (one mechanism each)")
    p.add_argument("--block-size", type=positive_int, default=5)
    p.add_argument("--noise", type=nonnegative_int, default=40, help="noise variables")
    p.add_argument("--noise-group-size", type=optional_int, help="noise variables per name group")
    p.add_argument("--effect", type=float, default=2.0, help="log-odds (binary) or SD (continuous) shift")
    p.add_argument("--kind", default="binary", choices=("binary", "continuous"))
    p.add_argument("--base-rate", type=probability, default=0.15, help="P(x=1) for binary variables")

    p = add("diversity", "Ranks of the actives under each phalanx, the ensemble and a baseline.", True)
    _data(p)
    p.add_argument("--phalanxes", help="phalanx file")
    _forest(p)
    _cv(p)
    p.add_argument("--baseline", default="rf", choices=("rf", "none"), help="extra column")

    p = add("plot-hits", "Hit curves of saved models on a labelled dataset.", False)
    _data(p)
    p.add_argument("--model", action="append", help="model file (repeatable)")
    p.add_argument("--max-n", type=optional_int, help="last shortlist size plotted (default: all)")
    return parser, subs


# ---------------------------------------------------------------------------
# Configuration


def read_config(path: str) -> dict[str, str]:
    values = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _apply_config(p: argparse.ArgumentParser, values: dict[str, str], source: str) -> None:
    actions = {a.dest: a for a in p._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, value in values.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"{source}: unknown option {key!r} for this subcommand")
        if isinstance(action, argparse._StoreTrueAction):
            low = value.lower()
            if low not in TRUE | FALSE:
                raise UsageError(f"{source}: {key} must be true or false")
            defaults[key] = low in TRUE
        elif isinstance(action, argparse._AppendAction):
            defaults[key] = [v.strip() for v in value.split(",") if v.strip()]
        else:
            if action.choices is not None and value not in action.choices:
                raise UsageError(f"{source}: {key} must be one of {list(action.choices)}")
            # string defaults go through the action's type on parse
            defaults[key] = value
    p.set_defaults(**defaults)


def parse_args(argv) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise UsageError("a subcommand is required")
    if args.config:
        _apply_config(subs[args.command], read_config(args.config), args.config)
        args = parser.parse_args(argv)
    if args.threads is None:
        try:
            args.threads = default_threads()
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if hasattr(args, "seed") and args.seed is None:
        raise UsageError(f"'{args.command}' needs --seed (or 'seed = ...' in the config file)")
    return args


def effective_config(args: argparse.Namespace) -> dict[str, object]:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("config",)}


def _show(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ",".join(map(str, value))
    return str(value)


def require(args, *names):
    for name in names:
        if getattr(args, name) in (None, []):
            raise UsageError(f"'{args.command}' needs --{name.replace('_', '-')}")


# ---------------------------------------------------------------------------
# Output helpers


def fmt(x) -> str:
    """Stable text for numbers: integers without a point, floats by repr."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isfinite(x) and x == int(x) and abs(x) < 2**53:
            return str(int(x))
        return repr(x)
    return str(x)


class Outputs:
    """Writes files under the output directory and remembers their digests."""

    def __init__(self, root: Path):
        self.root = root
        root.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, str] = {}

    def text(self, name: str, content: str, primary: bool = True) -> Path:
        path = self.root / name
        path.write_text(content, encoding="utf-8", newline="\n")
        if primary:
            self.files[name] = hashlib.sha256(content.encode("utf-8")).hexdigest()
        return path

    def table(self, name: str, header: list[str], rows) -> Path:
        import io

        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
        return self.text(name, buf.getvalue())

    def register(self, name: str) -> None:
        self.files[name] = hashlib.sha256((self.root / name).read_bytes()).hexdigest()


def _digest(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Outputs, args: argparse.Namespace) -> None:
    config = {k: v for k, v in effective_config(args).items() if k not in VOLATILE}
    inputs = {}
    for key in INPUT_FILES:
        value = getattr(args, key, None)
        for path in value if isinstance(value, list) else [value]:
            if path:
                inputs[path] = _digest(path)
    manifest = {
        "tool": "epx",
        "version": __version__,
        "command": args.command,
        "config": config,
        "inputs": inputs,
        "outputs": dict(sorted(out.files.items())),
    }
    out.text("manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n", primary=False)


# ---------------------------------------------------------------------------
# Subcommands


def load_dataset(args):
    require(args, "data")
    schema = read_schema(args.schema) if getattr(args, "schema", None) else None
    return load_csv(args.data, args.label, schema, args.id_column)


def initial_plan(args, ds) -> GroupingPlan:
    mode = args.grouping
    if mode == "names":
        return group_by_names(ds)
    if mode == "singletons":
        return singleton_groups(ds)
    if mode == "clusters":
        return cluster_groups(ds, args.clusters, args.squared)
    if mode == "file":
        require(args, "groups")
        return read_plan(args.groups, ds)
    return default_plan(ds)


def formation_config(args) -> FormationConfig:
    return FormationConfig(
        alpha=args.alpha,
        permutations=args.permutations,
        formation_trees=args.formation_trees,
        evaluator_seed=args.seed,
        mtry=args.mtry,
        min_node_size=args.min_node_size,
    )


def forest_config(args, seed=0) -> ForestConfig:
    return ForestConfig(n_trees=args.trees, mtry=args.mtry, min_node_size=args.min_node_size, seed=seed)


def group_label(names, group) -> str:
    return "+".join(names[i] for i in group)


def cmd_form(args, out: Outputs):
    ds = load_dataset(args)
    plan = initial_plan(args, ds)
    result = form_phalanxes(ds, plan, formation_config(args), args.threads)
    names = ds.names
    lab = lambda g: group_label(names, g)

    write_plan(plan, ds, out.root / "initial_groups.txt")
    out.register("initial_groups.txt")
    write_plan(GroupingPlan(tuple(result.phalanxes), "explicit"), ds, out.root / "phalanxes.txt")
    out.register("phalanxes.txt")

    rows = []
    for stage, report in (("groups", result.screening), ("phalanxes", result.phalanx_screening)):
        for o in report.outcomes:
            rows.append([
                stage, lab(o.group), o.a, o.alone, o.combined, o.ensembled, o.fallback, o.survives,
                lab(o.combined_with) if o.combined_with else "",
                lab(o.ensembled_with) if o.ensembled_with else "",
            ])
    out.table(
        "screening.csv",
        ["stage", "group", "a", "alone", "combined", "ensembled", "fallback", "survives", "combined_with", "ensembled_with"],
        rows,
    )
    out.table(
        "merge_trace.csv",
        ["step", "first", "second", "ratio", "merged"],
        [[t + 1, lab(e.first), lab(e.second), e.ratio, lab(e.merged)] for t, e in enumerate(result.merge.events)],
    )
    out.table(
        "final_ratios.csv",
        ["first", "second", "ratio"],
        [[lab(a), lab(b), r] for (a, b), r in sorted(result.merge.final_ratios.items())],
    )
    c = result.counts
    cal = result.calibration
    out.table(
        "formation_summary.csv",
        ["d", "s", "c", "p", "fits", "a_median", "a_quantile", "alpha", "permutations"],
        [[c["d"], c["s"], c["c"], c["p"], result.fit_counter, cal.a_median, cal.a_quantile, cal.alpha, cal.B]],
    )
    log.info("formed %d phalanx(es) from %d groups with %d fits", c["p"], c["d"], result.fit_counter)


def cmd_fit(args, out: Outputs):
    require(args, "phalanxes")
    ds = load_dataset(args)
    plan = read_plan(args.phalanxes, ds)
    formation = {"phalanx_file": Path(args.phalanxes).name, "phalanx_file_sha256": _digest(args.phalanxes)}
    model = fit_epx(ds, plan.groups, forest_config(args, args.seed), args.threads, formation)
    save_model(model, out.root / "model.json")
    out.register("model.json")
    log.info("fitted %d forest(s) of %d trees", model.p, args.trees)


def read_features(path: str, names: list[str], id_column: str | None):
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(p)
    with p.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        missing = [n for n in names if n not in header]
        if missing:
            raise DatasetError(f"{path}: missing model variable(s) {missing}")
        if id_column is not None and id_column not in header:
            raise DatasetError(f"{path}: no id column {id_column!r}")
        at = [header.index(n) for n in names]
        rows, ids = [], []
        for rowno, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path}: row {rowno} has {len(row)} fields, expected {len(header)}")
            try:
                rows.append([float(row[j]) for j in at])
            except ValueError:
                raise DatasetError(f"{path}: row {rowno} has a non-numeric model variable") from None
            ids.append(row[header.index(id_column)].strip() if id_column else str(len(ids) + 1))
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64), ids


def cmd_rank(args, out: Outputs):
    require(args, "model", "data")
    model = load_model(args.model)
    X, ids = read_features(args.data, [v.name for v in model.variables], args.id_column)
    probs = member_probabilities(model, X, args.threads).mean(axis=0)
    r = ranks(probs)
    order = np.lexsort((np.arange(len(ids)), -probs))
    out.table("ranking.csv", ["id", "probability", "rank"], [[ids[i], probs[i], r[i]] for i in order])


def cmd_cv(args, out: Outputs):
    ds = load_dataset(args)
    cfg = forest_config(args)
    if args.reform:
        pipeline = ReformEpx(initial_plan(args, ds), formation_config(args), cfg)
    else:
        if not args.phalanxes:
            raise UsageError("'cv' needs --phalanxes or --reform")
        pipeline = FixedEpx(read_plan(args.phalanxes, ds).groups, cfg)
    results = [cross_validate(ds, pipeline, args.k, args.repeats, args.seed, args.shortlist, args.threads)]
    if args.baseline == "rf":
        results.append(cross_validate(ds, PlainForest(cfg), args.k, args.repeats, args.seed, args.shortlist, args.threads))
    rows = []
    for res in results:
        rows.extend([r + 1, res.pipeline, res.avep[r], res.ie[r]] for r in range(res.repeats))
    out.table("cv_repeats.csv", ["repeat", "pipeline", "avep", "ie"], rows)
    summary = []
    for res in results:
        wins = win_count(res, results[1]) if len(results) > 1 and res is results[0] else ""
        summary.append([res.pipeline, res.repeats, res.avep.mean(), res.avep.std(ddof=1) if res.repeats > 1 else 0.0, res.ie.mean(), wins])
    out.table("cv_summary.csv", ["pipeline", "repeats", "mean_avep", "sd_avep", "mean_ie", "wins_vs_baseline"], summary)
    if len(results) > 1:
        log.info("%s beats %s in %s of %d repeats", results[0].pipeline, results[1].pipeline, summary[0][5], args.repeats)


def cmd_null(args, out: Outputs):
    require(args, "n", "m")
    if args.m > args.n:
        raise DatasetError("--m cannot exceed --n")
    cal = null_calibration(args.n, args.m, args.b, args.alpha, args.seed, args.threads)
    out.table(
        "null_summary.csv",
        ["n_obs", "n_active", "B", "alpha", "seed", "a_median", "a_quantile"],
        [[cal.n_obs, cal.n_active, cal.B, cal.alpha, cal.seed, cal.a_median, cal.a_quantile]],
    )
    if args.samples:
        out.table("null_samples.csv", ["b", "avep"], [[b + 1, v] for b, v in enumerate(cal.samples)])
    log.info("a_0.5 = %.6f, a_%g = %.6f", cal.a_median, cal.alpha, cal.a_quantile)


def cmd_cluster_groups(args, out: Outputs):
    ds = load_dataset(args)
    plan = cluster_groups(ds, args.clusters, args.squared)
    write_plan(plan, ds, out.root / "groups.txt")
    out.register("groups.txt")
    log.info("%d groups", plan.d)


def cmd_synth(args, out: Outputs):
    spec = SynthSpec(
        n_obs=args.n_obs,
        active_fraction=args.active_fraction,
        n_blocks=args.blocks,
        block_size=args.block_size,
        n_noise=args.noise,
        effect=args.effect,
        kind=args.kind,
        base_rate=args.base_rate,
        noise_group_size=args.noise_group_size,
    )
    ds, truth = synth_generate(spec, args.seed)
    save_csv(ds, out.root / "synth.csv")
    out.register("synth.csv")
    write_schema(ds, out.root / "synth.schema")
    out.register("synth.schema")
    names = ds.names
    out.text("blocks.txt", "".join(",".join(names[i] for i in b) + "\n" for b in truth.blocks))
    out.table("mechanism.csv", ["row", "mechanism"], [[i + 1, m] for i, m in enumerate(truth.mechanism)])
    log.info("%d observations, %d actives, %d variables", ds.n_obs, ds.n_active, ds.n_vars)


def cmd_diversity(args, out: Outputs):
    require(args, "phalanxes")
    ds = load_dataset(args)
    cfg = forest_config(args)
    epx = cross_validate(ds, FixedEpx(read_plan(args.phalanxes, ds).groups, cfg), args.k, 1, args.seed, args.shortlist, args.threads)
    base = None
    if args.baseline == "rf":
        base = cross_validate(ds, PlainForest(cfg), args.k, 1, args.seed, args.shortlist, args.threads)
    dm = diversity_map(ds, epx, baseline=base)
    ids = ds.ids if ds.ids is not None else [str(i + 1) for i in range(ds.n_obs)]
    out.table("diversity.csv", ["id", *dm.columns], [[ids[row], *dm.ranks[i]] for i, row in enumerate(dm.rows)])
    out.table("diversity_avep.csv", ["column", "avep"], list(zip(dm.columns, dm.avep)))
    out.text("diversity.svg", _svg.rank_heatmap(dm.columns, dm.avep, dm.ranks, ds.n_obs), primary=False)


def cmd_plot_hits(args, out: Outputs):
    require(args, "model")
    ds = load_dataset(args)
    curves = []
    for k, path in enumerate(args.model):
        model = load_model(path)
        names = [v.name for v in model.variables]
        try:
            cols = [ds.index_of(n) for n in names]
        except KeyError as exc:
            raise DatasetError(f"{args.data}: missing model variable {exc.args[0]!r}") from None
        probs = member_probabilities(model, ds.features[:, cols], args.threads).mean(axis=0)
        curves.append((f"model-{k + 1}", hit_curve(probs, ds.labels).hits))
    max_n = min(args.max_n or ds.n_obs, ds.n_obs)
    header = ["n", *[c[0] for c in curves], "random"]
    rows = [[n, *[c[1][n - 1] for c in curves], n * ds.n_active / ds.n_obs] for n in range(1, max_n + 1)]
    out.table("hits.csv", header, rows)
    out.text("hits.svg", _svg.hit_curves(curves, ds.n_obs, ds.n_active, max_n), primary=False)


COMMANDS = {
    "form": cmd_form,
    "fit": cmd_fit,
    "rank": cmd_rank,
    "cv": cmd_cv,
    "null": cmd_null,
    "cluster-groups": cmd_cluster_groups,
    "synth": cmd_synth,
    "diversity": cmd_diversity,
    "plot-hits": cmd_plot_hits,
}


def run(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_IO
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    for key, value in effective_config(args).items():
        log.info("config %s = %s", key, _show(value))
    try:
        out = Outputs(Path(args.out))
        COMMANDS[args.command](args, out)
        write_manifest(out, args)
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except ModelFormatError as exc:
        log.error("model file: %s", exc)
        return EXIT_MODEL
    except FileNotFoundError as exc:
        log.error("file not found: %s", exc.filename or exc)
        return EXIT_IO
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except DATA_ERRORS as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except Exception:
        log.exception("unexpected error")
        return EXIT_UNEXPECTED
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
