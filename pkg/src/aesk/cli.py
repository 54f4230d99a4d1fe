"""Batch entry point: fetch, ingest, analyze, render, serve.

Configuration precedence is flags > environment (``AESK_`` prefix) >
config file > defaults; every analysis artifact embeds the resolved
snapshot. Exit codes: 0 success, 1 total failure, 2 partial failure
(fetch), 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import KEY_FIELDS, RunConfig, load_config
from .errors import AeskError
from .ingest import load_csv, write_csv
from .pipeline import build_store, compute_analysis_id, load_table, run_analysis
from .signals import cluster_signals_to_csv, signals_to_csv
from .svg import render_svg
from .visuals import artifacts_json_bytes, load_artifacts, write_atomic

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_PARTIAL = 2
EXIT_USAGE = 64


class Parser(argparse.ArgumentParser):
    """ArgumentParser with the package's usage exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# (flag, dotted config key, help suffix). Flags arrive as strings and are
# coerced by the config layer, so one table covers every key.
_CONFIG_FLAGS = [
    ("--embedding-path", "embedding.path", "path to a term embedding file"),
    ("--embedding-dimension", "embedding.dimension", "fallback encoder dimension"),
    ("--fallback-seed", "embedding.fallback_seed", "fallback encoder seed"),
    ("--unknown-term-policy", "embedding.unknown_term_policy", "'error' or 'fallback'"),
    ("--min-cluster-size", "cluster.min_cluster_size", "density clustering minimum size"),
    ("--epsilon", "cluster.epsilon", "clustering radius (auto when unset)"),
    ("--variance-target", "pca.variance_target", "PCA retained-variance target"),
    ("--max-components", "pca.max_components", "PCA component cap"),
    ("--prior-alpha", "prior.alpha", "shrinkage prior alpha"),
    ("--prior-beta", "prior.beta", "shrinkage prior beta"),
    ("--levels", "posterior.levels", "posterior quantile levels, comma separated"),
    ("--lexicon", "ingest.lexicon", "valid-PT lexicon file"),
    ("--endpoint", "fetch.endpoint", "registry study endpoint"),
    ("--cache-dir", "fetch.cache_dir", "raw record cache directory"),
    ("--port", "service.port", "service port"),
    ("--bind", "service.bind", "service bind address"),
    ("--sync-threshold", "service.sync_threshold", "max PTs for synchronous analyses"),
]


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="config file (key = value lines)")
    for flag, key, help_text in _CONFIG_FLAGS:
        parser.add_argument(flag, dest=key, metavar="V", help=f"{help_text} ({key})")
    parser.add_argument(
        "--descriptor",
        dest="expectedness.descriptors",
        action="append",
        metavar="TEXT",
        help="population descriptor, repeatable (expectedness.descriptors)",
    )
    parser.add_argument(
        "--evd-include-noise",
        dest="visuals.evd_include_noise",
        action="store_const",
        const=True,
        help="include ungrouped terms in the EVD dataset (visuals.evd_include_noise)",
    )
    parser.add_argument(
        "--hide-zero-incidence",
        dest="visuals.hide_zero_incidence",
        action="store_const",
        const=True,
        help="hide zero-incidence points on the map (visuals.hide_zero_incidence)",
    )


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    flags = {
        key: value
        for key, value in vars(args).items()
        if key in KEY_FIELDS and value is not None
    }
    return load_config(config_file=args.config, flag_overrides=flags)


def build_parser() -> Parser:
    parser = Parser(prog="aesk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p_fetch = sub.add_parser("fetch", help="fetch and cache study records")
    p_fetch.add_argument("study_ids", nargs="+", metavar="NCT_ID")
    _add_common(p_fetch)

    p_ingest = sub.add_parser("ingest", help="normalize a study into the canonical CSV")
    p_ingest.add_argument("study_id", nargs="?", metavar="NCT_ID")
    p_ingest.add_argument("--csv", metavar="FILE", help="read a local incidence CSV instead")
    p_ingest.add_argument("--out", metavar="FILE", help="output CSV (default: stdout)")
    _add_common(p_ingest)

    p_analyze = sub.add_parser("analyze", help="run the full analysis for one study")
    p_analyze.add_argument("study_id", nargs="?", metavar="NCT_ID")
    p_analyze.add_argument("--csv", metavar="FILE", help="read a local incidence CSV instead")
    p_analyze.add_argument("--out-dir", required=True, metavar="DIR")
    _add_common(p_analyze)

    p_render = sub.add_parser("render", help="render an artifacts file to SVG")
    p_render.add_argument("artifacts", metavar="ARTIFACTS_JSON")
    p_render.add_argument("--kind", required=True, choices=("map", "evd"))
    p_render.add_argument("--out", required=True, metavar="FILE")
    _add_common(p_render)

    p_serve = sub.add_parser("serve", help="run the review HTTP service")
    _add_common(p_serve)

    return parser


def cmd_fetch(args: argparse.Namespace) -> int:
    from .ingest import fetch_study

    cfg = _resolve_config(args)
    failures = 0
    for study_id in args.study_ids:
        try:
            record = fetch_study(study_id, endpoint=cfg.endpoint, cache_dir=cfg.cache_dir)
            events = len(record.serious_events) + len(record.other_events)
            print(f"{study_id}: ok ({len(record.arms)} arms, {events} event rows)")
        except (AeskError, ValueError) as exc:
            failures += 1
            print(f"{study_id}: error: {exc}", file=sys.stderr)
    if failures == 0:
        return EXIT_OK
    if failures == len(args.study_ids):
        return EXIT_FAILURE
    return EXIT_PARTIAL


def _input_table(args: argparse.Namespace, cfg: RunConfig):
    if args.csv and args.study_id:
        raise AeskError("give either a study id or --csv, not both")
    if args.csv:
        return load_csv(args.csv)
    if args.study_id:
        return load_table(args.study_id, cfg)
    raise AeskError("a study id or --csv is required")


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    table = _input_table(args, cfg)
    if args.out:
        write_csv(table, args.out)
        print(f"wrote {args.out} ({len(table.rows)} PTs x {len(table.arms)} arms)")
    else:
        import csv as _csv

        writer = _csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(
            ["study_id", "arm_id", "arm_title", "pt_name", "n_affected", "n_at_risk"]
        )
        for row in table.rows:
            for c in row.counts:
                writer.writerow(
                    [table.study_id, c.arm_id, c.arm_title, row.pt_name, c.n_affected, c.n_at_risk]
                )
    if table.dropped_terms:
        print(f"dropped (not in lexicon): {', '.join(table.dropped_terms)}", file=sys.stderr)
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    table = _input_table(args, cfg)
    store = build_store(cfg)
    result = run_analysis(table, cfg, store)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_atomic(out_dir / "artifacts.json", artifacts_json_bytes(result.artifacts))
    signals_to_csv(result.signals, out_dir / "signals.csv")
    cluster_signals_to_csv(result.artifacts.cluster_signals, out_dir / "clusters.csv")
    write_atomic(
        out_dir / "cluster_report.json",
        (json.dumps(result.report, indent=2, sort_keys=True) + "\n").encode(),
    )

    analysis_id = compute_analysis_id(table, cfg, store)
    n_clusters = len({s.cluster_id for s in result.artifacts.cluster_signals})
    print(
        f"{table.study_id}: {len(table.rows)} PTs, {len(table.arms)} arms, "
        f"{n_clusters} clusters, {len(result.artifacts.ungrouped_terms)} ungrouped"
    )
    print(f"analysis_id: {analysis_id}")
    print(f"outputs in {out_dir}")
    return EXIT_OK


def cmd_render(args: argparse.Namespace) -> int:
    artifacts = load_artifacts(args.artifacts)
    render_svg(artifacts, args.kind, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    from .service import serve

    cfg = _resolve_config(args)
    serve(cfg)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "fetch": cmd_fetch,
        "ingest": cmd_ingest,
        "analyze": cmd_analyze,
        "render": cmd_render,
        "serve": cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except (AeskError, FileNotFoundError) as exc:
        print(f"aesk {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
