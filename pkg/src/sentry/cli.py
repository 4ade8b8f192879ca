"""Command-line entry point: analyze (static), search (NSGA-II), evaluate.

Exit codes: 0 clean, 1 findings, 2 error. Reports go to stdout; diagnostics
and --trace event streams go to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

from . import corpus as corpus_mod
from . import figures as figures_mod
from . import metrics as metrics_mod
from . import report as report_mod
from .dataflow import to_dot
from .detectors import VulnType, run_all
from .errors import SentryError
from .executor import Limits
from .ir import dump_function
from .pipeline import Analysis, analyze_file
from .search import EvalContext, SearchConfig, run as run_search

EXIT_CLEAN = 0
EXIT_FINDINGS = 1
EXIT_ERROR = 2


def _default_seed() -> int:
    env = os.environ.get("SENTRY_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            print(f"sentry: ignoring non-integer SENTRY_SEED={env!r}", file=sys.stderr)
    return 0


def _add_search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pop-size", type=int, default=50, help="population size")
    p.add_argument("--max-iters", type=int, default=200, help="maximum iterations")
    p.add_argument("--select-k", type=int, default=20, help="mating pool size")
    p.add_argument("--pc", type=float, default=0.6, help="crossover rate")
    p.add_argument("--pm", type=float, default=0.75, help="mutation rate")
    p.add_argument("--stagnation", type=int, default=40,
                   help="early-stop window in generations (0 disables)")
    p.add_argument("--seed", type=int, default=None,
                   help="search seed (default: $SENTRY_SEED or 0)")
    p.add_argument("--loop-cap", type=int, default=256,
                   help="per-loop iteration cap during simulation")
    p.add_argument("--depth-limit", type=int, default=1024,
                   help="call depth limit during simulation")
    p.add_argument("--reentry-count", type=int, default=1,
                   help="attacker re-entries simulated per invocation")


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--labels", help="label file (JSON, schema 1)")
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.add_argument("--figures", metavar="DIR",
                   help="render figures and CSV series into DIR")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sentry",
        description="MiniSol vulnerability detection: static analysis with "
                    "multi-objective input search")
    sub = parser.add_subparsers(dest="command", required=True)

    p_an = sub.add_parser("analyze", help="static analysis only")
    p_an.add_argument("path")
    _add_common_flags(p_an)
    p_an.add_argument("--dump-ir", action="store_true",
                      help="print the lowered SSA IR instead of a report")
    p_an.add_argument("--dump-deps", action="store_true",
                      help="print the dependency graphs as DOT instead of a report")
    p_an.add_argument("--dump-graphs", action="store_true",
                      help="print call graph and storage layout JSON instead of a report")

    p_se = sub.add_parser("search", help="NSGA-II optimized analysis")
    p_se.add_argument("path")
    _add_common_flags(p_se)
    _add_search_flags(p_se)
    p_se.add_argument("--trace", action="store_true",
                      help="dump the union event stream as JSON Lines to stderr")

    p_ev = sub.add_parser("evaluate", help="corpus-wide metrics")
    p_ev.add_argument("directory")
    _add_common_flags(p_ev)
    _add_search_flags(p_ev)
    p_ev.add_argument("--mode", choices=("static", "search"), default="search")
    p_ev.add_argument("--jobs", type=int, default=1,
                      help="contracts processed in parallel")
    return parser


def _search_config(args, seed: int) -> SearchConfig:
    return SearchConfig(
        pop_size=args.pop_size, max_iters=args.max_iters, select_k=args.select_k,
        crossover_rate=args.pc, mutation_rate=args.pm, seed=seed,
        stagnation_window=args.stagnation)


def _limits(args) -> Limits:
    return Limits(max_loop_iter=args.loop_cap, max_depth=args.depth_limit,
                  reentry_count=args.reentry_count)


def _labels_for(label_file, contract_path: str):
    if label_file is None:
        return []
    candidates = [contract_path, os.path.basename(contract_path)]
    labels_dir = os.path.dirname(os.path.abspath(label_file.path))
    try:
        candidates.append(os.path.relpath(os.path.abspath(contract_path), labels_dir))
    except ValueError:
        pass
    for cand in candidates:
        if cand in label_file.entries:
            return label_file.entries[cand]
    return []


def _emit(doc: dict, fmt: str, renderer, wall_time_s: float) -> None:
    if fmt == "json":
        sys.stdout.write(report_mod.to_json(doc))
    else:
        sys.stdout.write(renderer(doc, wall_time_s))


def _default_config_doc(args) -> dict:
    cfg = _search_config(args, _default_seed() if args.seed is None else args.seed)
    return report_mod.config_doc(cfg, args.loop_cap, args.depth_limit,
                                 args.reentry_count)


_STATIC_DEFAULTS = report_mod.config_doc(SearchConfig(), 256, 1024, 1)


def cmd_analyze(args) -> int:
    started = time.monotonic()
    analysis = analyze_file(args.path)
    if args.dump_ir:
        for fn_id in analysis.program.funcs:
            sys.stdout.write(dump_function(analysis.funcs[fn_id]))
    elif args.dump_deps:
        for root in sorted(analysis.union_deps):
            sys.stdout.write(to_dot(analysis.union_deps[root]))
    elif args.dump_graphs:
        sys.stdout.write(report_mod.to_json(_graphs_doc(analysis)))
    findings = run_all(analysis.artifacts, [])
    if not (args.dump_ir or args.dump_deps or args.dump_graphs):
        doc = report_mod.analysis_report(
            analysis, findings, args.path, "static", _STATIC_DEFAULTS, seed=None)
        _emit(doc, args.format, report_mod.render_report_text,
              time.monotonic() - started)
        if args.figures:
            for p in figures_mod.save_search_figures(doc, args.figures):
                print(f"sentry: wrote {p}", file=sys.stderr)
    return EXIT_FINDINGS if findings else EXIT_CLEAN


def _graphs_doc(analysis: Analysis) -> dict:
    return {
        "schema": 1,
        "call_graph": {
            "nodes": sorted(analysis.cg.nodes),
            "edges": [
                {"caller": e.caller, "callee": e.callee, "kind": e.kind}
                for e in sorted(analysis.cg.edges,
                                key=lambda e: (e.caller, e.callee, e.kind))],
        },
        "storage_layouts": {
            lc.root: [
                {"contract": s.origin_contract, "name": s.var_name, "slot": s.index}
                for s in lc.layout.slots]
            for lc in analysis.roots},
    }


def cmd_search(args) -> int:
    started = time.monotonic()
    seed = _default_seed() if args.seed is None else args.seed
    analysis = analyze_file(args.path, depth_limit=args.depth_limit)
    label_file = corpus_mod.load_labels(args.labels) if args.labels else None
    labels = _labels_for(label_file, args.path)
    cfg = _search_config(args, seed)
    ctx = EvalContext(analysis=analysis, labels=labels, limits=_limits(args))
    result = run_search(ctx, cfg)
    findings = run_all(analysis.artifacts, result.traces)
    doc = report_mod.analysis_report(
        analysis, findings, args.path, "search",
        report_mod.config_doc(cfg, args.loop_cap, args.depth_limit,
                              args.reentry_count),
        seed=seed, result=result)
    if args.trace:
        for trace in result.traces:
            sys.stderr.write(trace.to_jsonl() + "\n")
    _emit(doc, args.format, report_mod.render_report_text, time.monotonic() - started)
    if args.figures:
        for p in figures_mod.save_search_figures(doc, args.figures):
            print(f"sentry: wrote {p}", file=sys.stderr)
    return EXIT_FINDINGS if findings else EXIT_CLEAN


def _evaluate_one(directory: str, rel: str, mode: str, labels, cfg: SearchConfig,
                  limits: Limits, depth_limit: int) -> dict:
    path = os.path.join(directory, rel)
    try:
        analysis = analyze_file(path, depth_limit=depth_limit)
    except SentryError as exc:
        return {"path": rel, "findings": 0, "coverage_initial": None,
                "coverage_final": None, "error": str(exc), "finding_objs": []}
    if mode == "static":
        findings = run_all(analysis.artifacts, [])
        return {"path": rel, "findings": len(findings), "coverage_initial": 0.0,
                "coverage_final": 0.0, "error": None, "finding_objs": findings}
    ctx = EvalContext(analysis=analysis, labels=labels, limits=limits)
    result = run_search(ctx, cfg)
    findings = run_all(analysis.artifacts, result.traces)
    return {"path": rel, "findings": len(findings),
            "coverage_initial": result.initial_coverage,
            "coverage_final": result.final_coverage,
            "error": None, "finding_objs": findings}


def cmd_evaluate(args) -> int:
    started = time.monotonic()
    seed = _default_seed() if args.seed is None else args.seed
    label_file = corpus_mod.load_labels(args.labels) if args.labels else None
    index = corpus_mod.index_corpus(args.directory, label_file)
    if not index.contracts:
        print(f"sentry: no contracts found under {args.directory}", file=sys.stderr)
        return EXIT_ERROR
    cfg = _search_config(args, seed)
    limits = _limits(args)
    labels_by_path = {
        c.path: (label_file.entries.get(c.path, []) if label_file else [])
        for c in index.contracts}

    def work(rel: str) -> dict:
        return _evaluate_one(args.directory, rel, args.mode, labels_by_path[rel],
                             cfg, limits, args.depth_limit)

    rels = [c.path for c in index.contracts]
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = {rel: row for rel, row in zip(rels, pool.map(work, rels))}
    else:
        rows = {rel: work(rel) for rel in rels}

    findings_by_contract = {rel: rows[rel]["finding_objs"] for rel in rels}
    matrices = metrics_mod.confuse(findings_by_contract, labels_by_path)
    per_type = {}
    for vt in VulnType:
        scored = []
        for rel in rels:
            score = max((f.score for f in findings_by_contract[rel]
                         if f.vuln == vt), default=0.0)
            labeled = any(l.type == vt for l in labels_by_path[rel])
            scored.append((score, labeled))
        per_type[vt] = metrics_mod.metrics_row(matrices[vt], scored)

    covered = [r for r in rows.values() if r["coverage_initial"] is not None]
    coverage_summary = {
        "mean_initial": sum(r["coverage_initial"] for r in covered) / len(covered)
        if covered else 0.0,
        "mean_final": sum(r["coverage_final"] for r in covered) / len(covered)
        if covered else 0.0,
    }
    corpus_doc = {
        "contracts": len(index.contracts),
        "size_classes": index.size_tally(),
        "parse_errors": [f"{c.path}: {c.error}" for c in index.contracts if c.error],
        "dangling_labels": index.dangling_labels,
    }
    per_contract = [
        {k: rows[rel][k] for k in
         ("path", "findings", "coverage_initial", "coverage_final", "error")}
        for rel in rels]
    doc = report_mod.evaluate_report(
        args.mode, args.directory,
        report_mod.config_doc(cfg, args.loop_cap, args.depth_limit,
                              args.reentry_count),
        seed, per_type, corpus_doc, coverage_summary, per_contract)
    _emit(doc, args.format, report_mod.render_evaluate_text,
          time.monotonic() - started)
    if args.figures:
        for p in figures_mod.save_evaluate_figures(doc, args.figures):
            print(f"sentry: wrote {p}", file=sys.stderr)
    total_findings = sum(r["findings"] for r in rows.values())
    return EXIT_FINDINGS if total_findings else EXIT_CLEAN


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "analyze":
            return cmd_analyze(args)
        if args.command == "search":
            return cmd_search(args)
        return cmd_evaluate(args)
    except SentryError as exc:
        print(f"sentry: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"sentry: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
