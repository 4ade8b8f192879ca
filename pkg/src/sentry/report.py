"""Report assembly and rendering (canonical JSON plus aligned text).

The JSON form is the machine contract: fixed field order, gene values as
decimal strings (they exceed 2^53), and no volatile fields, so identical
inputs and seed reproduce byte-identical documents. Wall time is shown in
the text rendering only.
"""

from __future__ import annotations

import json
from typing import Any

from . import __version__
from .detectors import Finding, VulnType
from .metrics import METRIC_NAMES
from .pipeline import Analysis
from .search import SearchConfig, SearchResult


def _tool() -> dict:
    return {"name": "sentry", "version": __version__}


def config_doc(cfg: SearchConfig, loop_cap: int, depth_limit: int,
               reentry_count: int) -> dict:
    return {
        "pop_size": cfg.pop_size,
        "max_iters": cfg.max_iters,
        "select_k": cfg.select_k,
        "crossover_rate": cfg.crossover_rate,
        "mutation_rate": cfg.mutation_rate,
        "stagnation_window": cfg.stagnation_window,
        "loop_cap": loop_cap,
        "depth_limit": depth_limit,
        "reentry_count": reentry_count,
    }


def finding_doc(f: Finding) -> dict:
    return {
        "type": f.vuln.value,
        "contract": f.contract,
        "function": f.function,
        "line": f.loc.line,
        "column": f.loc.column,
        "score": f.score,
        "witnessed": f.witnessed,
        "evidence": f.evidence,
    }


def analysis_report(
    analysis: Analysis, findings: list[Finding], path: str, mode: str,
    config: dict, seed: int | None = None,
    result: SearchResult | None = None,
) -> dict:
    doc: dict[str, Any] = {
        "schema": 1,
        "tool": _tool(),
        "path": path,
        "mode": mode,
        "seed": seed,
        "config": config,
        "contracts": [lc.root for lc in analysis.roots],
        "census": {
            "regular": analysis.census.regular,
            "jumps": list(analysis.census.jumps),
            "total": analysis.census.total,
        },
        "findings": [finding_doc(f) for f in findings],
    }
    if result is not None:
        doc["generations"] = result.generations
        doc["coverage"] = {
            "initial_avg": result.history["avg_coverage"][0],
            "initial_best": result.history["best_coverage"][0],
            "final_avg": result.history["avg_coverage"][-1],
            "final_best": result.history["best_coverage"][-1],
        }
        doc["accuracy"] = {
            "initial_avg": result.history["avg_accuracy"][0],
            "initial_best": result.history["best_accuracy"][0],
            "final_avg": result.history["avg_accuracy"][-1],
            "final_best": result.history["best_accuracy"][-1],
        }
        doc["history"] = {k: list(v) for k, v in sorted(result.history.items())}
        doc["pareto_front"] = [
            {"genes": [str(g) for g in ind.genes],
             "accuracy": ind.f1, "coverage": ind.f2}
            for ind in result.front]
    return doc


def evaluate_report(
    mode: str, directory: str, config: dict, seed: int | None,
    per_type: dict[VulnType, dict], corpus_doc: dict,
    coverage_summary: dict, per_contract: list[dict],
) -> dict:
    return {
        "schema": 1,
        "tool": _tool(),
        "mode": mode,
        "directory": directory,
        "seed": seed,
        "config": config,
        "corpus": corpus_doc,
        "per_type": {vt.value: row for vt, row in per_type.items()},
        "coverage": coverage_summary,
        "per_contract": per_contract,
    }


def to_json(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


# ---------------------------------------------------------------------------
# text rendering


def _findings_table(findings: list[dict]) -> list[str]:
    if not findings:
        return ["findings: none"]
    head = f"{'type':<22} {'contract':<12} {'function':<16} {'line':>4} " \
           f"{'score':>5}  {'wit':<3}  evidence"
    lines = ["findings:", "  " + head, "  " + "-" * len(head)]
    for f in findings:
        lines.append(
            f"  {f['type']:<22} {f['contract']:<12} {f['function']:<16} "
            f"{f['line']:>4} {f['score']:>5.2f}  {'yes' if f['witnessed'] else 'no':<3}"
            f"  {f['evidence']}")
    return lines


def render_report_text(doc: dict, wall_time_s: float | None = None) -> str:
    lines = [
        f"sentry {doc['tool']['version']} :: {doc['mode']} :: {doc['path']}",
        f"contracts: {', '.join(doc['contracts'])}",
        f"census: {doc['census']['total']} statements "
        f"({doc['census']['regular']} regular, {sum(doc['census']['jumps'])} jumps)",
    ]
    if doc.get("seed") is not None:
        lines.append(f"seed: {doc['seed']}")
    lines.extend(_findings_table(doc["findings"]))
    if "coverage" in doc:
        cov, acc = doc["coverage"], doc["accuracy"]
        lines.append(
            f"coverage: initial avg {cov['initial_avg']:.4f} / best "
            f"{cov['initial_best']:.4f} -> final best {cov['final_best']:.4f}")
        lines.append(
            f"accuracy: initial avg {acc['initial_avg']:.4f} / best "
            f"{acc['initial_best']:.4f} -> final best {acc['final_best']:.4f}")
        lines.append(f"generations: {doc['generations']}")
        lines.append(f"pareto front: {len(doc['pareto_front'])} individual(s)")
    if wall_time_s is not None:
        lines.append(f"wall time: {wall_time_s:.2f}s")
    return "\n".join(lines) + "\n"


def render_evaluate_text(doc: dict, wall_time_s: float | None = None) -> str:
    lines = [
        f"sentry {doc['tool']['version']} :: evaluate ({doc['mode']}) :: "
        f"{doc['directory']}",
        f"contracts: {doc['corpus']['contracts']} "
        f"(simple {doc['corpus']['size_classes']['simple']}, "
        f"ordinary {doc['corpus']['size_classes']['ordinary']}, "
        f"complex {doc['corpus']['size_classes']['complex']})",
    ]
    cols = list(METRIC_NAMES) + ["auc"]
    head = f"{'vulnerability':<22}" + "".join(f"{c:>10}" for c in cols)
    lines += ["", head, "-" * len(head)]
    for vt, row in doc["per_type"].items():
        lines.append(f"{vt:<22}" + "".join(f"{row[c]:>10.4f}" for c in cols))
    lines.append("")
    for vt, row in doc["per_type"].items():
        cmx = row["confusion"]
        lines.append(
            f"{vt:<22} tp={cmx['tp']:<3} fp={cmx['fp']:<3} "
            f"fn={cmx['fn']:<3} tn={cmx['tn']}")
    cov = doc["coverage"]
    lines.append("")
    lines.append(
        f"coverage: mean initial {cov['mean_initial']:.4f} -> "
        f"mean final {cov['mean_final']:.4f}")
    if wall_time_s is not None:
        lines.append(f"wall time: {wall_time_s:.2f}s")
    return "\n".join(lines) + "\n"
