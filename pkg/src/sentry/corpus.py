"""Contract/label ingestion and the bundled labeled mini-corpus.

Label files are JSON (schema 1):

    {"schema": 1,
     "entries": [{"path": "vault.minisol",
                  "vulnerabilities": [{"type": "reentrancy",
                                       "function": "withdraw",
                                       "line": 9}]}]}

`function` and `line` are optional. An entry with an empty vulnerability
list marks a contract as a known negative, which the confusion matrices
rely on.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from importlib import resources

from .detectors import VulnType
from .errors import LabelParseError, SentryError, UnknownVulnType
from .parser import SizeClass, classify_size, parse

log = logging.getLogger(__name__)

_VULN_BY_NAME = {v.value: v for v in VulnType}


@dataclass(frozen=True)
class Label:
    type: VulnType
    function: str | None = None
    line: int | None = None


@dataclass
class LabelFile:
    path: str
    entries: dict[str, list[Label]]  # contract path -> labels (possibly empty)


@dataclass
class IndexedContract:
    path: str
    size_class: SizeClass | None
    line_count: int
    label_counts: dict[VulnType, int]
    error: str | None = None


@dataclass
class CorpusIndex:
    contracts: list[IndexedContract]
    dangling_labels: list[str] = field(default_factory=list)

    def size_tally(self) -> dict[str, int]:
        tally = {sc.value: 0 for sc in SizeClass}
        for c in self.contracts:
            if c.size_class is not None:
                tally[c.size_class.value] += 1
        return tally


def parse_vuln_type(name: str, where: str = "") -> VulnType:
    if name not in _VULN_BY_NAME:
        raise UnknownVulnType(name, where)
    return _VULN_BY_NAME[name]


def load_labels(path: str) -> LabelFile:
    """Parse and validate a label file; duplicate (path, type, function)
    entries collapse with a warning."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise LabelParseError(str(exc), path)
    except json.JSONDecodeError as exc:
        raise LabelParseError(f"invalid JSON: {exc}", path)
    return parse_labels(doc, path)


def parse_labels(doc, where: str) -> LabelFile:
    if not isinstance(doc, dict) or doc.get("schema") != 1:
        raise LabelParseError("expected an object with \"schema\": 1", where)
    raw_entries = doc.get("entries")
    if not isinstance(raw_entries, list):
        raise LabelParseError("\"entries\" must be a list", where)
    entries: dict[str, list[Label]] = {}
    for i, entry in enumerate(raw_entries):
        ctx = f"{where}#entries[{i}]"
        if not isinstance(entry, dict) or "path" not in entry:
            raise LabelParseError("entry needs a \"path\"", ctx)
        cpath = entry["path"]
        vulns = entry.get("vulnerabilities", [])
        if not isinstance(vulns, list):
            raise LabelParseError("\"vulnerabilities\" must be a list", ctx)
        labels = entries.setdefault(cpath, [])
        for v in vulns:
            if not isinstance(v, dict) or "type" not in v:
                raise LabelParseError("vulnerability needs a \"type\"", ctx)
            label = Label(
                type=parse_vuln_type(v["type"], ctx),
                function=v.get("function"),
                line=v.get("line"))
            if any(l.type == label.type and l.function == label.function
                   for l in labels):
                log.warning("%s: duplicate label %s/%s collapsed",
                            ctx, cpath, v["type"])
                continue
            labels.append(label)
    return LabelFile(path=where, entries=entries)


def index_corpus(directory: str, labels: LabelFile | None = None) -> CorpusIndex:
    """Deterministic, path-sorted index with size classes and label tallies;
    unparseable contracts are listed with their error instead of aborting."""
    paths: list[str] = []
    for base, _dirs, files in os.walk(directory):
        for name in files:
            if name.endswith((".minisol", ".sol")):
                paths.append(os.path.relpath(os.path.join(base, name), directory))
    paths.sort()

    label_entries = labels.entries if labels else {}
    contracts: list[IndexedContract] = []
    for rel in paths:
        counts = {v: 0 for v in VulnType}
        for label in label_entries.get(rel, []):
            counts[label.type] += 1
        full = os.path.join(directory, rel)
        try:
            with open(full, encoding="utf-8") as fh:
                unit = parse(fh.read(), full)
            contracts.append(IndexedContract(
                path=rel, size_class=classify_size(unit),
                line_count=unit.line_count, label_counts=counts))
        except SentryError as exc:
            contracts.append(IndexedContract(
                path=rel, size_class=None, line_count=0,
                label_counts=counts, error=str(exc)))
    dangling = sorted(p for p in label_entries if p not in set(paths))
    return CorpusIndex(contracts=contracts, dangling_labels=dangling)


def bundled_corpus_dir() -> str:
    """Filesystem path of the shipped mini-corpus."""
    return str(resources.files("sentry").joinpath("corpus_data"))


def bundled_labels_path() -> str:
    return os.path.join(bundled_corpus_dir(), "labels.json")
