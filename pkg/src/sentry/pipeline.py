"""End-to-end static stage: parse, model, lower, SSA, graphs, slots, program."""

from __future__ import annotations

from dataclasses import dataclass, field

from . import astnodes as A
from .dataflow import (
    DepGraph, InputSlot, build_dep_graph, collect_input_slots,
    collect_special_values, union_dep_graph,
)
from .detectors import StaticArtifacts
from .executor import Program, build_program
from .ir import Census, EMPTY_CENSUS, Func, statement_census
from .lowering import LoweredContract, lower_to_cfg
from .parser import parse
from .program_model import CallGraph, InheritanceGraph, build_call_graph, build_inheritance, root_contracts
from .ssa import to_ssa


@dataclass
class Analysis:
    unit: A.SourceUnit
    ig: InheritanceGraph
    cg: CallGraph
    roots: list[LoweredContract]
    program: Program
    declared_slots: dict[str, list[InputSlot]]  # per root, spec-local indices
    specials: dict[int, list[int]]  # program slot index -> seed values
    deps: dict[str, DepGraph]
    union_deps: dict[str, DepGraph]
    artifacts: StaticArtifacts
    census: Census = EMPTY_CENSUS

    @property
    def funcs(self) -> dict[str, Func]:
        return {fn_id: inst.fn for fn_id, inst in self.program.funcs.items()}


def analyze_source(text: str, path: str = "<memory>", depth_limit: int = 1024) -> Analysis:
    unit = parse(text, path)
    ig = build_inheritance(unit)
    cg = build_call_graph(unit, ig)

    roots: list[LoweredContract] = []
    deps: dict[str, DepGraph] = {}
    union_deps: dict[str, DepGraph] = {}
    declared: dict[str, list[InputSlot]] = {}
    for contract in root_contracts(unit):
        lc = lower_to_cfg(unit, ig, contract)
        for fn in lc.funcs.values():
            to_ssa(fn)
        for fn_id, fn in lc.funcs.items():
            deps[fn_id] = build_dep_graph(fn, lc.layout)
        union_deps[lc.root] = union_dep_graph(lc, deps)
        declared[lc.root] = collect_input_slots(lc)
        roots.append(lc)

    program = build_program(roots, declared)

    specials: dict[int, list[int]] = {}
    for lc in roots:
        own = [s for s in program.slots
               if _slot_root(s, program) in (lc.root, None)]
        part = collect_special_values(lc, own, deps)
        for idx, values in part.items():
            if idx in specials:
                specials[idx] = sorted(set(specials[idx]) | set(values))
            else:
                specials[idx] = values

    art = StaticArtifacts(
        funcs={fn_id: inst.fn for fn_id, inst in program.funcs.items()},
        deps=deps, union_deps=union_deps, root_of=program.root_of,
        public_entry_ids={
            fn_id for lc in roots
            for fn_id in ([lc.entry_ctor] if lc.entry_ctor else []) + lc.public_order},
        depth_limit=depth_limit)

    return Analysis(
        unit=unit, ig=ig, cg=cg, roots=roots, program=program,
        declared_slots=declared, specials=specials, deps=deps,
        union_deps=union_deps, artifacts=art, census=program.census)


def _slot_root(slot: InputSlot, program: Program) -> str | None:
    kind = slot.origin[0]
    if kind == "param" or kind == "msg_value":
        return program.root_of[slot.origin[1]]
    if kind in ("storage", "mapping", "mapping_attacker"):
        return slot.origin[1]
    return None  # timestamp: shared


def analyze_file(path: str, depth_limit: int = 1024) -> Analysis:
    with open(path, encoding="utf-8") as fh:
        return analyze_source(fh.read(), path, depth_limit)
