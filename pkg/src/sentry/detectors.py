"""The four vulnerability detectors.

Each detector derives static candidates from the SSA/graph artifacts, then
upgrades a candidate to a witnessed finding when some execution trace shows
the suspicious behaviour actually happening. The rules follow the
community-standard patterns; docs/detection_rules.md records each rule and
its false-positive envelope.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

from . import ir
from .astnodes import INIT_NAME, IntType, SourceLocation
from .dataflow import DepGraph, backward_data_closure, taint_reach
from .executor import ExecTrace
from .ssa import control_dependence, dominator_sets, postdominator_sets

REENTRANCY_STATIC_SCORE = 0.6
CALLSTACK_STATIC_SCORE = 0.6
OVERFLOW_STATIC_SCORE = 0.5
TIMESTAMP_STATIC_SCORE = 0.6


class VulnType(enum.Enum):
    Reentrancy = "reentrancy"
    CallStackOverflow = "call_stack_overflow"
    IntegerOverflow = "integer_overflow"
    TimestampDependency = "timestamp_dependency"


_VULN_ORDER = {v: i for i, v in enumerate(VulnType)}


@dataclass(frozen=True)
class Finding:
    vuln: VulnType
    contract: str
    function: str
    loc: SourceLocation
    score: float
    witnessed: bool
    evidence: str

    def sort_key(self):
        return (_VULN_ORDER[self.vuln], self.contract, self.function,
                self.loc.line, self.loc.column)


@dataclass
class StaticArtifacts:
    """Everything the detectors read; built once per unit by the pipeline."""
    funcs: dict[str, ir.Func]
    deps: dict[str, DepGraph]  # per function
    union_deps: dict[str, DepGraph]  # per root contract
    root_of: dict[str, str]
    public_entry_ids: set[str]
    depth_limit: int = 1024
    cache: dict = field(default_factory=dict)


@dataclass
class _Candidate:
    vuln: VulnType
    fn_id: str
    contract: str
    function: str
    loc: SourceLocation
    static_score: float
    evidence: str
    witness: Callable[[Sequence[ExecTrace]], str | None]

    def to_finding(self, traces: Sequence[ExecTrace]) -> Finding:
        ref = self.witness(traces) if traces else None
        return Finding(
            vuln=self.vuln, contract=self.contract, function=self.function,
            loc=self.loc, score=1.0 if ref else self.static_score,
            witnessed=ref is not None,
            evidence=self.evidence + (f"; witnessed by {ref}" if ref else ""))


# ---------------------------------------------------------------------------
# shared helpers


def _event_ref(traces: Sequence[ExecTrace], index: int, ev: dict) -> str:
    return f"trace[{index}] event[{ev['id']}]"


def _loc_match(ev: dict, fn_id: str, loc: SourceLocation) -> bool:
    return ev.get("fn") == fn_id and ev.get("line") == loc.line \
        and ev.get("col") == loc.column


def _reachable_blocks(fn: ir.Func, start: int) -> set[int]:
    seen: set[int] = set()
    stack = list(fn.blocks[start].successors)
    while stack:
        b = stack.pop()
        if b in seen:
            continue
        seen.add(b)
        stack.extend(fn.blocks[b].successors)
    return seen


def _guard_slot_reads(fn: ir.Func, dep: DepGraph) -> dict[int, set[int]]:
    """Per JUMPI block: storage slots its condition depends on (through
    locals as well as direct reads)."""
    out: dict[int, set[int]] = {}
    for b in fn.blocks:
        t = b.instrs[-1]
        if not isinstance(t, ir.JumpI):
            continue
        refs = set()
        for r in ir.expr_refs(t.cond):
            if isinstance(r, ir.Local):
                refs.add(("val", fn.fn_id, r.name))
            elif isinstance(r, ir.SLoad):
                refs.add(("slot", r.slot))
        closure = backward_data_closure(dep, refs)
        out[b.id] = {n[1] for n in closure if n[0] == "slot"}
    return out


def _storage_writes(fn: ir.Func) -> list[tuple[int, int, int, SourceLocation]]:
    """(block, index, slot, loc) of every storage write."""
    writes = []
    for b in fn.blocks:
        for idx, instr in enumerate(b.instrs):
            if isinstance(instr, ir.Assign) and isinstance(instr.dest, ir.StoreTarget):
                writes.append((b.id, idx, instr.dest.slot, instr.loc))
    return writes


def _internal_call_sites(fn: ir.Func) -> list[tuple[int, int, str, SourceLocation]]:
    sites = []
    for b in fn.blocks:
        for idx, instr in enumerate(b.instrs):
            if isinstance(instr, ir.Assign) and isinstance(instr.expr, ir.IRCall):
                sites.append((b.id, idx, instr.expr.target, instr.loc))
    return sites


# ---------------------------------------------------------------------------
# reentrancy


def _reentrancy_candidates(art: StaticArtifacts) -> list[_Candidate]:
    out: list[_Candidate] = []
    for fn_id, fn in art.funcs.items():
        if fn.name == INIT_NAME:
            continue  # deployment code cannot be re-entered
        dep = art.deps[fn_id]
        dom = dominator_sets(fn)
        guard_slots = _guard_slot_reads(fn, dep)
        writes = _storage_writes(fn)
        for b in fn.blocks:
            for idx, instr in enumerate(b.instrs):
                if not isinstance(instr, ir.ExtCallInstr):
                    continue
                if instr.call_kind != "call":
                    continue  # send/transfer forward too little gas to re-enter
                if isinstance(instr.value, ir.Const) and instr.value.value == 0:
                    continue
                guarded: set[int] = set()
                for gb, slots in guard_slots.items():
                    if gb != b.id and gb in dom[b.id]:
                        guarded |= slots
                if not guarded:
                    continue
                after = _reachable_blocks(fn, b.id)
                hit = [w for w in writes
                       if w[2] in guarded
                       and (w[0] in after or (w[0] == b.id and w[1] > idx))]
                if not hit:
                    continue
                loc = instr.loc
                slots_txt = ",".join(str(s) for s in sorted({w[2] for w in hit}))

                def witness(traces, fn_id=fn_id, loc=loc,
                            slots=frozenset(w[2] for w in hit)):
                    for ti, tr in enumerate(traces):
                        call_at = None
                        for ev in tr.events:
                            if ev["kind"] == "extcall" and _loc_match(ev, fn_id, loc):
                                call_at = ev["id"]
                            elif (call_at is not None and ev["kind"] == "sstore"
                                  and ev["fn"] == fn_id and ev["slot"] in slots):
                                return _event_ref(traces, ti, ev)
                    return None

                out.append(_Candidate(
                    vuln=VulnType.Reentrancy, fn_id=fn_id, contract=fn.contract,
                    function=fn.name, loc=loc,
                    static_score=REENTRANCY_STATIC_SCORE,
                    evidence=(f"value-bearing call precedes write to guarded "
                              f"storage slot(s) {slots_txt}"),
                    witness=witness))
    return out


# ---------------------------------------------------------------------------
# call stack overflow (recursion cycles and unchecked calls)


def _callstack_candidates(art: StaticArtifacts) -> list[_Candidate]:
    out: list[_Candidate] = []
    call_edges: dict[str, set[str]] = {fn_id: set() for fn_id in art.funcs}
    for fn_id, fn in art.funcs.items():
        for _b, _i, target, _loc in _internal_call_sites(fn):
            call_edges[fn_id].add(target)

    def reaches(src: str, dst: str) -> bool:
        seen, stack = set(), [src]
        while stack:
            cur = stack.pop()
            if cur == dst:
                return True
            if cur in seen:
                continue
            seen.add(cur)
            stack.extend(call_edges.get(cur, ()))
        return False

    reachable_from_public: set[str] = set()
    stack = list(art.public_entry_ids)
    while stack:
        cur = stack.pop()
        if cur in reachable_from_public:
            continue
        reachable_from_public.add(cur)
        stack.extend(call_edges.get(cur, ()))

    for fn_id, fn in art.funcs.items():
        if fn_id not in reachable_from_public:
            continue
        cdep = control_dependence(fn)
        for block, idx, target, loc in _internal_call_sites(fn):
            if not reaches(target, fn_id):
                continue  # not part of a cycle
            if cdep[block]:
                continue  # some branch can cut the recursion off
            depth = art.depth_limit

            def witness(traces, depth=depth):
                for ti, tr in enumerate(traces):
                    if tr.depth_high_water >= depth:
                        for ev in tr.events:
                            if ev["kind"] == "revert" and ev.get("reason") == \
                                    "call depth limit":
                                return _event_ref(traces, ti, ev)
                        return _event_ref(traces, ti, tr.events[-1]) if tr.events else None
                return None

            out.append(_Candidate(
                vuln=VulnType.CallStackOverflow, fn_id=fn_id, contract=fn.contract,
                function=fn.name, loc=loc, static_score=CALLSTACK_STATIC_SCORE,
                evidence=f"unconditional recursion cycle via {target}",
                witness=witness))

    for fn_id, fn in art.funcs.items():
        writes = _storage_writes(fn)
        for b in fn.blocks:
            for idx, instr in enumerate(b.instrs):
                if not isinstance(instr, ir.ExtCallInstr) or instr.checked:
                    continue
                after = _reachable_blocks(fn, b.id)
                if not any(w[0] in after or (w[0] == b.id and w[1] > idx)
                           for w in writes):
                    continue
                loc = instr.loc

                def witness(traces, fn_id=fn_id, loc=loc):
                    for ti, tr in enumerate(traces):
                        for ev in tr.events:
                            if ev["kind"] == "extcall" and not ev["checked"] \
                                    and _loc_match(ev, fn_id, loc):
                                return _event_ref(traces, ti, ev)
                    return None

                out.append(_Candidate(
                    vuln=VulnType.CallStackOverflow, fn_id=fn_id, contract=fn.contract,
                    function=fn.name, loc=loc, static_score=CALLSTACK_STATIC_SCORE,
                    evidence=("unchecked external call result before later state "
                              "change (call-depth attack surface)"),
                    witness=witness))
    return out


# ---------------------------------------------------------------------------
# integer overflow


def _arith_sites(fn: ir.Func) -> list[tuple[int, int, ir.BinOp, SourceLocation]]:
    """Fixed-width +,-,* occurrences outside branch conditions."""
    sites = []

    def scan(block_id, idx, e, loc):
        if isinstance(e, ir.BinOp):
            if e.op in ir.ARITH_OPS and isinstance(e.ty, IntType):
                sites.append((block_id, idx, e, loc))
            scan(block_id, idx, e.left, loc)
            scan(block_id, idx, e.right, loc)
        elif isinstance(e, ir.UnOp):
            scan(block_id, idx, e.operand, loc)
        elif isinstance(e, ir.SLoad) and e.key is not None:
            scan(block_id, idx, e.key, loc)
        elif isinstance(e, ir.IRCall):
            for a in e.args:
                scan(block_id, idx, a, loc)

    for b in fn.blocks:
        for idx, instr in enumerate(b.instrs):
            if isinstance(instr, ir.Assign):
                scan(b.id, idx, instr.expr, instr.loc)
                if isinstance(instr.dest, ir.StoreTarget) and instr.dest.key is not None:
                    scan(b.id, idx, instr.dest.key, instr.loc)
            elif isinstance(instr, ir.ExtCallInstr):
                scan(b.id, idx, instr.target, instr.loc)
                scan(b.id, idx, instr.value, instr.loc)
            elif isinstance(instr, ir.Return) and instr.value is not None:
                scan(b.id, idx, instr.value, instr.loc)
            elif isinstance(instr, ir.LogEmit):
                for a in instr.args:
                    scan(b.id, idx, a, instr.loc)
            # JumpI conditions are the guards themselves: exempt
    return sites


def _relational_parts(cond: ir.IRExpr) -> list[ir.BinOp]:
    found: list[ir.BinOp] = []

    def walk(e):
        if isinstance(e, ir.BinOp):
            if e.op in ("<", "<=", ">", ">="):
                found.append(e)
            walk(e.left)
            walk(e.right)
        elif isinstance(e, ir.UnOp):
            walk(e.operand)
        elif isinstance(e, ir.SLoad) and e.key is not None:
            walk(e.key)

    walk(cond)
    return found


def _contains_expr(hay: ir.IRExpr, needle: ir.BinOp) -> bool:
    if hay == needle:
        return True
    if isinstance(hay, ir.BinOp):
        return _contains_expr(hay.left, needle) or _contains_expr(hay.right, needle)
    if isinstance(hay, ir.UnOp):
        return _contains_expr(hay.operand, needle)
    if isinstance(hay, ir.SLoad) and hay.key is not None:
        return _contains_expr(hay.key, needle)
    return False


def _overflow_candidates(art: StaticArtifacts) -> list[_Candidate]:
    out: list[_Candidate] = []
    for fn_id, fn in art.funcs.items():
        dom = dominator_sets(fn)
        pdom = postdominator_sets(fn)
        guards = []  # (block, relational comparisons, full condition)
        for b in fn.blocks:
            t = b.instrs[-1]
            if isinstance(t, ir.JumpI):
                rels = _relational_parts(t.cond)
                if rels:
                    guards.append((b.id, rels, t.cond))
        seen_locs: set[tuple[int, int]] = set()
        for block, idx, op_expr, loc in _arith_sites(fn):
            relevant: set = set()
            for r in ir.expr_refs(op_expr):
                if isinstance(r, ir.Local):
                    relevant.add(("val", r.name))
                elif isinstance(r, ir.SLoad):
                    relevant.add(("slot", r.slot))
            result = ir.instr_result(fn.blocks[block].instrs[idx])
            if isinstance(result, ir.Local):
                relevant.add(("val", result.name))
            elif isinstance(result, ir.StoreTarget):
                relevant.add(("slot", result.slot))

            def guard_covers(gb: int, rels, cond) -> bool:
                before = gb != block and gb in dom[block]
                after = gb == block or gb in pdom[block]
                if not (before or after):
                    return False
                if _contains_expr(cond, op_expr):
                    return True
                for rel in rels:
                    for r in ir.expr_refs(rel):
                        key = ("val", r.name) if isinstance(r, ir.Local) else \
                            (("slot", r.slot) if isinstance(r, ir.SLoad) else None)
                        if key in relevant:
                            return True
                return False

            if any(guard_covers(gb, rels, cond) for gb, rels, cond in guards):
                continue
            if (loc.line, loc.column) in seen_locs:
                continue
            seen_locs.add((loc.line, loc.column))

            def witness(traces, fn_id=fn_id, loc=loc):
                for ti, tr in enumerate(traces):
                    for ev in tr.events:
                        if ev["kind"] == "wrap" and _loc_match(ev, fn_id, loc):
                            return _event_ref(traces, ti, ev)
                return None

            out.append(_Candidate(
                vuln=VulnType.IntegerOverflow, fn_id=fn_id, contract=fn.contract,
                function=fn.name, loc=loc, static_score=OVERFLOW_STATIC_SCORE,
                evidence=(f"unguarded {op_expr.ty} '{op_expr.op}' may wrap "
                          f"modulo 2^{op_expr.ty.bits}"),
                witness=witness))
    return out


# ---------------------------------------------------------------------------
# timestamp dependency


def _timestamp_candidates(art: StaticArtifacts) -> list[_Candidate]:
    out: list[_Candidate] = []
    taint_by_root: dict[str, set] = {
        root: taint_reach(g, {("env", "timestamp")})
        for root, g in art.union_deps.items()}
    for fn_id, fn in art.funcs.items():
        taint = taint_by_root[art.root_of[fn_id]]
        cdep = control_dependence(fn)

        def tainted(e: ir.IRExpr) -> bool:
            for r in ir.expr_refs(e):
                if isinstance(r, ir.Local):
                    node = ("val", fn_id, r.name)
                elif isinstance(r, ir.SLoad):
                    node = ("slot", r.slot)
                else:
                    node = ("env", r.kind)
                if node in taint:
                    return True
            return False

        # (i) tainted branch deciding a value-bearing effect
        for b in fn.blocks:
            t = b.instrs[-1]
            if not isinstance(t, ir.JumpI) or not tainted(t.cond):
                continue
            controlled = []
            for ob in fn.blocks:
                if b.id not in cdep[ob.id]:
                    continue
                for instr in ob.instrs:
                    if isinstance(instr, ir.ExtCallInstr):
                        controlled.append(("extcall", instr.loc))
                    elif isinstance(instr, ir.Assign) and \
                            isinstance(instr.dest, ir.StoreTarget):
                        controlled.append(("sstore", instr.loc))
            if not controlled:
                continue

            def witness(traces, fn_id=fn_id, controlled=tuple(controlled)):
                for ti, tr in enumerate(traces):
                    for ev in tr.events:
                        for kind, loc in controlled:
                            if ev["kind"] == kind and _loc_match(ev, fn_id, loc):
                                return _event_ref(traces, ti, ev)
                return None

            out.append(_Candidate(
                vuln=VulnType.TimestampDependency, fn_id=fn_id, contract=fn.contract,
                function=fn.name, loc=t.loc, static_score=TIMESTAMP_STATIC_SCORE,
                evidence=("block.timestamp decides a branch guarding "
                          f"{len(controlled)} value-bearing effect(s)"),
                witness=witness))

        # (ii) tainted transferred value
        for b in fn.blocks:
            for instr in b.instrs:
                if not isinstance(instr, ir.ExtCallInstr) or not tainted(instr.value):
                    continue
                loc = instr.loc

                def witness(traces, fn_id=fn_id, loc=loc):
                    for ti, tr in enumerate(traces):
                        for ev in tr.events:
                            if ev["kind"] == "extcall" and _loc_match(ev, fn_id, loc):
                                return _event_ref(traces, ti, ev)
                    return None

                out.append(_Candidate(
                    vuln=VulnType.TimestampDependency, fn_id=fn_id,
                    contract=fn.contract, function=fn.name, loc=loc,
                    static_score=TIMESTAMP_STATIC_SCORE,
                    evidence="transferred value is data-dependent on block.timestamp",
                    witness=witness))
    return out


# ---------------------------------------------------------------------------
# public surface


def _candidates(art: StaticArtifacts) -> list[_Candidate]:
    if "candidates" not in art.cache:
        art.cache["candidates"] = (
            _reentrancy_candidates(art) + _callstack_candidates(art)
            + _overflow_candidates(art) + _timestamp_candidates(art))
    return art.cache["candidates"]


def _finalize(cands: list[_Candidate], traces: Sequence[ExecTrace]) -> list[Finding]:
    findings: dict[tuple, Finding] = {}
    for c in cands:
        f = c.to_finding(traces)
        key = (f.vuln, f.function, f.loc.line, f.loc.column)
        prev = findings.get(key)
        if prev is None or f.score > prev.score:
            findings[key] = f
    return sorted(findings.values(), key=Finding.sort_key)


def detect_reentrancy(art: StaticArtifacts, traces: Sequence[ExecTrace]) -> list[Finding]:
    return _finalize(_reentrancy_candidates(art), traces)


def detect_callstack_overflow(art: StaticArtifacts,
                              traces: Sequence[ExecTrace]) -> list[Finding]:
    return _finalize(_callstack_candidates(art), traces)


def detect_integer_overflow(art: StaticArtifacts,
                            traces: Sequence[ExecTrace]) -> list[Finding]:
    return _finalize(_overflow_candidates(art), traces)


def detect_timestamp_dependency(art: StaticArtifacts,
                                traces: Sequence[ExecTrace]) -> list[Finding]:
    return _finalize(_timestamp_candidates(art), traces)


def run_all(art: StaticArtifacts, traces: Sequence[ExecTrace]) -> list[Finding]:
    """All four detectors, deduplicated per (type, function, location) and
    deterministically ordered."""
    return _finalize(_candidates(art), traces)
