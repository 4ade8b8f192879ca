"""Internal structure analysis: inheritance linearization, call graph, storage order."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from . import astnodes as A
from .errors import InheritanceCycle, UnresolvedBase

log = logging.getLogger(__name__)

EXTERNAL_SINK = "<external>"


@dataclass
class InheritanceGraph:
    # derived name -> declared bases, left to right
    edges: dict[str, tuple[str, ...]]
    # contract name -> ancestors base-most first, ending with the contract itself
    linearization: dict[str, tuple[str, ...]]

    def ancestors(self, name: str) -> tuple[str, ...]:
        return self.linearization[name]


@dataclass(frozen=True)
class CallEdge:
    caller: str  # fully qualified "Contract.function"
    callee: str  # fully qualified, or EXTERNAL_SINK
    kind: str  # "internal" or "external"


@dataclass
class CallGraph:
    nodes: set[str]
    edges: list[CallEdge] = field(default_factory=list)


@dataclass(frozen=True)
class Slot:
    origin_contract: str
    var_name: str
    index: int
    ty: A.TypeName


@dataclass
class StorageLayout:
    contract: str
    slots: tuple[Slot, ...]

    def slot_of(self, var_name: str) -> Slot | None:
        for s in self.slots:
            if s.var_name == var_name:
                return s
        return None


def build_inheritance(unit: A.SourceUnit) -> InheritanceGraph:
    """C3-linearize every contract; fails on unknown bases and cycles."""
    by_name = {c.name: c for c in unit.contracts}
    edges: dict[str, tuple[str, ...]] = {}
    for c in unit.contracts:
        for b in c.bases:
            if b not in by_name:
                raise UnresolvedBase(c.name, b)
        edges[c.name] = c.bases

    lin: dict[str, tuple[str, ...]] = {}
    visiting: list[str] = []

    def linearize(name: str) -> tuple[str, ...]:
        if name in lin:
            return lin[name]
        if name in visiting:
            raise InheritanceCycle(visiting[visiting.index(name):])
        visiting.append(name)
        bases = edges[name]
        # C3 merge over base linearizations plus the declared base list.
        # Solidity writes bases most-base-first, which is what MiniSol keeps.
        sequences = [list(linearize(b)) for b in bases] + [list(bases)]
        merged: list[str] = []
        sequences = [s for s in sequences if s]
        while sequences:
            head = None
            for seq in sequences:
                cand = seq[0]
                if not any(cand in s[1:] for s in sequences):
                    head = cand
                    break
            if head is None:
                raise InheritanceCycle(visiting[:])
            merged.append(head)
            sequences = [[x for x in s if x != head] for s in sequences]
            sequences = [s for s in sequences if s]
        visiting.pop()
        lin[name] = tuple(merged) + (name,)
        return lin[name]

    for c in unit.contracts:
        linearize(c.name)
    return InheritanceGraph(edges=edges, linearization=lin)


def resolve_function(
    unit: A.SourceUnit, ig: InheritanceGraph, contract: str, fn_name: str
) -> tuple[str, A.FunctionDef] | None:
    """Find the most-derived override of fn_name seen from `contract`."""
    by_name = {c.name: c for c in unit.contracts}
    for owner in reversed(ig.linearization[contract]):
        for fn in by_name[owner].functions:
            if fn.name == fn_name:
                return owner, fn
    return None


def flattened_functions(
    unit: A.SourceUnit, ig: InheritanceGraph, contract: str
) -> list[tuple[str, A.FunctionDef]]:
    """All functions visible on `contract`, base-most first, overrides applied.

    Each entry is (defining contract, FunctionDef); a name keeps the slot of
    its first (base-most) declaration but binds the most-derived body.
    Constructors are excluded; they chain explicitly.
    """
    by_name = {c.name: c for c in unit.contracts}
    order: list[str] = []
    for owner in ig.linearization[contract]:
        for fn in by_name[owner].functions:
            if fn.is_constructor:
                continue
            if fn.name not in order:
                order.append(fn.name)
    out = []
    for name in order:
        resolved = resolve_function(unit, ig, contract, name)
        assert resolved is not None
        out.append(resolved)
    return out


def _call_names(expr_or_stmt) -> list[A.CallE | A.ExtCall]:
    """Collect internal-call and external-call expressions in AST order."""
    found: list[A.CallE | A.ExtCall] = []

    def walk(node):
        if isinstance(node, A.CallE):
            found.append(node)
            for a in node.args:
                walk(a)
        elif isinstance(node, A.ExtCall):
            found.append(node)
            walk(node.target)
            walk(node.value)
        elif isinstance(node, A.Bin):
            walk(node.left)
            walk(node.right)
        elif isinstance(node, A.Un):
            walk(node.operand)
        elif isinstance(node, A.IndexE):
            walk(node.key)

    def walk_stmt(s: A.Stmt):
        if isinstance(s, A.VarDeclStmt) and s.init is not None:
            walk(s.init)
        elif isinstance(s, A.AssignStmt):
            walk(s.target if isinstance(s.target, A.IndexE) else A.Lit(0, "int", s.loc))
            walk(s.value)
        elif isinstance(s, A.IfStmt):
            walk(s.cond)
            for sub in s.then.statements:
                walk_stmt(sub)
            if s.els:
                for sub in s.els.statements:
                    walk_stmt(sub)
        elif isinstance(s, A.WhileStmt):
            walk(s.cond)
            for sub in s.body.statements:
                walk_stmt(sub)
        elif isinstance(s, A.ForStmt):
            if s.init:
                walk_stmt(s.init)
            if s.cond:
                walk(s.cond)
            if s.step:
                walk_stmt(s.step)
            for sub in s.body.statements:
                walk_stmt(sub)
        elif isinstance(s, (A.RequireStmt, A.AssertStmt)):
            walk(s.cond)
        elif isinstance(s, A.ReturnStmt) and s.value is not None:
            walk(s.value)
        elif isinstance(s, A.EmitStmt):
            for a in s.args:
                walk(a)
        elif isinstance(s, A.ExprStmt):
            walk(s.expr)

    walk_stmt(expr_or_stmt)
    return found


def build_call_graph(unit: A.SourceUnit, ig: InheritanceGraph) -> CallGraph:
    """Caller/callee edges; internal calls resolve through each contract's
    linearization, external value transfers point at the shared sink node."""
    nodes: set[str] = {EXTERNAL_SINK}
    by_name = {c.name: c for c in unit.contracts}
    for c in unit.contracts:
        for fn in c.functions:
            nodes.add(f"{c.name}.{fn.name}")

    edges: list[CallEdge] = []
    seen: set[tuple[str, str, str]] = set()

    def add(caller: str, callee: str, kind: str):
        key = (caller, callee, kind)
        if key not in seen:
            seen.add(key)
            edges.append(CallEdge(caller, callee, kind))

    for contract in unit.contracts:
        for owner in ig.linearization[contract.name]:
            for fn in by_name[owner].functions:
                caller = f"{owner}.{fn.name}"
                for s in fn.body.statements:
                    for call in _call_names(s):
                        if isinstance(call, A.ExtCall):
                            add(caller, EXTERNAL_SINK, "external")
                            continue
                        resolved = resolve_function(unit, ig, contract.name, call.name)
                        if resolved is None:
                            log.warning(
                                "unresolved call %s from %s; treating as external",
                                call.name, caller)
                            add(caller, EXTERNAL_SINK, "external")
                        else:
                            r_owner, r_fn = resolved
                            add(caller, f"{r_owner}.{r_fn.name}", "internal")
                if fn.is_constructor:
                    for base, _args in fn.base_invocations:
                        if any(f.is_constructor for f in by_name[base].functions):
                            add(caller, f"{base}.{A.INIT_NAME}", "internal")
    return CallGraph(nodes=nodes, edges=edges)


def storage_layout(
    contract: A.ContractDef, ig: InheritanceGraph, unit: A.SourceUnit
) -> StorageLayout:
    """One slot per declared variable, base-most contract first, declaration
    order inside each contract. Mappings occupy a single index; values are
    key-addressed at run time."""
    by_name = {c.name: c for c in unit.contracts}
    slots: list[Slot] = []
    for owner in ig.linearization[contract.name]:
        for v in by_name[owner].state_vars:
            slots.append(Slot(owner, v.name, len(slots), v.ty))
    return StorageLayout(contract=contract.name, slots=tuple(slots))


def root_contracts(unit: A.SourceUnit) -> list[A.ContractDef]:
    """Contracts that no other contract in the unit derives from.

    These are the analysis and execution targets; base contracts are covered
    through flattening into their roots.
    """
    used_as_base = {b for c in unit.contracts for b in c.bases}
    return [c for c in unit.contracts if c.name not in used_as_base]
