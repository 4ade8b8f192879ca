"""Data analysis: dependency graph, taint closure, chromosome slot discovery.

Graph nodes are tuples:
    ("val", fn_id, ssa_name)   SSA values
    ("slot", index)            storage slots (shared across functions)
    ("env", kind)              timestamp / sender / value / balance / callret
Data edges mirror instruction operand lists; control edges run from branch
condition references to definitions the branch decides.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from . import astnodes as A
from . import ir
from .lowering import LoweredContract
from .ssa import control_dependence

Node = tuple

ENV_KINDS = ("timestamp", "sender", "value", "balance", "callret")

# simulated caller identity: every external interaction is "the attacker"
ATTACKER_ADDRESS = 0xA77AC7E2A77AC7E2A77AC7E2A77AC7E2A77AC7E2


@dataclass
class DepGraph:
    nodes: set[Node] = field(default_factory=set)
    data_edges: list[tuple[Node, Node]] = field(default_factory=list)
    control_edges: list[tuple[Node, Node]] = field(default_factory=list)

    def _forward(self) -> dict[Node, list[Node]]:
        adj: dict[Node, list[Node]] = {}
        for a, b in self.data_edges + self.control_edges:
            adj.setdefault(a, []).append(b)
        return adj

    def _backward_data(self) -> dict[Node, list[Node]]:
        adj: dict[Node, list[Node]] = {}
        for a, b in self.data_edges:
            adj.setdefault(b, []).append(a)
        return adj

    def merge(self, other: "DepGraph") -> "DepGraph":
        self.nodes |= other.nodes
        self.data_edges.extend(other.data_edges)
        self.control_edges.extend(other.control_edges)
        return self


def _ref_node(fn_id: str, ref) -> Node:
    if isinstance(ref, ir.Local):
        return ("val", fn_id, ref.name)
    if isinstance(ref, ir.SLoad):
        return ("slot", ref.slot)
    if isinstance(ref, ir.EnvRead):
        return ("env", ref.kind)
    raise TypeError(f"not a reference: {ref!r}")


def _result_node(fn_id: str, res) -> Node | None:
    if res is None:
        return None
    if isinstance(res, ir.Local):
        return ("val", fn_id, res.name)
    if isinstance(res, ir.StoreTarget):
        return ("slot", res.slot)
    raise TypeError(f"not a result: {res!r}")


def build_dep_graph(fn: ir.Func, layout) -> DepGraph:
    """Dependency graph of one SSA function over shared slot/env nodes."""
    g = DepGraph()
    for kind in ENV_KINDS:
        g.nodes.add(("env", kind))
    for slot in layout.slots:
        g.nodes.add(("slot", slot.index))

    for b in fn.blocks:
        for instr in b.instrs:
            res = _result_node(fn.fn_id, ir.instr_result(instr))
            if res is not None:
                g.nodes.add(res)
            for ref in ir.instr_operands(instr):
                node = _ref_node(fn.fn_id, ref)
                g.nodes.add(node)
                if res is not None:
                    g.data_edges.append((node, res))
            if isinstance(instr, ir.ExtCallInstr) and instr.dest is not None:
                # the callee is unknown code: its answer is attacker-chosen
                g.data_edges.append((("env", "callret"), res))

    cdep = control_dependence(fn)
    cond_refs: dict[int, list[Node]] = {}
    for b in fn.blocks:
        t = b.instrs[-1]
        if isinstance(t, ir.JumpI):
            cond_refs[b.id] = [_ref_node(fn.fn_id, r) for r in ir.expr_refs(t.cond)]
    for b in fn.blocks:
        for branch in cdep[b.id]:
            refs = cond_refs.get(branch, [])
            for instr in b.instrs:
                res = _result_node(fn.fn_id, ir.instr_result(instr))
                if res is None:
                    continue
                for node in refs:
                    g.control_edges.append((node, res))
    return g


def union_dep_graph(lowered: LoweredContract, graphs: dict[str, DepGraph]) -> DepGraph:
    merged = DepGraph()
    for fn_id in lowered.funcs:
        merged.merge(graphs[fn_id])
    return merged


def taint_reach(g: DepGraph, sources: set[Node]) -> set[Node]:
    """Forward closure of `sources` over data and control edges."""
    adj = g._forward()
    seen = set(s for s in sources if s in g.nodes)
    queue = deque(seen)
    while queue:
        n = queue.popleft()
        for m in adj.get(n, ()):
            if m not in seen:
                seen.add(m)
                queue.append(m)
    return seen


def backward_data_closure(g: DepGraph, targets: set[Node]) -> set[Node]:
    """Everything that can flow into `targets` along data edges."""
    adj = g._backward_data()
    seen = set(targets)
    queue = deque(seen)
    while queue:
        n = queue.popleft()
        for m in adj.get(n, ()):
            if m not in seen:
                seen.add(m)
                queue.append(m)
    return seen


# ---------------------------------------------------------------------------
# Chromosome slots


@dataclass(frozen=True)
class InputSlot:
    index: int
    # ("param", fn_id, name) | ("storage", slot) | ("mapping", slot, key)
    # | ("mapping_attacker", slot) | ("msg_value", fn_id) | ("timestamp",)
    origin: tuple
    ty: A.TypeName
    bounds: tuple[int, int]


TIMESTAMP_BOUNDS = (0, (1 << 32) - 1)
MSG_VALUE_BOUNDS = (0, (1 << 64) - 1)


def _constant_keys(lowered: LoweredContract, slot_index: int) -> list[int]:
    keys: set[int] = set()

    def scan(e):
        if isinstance(e, ir.SLoad):
            if e.slot == slot_index and isinstance(e.key, ir.Const):
                keys.add(e.key.value)
            if e.key is not None:
                scan(e.key)
        elif isinstance(e, ir.BinOp):
            scan(e.left)
            scan(e.right)
        elif isinstance(e, ir.UnOp):
            scan(e.operand)
        elif isinstance(e, ir.IRCall):
            for a in e.args:
                scan(a)

    for fn in lowered.funcs.values():
        for b in fn.blocks:
            for instr in b.instrs:
                if isinstance(instr, ir.Assign):
                    scan(instr.expr)
                    if isinstance(instr.dest, ir.StoreTarget):
                        if instr.dest.slot == slot_index and isinstance(instr.dest.key, ir.Const):
                            keys.add(instr.dest.key.value)
                        if instr.dest.key is not None:
                            scan(instr.dest.key)
                elif isinstance(instr, ir.ExtCallInstr):
                    scan(instr.target)
                    scan(instr.value)
                elif isinstance(instr, ir.LogEmit):
                    for a in instr.args:
                        scan(a)
                elif isinstance(instr, ir.JumpI):
                    scan(instr.cond)
                elif isinstance(instr, ir.Return) and instr.value is not None:
                    scan(instr.value)
    return sorted(keys)


def collect_input_slots(lowered: LoweredContract) -> list[InputSlot]:
    """Declared inputs: constructor then public/external parameters in
    linearized declaration order, then writable storage (scalars one gene,
    mappings one gene per constant key plus one attacker-key gene)."""
    slots: list[InputSlot] = []

    def add(origin: tuple, ty: A.TypeName, bounds=None):
        slots.append(InputSlot(
            index=len(slots), origin=origin, ty=ty,
            bounds=bounds or A.type_bounds(ty)))

    fn_order: list[str] = []
    if lowered.entry_ctor is not None:
        fn_order.append(lowered.entry_ctor)
    fn_order.extend(lowered.public_order)
    for fn_id in fn_order:
        fn = lowered.funcs[fn_id]
        for name, ty in fn.params:
            add(("param", fn_id, name), ty)

    for slot in lowered.layout.slots:
        if isinstance(slot.ty, A.MappingType):
            for key in _constant_keys(lowered, slot.index):
                add(("mapping", lowered.root, slot.index, key), slot.ty.value)
            add(("mapping_attacker", lowered.root, slot.index), slot.ty.value)
        else:
            add(("storage", lowered.root, slot.index), slot.ty)
    return slots


def chromosome_slots(lowered: LoweredContract, slots: list[InputSlot]) -> list[InputSlot]:
    """Declared slots plus the implicit genes the simulator needs: one
    msg.value per payable entry point, then the block timestamp."""
    out = list(slots)
    fn_order: list[str] = []
    if lowered.entry_ctor is not None:
        fn_order.append(lowered.entry_ctor)
    fn_order.extend(lowered.public_order)
    for fn_id in fn_order:
        if lowered.funcs[fn_id].is_payable:
            out.append(InputSlot(
                index=len(out), origin=("msg_value", fn_id),
                ty=A.UINT256, bounds=MSG_VALUE_BOUNDS))
    out.append(InputSlot(
        index=len(out), origin=("timestamp",), ty=A.UINT256, bounds=TIMESTAMP_BOUNDS))
    return out


# ---------------------------------------------------------------------------
# Special values


def _origin_node(slot: InputSlot) -> Node | None:
    kind = slot.origin[0]
    if kind == "param":
        _, fn_id, name = slot.origin
        return ("val", fn_id, f"{name}.1")
    if kind in ("storage", "mapping", "mapping_attacker"):
        return ("slot", slot.origin[2])
    if kind == "msg_value":
        return ("env", "value")
    if kind == "timestamp":
        return ("env", "timestamp")
    return None


def collect_special_values(
    lowered: LoweredContract, slots: list[InputSlot],
    graphs: dict[str, DepGraph],
) -> dict[int, list[int]]:
    """Per-slot seed values: type extremes plus every comparison literal whose
    comparand depends on the slot, all clamped into bounds."""
    union = union_dep_graph(lowered, graphs)

    comparisons: list[tuple[str, ir.BinOp]] = []

    def find_cmps(fn_id: str, e):
        if isinstance(e, ir.BinOp):
            if e.op in ir.CMP_OPS:
                comparisons.append((fn_id, e))
            find_cmps(fn_id, e.left)
            find_cmps(fn_id, e.right)
        elif isinstance(e, ir.UnOp):
            find_cmps(fn_id, e.operand)
        elif isinstance(e, ir.SLoad) and e.key is not None:
            find_cmps(fn_id, e.key)
        elif isinstance(e, ir.IRCall):
            for a in e.args:
                find_cmps(fn_id, a)

    for fn in lowered.funcs.values():
        for b in fn.blocks:
            for instr in b.instrs:
                if isinstance(instr, ir.Assign):
                    find_cmps(fn.fn_id, instr.expr)
                    if isinstance(instr.dest, ir.StoreTarget) and instr.dest.key is not None:
                        find_cmps(fn.fn_id, instr.dest.key)
                elif isinstance(instr, ir.ExtCallInstr):
                    find_cmps(fn.fn_id, instr.target)
                    find_cmps(fn.fn_id, instr.value)
                elif isinstance(instr, ir.JumpI):
                    find_cmps(fn.fn_id, instr.cond)
                elif isinstance(instr, ir.Return) and instr.value is not None:
                    find_cmps(fn.fn_id, instr.value)
                elif isinstance(instr, ir.LogEmit):
                    for a in instr.args:
                        find_cmps(fn.fn_id, a)

    specials: dict[int, list[int]] = {}
    for slot in slots:
        lo, hi = slot.bounds
        values = {lo, hi, hi - 1, 0, 1}
        origin = _origin_node(slot)
        if origin is not None:
            deps_cache: dict[int, set[Node]] = {}
            for idx, (fn_id, cmp_) in enumerate(comparisons):
                lits = [c.value for c in _const_leaves(cmp_)]
                if not lits:
                    continue
                refs = {_ref_node(fn_id, r) for r in ir.expr_refs(cmp_)}
                if idx not in deps_cache:
                    deps_cache[idx] = backward_data_closure(union, refs)
                if origin in deps_cache[idx]:
                    values.update(lits)
        specials[slot.index] = sorted(v for v in values if lo <= v <= hi)
    return specials


def _const_leaves(e: ir.IRExpr) -> list[ir.Const]:
    out: list[ir.Const] = []

    def walk(x):
        if isinstance(x, ir.Const):
            out.append(x)
        elif isinstance(x, ir.BinOp):
            walk(x.left)
            walk(x.right)
        elif isinstance(x, ir.UnOp):
            walk(x.operand)
        elif isinstance(x, ir.SLoad) and x.key is not None:
            walk(x.key)

    walk(e)
    return out


# ---------------------------------------------------------------------------
# DOT rendering for inspection


def to_dot(g: DepGraph) -> str:
    def name(n: Node) -> str:
        return "_".join(str(p).replace(".", "_").replace("<", "").replace(">", "")
                        for p in n)

    lines = ["digraph deps {"]
    for n in sorted(g.nodes):
        lines.append(f'  {name(n)} [label="{"/".join(str(p) for p in n)}"];')
    for a, b in sorted(set(g.data_edges)):
        lines.append(f"  {name(a)} -> {name(b)};")
    for a, b in sorted(set(g.control_edges)):
        lines.append(f"  {name(a)} -> {name(b)} [style=dashed];")
    lines.append("}")
    return "\n".join(lines) + "\n"
