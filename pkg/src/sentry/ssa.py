"""SSA construction: dominators, iterated-frontier phi placement, renaming.

Also exports the dominance/control-dependence machinery the dependency
graph and the detectors reuse, and a verifier pass the test suite runs on
every corpus function.
"""

from __future__ import annotations

from . import ir
from .astnodes import TypeName
from .errors import AnalysisError

VIRTUAL_EXIT = -1


def _reverse_postorder(fn: ir.Func) -> list[int]:
    seen: set[int] = set()
    order: list[int] = []

    def dfs(bid: int):
        seen.add(bid)
        for s in fn.blocks[bid].successors:
            if s not in seen:
                dfs(s)
        order.append(bid)

    dfs(fn.entry)
    return list(reversed(order))


def dominator_sets(fn: ir.Func) -> dict[int, set[int]]:
    """dom[b] = every block that dominates b (including b)."""
    preds = fn.predecessors()
    rpo = _reverse_postorder(fn)
    all_ids = set(rpo)
    dom = {b: set(all_ids) for b in rpo}
    dom[fn.entry] = {fn.entry}
    changed = True
    while changed:
        changed = False
        for b in rpo:
            if b == fn.entry:
                continue
            ins = [dom[p] for p in preds[b] if p in all_ids]
            new = set.intersection(*ins) | {b} if ins else {b}
            if new != dom[b]:
                dom[b] = new
                changed = True
    return dom


def immediate_dominators(dom: dict[int, set[int]], entry: int) -> dict[int, int | None]:
    idom: dict[int, int | None] = {entry: None}
    for b, ds in dom.items():
        if b == entry:
            continue
        strict = ds - {b}
        # the strict dominator dominated by all other strict dominators
        idom[b] = max(strict, key=lambda d: len(dom[d]))
    return idom


def dominance_frontiers(fn: ir.Func) -> dict[int, set[int]]:
    dom = dominator_sets(fn)
    idom = immediate_dominators(dom, fn.entry)
    preds = fn.predecessors()
    df: dict[int, set[int]] = {b.id: set() for b in fn.blocks}
    for b in fn.blocks:
        if len(preds[b.id]) >= 2:
            for p in preds[b.id]:
                runner = p
                while runner is not None and runner != idom[b.id]:
                    df[runner].add(b.id)
                    runner = idom[runner]
    return df


def postdominator_sets(fn: ir.Func) -> dict[int, set[int]]:
    """pdom over the reverse CFG with a virtual exit joining all terminators."""
    succs = {b.id: list(b.successors) for b in fn.blocks}
    rpreds: dict[int, list[int]] = {b.id: [] for b in fn.blocks}
    rpreds[VIRTUAL_EXIT] = []
    for b in fn.blocks:
        if not b.successors:
            succs[b.id] = [VIRTUAL_EXIT]
    for b, ss in succs.items():
        for s in ss:
            rpreds.setdefault(s, []).append(b)
    all_ids = {b.id for b in fn.blocks} | {VIRTUAL_EXIT}
    pdom = {b: set(all_ids) for b in all_ids}
    pdom[VIRTUAL_EXIT] = {VIRTUAL_EXIT}
    changed = True
    while changed:
        changed = False
        for b in all_ids:
            if b == VIRTUAL_EXIT:
                continue
            outs = [pdom[s] for s in succs[b]]
            new = set.intersection(*outs) | {b} if outs else {b}
            if new != pdom[b]:
                pdom[b] = new
                changed = True
    return pdom


def control_dependence(fn: ir.Func) -> dict[int, set[int]]:
    """block id -> ids of JUMPI blocks whose outcome decides its execution."""
    pdom = postdominator_sets(fn)
    ipdom: dict[int, int | None] = {VIRTUAL_EXIT: None}
    for b in pdom:
        if b == VIRTUAL_EXIT:
            continue
        strict = pdom[b] - {b}
        ipdom[b] = max(strict, key=lambda d: len(pdom[d])) if strict else None
    deps: dict[int, set[int]] = {b.id: set() for b in fn.blocks}
    for b in fn.blocks:
        if not isinstance(b.instrs[-1], ir.JumpI):
            continue
        for succ in b.successors:
            runner = succ
            while runner is not None and runner != ipdom[b.id] and runner != VIRTUAL_EXIT:
                if runner != b.id:
                    deps[runner].add(b.id)
                runner = ipdom[runner]
    return deps


# ---------------------------------------------------------------------------
# SSA conversion


def _base_vars(fn: ir.Func) -> dict[str, TypeName | None]:
    """Every local/parameter name written or read anywhere, with a type."""
    vars_: dict[str, TypeName | None] = {name: ty for name, ty in fn.params}
    for b in fn.blocks:
        for instr in b.instrs:
            res = ir.instr_result(instr)
            if isinstance(res, ir.Local):
                vars_.setdefault(res.name, res.ty)
            for ref in ir.instr_operands(instr):
                if isinstance(ref, ir.Local):
                    vars_.setdefault(ref.name, ref.ty)
    return vars_


def to_ssa(fn: ir.Func) -> ir.Func:
    """Rename locals to single-assignment versions, placing phis at the
    iterated dominance frontier of each variable's definition blocks.

    Mutates and returns fn. Storage and environment references are memory
    accesses, not SSA values, and pass through untouched. A read that can
    reach entry without a definition yields the variable's implicit
    zero-initialized version (".0")."""
    if fn.in_ssa:
        return fn
    df = dominance_frontiers(fn)
    dom = dominator_sets(fn)
    idom = immediate_dominators(dom, fn.entry)
    preds = fn.predecessors()
    variables = _base_vars(fn)

    # definition blocks per variable; parameters define at entry
    def_blocks: dict[str, set[int]] = {v: set() for v in variables}
    for name, _ty in fn.params:
        def_blocks[name].add(fn.entry)
    for b in fn.blocks:
        for instr in b.instrs:
            res = ir.instr_result(instr)
            if isinstance(res, ir.Local):
                def_blocks[res.name].add(b.id)

    # iterated dominance frontier -> phi sites
    phi_sites: dict[int, list[str]] = {b.id: [] for b in fn.blocks}
    for var, blocks in def_blocks.items():
        work = list(blocks)
        placed: set[int] = set()
        while work:
            d = work.pop()
            for f in df[d]:
                if f not in placed:
                    placed.add(f)
                    phi_sites[f].append(var)
                    if f not in def_blocks[var]:
                        work.append(f)
    for bid, vars_here in phi_sites.items():
        block = fn.blocks[bid]
        at = 1 if block.instrs and isinstance(block.instrs[0], ir.JumpDest) else 0
        for var in sorted(vars_here):
            block.instrs.insert(
                at, ir.Phi(ir.Local(var, variables[var]), {}, block.instrs[0].loc))

    # renaming pass over the dominator tree
    counters: dict[str, int] = {v: 0 for v in variables}
    stacks: dict[str, list[str]] = {v: [] for v in variables}
    value_defs: dict[str, tuple[str, int, int]] = {}

    def fresh_version(var: str) -> str:
        counters[var] += 1
        return f"{var}.{counters[var]}"

    def read_version(var: str) -> str:
        if stacks[var]:
            return stacks[var][-1]
        zero = f"{var}.0"
        if zero not in value_defs:
            value_defs[zero] = ("zero", fn.entry, -1)
        return zero

    def rewrite(e):
        if e is None or isinstance(e, (ir.Const, ir.EnvRead)):
            return e
        if isinstance(e, ir.Local):
            return ir.Local(read_version(e.name), variables.get(e.name, e.ty))
        if isinstance(e, ir.SLoad):
            return ir.SLoad(e.slot, rewrite(e.key), e.ty)
        if isinstance(e, ir.BinOp):
            return ir.BinOp(e.op, rewrite(e.left), rewrite(e.right), e.ty)
        if isinstance(e, ir.UnOp):
            return ir.UnOp(e.op, rewrite(e.operand), e.ty)
        if isinstance(e, ir.IRCall):
            return ir.IRCall(e.target, tuple(rewrite(a) for a in e.args), e.ty)
        raise TypeError(f"not an IR expression: {e!r}")

    children: dict[int, list[int]] = {b.id: [] for b in fn.blocks}
    for b, d in idom.items():
        if d is not None:
            children[d].append(b)

    def visit(bid: int):
        block = fn.blocks[bid]
        pushed: list[str] = []
        if bid == fn.entry:
            for name, _ty in fn.params:
                version = fresh_version(name)
                stacks[name].append(version)
                pushed.append(name)
                value_defs[version] = ("param", fn.entry, -1)
        for idx, instr in enumerate(block.instrs):
            if isinstance(instr, ir.Phi):
                version = fresh_version(instr.dest.name)
                value_defs[version] = ("instr", bid, idx)
                stacks[instr.dest.name].append(version)
                pushed.append(instr.dest.name)
                instr.dest = ir.Local(version, instr.dest.ty)
                continue
            if isinstance(instr, ir.Assign):
                instr.expr = rewrite(instr.expr)
                if isinstance(instr.dest, ir.StoreTarget):
                    instr.dest = ir.StoreTarget(
                        instr.dest.slot, rewrite(instr.dest.key), instr.dest.ty)
                else:
                    version = fresh_version(instr.dest.name)
                    value_defs[version] = ("instr", bid, idx)
                    stacks[instr.dest.name].append(version)
                    pushed.append(instr.dest.name)
                    instr.dest = ir.Local(version, instr.dest.ty)
            elif isinstance(instr, ir.ExtCallInstr):
                instr.target = rewrite(instr.target)
                instr.value = rewrite(instr.value)
                if instr.dest is not None:
                    version = fresh_version(instr.dest.name)
                    value_defs[version] = ("instr", bid, idx)
                    stacks[instr.dest.name].append(version)
                    pushed.append(instr.dest.name)
                    instr.dest = ir.Local(version, instr.dest.ty)
            elif isinstance(instr, ir.LogEmit):
                instr.args = tuple(rewrite(a) for a in instr.args)
            elif isinstance(instr, ir.JumpI):
                instr.cond = rewrite(instr.cond)
            elif isinstance(instr, ir.Return):
                instr.value = rewrite(instr.value)
        for succ in block.successors:
            for instr in fn.blocks[succ].instrs:
                if not isinstance(instr, ir.Phi):
                    if isinstance(instr, ir.JumpDest):
                        continue
                    break
                base = instr.dest.name.rsplit(".", 1)[0]
                instr.incoming[bid] = ir.Local(read_version(base), instr.dest.ty)
        for child in sorted(children[bid]):
            visit(child)
        for name in reversed(pushed):
            stacks[name].pop()

    visit(fn.entry)
    fn.in_ssa = True
    fn.value_defs = value_defs

    for b in fn.blocks:
        for instr in b.instrs:
            if isinstance(instr, ir.Phi) and len(instr.incoming) != len(preds[b.id]):
                raise AnalysisError(
                    f"{fn.fn_id}: phi in b{b.id} has {len(instr.incoming)} incoming "
                    f"values for {len(preds[b.id])} predecessors")
    return fn


def verify_dominance(fn: ir.Func) -> None:
    """Check every SSA use is dominated by its definition; raises on failure."""
    assert fn.in_ssa
    dom = dominator_sets(fn)

    def defsite(name: str) -> tuple[str, int, int]:
        site = fn.value_defs.get(name)
        if site is None:
            raise AnalysisError(f"{fn.fn_id}: use of undefined value {name}")
        return site

    def check(name: str, use_block: int, use_index: int):
        kind, dblock, dindex = defsite(name)
        if kind in ("param", "zero"):
            return  # entry definitions dominate everything
        if dblock == use_block:
            if not dindex < use_index:
                raise AnalysisError(
                    f"{fn.fn_id}: {name} used at b{use_block}#{use_index} "
                    f"before its definition")
            return
        if dblock not in dom[use_block]:
            raise AnalysisError(
                f"{fn.fn_id}: definition of {name} does not dominate use "
                f"in b{use_block}")

    for b in fn.blocks:
        for idx, instr in enumerate(b.instrs):
            if isinstance(instr, ir.Phi):
                for pred, val in instr.incoming.items():
                    kind, dblock, _ = defsite(val.name)
                    if kind in ("param", "zero"):
                        continue
                    if dblock != pred and dblock not in dom[pred]:
                        raise AnalysisError(
                            f"{fn.fn_id}: phi operand {val.name} does not reach "
                            f"predecessor b{pred}")
                continue
            for ref in ir.instr_operands(instr):
                if isinstance(ref, ir.Local):
                    check(ref.name, b.id, idx)
