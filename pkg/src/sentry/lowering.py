"""Lower resolved MiniSol functions to the basic-block IR.

Control constructs become JUMPI/JUMP with JUMPDEST at every merge point;
require/assert grow a private REVERT arm; && and || short-circuit through
jumps wherever they occur; `for` is rewritten to `while` first. Internal
and external calls are hoisted so each one sits alone on an Assign or
ExtCallInstr, which keeps the interpreter's call handling iterative.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from . import astnodes as A
from . import ir
from .errors import AnalysisError, LoweringError
from .program_model import (
    InheritanceGraph, StorageLayout, flattened_functions, resolve_function, storage_layout,
)

log = logging.getLogger(__name__)

_ENV_TYPES = {
    ("msg", "sender"): (A.ADDRESS, "sender"),
    ("msg", "value"): (A.UINT256, "value"),
    ("block", "timestamp"): (A.UINT256, "timestamp"),
    ("this", "balance"): (A.UINT256, "balance"),
}


@dataclass
class LoweredContract:
    """Every function of one root contract, flattened and lowered."""
    root: str
    layout: StorageLayout
    funcs: dict[str, ir.Func]  # fn_id -> Func, insertion order = execution order
    entry_ctor: str | None
    public_order: list[str]  # public/external fn_ids, linearized declaration order


def _is_int(ty) -> bool:
    return isinstance(ty, A.IntType)


def _widen(a: A.IntType, b: A.IntType) -> A.IntType:
    return a if a.bits >= b.bits else b


class _FnLowerer:
    def __init__(self, unit: A.SourceUnit, layout: StorageLayout,
                 call_table: dict[str, tuple[str, A.FunctionDef]]):
        self.unit = unit
        self.layout = layout
        self.call_table = call_table
        self.blocks: list[ir.BasicBlock] = []
        self.cur: ir.BasicBlock | None = None
        self.scope: dict[str, A.TypeName] = {}
        self.returns: A.TypeName | None = None
        self.temp_n = 0

    # -- block plumbing ------------------------------------------------------

    def new_block(self) -> ir.BasicBlock:
        b = ir.BasicBlock(id=len(self.blocks))
        self.blocks.append(b)
        return b

    def emit(self, instr: ir.Instr) -> None:
        if self.cur is not None:
            self.cur.instrs.append(instr)

    def terminate(self, instr: ir.Instr) -> None:
        if self.cur is not None:
            self.cur.instrs.append(instr)
            self.cur = None

    def fresh(self, ty: A.TypeName, hint: str = "t") -> ir.Local:
        self.temp_n += 1
        name = f"${hint}{self.temp_n}"
        self.scope[name] = ty
        return ir.Local(name, ty)

    # -- types ----------------------------------------------------------------

    def _fit_literal(self, e: ir.Const, ty: A.TypeName, loc) -> ir.Const:
        lo, hi = A.type_bounds(ty)
        if not lo <= e.value <= hi:
            raise AnalysisError(
                f"{loc.line}:{loc.column}: literal {e.value} out of range for {ty}")
        return ir.Const(e.value, ty)

    def unify(self, l: ir.IRExpr, r: ir.IRExpr, loc) -> tuple[ir.IRExpr, ir.IRExpr, A.TypeName]:
        lt, rt = l.ty, r.ty
        if lt is None and rt is None:
            ty = A.INT256 if (l.value < 0 or r.value < 0) else A.UINT256
            return self._fit_literal(l, ty, loc), self._fit_literal(r, ty, loc), ty
        if lt is None:
            return self._fit_literal(l, rt, loc), r, rt
        if rt is None:
            return l, self._fit_literal(r, lt, loc), lt
        if lt == rt:
            return l, r, lt
        if _is_int(lt) and _is_int(rt) and lt.signed == rt.signed:
            return l, r, _widen(lt, rt)
        raise AnalysisError(f"{loc.line}:{loc.column}: type mismatch {lt} vs {rt}")

    def coerce(self, e: ir.IRExpr, ty: A.TypeName, loc) -> ir.IRExpr:
        if e.ty is None:
            return self._fit_literal(e, ty, loc)
        if e.ty == ty:
            return e
        if _is_int(e.ty) and _is_int(ty) and e.ty.signed == ty.signed and ty.bits >= e.ty.bits:
            return e
        raise AnalysisError(f"{loc.line}:{loc.column}: cannot use {e.ty} where {ty} expected")

    # -- expressions -----------------------------------------------------------

    def lower_expr(self, e: A.Expr, consumed: bool = True) -> ir.IRExpr:
        if isinstance(e, A.Lit):
            return ir.Const(e.value, A.BOOL if e.kind == "bool" else None)
        if isinstance(e, A.Ident):
            if e.name in self.scope:
                return ir.Local(e.name, self.scope[e.name])
            slot = self.layout.slot_of(e.name)
            if slot is None:
                raise AnalysisError(f"{e.loc.line}:{e.loc.column}: unknown identifier {e.name}")
            if isinstance(slot.ty, A.MappingType):
                raise AnalysisError(
                    f"{e.loc.line}:{e.loc.column}: mapping {e.name} needs an index")
            return ir.SLoad(slot.index, None, slot.ty)
        if isinstance(e, A.MemberE):
            ty, kind = _ENV_TYPES[(e.obj, e.name)]
            return ir.EnvRead(kind, ty)
        if isinstance(e, A.IndexE):
            slot = self.layout.slot_of(e.base.name)
            if slot is None or not isinstance(slot.ty, A.MappingType):
                raise AnalysisError(
                    f"{e.loc.line}:{e.loc.column}: {e.base.name} is not a mapping")
            key = self.coerce(self.lower_expr(e.key), slot.ty.key, e.loc)
            return ir.SLoad(slot.index, key, slot.ty.value)
        if isinstance(e, A.Un):
            if e.op == "!":
                inner = self.lower_expr(e.operand)
                if inner.ty != A.BOOL:
                    raise AnalysisError(f"{e.loc.line}:{e.loc.column}: ! needs bool")
                return ir.UnOp("!", inner, A.BOOL)
            inner = self.lower_expr(e.operand)
            if isinstance(inner, ir.Const) and inner.ty is None:
                return ir.Const(-inner.value, None)
            if not (_is_int(inner.ty) and inner.ty.signed):
                raise AnalysisError(
                    f"{e.loc.line}:{e.loc.column}: unary minus needs a signed operand")
            return ir.UnOp("-", inner, inner.ty)
        if isinstance(e, A.Bin):
            if e.op in ("&&", "||"):
                return self._bool_via_jumps(e)
            l = self.lower_expr(e.left)
            r = self.lower_expr(e.right)
            if e.op in ("+", "-", "*", "/", "%"):
                l, r, ty = self.unify(l, r, e.loc)
                if not _is_int(ty):
                    raise AnalysisError(
                        f"{e.loc.line}:{e.loc.column}: arithmetic needs integers, got {ty}")
                return ir.BinOp(e.op, l, r, ty)
            if e.op in ("==", "!="):
                l, r, ty = self.unify(l, r, e.loc)
                return ir.BinOp(e.op, l, r, A.BOOL)
            if e.op in ("<", "<=", ">", ">="):
                l, r, ty = self.unify(l, r, e.loc)
                if not _is_int(ty):
                    raise AnalysisError(
                        f"{e.loc.line}:{e.loc.column}: ordered comparison needs integers")
                return ir.BinOp(e.op, l, r, A.BOOL)
            raise LoweringError(f"operator {e.op}")
        if isinstance(e, A.ExtCall):
            return self._lower_extcall(e, consumed)
        if isinstance(e, A.CallE):
            return self._lower_call(e)
        raise LoweringError(f"expression {e!r}")

    def _lower_extcall(self, e: A.ExtCall, consumed: bool) -> ir.IRExpr:
        target = self.lower_expr(e.target)
        if target.ty != A.ADDRESS:
            raise AnalysisError(
                f"{e.loc.line}:{e.loc.column}: {e.kind} target must be an address")
        value = self.coerce(self.lower_expr(e.value), A.UINT256, e.loc)
        if e.kind == "transfer":
            self.emit(ir.ExtCallInstr(None, "transfer", target, value, True, e.loc))
            return ir.Const(1, A.BOOL)  # transfer reverts on failure
        dest = self.fresh(A.BOOL, "ok")
        self.emit(ir.ExtCallInstr(dest, e.kind, target, value, consumed, e.loc))
        return dest

    def _lower_call(self, e: A.CallE) -> ir.IRExpr:
        if e.name not in self.call_table:
            raise AnalysisError(f"{e.loc.line}:{e.loc.column}: unknown function {e.name}")
        fn_id, decl = self.call_table[e.name]
        if len(e.args) != len(decl.params):
            raise AnalysisError(
                f"{e.loc.line}:{e.loc.column}: {e.name} takes {len(decl.params)} arguments")
        args = tuple(
            self.coerce(self.lower_expr(a), p.ty, e.loc)
            for a, p in zip(e.args, decl.params))
        dest = self.fresh(decl.returns or A.UINT256, "r")
        self.emit(ir.Assign(dest, ir.IRCall(fn_id, args, decl.returns), e.loc))
        return ir.Local(dest.name, decl.returns) if decl.returns else dest

    def _bool_via_jumps(self, e: A.Bin) -> ir.Local:
        tmp = self.fresh(A.BOOL, "b")
        t_blk = self.new_block()
        f_blk = self.new_block()
        join = self.new_block()
        self.lower_condition(e, t_blk.id, f_blk.id, e.loc)
        self.cur = t_blk
        self.emit(ir.Assign(ir.Local(tmp.name, A.BOOL), ir.Const(1, A.BOOL), e.loc))
        self.terminate(ir.Jump(join.id, e.loc))
        self.cur = f_blk
        self.emit(ir.Assign(ir.Local(tmp.name, A.BOOL), ir.Const(0, A.BOOL), e.loc))
        self.terminate(ir.Jump(join.id, e.loc))
        self.cur = join
        return ir.Local(tmp.name, A.BOOL)

    def lower_condition(self, e: A.Expr, true_blk: int, false_blk: int, loc) -> None:
        """Branch to true_blk/false_blk, short-circuiting && and ||."""
        if isinstance(e, A.Bin) and e.op == "&&":
            mid = self.new_block()
            self.lower_condition(e.left, mid.id, false_blk, e.loc)
            self.cur = mid
            self.lower_condition(e.right, true_blk, false_blk, e.loc)
            return
        if isinstance(e, A.Bin) and e.op == "||":
            mid = self.new_block()
            self.lower_condition(e.left, true_blk, mid.id, e.loc)
            self.cur = mid
            self.lower_condition(e.right, true_blk, false_blk, e.loc)
            return
        if isinstance(e, A.Un) and e.op == "!":
            self.lower_condition(e.operand, false_blk, true_blk, e.loc)
            return
        cond = self.lower_expr(e)
        if cond.ty != A.BOOL:
            raise AnalysisError(f"{loc.line}:{loc.column}: condition must be bool")
        self.terminate(ir.JumpI(cond, true_blk, false_blk, loc))

    # -- statements --------------------------------------------------------------

    def lower_block(self, block: A.Block) -> None:
        for s in block.statements:
            if self.cur is None:
                log.warning("%d:%d: unreachable statement dropped", s.loc.line, s.loc.column)
                return
            self.lower_stmt(s)

    def lower_stmt(self, s: A.Stmt) -> None:
        if isinstance(s, A.VarDeclStmt):
            if s.name in self.scope:
                raise AnalysisError(
                    f"{s.loc.line}:{s.loc.column}: {s.name} already declared")
            init = self.coerce(self.lower_expr(s.init), s.ty, s.loc) \
                if s.init is not None else ir.Const(0, s.ty)
            self.scope[s.name] = s.ty
            if self._rebind_temp(init, s.name, s.ty):
                return
            self.emit(ir.Assign(ir.Local(s.name, s.ty), init, s.loc))
        elif isinstance(s, A.AssignStmt):
            self._lower_assign(s)
        elif isinstance(s, A.IfStmt):
            then_b = self.new_block()
            else_b = self.new_block() if s.els is not None else None
            join = self.new_block()
            self.lower_condition(s.cond, then_b.id, (else_b or join).id, s.loc)
            self.cur = then_b
            self.lower_block(s.then)
            self.terminate(ir.Jump(join.id, s.loc))
            if else_b is not None:
                self.cur = else_b
                self.lower_block(s.els)
                self.terminate(ir.Jump(join.id, s.loc))
            self.cur = join
        elif isinstance(s, A.WhileStmt):
            header = self.new_block()
            body = self.new_block()
            exit_b = self.new_block()
            self.terminate(ir.Jump(header.id, s.loc))
            self.cur = header
            self.lower_condition(s.cond, body.id, exit_b.id, s.loc)
            self.cur = body
            self.lower_block(s.body)
            self.terminate(ir.Jump(header.id, s.loc))
            self.cur = exit_b
        elif isinstance(s, A.ForStmt):
            body = A.Block(
                statements=s.body.statements + ((s.step,) if s.step else ()),
                loc=s.body.loc)
            cond = s.cond if s.cond is not None else A.Lit(1, "bool", s.loc)
            if s.init is not None:
                self.lower_stmt(s.init)
            self.lower_stmt(A.WhileStmt(cond=cond, body=body, loc=s.loc))
        elif isinstance(s, (A.RequireStmt, A.AssertStmt)):
            cont = self.new_block()
            rev = self.new_block()
            self.lower_condition(s.cond, cont.id, rev.id, s.loc)
            self.cur = rev
            msg = s.message if isinstance(s, A.RequireStmt) else "assertion failed"
            self.terminate(ir.Revert(msg, s.loc))
            self.cur = cont
        elif isinstance(s, A.ReturnStmt):
            value = None
            if s.value is not None:
                value = self.lower_expr(s.value)
                if self.returns is None:
                    raise AnalysisError(
                        f"{s.loc.line}:{s.loc.column}: function declares no return value")
                value = self.coerce(value, self.returns, s.loc)
            self.terminate(ir.Return(value, s.loc))
        elif isinstance(s, A.RevertStmt):
            self.terminate(ir.Revert(s.message, s.loc))
        elif isinstance(s, A.EmitStmt):
            args = tuple(self.lower_expr(a) for a in s.args)
            args = tuple(
                self._fit_literal(a, A.UINT256, s.loc) if a.ty is None else a for a in args)
            self.emit(ir.LogEmit(s.event, args, s.loc))
        elif isinstance(s, A.ExprStmt):
            e = self.lower_expr(s.expr, consumed=False)
            if not (isinstance(e, ir.Local) and e.name.startswith("$")) \
                    and not isinstance(e, ir.Const):
                # a pure expression statement still counts as a statement
                self.emit(ir.Assign(self.fresh(e.ty or A.UINT256, "void"), e, s.loc))
        else:
            raise LoweringError(f"statement {s!r}")

    def _rebind_temp(self, init: ir.IRExpr, name: str, ty) -> bool:
        """`bool ok = a.send(v);` style declarations adopt the call's result
        slot instead of copying it through a temporary."""
        if not (isinstance(init, ir.Local) and init.name.startswith("$")
                and self.cur is not None and self.cur.instrs):
            return False
        last = self.cur.instrs[-1]
        if isinstance(last, ir.ExtCallInstr) and last.dest is not None \
                and last.dest.name == init.name:
            last.dest = ir.Local(name, ty)
            return True
        if isinstance(last, ir.Assign) and isinstance(last.dest, ir.Local) \
                and last.dest.name == init.name and isinstance(last.expr, ir.IRCall):
            last.dest = ir.Local(name, ty)
            return True
        return False

    def _lower_assign(self, s: A.AssignStmt) -> None:
        value = self.lower_expr(s.value)
        if isinstance(s.target, A.Ident) and s.target.name in self.scope:
            ty = self.scope[s.target.name]
            dest = ir.Local(s.target.name, ty)
            read: ir.IRExpr = ir.Local(s.target.name, ty)
        else:
            base = s.target.base.name if isinstance(s.target, A.IndexE) else s.target.name
            slot = self.layout.slot_of(base)
            if slot is None:
                raise AnalysisError(
                    f"{s.loc.line}:{s.loc.column}: unknown identifier {base}")
            if isinstance(s.target, A.IndexE):
                if not isinstance(slot.ty, A.MappingType):
                    raise AnalysisError(
                        f"{s.loc.line}:{s.loc.column}: {base} is not a mapping")
                key = self.coerce(self.lower_expr(s.target.key), slot.ty.key, s.loc)
                ty = slot.ty.value
                dest = ir.StoreTarget(slot.index, key, ty)
                read = ir.SLoad(slot.index, key, ty)
            else:
                if isinstance(slot.ty, A.MappingType):
                    raise AnalysisError(
                        f"{s.loc.line}:{s.loc.column}: mapping {base} needs an index")
                ty = slot.ty
                dest = ir.StoreTarget(slot.index, None, ty)
                read = ir.SLoad(slot.index, None, ty)
        if s.op != "=":
            op = s.op[0]
            value, _, _ = self.unify(value, read, s.loc)
            if not _is_int(ty):
                raise AnalysisError(
                    f"{s.loc.line}:{s.loc.column}: compound assignment needs integers")
            value = ir.BinOp(op, read, value, ty)
        value = self.coerce(value, ty, s.loc)
        self.emit(ir.Assign(dest, value, s.loc))


def _prune_and_renumber(blocks: list[ir.BasicBlock], entry: int) -> list[ir.BasicBlock]:
    """Drop blocks unreachable from entry and renumber the rest densely."""
    reachable: set[int] = set()
    stack = [entry]
    by_id = {b.id: b for b in blocks}
    while stack:
        bid = stack.pop()
        if bid in reachable:
            continue
        reachable.add(bid)
        stack.extend(by_id[bid].successors)
    kept = [b for b in blocks if b.id in reachable]
    remap = {b.id: i for i, b in enumerate(kept)}
    for b in kept:
        b.id = remap[b.id]
        t = b.instrs[-1]
        if isinstance(t, ir.Jump):
            t.target = remap[t.target]
        elif isinstance(t, ir.JumpI):
            t.then_target = remap[t.then_target]
            t.else_target = remap[t.else_target]
    return kept


def _insert_jumpdests(fn: ir.Func) -> None:
    # merge points (two or more predecessors) are the safe jump targets
    preds = fn.predecessors()
    for b in fn.blocks:
        if b.id != fn.entry and len(preds[b.id]) >= 2:
            b.instrs.insert(0, ir.JumpDest(b.instrs[0].loc if b.instrs else fn.loc))


def lower_function(
    unit: A.SourceUnit,
    layout: StorageLayout,
    call_table: dict[str, tuple[str, A.FunctionDef]],
    fn_id: str,
    root: str,
    owner: str,
    fn: A.FunctionDef,
    prologue_calls: list[tuple[str, A.FunctionDef, tuple[A.Expr, ...]]] = (),
) -> ir.Func:
    """Lower one function body; prologue_calls become leading IRCalls
    (base constructor chaining)."""
    lw = _FnLowerer(unit, layout, call_table)
    lw.returns = fn.returns
    for p in fn.params:
        if lw.layout.slot_of(p.name) is not None:
            log.warning("parameter %s shadows a state variable", p.name)
        lw.scope[p.name] = p.ty
    entry = lw.new_block()
    lw.cur = entry
    for callee_id, callee_decl, args in prologue_calls:
        arg_irs = tuple(
            lw.coerce(lw.lower_expr(a), p.ty, fn.loc)
            for a, p in zip(args, callee_decl.params))
        lw.emit(ir.Assign(lw.fresh(A.UINT256, "base"),
                          ir.IRCall(callee_id, arg_irs, None), fn.loc))
    lw.lower_block(fn.body)
    if lw.cur is not None:
        lw.terminate(ir.Stop(fn.loc))
    blocks = _prune_and_renumber(lw.blocks, entry.id)
    out = ir.Func(
        fn_id=fn_id, contract=root, defining_contract=owner, name=fn.name,
        params=[(p.name, p.ty) for p in fn.params], returns=fn.returns,
        visibility=fn.visibility, is_payable=fn.is_payable,
        blocks=blocks, entry=0, loc=fn.loc)
    _insert_jumpdests(out)
    return out


def lower_to_cfg(
    unit: A.SourceUnit, ig: InheritanceGraph, root: A.ContractDef
) -> LoweredContract:
    """Flatten `root` through its linearization and lower every function."""
    layout = storage_layout(root, ig, unit)
    by_name = {c.name: c for c in unit.contracts}
    flat = flattened_functions(unit, ig, root.name)

    call_table: dict[str, tuple[str, A.FunctionDef]] = {
        fn.name: (f"{root.name}.{fn.name}", fn) for _owner, fn in flat}

    funcs: dict[str, ir.Func] = {}

    # constructors: one Func per defining contract in the chain, chained by
    # explicit (or implicit zero-argument) base invocations, base-most first
    ctor_defs: dict[str, A.FunctionDef] = {}
    for owner in ig.linearization[root.name]:
        for f in by_name[owner].functions:
            if f.is_constructor:
                ctor_defs[owner] = f

    def ctor_id(owner: str) -> str:
        return f"{root.name}.<init:{owner}>"

    entry_ctor: str | None = None
    for owner in ig.linearization[root.name]:
        if owner not in ctor_defs:
            continue
        cdef = ctor_defs[owner]
        prologue: list[tuple[str, A.FunctionDef, tuple[A.Expr, ...]]] = []
        invoked = {base: args for base, args in cdef.base_invocations}
        for base in by_name[owner].bases:
            if base in invoked:
                if base not in ctor_defs:
                    raise AnalysisError(f"{owner}: base {base} has no constructor")
                if len(invoked[base]) != len(ctor_defs[base].params):
                    raise AnalysisError(
                        f"{owner}: wrong argument count for {base} constructor")
                prologue.append((ctor_id(base), ctor_defs[base], invoked[base]))
            elif base in ctor_defs:
                if ctor_defs[base].params:
                    raise AnalysisError(
                        f"{owner}: base {base} constructor needs arguments")
                prologue.append((ctor_id(base), ctor_defs[base], ()))
        for base in invoked:
            if base not in by_name[owner].bases:
                raise AnalysisError(f"{owner}: {base} is not a direct base")
        funcs[ctor_id(owner)] = lower_function(
            unit, layout, call_table, ctor_id(owner), root.name, owner, cdef,
            prologue_calls=prologue)

    if ctor_defs:
        # the most-derived definition is the one deployment runs
        for owner in reversed(ig.linearization[root.name]):
            if owner in ctor_defs:
                entry_ctor = ctor_id(owner)
                break

    public_order: list[str] = []
    for owner, f in flat:
        fn_id = f"{root.name}.{f.name}"
        funcs[fn_id] = lower_function(unit, layout, call_table, fn_id, root.name, owner, f)
        if f.visibility in ("public", "external"):
            public_order.append(fn_id)

    return LoweredContract(
        root=root.name, layout=layout, funcs=funcs,
        entry_ctor=entry_ctor, public_order=public_order)
