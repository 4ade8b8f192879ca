"""CFG-of-basic-blocks IR with the six jump kinds plus regular statements.

Expressions stay as typed trees inside instructions; internal calls are
hoisted by the lowerer so an IRCall is only ever the sole right-hand side
of an Assign. Jump kinds follow the fixed order JUMP, JUMPI, JUMPDEST,
RETURN, REVERT, STOP used by the coverage objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .astnodes import SourceLocation, TypeName

# ---------------------------------------------------------------------------
# Expressions


@dataclass(frozen=True)
class Const:
    value: int
    ty: TypeName | None


@dataclass(frozen=True)
class Local:
    """A local variable or parameter; post-SSA the name carries a version."""
    name: str
    ty: TypeName | None


@dataclass(frozen=True)
class SLoad:
    slot: int
    key: "IRExpr | None"  # mapping reads carry a key expression
    ty: TypeName


@dataclass(frozen=True)
class EnvRead:
    kind: str  # timestamp, sender, value, balance
    ty: TypeName


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "IRExpr"
    right: "IRExpr"
    ty: TypeName


@dataclass(frozen=True)
class UnOp:
    op: str
    operand: "IRExpr"
    ty: TypeName


IRExpr = Const | Local | SLoad | EnvRead | BinOp | UnOp

ARITH_OPS = ("+", "-", "*")
CMP_OPS = ("<", "<=", ">", ">=", "==", "!=")


@dataclass(frozen=True)
class IRCall:
    target: str  # resolved fn id "Contract.name"
    args: tuple[IRExpr, ...]
    ty: TypeName | None


@dataclass(frozen=True)
class StoreTarget:
    slot: int
    key: IRExpr | None
    ty: TypeName


# ---------------------------------------------------------------------------
# Instructions


@dataclass
class Assign:
    dest: Local | StoreTarget
    expr: IRExpr | IRCall
    loc: SourceLocation


@dataclass
class ExtCallInstr:
    dest: Local | None  # success flag for call/send; transfer has none
    call_kind: str  # call, send, transfer
    target: IRExpr
    value: IRExpr
    checked: bool
    loc: SourceLocation


@dataclass
class LogEmit:
    event: str
    args: tuple[IRExpr, ...]
    loc: SourceLocation


@dataclass
class Phi:
    dest: Local
    incoming: dict[int, Local]  # predecessor block id -> value
    loc: SourceLocation


@dataclass
class Jump:
    target: int
    loc: SourceLocation


@dataclass
class JumpI:
    cond: IRExpr
    then_target: int
    else_target: int
    loc: SourceLocation


@dataclass
class JumpDest:
    loc: SourceLocation


@dataclass
class Return:
    value: IRExpr | None
    loc: SourceLocation


@dataclass
class Revert:
    reason: str | None
    loc: SourceLocation


@dataclass
class Stop:
    loc: SourceLocation


Instr = Assign | ExtCallInstr | LogEmit | Phi | Jump | JumpI | JumpDest | Return | Revert | Stop
Terminator = (Jump, JumpI, Return, Revert, Stop)

JUMP_KINDS = ("JUMP", "JUMPI", "JUMPDEST", "RETURN", "REVERT", "STOP")
_JUMP_INDEX = {Jump: 0, JumpI: 1, JumpDest: 2, Return: 3, Revert: 4, Stop: 5}


def jump_kind_index(instr: Instr) -> int | None:
    """0-based Table-ordered jump kind, or None for regular statements/phis."""
    return _JUMP_INDEX.get(type(instr))


# ---------------------------------------------------------------------------
# Blocks and functions


@dataclass
class BasicBlock:
    id: int
    instrs: list[Instr] = field(default_factory=list)

    @property
    def terminator(self) -> Instr:
        assert self.instrs and isinstance(self.instrs[-1], Terminator)
        return self.instrs[-1]

    @property
    def successors(self) -> tuple[int, ...]:
        t = self.instrs[-1] if self.instrs else None
        if isinstance(t, Jump):
            return (t.target,)
        if isinstance(t, JumpI):
            return (t.then_target, t.else_target)
        return ()


@dataclass
class Census:
    regular: int  # K
    jumps: tuple[int, int, int, int, int, int]  # J_1..J_6 in Table order

    @property
    def total(self) -> int:
        return self.regular + sum(self.jumps)

    def __add__(self, other: "Census") -> "Census":
        return Census(
            self.regular + other.regular,
            tuple(a + b for a, b in zip(self.jumps, other.jumps)))


EMPTY_CENSUS = Census(0, (0, 0, 0, 0, 0, 0))


@dataclass
class Func:
    fn_id: str  # "<root contract>.<name>"
    contract: str  # root contract under which this body was flattened
    defining_contract: str
    name: str
    params: list[tuple[str, TypeName]]
    returns: TypeName | None
    visibility: str
    is_payable: bool
    blocks: list[BasicBlock]
    entry: int
    loc: SourceLocation
    in_ssa: bool = False
    # SSA value name -> def site: ("param"|"zero", entry, -1) or ("instr", block, index)
    value_defs: dict[str, tuple[str, int, int]] = field(default_factory=dict)

    def block(self, bid: int) -> BasicBlock:
        return self.blocks[bid]

    def predecessors(self) -> dict[int, list[int]]:
        preds: dict[int, list[int]] = {b.id: [] for b in self.blocks}
        for b in self.blocks:
            for s in b.successors:
                preds[s].append(b.id)
        return preds


def statement_census(fn: Func) -> Census:
    """Count regular statements (K) and each jump kind (J_1..J_6); phis are
    SSA bookkeeping and never counted."""
    regular = 0
    jumps = [0] * 6
    for b in fn.blocks:
        for instr in b.instrs:
            if isinstance(instr, Phi):
                continue
            k = jump_kind_index(instr)
            if k is None:
                regular += 1
            else:
                jumps[k] += 1
    return Census(regular, tuple(jumps))


# ---------------------------------------------------------------------------
# Operand traversal (shared by the dependency graph and its checks)


def expr_refs(e: IRExpr | IRCall | None) -> list[Local | SLoad | EnvRead]:
    """Leaf value references of an expression, left to right."""
    out: list[Local | SLoad | EnvRead] = []

    def walk(x):
        if x is None or isinstance(x, Const):
            return
        if isinstance(x, Local):
            out.append(x)
        elif isinstance(x, SLoad):
            walk(x.key)
            out.append(x)
        elif isinstance(x, EnvRead):
            out.append(x)
        elif isinstance(x, BinOp):
            walk(x.left)
            walk(x.right)
        elif isinstance(x, UnOp):
            walk(x.operand)
        elif isinstance(x, IRCall):
            for a in x.args:
                walk(a)
        else:
            raise TypeError(f"not an IR expression: {x!r}")

    walk(e)
    return out


def instr_operands(instr: Instr) -> list[Local | SLoad | EnvRead]:
    if isinstance(instr, Assign):
        refs = expr_refs(instr.expr)
        if isinstance(instr.dest, StoreTarget):
            refs = expr_refs(instr.dest.key) + refs
        return refs
    if isinstance(instr, ExtCallInstr):
        return expr_refs(instr.target) + expr_refs(instr.value)
    if isinstance(instr, LogEmit):
        out: list = []
        for a in instr.args:
            out.extend(expr_refs(a))
        return out
    if isinstance(instr, Phi):
        return list(instr.incoming.values())
    if isinstance(instr, JumpI):
        return expr_refs(instr.cond)
    if isinstance(instr, Return):
        return expr_refs(instr.value)
    return []


def instr_result(instr: Instr) -> Local | StoreTarget | None:
    if isinstance(instr, Assign):
        return instr.dest
    if isinstance(instr, ExtCallInstr):
        return instr.dest
    if isinstance(instr, Phi):
        return instr.dest
    return None


# ---------------------------------------------------------------------------
# Deterministic textual dump (golden-file friendly)


def _expr_text(e: IRExpr | IRCall | None) -> str:
    if e is None:
        return "()"
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, Local):
        return e.name
    if isinstance(e, SLoad):
        return f"sload[{e.slot}]" if e.key is None else f"sload[{e.slot}:{_expr_text(e.key)}]"
    if isinstance(e, EnvRead):
        return f"env.{e.kind}"
    if isinstance(e, BinOp):
        return f"({e.op} {_expr_text(e.left)} {_expr_text(e.right)})"
    if isinstance(e, UnOp):
        return f"({e.op} {_expr_text(e.operand)})"
    if isinstance(e, IRCall):
        return f"call {e.target}({', '.join(_expr_text(a) for a in e.args)})"
    raise TypeError(f"not an IR expression: {e!r}")


def instr_text(instr: Instr) -> str:
    if isinstance(instr, Assign):
        if isinstance(instr.dest, StoreTarget):
            dest = f"sstore[{instr.dest.slot}]" if instr.dest.key is None else \
                f"sstore[{instr.dest.slot}:{_expr_text(instr.dest.key)}]"
        else:
            dest = instr.dest.name
        return f"{dest} = {_expr_text(instr.expr)}"
    if isinstance(instr, ExtCallInstr):
        dest = f"{instr.dest.name} = " if instr.dest is not None else ""
        chk = "checked" if instr.checked else "unchecked"
        return (f"{dest}extcall.{instr.call_kind} to {_expr_text(instr.target)} "
                f"value {_expr_text(instr.value)} [{chk}]")
    if isinstance(instr, LogEmit):
        return f"emit {instr.event}({', '.join(_expr_text(a) for a in instr.args)})"
    if isinstance(instr, Phi):
        inc = ", ".join(f"b{b}: {v.name}" for b, v in sorted(instr.incoming.items()))
        return f"{instr.dest.name} = phi({inc})"
    if isinstance(instr, Jump):
        return f"jump b{instr.target}"
    if isinstance(instr, JumpI):
        return f"jumpi {_expr_text(instr.cond)} ? b{instr.then_target} : b{instr.else_target}"
    if isinstance(instr, JumpDest):
        return "jumpdest"
    if isinstance(instr, Return):
        return f"return {_expr_text(instr.value)}" if instr.value is not None else "return"
    if isinstance(instr, Revert):
        return f"revert({instr.reason})" if instr.reason else "revert"
    if isinstance(instr, Stop):
        return "stop"
    raise TypeError(f"not an instruction: {instr!r}")


def dump_function(fn: Func) -> str:
    lines = [f"function {fn.fn_id} ({'ssa' if fn.in_ssa else 'cfg'})"]
    for b in fn.blocks:
        lines.append(f"  b{b.id}:")
        for instr in b.instrs:
            lines.append(f"    {instr_text(instr)}")
    return "\n".join(lines) + "\n"
