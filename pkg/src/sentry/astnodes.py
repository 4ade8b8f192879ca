"""AST node types for MiniSol, plus the pretty-printer used for round-trip checks.

Every node carries a SourceLocation pointing into the original text. Structural
equality (location-insensitive) goes through `structural_key`, which the
round-trip property in the test suite relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields


@dataclass(frozen=True)
class SourceLocation:
    line: int
    column: int


NOLOC = SourceLocation(0, 0)


# ---------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class IntType:
    signed: bool
    bits: int

    def __str__(self) -> str:
        return f"{'int' if self.signed else 'uint'}{self.bits}"


@dataclass(frozen=True)
class BoolType:
    def __str__(self) -> str:
        return "bool"


@dataclass(frozen=True)
class AddressType:
    def __str__(self) -> str:
        return "address"


@dataclass(frozen=True)
class MappingType:
    key: "TypeName"
    value: "TypeName"

    def __str__(self) -> str:
        return f"mapping({self.key} => {self.value})"


TypeName = IntType | BoolType | AddressType | MappingType

UINT256 = IntType(False, 256)
INT256 = IntType(True, 256)
BOOL = BoolType()
ADDRESS = AddressType()

INT_WIDTHS = (8, 16, 32, 64, 128, 256)


def type_bounds(ty: TypeName) -> tuple[int, int]:
    """Inclusive [lo, hi] range of values representable by a scalar type."""
    if isinstance(ty, IntType):
        if ty.signed:
            return -(1 << (ty.bits - 1)), (1 << (ty.bits - 1)) - 1
        return 0, (1 << ty.bits) - 1
    if isinstance(ty, BoolType):
        return 0, 1
    if isinstance(ty, AddressType):
        return 0, (1 << 160) - 1
    raise ValueError(f"no scalar bounds for {ty}")


# ---------------------------------------------------------------------------
# Expressions


@dataclass(frozen=True)
class Lit:
    value: int
    kind: str  # "int" or "bool"
    loc: SourceLocation


@dataclass(frozen=True)
class Ident:
    name: str
    loc: SourceLocation


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Expr"
    right: "Expr"
    loc: SourceLocation


@dataclass(frozen=True)
class Un:
    op: str
    operand: "Expr"
    loc: SourceLocation


@dataclass(frozen=True)
class IndexE:
    base: Ident
    key: "Expr"
    loc: SourceLocation


@dataclass(frozen=True)
class MemberE:
    obj: str  # "msg", "block" or "this"
    name: str  # sender, value, timestamp, balance
    loc: SourceLocation


@dataclass(frozen=True)
class ExtCall:
    kind: str  # "call", "send" or "transfer"
    target: "Expr"
    value: "Expr"
    loc: SourceLocation


@dataclass(frozen=True)
class CallE:
    name: str
    args: tuple["Expr", ...]
    loc: SourceLocation


Expr = Lit | Ident | Bin | Un | IndexE | MemberE | ExtCall | CallE


# ---------------------------------------------------------------------------
# Statements


@dataclass(frozen=True)
class Block:
    statements: tuple["Stmt", ...]
    loc: SourceLocation


@dataclass(frozen=True)
class VarDeclStmt:
    ty: TypeName
    name: str
    init: Expr | None
    loc: SourceLocation


@dataclass(frozen=True)
class AssignStmt:
    target: Ident | IndexE
    op: str  # "=", "+=", "-=", "*="
    value: Expr
    loc: SourceLocation


@dataclass(frozen=True)
class IfStmt:
    cond: Expr
    then: Block
    els: Block | None
    loc: SourceLocation


@dataclass(frozen=True)
class WhileStmt:
    cond: Expr
    body: Block
    loc: SourceLocation


@dataclass(frozen=True)
class ForStmt:
    init: "Stmt | None"
    cond: Expr | None
    step: "Stmt | None"
    body: Block
    loc: SourceLocation


@dataclass(frozen=True)
class RequireStmt:
    cond: Expr
    message: str | None
    loc: SourceLocation


@dataclass(frozen=True)
class AssertStmt:
    cond: Expr
    loc: SourceLocation


@dataclass(frozen=True)
class ReturnStmt:
    value: Expr | None
    loc: SourceLocation


@dataclass(frozen=True)
class RevertStmt:
    message: str | None
    loc: SourceLocation


@dataclass(frozen=True)
class EmitStmt:
    event: str
    args: tuple[Expr, ...]
    loc: SourceLocation


@dataclass(frozen=True)
class ExprStmt:
    expr: Expr
    loc: SourceLocation


Stmt = (
    VarDeclStmt
    | AssignStmt
    | IfStmt
    | WhileStmt
    | ForStmt
    | RequireStmt
    | AssertStmt
    | ReturnStmt
    | RevertStmt
    | EmitStmt
    | ExprStmt
)


# ---------------------------------------------------------------------------
# Declarations


@dataclass(frozen=True)
class VarDecl:
    name: str
    ty: TypeName
    loc: SourceLocation


@dataclass(frozen=True)
class EventDecl:
    name: str
    params: tuple[VarDecl, ...]
    loc: SourceLocation


INIT_NAME = "<init>"


@dataclass(frozen=True)
class FunctionDef:
    name: str
    params: tuple[VarDecl, ...]
    visibility: str  # public, external, internal, private
    is_payable: bool
    body: Block
    loc: SourceLocation
    returns: TypeName | None = None
    # constructor-only: explicit base constructor invocations, in source order
    base_invocations: tuple[tuple[str, tuple[Expr, ...]], ...] = ()

    @property
    def is_constructor(self) -> bool:
        return self.name == INIT_NAME


@dataclass(frozen=True)
class ContractDef:
    name: str
    bases: tuple[str, ...]
    state_vars: tuple[VarDecl, ...]
    functions: tuple[FunctionDef, ...]
    events: tuple[EventDecl, ...]
    loc: SourceLocation


@dataclass(frozen=True)
class SourceUnit:
    path: str
    contracts: tuple[ContractDef, ...]
    line_count: int


# ---------------------------------------------------------------------------
# Location-insensitive structural identity


def structural_key(node):
    """Nested-tuple digest of an AST ignoring locations, paths and line counts."""
    if isinstance(node, SourceUnit):
        return ("unit", tuple(structural_key(c) for c in node.contracts))
    if isinstance(node, (IntType, BoolType, AddressType, MappingType)):
        return str(node)
    if isinstance(node, (tuple, list)):
        return tuple(structural_key(x) for x in node)
    if hasattr(node, "__dataclass_fields__"):
        parts = [type(node).__name__]
        for f in fields(node):
            if f.name == "loc":
                continue
            parts.append(structural_key(getattr(node, f.name)))
        return tuple(parts)
    return node


# ---------------------------------------------------------------------------
# Pretty printer (canonical MiniSol text; feeds the round-trip property)


def _expr_src(e: Expr) -> str:
    if isinstance(e, Lit):
        if e.kind == "bool":
            return "true" if e.value else "false"
        return str(e.value)
    if isinstance(e, Ident):
        return e.name
    if isinstance(e, Bin):
        return f"({_expr_src(e.left)} {e.op} {_expr_src(e.right)})"
    if isinstance(e, Un):
        return f"({e.op}{_expr_src(e.operand)})"
    if isinstance(e, IndexE):
        return f"{e.base.name}[{_expr_src(e.key)}]"
    if isinstance(e, MemberE):
        return f"{e.obj}.{e.name}"
    if isinstance(e, ExtCall):
        if e.kind == "call":
            return f"{_expr_src(e.target)}.call{{value: {_expr_src(e.value)}}}()"
        return f"{_expr_src(e.target)}.{e.kind}({_expr_src(e.value)})"
    if isinstance(e, CallE):
        return f"{e.name}({', '.join(_expr_src(a) for a in e.args)})"
    raise TypeError(f"not an expression: {e!r}")


def _stmt_src(s: Stmt, ind: str, out: list[str]) -> None:
    if isinstance(s, VarDeclStmt):
        init = f" = {_expr_src(s.init)}" if s.init is not None else ""
        out.append(f"{ind}{s.ty} {s.name}{init};")
    elif isinstance(s, AssignStmt):
        out.append(f"{ind}{_expr_src(s.target)} {s.op} {_expr_src(s.value)};")
    elif isinstance(s, IfStmt):
        out.append(f"{ind}if ({_expr_src(s.cond)}) {{")
        for sub in s.then.statements:
            _stmt_src(sub, ind + "    ", out)
        if s.els is not None:
            out.append(f"{ind}}} else {{")
            for sub in s.els.statements:
                _stmt_src(sub, ind + "    ", out)
        out.append(f"{ind}}}")
    elif isinstance(s, WhileStmt):
        out.append(f"{ind}while ({_expr_src(s.cond)}) {{")
        for sub in s.body.statements:
            _stmt_src(sub, ind + "    ", out)
        out.append(f"{ind}}}")
    elif isinstance(s, ForStmt):
        init = _inline_stmt_src(s.init) if s.init is not None else ""
        cond = _expr_src(s.cond) if s.cond is not None else ""
        step = _inline_stmt_src(s.step) if s.step is not None else ""
        out.append(f"{ind}for ({init}; {cond}; {step}) {{")
        for sub in s.body.statements:
            _stmt_src(sub, ind + "    ", out)
        out.append(f"{ind}}}")
    elif isinstance(s, RequireStmt):
        msg = f", \"{s.message}\"" if s.message is not None else ""
        out.append(f"{ind}require({_expr_src(s.cond)}{msg});")
    elif isinstance(s, AssertStmt):
        out.append(f"{ind}assert({_expr_src(s.cond)});")
    elif isinstance(s, ReturnStmt):
        val = f" {_expr_src(s.value)}" if s.value is not None else ""
        out.append(f"{ind}return{val};")
    elif isinstance(s, RevertStmt):
        msg = f"\"{s.message}\"" if s.message is not None else ""
        out.append(f"{ind}revert({msg});")
    elif isinstance(s, EmitStmt):
        out.append(f"{ind}emit {s.event}({', '.join(_expr_src(a) for a in s.args)});")
    elif isinstance(s, ExprStmt):
        out.append(f"{ind}{_expr_src(s.expr)};")
    else:
        raise TypeError(f"not a statement: {s!r}")


def _inline_stmt_src(s: Stmt) -> str:
    buf: list[str] = []
    _stmt_src(s, "", buf)
    assert len(buf) == 1
    return buf[0].rstrip(";")


def to_source(unit: SourceUnit) -> str:
    """Render a unit back into canonical MiniSol text."""
    out: list[str] = []
    for c in unit.contracts:
        bases = f" is {', '.join(c.bases)}" if c.bases else ""
        out.append(f"contract {c.name}{bases} {{")
        for ev in c.events:
            params = ", ".join(f"{p.ty} {p.name}" for p in ev.params)
            out.append(f"    event {ev.name}({params});")
        for v in c.state_vars:
            out.append(f"    {v.ty} {v.name};")
        for fn in c.functions:
            params = ", ".join(f"{p.ty} {p.name}" for p in fn.params)
            if fn.is_constructor:
                head = f"    constructor({params})"
                for base, args in fn.base_invocations:
                    head += f" {base}({', '.join(_expr_src(a) for a in args)})"
            else:
                head = f"    function {fn.name}({params}) {fn.visibility}"
                if fn.is_payable:
                    head += " payable"
                if fn.returns is not None:
                    head += f" returns ({fn.returns})"
            out.append(head + " {")
            for s in fn.body.statements:
                _stmt_src(s, "        ", out)
            out.append("    }")
        out.append("}")
    return "\n".join(out) + "\n"
