"""Recursive-descent parser for MiniSol, plus contract size classification.

The grammar is frozen in docs/grammar.md. Anything outside it raises
MinisolSyntaxError (bad shape) or UnsupportedFeature (known Solidity
construct we refuse to mis-analyze).
"""

from __future__ import annotations

import enum

from . import astnodes as A
from .errors import MinisolSyntaxError, UnsupportedFeature
from .lexer import Token, tokenize

_MEMBERS = {
    ("msg", "sender"), ("msg", "value"),
    ("block", "timestamp"), ("this", "balance"),
}


class SizeClass(enum.Enum):
    Simple = "simple"
    Ordinary = "ordinary"
    Complex = "complex"


def classify_size(unit: A.SourceUnit) -> SizeClass:
    """Bucket a unit by physical line count: <50, 50..300 (closed), >300."""
    if unit.line_count < 50:
        return SizeClass.Simple
    if unit.line_count <= 300:
        return SizeClass.Ordinary
    return SizeClass.Complex


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.pos = 0

    # -- token plumbing ----------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def at(self, text: str) -> bool:
        return self.peek().text == text and self.peek().kind in ("op", "keyword", "type")

    def accept(self, text: str) -> Token | None:
        if self.at(text):
            return self.next()
        return None

    def expect(self, text: str) -> Token:
        t = self.peek()
        if not self.at(text):
            raise MinisolSyntaxError(
                f"expected {text!r}, found {t.text or 'end of input'!r}", t.line, t.column)
        return self.next()

    def expect_ident(self, what: str) -> Token:
        t = self.peek()
        if t.kind != "ident":
            raise MinisolSyntaxError(
                f"expected {what}, found {t.text or 'end of input'!r}", t.line, t.column)
        return self.next()

    def loc(self, t: Token) -> A.SourceLocation:
        return A.SourceLocation(t.line, t.column)

    # -- grammar -----------------------------------------------------------

    def source_unit(self, path: str, line_count: int) -> A.SourceUnit:
        contracts = []
        names = set()
        while self.peek().kind != "eof":
            c = self.contract()
            if c.name in names:
                raise MinisolSyntaxError(
                    f"duplicate contract name {c.name}", c.loc.line, c.loc.column)
            names.add(c.name)
            contracts.append(c)
        return A.SourceUnit(path=path, contracts=tuple(contracts), line_count=line_count)

    def contract(self) -> A.ContractDef:
        kw = self.expect("contract")
        name = self.expect_ident("contract name").text
        bases: list[str] = []
        if self.accept("is"):
            bases.append(self.expect_ident("base contract name").text)
            while self.accept(","):
                bases.append(self.expect_ident("base contract name").text)
        self.expect("{")
        state_vars: list[A.VarDecl] = []
        functions: list[A.FunctionDef] = []
        events: list[A.EventDecl] = []
        saw_ctor = False
        while not self.at("}"):
            t = self.peek()
            if self.at("function"):
                functions.append(self.function())
            elif self.at("constructor"):
                if saw_ctor:
                    raise MinisolSyntaxError("duplicate constructor", t.line, t.column)
                saw_ctor = True
                functions.append(self.constructor())
            elif self.at("event"):
                events.append(self.event_decl())
            elif t.kind == "type" or t.text in ("bool", "address", "mapping"):
                state_vars.append(self.state_var())
            else:
                raise MinisolSyntaxError(
                    f"expected contract member, found {t.text or 'end of input'!r}",
                    t.line, t.column)
        self.expect("}")
        seen = set()
        for v in state_vars:
            if v.name in seen:
                raise MinisolSyntaxError(
                    f"duplicate state variable {v.name}", v.loc.line, v.loc.column)
            seen.add(v.name)
        return A.ContractDef(
            name=name, bases=tuple(bases), state_vars=tuple(state_vars),
            functions=tuple(functions), events=tuple(events), loc=self.loc(kw))

    def type_name(self) -> A.TypeName:
        t = self.peek()
        if t.kind == "type":
            self.next()
            word = t.text
            signed = word.startswith("int")
            digits = word[3:] if signed else word[4:]
            bits = int(digits) if digits else 256
            return A.IntType(signed, bits)
        if self.accept("bool"):
            return A.BOOL
        if self.accept("address"):
            return A.ADDRESS
        if self.accept("mapping"):
            self.expect("(")
            key = self.type_name()
            if isinstance(key, A.MappingType):
                raise UnsupportedFeature("mapping keys must be scalar", t.line, t.column)
            self.expect("=>")
            value = self.type_name()
            if isinstance(value, A.MappingType):
                raise UnsupportedFeature("nested mappings", t.line, t.column)
            self.expect(")")
            return A.MappingType(key, value)
        raise MinisolSyntaxError(
            f"expected type, found {t.text or 'end of input'!r}", t.line, t.column)

    def state_var(self) -> A.VarDecl:
        t = self.peek()
        ty = self.type_name()
        name = self.expect_ident("state variable name")
        if self.at("="):
            raise UnsupportedFeature(
                "state variable initializers (use a constructor)", name.line, name.column)
        self.expect(";")
        return A.VarDecl(name=name.text, ty=ty, loc=self.loc(t))

    def params(self) -> tuple[A.VarDecl, ...]:
        self.expect("(")
        out: list[A.VarDecl] = []
        if not self.at(")"):
            while True:
                t = self.peek()
                ty = self.type_name()
                if isinstance(ty, A.MappingType):
                    raise UnsupportedFeature("mapping-typed parameters", t.line, t.column)
                name = self.expect_ident("parameter name").text
                if any(p.name == name for p in out):
                    raise MinisolSyntaxError(f"duplicate parameter {name}", t.line, t.column)
                out.append(A.VarDecl(name=name, ty=ty, loc=self.loc(t)))
                if not self.accept(","):
                    break
        self.expect(")")
        return tuple(out)

    def function(self) -> A.FunctionDef:
        kw = self.expect("function")
        name = self.expect_ident("function name").text
        params = self.params()
        t = self.peek()
        if t.text not in ("public", "external", "internal", "private"):
            raise MinisolSyntaxError(
                f"expected visibility, found {t.text or 'end of input'!r}", t.line, t.column)
        visibility = self.next().text
        is_payable = self.accept("payable") is not None
        returns = None
        if self.accept("returns"):
            self.expect("(")
            returns = self.type_name()
            self.expect(")")
        body = self.block()
        return A.FunctionDef(
            name=name, params=params, visibility=visibility, is_payable=is_payable,
            body=body, loc=self.loc(kw), returns=returns)

    def constructor(self) -> A.FunctionDef:
        kw = self.expect("constructor")
        params = self.params()
        invocations: list[tuple[str, tuple[A.Expr, ...]]] = []
        while self.peek().kind == "ident":
            base = self.next().text
            self.expect("(")
            args: list[A.Expr] = []
            if not self.at(")"):
                args.append(self.expr())
                while self.accept(","):
                    args.append(self.expr())
            self.expect(")")
            invocations.append((base, tuple(args)))
        body = self.block()
        return A.FunctionDef(
            name=A.INIT_NAME, params=params, visibility="public", is_payable=False,
            body=body, loc=self.loc(kw), base_invocations=tuple(invocations))

    def event_decl(self) -> A.EventDecl:
        kw = self.expect("event")
        name = self.expect_ident("event name").text
        params = self.params()
        self.expect(";")
        return A.EventDecl(name=name, params=params, loc=self.loc(kw))

    def block(self) -> A.Block:
        t = self.expect("{")
        stmts: list[A.Stmt] = []
        while not self.at("}"):
            stmts.append(self.statement())
        self.expect("}")
        return A.Block(statements=tuple(stmts), loc=self.loc(t))

    def statement(self) -> A.Stmt:
        t = self.peek()
        if self.at("{"):
            raise UnsupportedFeature("bare nested blocks", t.line, t.column)
        if self.at("if"):
            return self.if_stmt()
        if self.at("while"):
            self.next()
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            body = self.block()
            return A.WhileStmt(cond=cond, body=body, loc=self.loc(t))
        if self.at("for"):
            return self.for_stmt()
        if self.at("require"):
            self.next()
            self.expect("(")
            cond = self.expr()
            message = None
            if self.accept(","):
                message = self.expect_string()
            self.expect(")")
            self.expect(";")
            return A.RequireStmt(cond=cond, message=message, loc=self.loc(t))
        if self.at("assert"):
            self.next()
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            self.expect(";")
            return A.AssertStmt(cond=cond, loc=self.loc(t))
        if self.at("return"):
            self.next()
            value = None if self.at(";") else self.expr()
            self.expect(";")
            return A.ReturnStmt(value=value, loc=self.loc(t))
        if self.at("revert"):
            self.next()
            message = None
            if self.accept("("):
                if not self.at(")"):
                    message = self.expect_string()
                self.expect(")")
            self.expect(";")
            return A.RevertStmt(message=message, loc=self.loc(t))
        if self.at("emit"):
            self.next()
            name = self.expect_ident("event name").text
            self.expect("(")
            args: list[A.Expr] = []
            if not self.at(")"):
                args.append(self.expr())
                while self.accept(","):
                    args.append(self.expr())
            self.expect(")")
            self.expect(";")
            return A.EmitStmt(event=name, args=tuple(args), loc=self.loc(t))
        if t.kind == "type" or t.text in ("bool", "address", "mapping"):
            return self.var_decl_stmt()
        return self.assign_or_expr_stmt()

    def if_stmt(self) -> A.IfStmt:
        t = self.expect("if")
        self.expect("(")
        cond = self.expr()
        self.expect(")")
        then = self.block()
        els = None
        if self.accept("else"):
            if self.at("if"):
                nested = self.if_stmt()
                els = A.Block(statements=(nested,), loc=nested.loc)
            else:
                els = self.block()
        return A.IfStmt(cond=cond, then=then, els=els, loc=self.loc(t))

    def for_stmt(self) -> A.ForStmt:
        t = self.expect("for")
        self.expect("(")
        init = None if self.at(";") else self.simple_stmt_no_semi()
        self.expect(";")
        cond = None if self.at(";") else self.expr()
        self.expect(";")
        step = None if self.at(")") else self.simple_stmt_no_semi()
        self.expect(")")
        body = self.block()
        return A.ForStmt(init=init, cond=cond, step=step, body=body, loc=self.loc(t))

    def simple_stmt_no_semi(self) -> A.Stmt:
        t = self.peek()
        if t.kind == "type" or t.text in ("bool", "address"):
            ty = self.type_name()
            name = self.expect_ident("variable name").text
            init = None
            if self.accept("="):
                init = self.expr()
            return A.VarDeclStmt(ty=ty, name=name, init=init, loc=self.loc(t))
        target = self.postfix_expr()
        if not isinstance(target, (A.Ident, A.IndexE)):
            raise MinisolSyntaxError("expected assignable target", t.line, t.column)
        op = self.peek()
        if op.text not in ("=", "+=", "-=", "*="):
            raise MinisolSyntaxError(
                f"expected assignment operator, found {op.text!r}", op.line, op.column)
        self.next()
        value = self.expr()
        return A.AssignStmt(target=target, op=op.text, value=value, loc=self.loc(t))

    def var_decl_stmt(self) -> A.Stmt:
        t = self.peek()
        ty = self.type_name()
        if isinstance(ty, A.MappingType):
            raise UnsupportedFeature("local mapping variables", t.line, t.column)
        name = self.expect_ident("variable name").text
        init = None
        if self.accept("="):
            init = self.expr()
        self.expect(";")
        return A.VarDeclStmt(ty=ty, name=name, init=init, loc=self.loc(t))

    def assign_or_expr_stmt(self) -> A.Stmt:
        t = self.peek()
        e = self.expr()
        if isinstance(e, (A.Ident, A.IndexE)) and self.peek().text in ("=", "+=", "-=", "*="):
            op = self.next().text
            value = self.expr()
            self.expect(";")
            return A.AssignStmt(target=e, op=op, value=value, loc=self.loc(t))
        self.expect(";")
        return A.ExprStmt(expr=e, loc=self.loc(t))

    def expect_string(self) -> str:
        t = self.peek()
        if t.kind != "string":
            raise MinisolSyntaxError(
                f"expected string literal, found {t.text or 'end of input'!r}",
                t.line, t.column)
        self.next()
        return t.text

    # -- expressions (precedence climbing) ----------------------------------

    def expr(self) -> A.Expr:
        return self.or_expr()

    def or_expr(self) -> A.Expr:
        left = self.and_expr()
        while self.at("||"):
            t = self.next()
            left = A.Bin(op="||", left=left, right=self.and_expr(), loc=self.loc(t))
        return left

    def and_expr(self) -> A.Expr:
        left = self.equality()
        while self.at("&&"):
            t = self.next()
            left = A.Bin(op="&&", left=left, right=self.equality(), loc=self.loc(t))
        return left

    def equality(self) -> A.Expr:
        left = self.relational()
        while self.peek().text in ("==", "!="):
            t = self.next()
            left = A.Bin(op=t.text, left=left, right=self.relational(), loc=self.loc(t))
        return left

    def relational(self) -> A.Expr:
        left = self.additive()
        while self.peek().text in ("<", "<=", ">", ">="):
            t = self.next()
            left = A.Bin(op=t.text, left=left, right=self.additive(), loc=self.loc(t))
        return left

    def additive(self) -> A.Expr:
        left = self.multiplicative()
        while self.peek().text in ("+", "-"):
            t = self.next()
            left = A.Bin(op=t.text, left=left, right=self.multiplicative(), loc=self.loc(t))
        return left

    def multiplicative(self) -> A.Expr:
        left = self.unary()
        while self.peek().text in ("*", "/", "%"):
            t = self.next()
            left = A.Bin(op=t.text, left=left, right=self.unary(), loc=self.loc(t))
        return left

    def unary(self) -> A.Expr:
        t = self.peek()
        if t.text in ("!", "-"):
            self.next()
            return A.Un(op=t.text, operand=self.unary(), loc=self.loc(t))
        return self.postfix_expr()

    def postfix_expr(self) -> A.Expr:
        e = self.primary()
        while True:
            t = self.peek()
            if self.at("["):
                if not isinstance(e, A.Ident):
                    raise MinisolSyntaxError("can only index a named mapping", t.line, t.column)
                self.next()
                key = self.expr()
                self.expect("]")
                e = A.IndexE(base=e, key=key, loc=self.loc(t))
            elif self.at("."):
                self.next()
                member = self.next()
                if member.text in ("send", "transfer"):
                    self.expect("(")
                    value = self.expr()
                    self.expect(")")
                    e = A.ExtCall(kind=member.text, target=e, value=value, loc=self.loc(t))
                elif member.text == "call":
                    self.expect("{")
                    self.expect("value")
                    self.expect(":")
                    value = self.expr()
                    self.expect("}")
                    self.expect("(")
                    if self.peek().kind == "string":
                        self.next()
                    self.expect(")")
                    e = A.ExtCall(kind="call", target=e, value=value, loc=self.loc(t))
                else:
                    raise MinisolSyntaxError(
                        f"unknown member {member.text!r}", member.line, member.column)
            else:
                return e

    def primary(self) -> A.Expr:
        t = self.peek()
        if t.kind == "number":
            self.next()
            return A.Lit(value=t.value, kind="int", loc=self.loc(t))
        if t.text in ("true", "false"):
            self.next()
            return A.Lit(value=1 if t.text == "true" else 0, kind="bool", loc=self.loc(t))
        if t.text in ("msg", "block", "this"):
            self.next()
            self.expect(".")
            member = self.next()
            if (t.text, member.text) not in _MEMBERS:
                raise MinisolSyntaxError(
                    f"unknown member {t.text}.{member.text}", member.line, member.column)
            return A.MemberE(obj=t.text, name=member.text, loc=self.loc(t))
        if t.kind == "ident":
            self.next()
            if self.at("("):
                self.next()
                args: list[A.Expr] = []
                if not self.at(")"):
                    args.append(self.expr())
                    while self.accept(","):
                        args.append(self.expr())
                self.expect(")")
                return A.CallE(name=t.text, args=tuple(args), loc=self.loc(t))
            return A.Ident(name=t.text, loc=self.loc(t))
        if self.at("("):
            self.next()
            e = self.expr()
            self.expect(")")
            return e
        raise MinisolSyntaxError(
            f"expected expression, found {t.text or 'end of input'!r}", t.line, t.column)


def parse(source_text: str, path: str = "<memory>") -> A.SourceUnit:
    """Parse MiniSol text into a SourceUnit with full source locations."""
    line_count = len(source_text.splitlines())
    tokens = tokenize(source_text)
    return _Parser(tokens).source_unit(path, line_count)
