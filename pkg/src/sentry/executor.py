"""Data-flow execution: instrument the CFG, interpret input vectors, measure
statement coverage.

The interpreter keeps an explicit frame stack (internal calls, re-entries
and constructor chaining never recurse in Python), wraps fixed-width
arithmetic with wrap events, routes division by zero to the revert path,
caps loops and call depth, and rolls storage back on revert. One execution
invokes the constructor then every public function once, each with its
slice of the chromosome; storage persists between invocations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import astnodes as A
from . import ir
from .dataflow import ATTACKER_ADDRESS, InputSlot
from .lowering import LoweredContract

INITIAL_BALANCE = 1 << 255  # ample funds so value transfers usually succeed


@dataclass
class Limits:
    max_loop_iter: int = 256
    max_depth: int = 1024
    total_steps: int = 1_000_000
    reentry_count: int = 1


@dataclass
class ExecTrace:
    events: list[dict] = field(default_factory=list)
    depth_high_water: int = 0
    truncated: bool = False

    def add(self, kind: str, **fields) -> dict:
        ev = {"id": len(self.events), "kind": kind}
        ev.update(fields)
        self.events.append(ev)
        return ev

    def signature(self) -> tuple:
        def norm(v):
            return tuple(v) if isinstance(v, list) else v
        return tuple(
            tuple((k, norm(v)) for k, v in sorted(e.items())) for e in self.events)

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(e, separators=(", ", ": ")) for e in self.events)


@dataclass
class CoverageCounters:
    block_counts: dict[tuple[str, int], int] = field(default_factory=dict)
    regular_counts: dict[tuple[str, int, int], int] = field(default_factory=dict)
    jump_counts: dict[tuple[str, int, int], int] = field(default_factory=dict)

    def merge(self, other: "CoverageCounters") -> "CoverageCounters":
        out = CoverageCounters(
            dict(self.block_counts), dict(self.regular_counts), dict(self.jump_counts))
        for src, dst in ((other.block_counts, out.block_counts),
                         (other.regular_counts, out.regular_counts),
                         (other.jump_counts, out.jump_counts)):
            for k, v in src.items():
                dst[k] = dst.get(k, 0) + v
        return out

    @property
    def covered_regular(self) -> int:
        return sum(1 for v in self.regular_counts.values() if v > 0)

    @property
    def covered_jumps(self) -> int:
        return sum(1 for v in self.jump_counts.values() if v > 0)


def coverage(counters: CoverageCounters, census: ir.Census) -> float:
    """Covered statements over the census total; an empty program counts as
    fully covered."""
    total = census.total
    if total == 0:
        return 1.0
    return (counters.covered_jumps + counters.covered_regular) / total


# ---------------------------------------------------------------------------
# Instrumentation


@dataclass
class InstrumentedFunction:
    fn: ir.Func
    block_counters: list[int]
    # (block, index, "regular"|"jump") for every countable statement
    stmt_counters: list[tuple[int, int, str]]
    # before/after markers around each jump instruction's target position
    target_counters: list[tuple[int, str]]


def instrument(fn: ir.Func | InstrumentedFunction) -> InstrumentedFunction:
    """Attach counters per block, per statement and around jump targets.
    Instrumenting an already-instrumented function is refused."""
    if isinstance(fn, InstrumentedFunction):
        raise ValueError(f"{fn.fn.fn_id} is already instrumented")
    stmt_counters: list[tuple[int, int, str]] = []
    target_blocks: set[int] = set()
    for b in fn.blocks:
        for idx, instr in enumerate(b.instrs):
            if isinstance(instr, ir.Phi):
                continue
            k = ir.jump_kind_index(instr)
            stmt_counters.append((b.id, idx, "regular" if k is None else "jump"))
            if isinstance(instr, ir.Jump):
                target_blocks.add(instr.target)
            elif isinstance(instr, ir.JumpI):
                target_blocks.add(instr.then_target)
                target_blocks.add(instr.else_target)
    target_counters = [(bid, side) for bid in sorted(target_blocks)
                       for side in ("before", "after")]
    return InstrumentedFunction(
        fn=fn, block_counters=[b.id for b in fn.blocks],
        stmt_counters=stmt_counters, target_counters=target_counters)


# ---------------------------------------------------------------------------
# Program = every root contract of a unit, ready to execute


@dataclass
class Program:
    roots: list[LoweredContract]
    funcs: dict[str, InstrumentedFunction]  # fn_id -> instrumented body
    slots: list[InputSlot]  # full chromosome layout
    census: ir.Census
    root_of: dict[str, str]  # fn_id -> root name

    def declared_count(self) -> int:
        return sum(1 for s in self.slots
                   if s.origin[0] not in ("msg_value", "timestamp"))


def build_program(
    roots: list[LoweredContract],
    slots_by_root: dict[str, list[InputSlot]],
) -> Program:
    """Concatenate per-root chromosomes: declared slots root by root, then
    msg.value genes for payable entry points, then the shared timestamp."""
    funcs: dict[str, InstrumentedFunction] = {}
    root_of: dict[str, str] = {}
    census = ir.EMPTY_CENSUS
    slots: list[InputSlot] = []

    def add(slot: InputSlot):
        slots.append(InputSlot(len(slots), slot.origin, slot.ty, slot.bounds))

    for lc in roots:
        for fn_id, fn in lc.funcs.items():
            funcs[fn_id] = instrument(fn)
            root_of[fn_id] = lc.root
            census = census + ir.statement_census(fn)
        for s in slots_by_root[lc.root]:
            add(s)
    for lc in roots:
        for fn_id in _entry_order(lc):
            if lc.funcs[fn_id].is_payable:
                add(InputSlot(0, ("msg_value", fn_id), A.UINT256, (0, (1 << 64) - 1)))
    add(InputSlot(0, ("timestamp",), A.UINT256, (0, (1 << 32) - 1)))
    return Program(roots=roots, funcs=funcs, slots=slots, census=census, root_of=root_of)


def _entry_order(lc: LoweredContract) -> list[str]:
    order = []
    if lc.entry_ctor is not None:
        order.append(lc.entry_ctor)
    order.extend(lc.public_order)
    return order


# ---------------------------------------------------------------------------
# Interpreter


class _RevertSignal(Exception):
    def __init__(self, reason: str):
        self.reason = reason


class _Halt(Exception):
    pass


@dataclass
class _Frame:
    fn_id: str
    block: int
    idx: int
    env: dict[str, int]
    msg_value: int
    # completion: ("top",) | ("call", caller_index, dest_name|None)
    #           | ("reentry", caller_index, dest_name|None, snapshot)
    completion: tuple
    loop_counts: dict[int, int] = field(default_factory=dict)


def _reduce(value: int, ty: A.TypeName) -> int:
    lo, hi = A.type_bounds(ty)
    span = hi - lo + 1
    return ((value - lo) % span) + lo


def arith(op: str, a: int, b: int, ty: A.IntType) -> tuple[int, int]:
    """Raw unbounded result and its fixed-width reduction.
    Division/modulo truncate toward zero; zero divisors revert upstream."""
    if op == "+":
        raw = a + b
    elif op == "-":
        raw = a - b
    elif op == "*":
        raw = a * b
    elif op == "/":
        q = abs(a) // abs(b)
        raw = -q if (a < 0) != (b < 0) else q
    elif op == "%":
        r = abs(a) % abs(b)
        raw = -r if a < 0 else r
    else:
        raise ValueError(f"not arithmetic: {op}")
    return raw, _reduce(raw, ty)


class _Machine:
    def __init__(self, program: Program, values: dict[tuple, int], limits: Limits):
        self.program = program
        self.values = values  # slot origin -> gene value
        self.limits = limits
        self.trace = ExecTrace()
        self.counters = CoverageCounters()
        self.storage: dict[tuple[str, int, int | None], int] = {}
        self.balance = INITIAL_BALANCE
        self.frames: list[_Frame] = []
        self.steps = 0
        self.reentry_budget = 0
        self.invocation: tuple[str, list[int], int] | None = None

    # -- plumbing -----------------------------------------------------------

    def _snapshot(self):
        return dict(self.storage), self.balance

    def _restore(self, snap):
        self.storage, self.balance = dict(snap[0]), snap[1]

    def _tick(self):
        self.steps += 1
        if self.steps > self.limits.total_steps:
            self.trace.truncated = True
            self.trace.add("revert", fn=self.frames[-1].fn_id if self.frames else "",
                           reason="step budget exhausted")
            raise _Halt()

    def _fn(self, fn_id: str) -> ir.Func:
        return self.program.funcs[fn_id].fn

    def _enter_block(self, frame: _Frame, block: int, from_block: int | None):
        fn = self._fn(frame.fn_id)
        frame.block = block
        frame.idx = 0
        self.counters.block_counts[(frame.fn_id, block)] = \
            self.counters.block_counts.get((frame.fn_id, block), 0) + 1
        self.trace.add("block", fn=frame.fn_id, block=block)
        if from_block is not None:
            news = {}
            for instr in fn.blocks[block].instrs:
                if isinstance(instr, ir.JumpDest):
                    continue
                if not isinstance(instr, ir.Phi):
                    break
                src = instr.incoming.get(from_block)
                news[instr.dest.name] = frame.env.get(src.name, 0) if src else 0
            frame.env.update(news)

    def _push(self, frame: _Frame, from_block=None):
        if len(self.frames) >= self.limits.max_depth:
            self.trace.depth_high_water = max(
                self.trace.depth_high_water, self.limits.max_depth)
            raise _RevertSignal("call depth limit")
        self.frames.append(frame)
        self.trace.depth_high_water = max(self.trace.depth_high_water, len(self.frames))
        self._enter_block(frame, self._fn(frame.fn_id).entry, from_block)

    # -- expressions ----------------------------------------------------------

    def _eval(self, e: ir.IRExpr, frame: _Frame) -> int:
        if isinstance(e, ir.Const):
            return e.value
        if isinstance(e, ir.Local):
            return frame.env.get(e.name, 0)
        if isinstance(e, ir.SLoad):
            key = self._eval(e.key, frame) if e.key is not None else None
            root = self.program.root_of[frame.fn_id]
            return self.storage.get((root, e.slot, key), 0)
        if isinstance(e, ir.EnvRead):
            if e.kind == "timestamp":
                return self.values[("timestamp",)]
            if e.kind == "sender":
                return ATTACKER_ADDRESS
            if e.kind == "value":
                return frame.msg_value
            if e.kind == "balance":
                return self.balance
            raise ValueError(e.kind)
        if isinstance(e, ir.BinOp):
            a = self._eval(e.left, frame)
            if e.op == "&&" or e.op == "||":
                raise AssertionError("boolean ops are lowered to jumps")
            b = self._eval(e.right, frame)
            if e.op in ("+", "-", "*", "/", "%"):
                if e.op in ("/", "%") and b == 0:
                    raise _RevertSignal("division by zero")
                raw, reduced = arith(e.op, a, b, e.ty)
                if raw != reduced:
                    self.trace.add(
                        "wrap", fn=frame.fn_id, op=e.op, width=e.ty.bits,
                        raw=raw, reduced=reduced,
                        line=self._cur_loc(frame).line, col=self._cur_loc(frame).column)
                return reduced
            if e.op == "<":
                return int(a < b)
            if e.op == "<=":
                return int(a <= b)
            if e.op == ">":
                return int(a > b)
            if e.op == ">=":
                return int(a >= b)
            if e.op == "==":
                return int(a == b)
            if e.op == "!=":
                return int(a != b)
            raise ValueError(e.op)
        if isinstance(e, ir.UnOp):
            v = self._eval(e.operand, frame)
            if e.op == "!":
                return int(not v)
            return _reduce(-v, e.ty)
        raise TypeError(f"cannot evaluate {e!r}")

    def _cur_loc(self, frame: _Frame) -> A.SourceLocation:
        return self._fn(frame.fn_id).blocks[frame.block].instrs[frame.idx].loc

    # -- instructions ------------------------------------------------------------

    def _count_stmt(self, frame: _Frame, instr: ir.Instr):
        k = ir.jump_kind_index(instr)
        key = (frame.fn_id, frame.block, frame.idx)
        target = self.counters.jump_counts if k is not None else self.counters.regular_counts
        target[key] = target.get(key, 0) + 1

    def step(self):
        frame = self.frames[-1]
        fn = self._fn(frame.fn_id)
        instr = fn.blocks[frame.block].instrs[frame.idx]
        if isinstance(instr, ir.Phi):  # applied at block entry
            frame.idx += 1
            return
        self._tick()
        self._count_stmt(frame, instr)

        if isinstance(instr, ir.JumpDest):
            frame.idx += 1
        elif isinstance(instr, ir.Assign):
            if isinstance(instr.expr, ir.IRCall):
                self._do_call(frame, instr)
                return
            value = self._eval(instr.expr, frame)
            self._do_store(frame, instr.dest, value, instr.loc)
            frame.idx += 1
        elif isinstance(instr, ir.ExtCallInstr):
            self._do_extcall(frame, instr)
        elif isinstance(instr, ir.LogEmit):
            args = [self._eval(a, frame) for a in instr.args]
            self.trace.add("log", fn=frame.fn_id, event=instr.event, args=args)
            frame.idx += 1
        elif isinstance(instr, ir.Jump):
            self._enter_block(frame, instr.target, frame.block)
        elif isinstance(instr, ir.JumpI):
            count = frame.loop_counts.get(frame.block, 0) + 1
            frame.loop_counts[frame.block] = count
            forced = count > self.limits.max_loop_iter
            taken = bool(self._eval(instr.cond, frame)) and not forced
            self.trace.add("branch", fn=frame.fn_id, block=frame.block,
                           taken=taken, forced=forced,
                           line=instr.loc.line, col=instr.loc.column)
            src = frame.block
            self._enter_block(frame, instr.then_target if taken else instr.else_target, src)
        elif isinstance(instr, ir.Return):
            value = self._eval(instr.value, frame) if instr.value is not None else 0
            self.trace.add("return", fn=frame.fn_id)
            self._complete_frame(value)
        elif isinstance(instr, ir.Stop):
            self.trace.add("return", fn=frame.fn_id)
            self._complete_frame(0)
        elif isinstance(instr, ir.Revert):
            raise _RevertSignal(instr.reason or "revert")
        else:
            raise TypeError(f"cannot execute {instr!r}")

    def _do_store(self, frame: _Frame, dest, value: int, loc: A.SourceLocation):
        if isinstance(dest, ir.Local):
            frame.env[dest.name] = value
            return
        key = self._eval(dest.key, frame) if dest.key is not None else None
        root = self.program.root_of[frame.fn_id]
        old = self.storage.get((root, dest.slot, key), 0)
        self.storage[(root, dest.slot, key)] = value
        self.trace.add("sstore", fn=frame.fn_id, slot=dest.slot,
                       key=key, old=old, new=value,
                       line=loc.line, col=loc.column)

    def _do_call(self, frame: _Frame, instr: ir.Assign):
        call: ir.IRCall = instr.expr
        args = [self._eval(a, frame) for a in call.args]
        callee = self._fn(call.target)
        env = {}
        for (name, _ty), v in zip(callee.params, args):
            env[f"{name}.1"] = v
        dest = instr.dest.name if isinstance(instr.dest, ir.Local) else None
        self._push(_Frame(
            fn_id=call.target, block=0, idx=0, env=env, msg_value=frame.msg_value,
            completion=("call", len(self.frames) - 1, dest)))

    def _do_extcall(self, frame: _Frame, instr: ir.ExtCallInstr):
        value = self._eval(instr.value, frame)
        self._eval(instr.target, frame)
        success = value <= self.balance
        self.trace.add(
            "extcall", fn=frame.fn_id, call_kind=instr.call_kind, value=value,
            checked=instr.checked, ok=success, depth=len(self.frames),
            line=instr.loc.line, col=instr.loc.column)
        if not success:
            if instr.call_kind == "transfer":
                raise _RevertSignal("transfer failed")
            self._finish_extcall(frame, instr, 0)
            return
        # gas-forwarding calls with value hand control to the attacker, who
        # re-enters the public function currently being exercised
        if (instr.call_kind == "call" and value > 0 and self.reentry_budget > 0
                and self.invocation is not None
                and self._fn(self.invocation[0]).name != A.INIT_NAME
                and len(self.frames) < self.limits.max_depth):
            self.reentry_budget -= 1
            snap = self._snapshot()
            self.balance -= value
            inv_fn, inv_args, _ = self.invocation
            callee = self._fn(inv_fn)
            env = {f"{name}.1": v for (name, _ty), v in zip(callee.params, inv_args)}
            dest = instr.dest.name if instr.dest is not None else None
            self._push(_Frame(
                fn_id=inv_fn, block=0, idx=0, env=env, msg_value=0,
                completion=("reentry", len(self.frames) - 1, dest, snap)))
            return
        self.balance -= value
        self._finish_extcall(frame, instr, 1)

    def _finish_extcall(self, frame: _Frame, instr: ir.ExtCallInstr, ok: int):
        if instr.dest is not None:
            frame.env[instr.dest.name] = ok
        frame.idx += 1

    def _complete_frame(self, value: int):
        frame = self.frames.pop()
        kind = frame.completion[0]
        if kind == "top":
            return
        if kind == "call":
            _, caller_idx, dest = frame.completion
            caller = self.frames[caller_idx]
            if dest is not None:
                caller.env[dest] = value
            caller.idx += 1
            return
        if kind == "reentry":
            _, caller_idx, dest, _snap = frame.completion
            caller = self.frames[caller_idx]
            if dest is not None:
                caller.env[dest] = 1
            caller.idx += 1
            return
        raise ValueError(kind)

    def _unwind(self, reason: str):
        """Pop frames to the nearest invocation boundary and roll its state back."""
        self.trace.add("revert", fn=self.frames[-1].fn_id if self.frames else "",
                       reason=reason)
        while self.frames:
            frame = self.frames.pop()
            kind = frame.completion[0]
            if kind == "top":
                return "top"
            if kind == "reentry":
                _, caller_idx, dest, snap = frame.completion
                self._restore(snap)
                caller = self.frames[caller_idx]
                if dest is not None:
                    caller.env[dest] = 0
                caller.idx += 1
                return "reentry"
        return "top"

    # -- invocation driver ----------------------------------------------------------

    def run_invocation(self, fn_id: str, args: list[int], msg_value: int):
        base = len(self.frames)
        snap = self._snapshot()
        self.balance += msg_value
        self.reentry_budget = self.limits.reentry_count
        self.invocation = (fn_id, args, msg_value)
        callee = self._fn(fn_id)
        env = {f"{name}.1": v for (name, _ty), v in zip(callee.params, args)}
        try:
            self._push(_Frame(fn_id=fn_id, block=0, idx=0, env=env,
                              msg_value=msg_value, completion=("top",)))
        except _RevertSignal as sig:
            self.trace.add("revert", fn=fn_id, reason=sig.reason)
            self._restore(snap)
            return
        while len(self.frames) > base:
            try:
                self.step()
            except _RevertSignal as sig:
                boundary = self._unwind(sig.reason)
                if boundary == "top":
                    self._restore(snap)
                    return


def execute(
    program: Program, input_vector: list[int], limits: Limits | None = None
) -> tuple[ExecTrace, CoverageCounters]:
    """Deterministically interpret one chromosome across the whole program."""
    limits = limits or Limits()
    if len(input_vector) != len(program.slots):
        raise ValueError(
            f"input vector has {len(input_vector)} genes, program wants "
            f"{len(program.slots)}")
    values: dict[tuple, int] = {}
    for slot, v in zip(program.slots, input_vector):
        if not slot.bounds[0] <= v <= slot.bounds[1]:
            raise ValueError(f"gene {slot.index} out of bounds: {v}")
        values[slot.origin] = v

    machine = _Machine(program, values, limits)
    try:
        for lc in program.roots:
            for slot in program.slots:
                kind = slot.origin[0]
                if kind == "storage" and slot.origin[1] == lc.root:
                    machine.storage[(lc.root, slot.origin[2], None)] = values[slot.origin]
                elif kind == "mapping" and slot.origin[1] == lc.root:
                    machine.storage[(lc.root, slot.origin[2], slot.origin[3])] = \
                        values[slot.origin]
                elif kind == "mapping_attacker" and slot.origin[1] == lc.root:
                    machine.storage[(lc.root, slot.origin[2], ATTACKER_ADDRESS)] = \
                        values[slot.origin]
            for fn_id in _entry_order(lc):
                fn = machine._fn(fn_id)
                args = [values[("param", fn_id, name)] for name, _ty in fn.params]
                msg_value = values.get(("msg_value", fn_id), 0) if fn.is_payable else 0
                machine.run_invocation(fn_id, args, msg_value)
    except _Halt:
        pass
    return machine.trace, machine.counters
