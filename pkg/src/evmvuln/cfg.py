"""Basic-block partitioning and jump recovery by abstract stack execution.

The abstract domain tracks only constants moved by PUSH/DUP/SWAP/POP; every
other opcode pops its arity and pushes Unknown. One merged entry state is
kept per block, so the fixpoint is reached after at most ``cap + 1`` state
changes per block.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .disasm import DisassemblyListing, Instruction
from .opcodes import is_dup, is_push, is_swap, lookup

STACK_CAP = 1024

Unknown = None  # abstract value for anything that is not a pushed constant


class Terminator(str, Enum):
    JUMP = "Jump"
    JUMPI = "JumpI"
    STOP = "Stop"
    RETURN = "Return"
    REVERT = "Revert"
    SELFDESTRUCT = "SelfDestruct"
    INVALID = "Invalid"
    FALLTHROUGH = "FallThrough"


_TERMINATOR_OF = {
    "JUMP": Terminator.JUMP,
    "JUMPI": Terminator.JUMPI,
    "STOP": Terminator.STOP,
    "RETURN": Terminator.RETURN,
    "REVERT": Terminator.REVERT,
    "SELFDESTRUCT": Terminator.SELFDESTRUCT,
    "INVALID": Terminator.INVALID,
    "UNKNOWN": Terminator.INVALID,
}


@dataclass(frozen=True, slots=True)
class BasicBlock:
    id: int
    instructions: tuple[Instruction, ...]
    terminator: Terminator

    @property
    def starts_with_jumpdest(self) -> bool:
        return bool(self.instructions) and self.instructions[0].mnemonic == "JUMPDEST"

    @property
    def end(self) -> int:
        last = self.instructions[-1]
        return last.offset + last.size


@dataclass(frozen=True, slots=True)
class AbstractStack:
    """Bottom-to-top tuple of known 256-bit ints or ``None`` (Unknown)."""

    entries: tuple[int | None, ...] = ()
    overflow: bool = field(default=False, compare=False)
    underflow: bool = field(default=False, compare=False)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def top(self) -> int | None:
        return self.entries[-1] if self.entries else Unknown


@dataclass(frozen=True, slots=True)
class Diagnostic:
    block: int
    reason: str


@dataclass
class ControlFlowGraph:
    nodes: dict[int, BasicBlock]
    edges: list[tuple[int, int]]
    entry: int = 0
    diagnostics: list[Diagnostic] = field(default_factory=list)
    iterations: int = 0
    code_length: int = 0

    def successors(self, node: int) -> list[int]:
        return [b for a, b in self.edges if a == node]

    def node_ids(self) -> list[int]:
        return sorted(self.nodes)

    def to_json(self) -> dict:
        return {
            "nodes": [
                {
                    "id": b.id,
                    "offsets": [ins.offset for ins in b.instructions],
                    "opcodes": [ins.render() for ins in b.instructions],
                    "terminator": b.terminator.value,
                }
                for b in (self.nodes[i] for i in self.node_ids())
            ],
            "edges": [list(e) for e in self.edges],
            "diagnostics": [{"block": d.block, "reason": d.reason} for d in self.diagnostics],
        }

    def to_dot(self) -> str:
        lines = ["digraph cfg {", '  node [shape=box, fontname="monospace"];']
        for nid in self.node_ids():
            body = "\\l".join(f"0x{ins.offset:x}: {ins.render()}" for ins in self.nodes[nid].instructions)
            lines.append(f'  n{nid} [label="{body}\\l"];')
        for a, b in self.edges:
            lines.append(f"  n{a} -> n{b};")
        lines.append("}")
        return "\n".join(lines)


def partition_blocks(listing: DisassemblyListing) -> list[BasicBlock]:
    """Cut at offset 0, every JUMPDEST, and after every terminator."""
    blocks: list[BasicBlock] = []
    current: list[Instruction] = []

    def close(term: Terminator) -> None:
        if current:
            blocks.append(BasicBlock(current[0].offset, tuple(current), term))
            current.clear()

    for ins in listing.instructions:
        if ins.mnemonic == "JUMPDEST":
            close(Terminator.FALLTHROUGH)
        current.append(ins)
        info = lookup(ins.opcode)
        if info.is_terminator:
            close(_TERMINATOR_OF[info.mnemonic])
    close(Terminator.FALLTHROUGH)
    return blocks


def step_block(
    block: BasicBlock, in_stack: AbstractStack, cap: int = STACK_CAP
) -> tuple[AbstractStack, int | None]:
    """Run one block abstractly; returns the exit stack and a known jump target."""
    st = list(in_stack.entries)
    under = over = False
    target = None

    def pop() -> int | None:
        nonlocal under
        if st:
            return st.pop()
        under = True
        return Unknown

    def push(v: int | None) -> None:
        nonlocal over
        st.append(v)
        if len(st) > cap:
            del st[0]
            over = True

    for ins in block.instructions:
        op = ins.opcode
        if is_push(op) or ins.mnemonic == "PUSH0":
            push(ins.value)
        elif is_dup(op):
            n = op - 0x7F
            if len(st) < n:
                under = True
                push(Unknown)
            else:
                push(st[-n])
        elif is_swap(op):
            n = op - 0x8F
            if len(st) < n + 1:
                under = True
                st[:0] = [Unknown] * (n + 1 - len(st))
            st[-1], st[-1 - n] = st[-1 - n], st[-1]
        elif ins.mnemonic in ("JUMP", "JUMPI"):
            target = pop()
            if ins.mnemonic == "JUMPI":
                pop()
        else:
            info = lookup(op)
            for _ in range(info.pops):
                pop()
            for _ in range(info.pushes):
                push(Unknown)
    return AbstractStack(tuple(st), over, under), target


def merge(a: AbstractStack | None, b: AbstractStack) -> AbstractStack:
    """Entry-wise meet aligned at the top; missing bottom entries become Unknown."""
    if a is None:
        return AbstractStack(b.entries)
    ea, eb = a.entries, b.entries
    depth = max(len(ea), len(eb))
    out = []
    for i in range(depth, 0, -1):
        x = ea[-i] if i <= len(ea) else Unknown
        y = eb[-i] if i <= len(eb) else Unknown
        out.append(x if x == y else Unknown)
    return AbstractStack(tuple(out))


def build_cfg(listing: DisassemblyListing, cap: int = STACK_CAP) -> ControlFlowGraph:
    blocks = partition_blocks(listing)
    nodes = {b.id: b for b in blocks}
    order = [b.id for b in blocks]
    next_of = {a: b for a, b in zip(order, order[1:])}
    jumpdests = {b.id for b in blocks if b.starts_with_jumpdest}

    states: dict[int, AbstractStack] = {}
    edges: set[tuple[int, int]] = set()
    iterations = 0
    if blocks:
        states[order[0]] = AbstractStack()
    work = deque(order[:1])
    queued = set(work)

    def successors(block: BasicBlock, target: int | None) -> list[int]:
        succ = []
        if block.terminator in (Terminator.JUMP, Terminator.JUMPI):
            if target is not None and target in jumpdests:
                succ.append(target)
        if block.terminator in (Terminator.JUMPI, Terminator.FALLTHROUGH):
            if block.id in next_of:
                succ.append(next_of[block.id])
        return succ

    while work:
        bid = work.popleft()
        queued.discard(bid)
        iterations += 1
        out, target = step_block(nodes[bid], states[bid], cap)
        for s in successors(nodes[bid], target):
            edges.add((bid, s))
            merged = merge(states.get(s), out)
            if s not in states or merged != states[s]:
                states[s] = merged
                if s not in queued:
                    work.append(s)
                    queued.add(s)

    diagnostics = []
    for bid in sorted(states):
        block = nodes[bid]
        out, target = step_block(block, states[bid], cap)
        if out.underflow:
            diagnostics.append(Diagnostic(bid, "stack underflow"))
        if out.overflow:
            diagnostics.append(Diagnostic(bid, "stack overflow"))
        if block.terminator in (Terminator.JUMP, Terminator.JUMPI):
            if target is None:
                diagnostics.append(Diagnostic(bid, "unresolved jump target"))
            elif target not in jumpdests:
                diagnostics.append(Diagnostic(bid, f"jump to non-JUMPDEST 0x{target:x}"))

    return ControlFlowGraph(
        nodes, sorted(edges), order[0] if order else 0, diagnostics, iterations, listing.code_length
    )


def cfg_stats(cfg: ControlFlowGraph) -> tuple[int, int]:
    return len(cfg.nodes), len(cfg.edges)


def dumps_json(cfg: ControlFlowGraph) -> str:
    return json.dumps(cfg.to_json(), indent=1)
