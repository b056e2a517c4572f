"""Synthetic contract corpora with a planted block-level motif.

Contracts mimic compiler output: free-memory-pointer setup, a callvalue
guard, a selector dispatcher, and function bodies built from stack-neutral
snippets. A positive contract has one basic block in which an external
CALL is followed by an SSTORE. Any contract may also carry decoys: a lone
CALL in one function and lone SSTOREs in others, never sharing a function,
so a negative never has both inside one block.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .asm import assemble
from .disasm import disassemble, parse_hex
from .nn import stream

MOTIF_VULNERABILITY = "reentrancy-eth"

CALL = "PUSH1 0x00 DUP1 DUP1 DUP1 CALLVALUE CALLER GAS CALL POP"
SSTORE = "PUSH1 {v} PUSH1 {s} SSTORE"
_FILLER = (
    "PUSH1 {a} PUSH1 {b} ADD POP",
    "PUSH1 {a} PUSH1 {b} MUL PUSH1 {c} AND POP",
    "PUSH1 {s} SLOAD POP",
    "PUSH1 {a} PUSH1 {b} MSTORE",
    "PUSH1 0x20 PUSH1 0x00 SHA3 POP",
    "CALLER PUSH1 0x00 MSTORE PUSH1 {s} PUSH1 0x20 MSTORE PUSH1 0x40 PUSH1 0x00 SHA3 SLOAD POP",
    "PUSH1 {a} CALLDATALOAD PUSH1 {b} SWAP1 DIV POP",
    "TIMESTAMP PUSH1 {a} GT POP",
    "PUSH2 {w} PUSH1 {a} SUB PUSH1 {b} EXP POP",
    "CALLVALUE PUSH1 {a} LT ISZERO POP",
    "ADDRESS BALANCE POP",
)


DECOY_CALL_RATE = 0.5
DECOY_SSTORE_RATE = 0.5
SMALL_FUNCTIONS = (3, 7)  # half-open ranges
SMALL_BLOCKS = (1, 5)
SMALL_FILLER = (2, 7)


# one-byte constants as compilers tend to emit them: offsets, masks, small counts
_COMMON = np.array([0x00, 0x01, 0x02, 0x03, 0x04, 0x05, 0x08, 0x0A, 0x1F, 0x20, 0x40, 0x60, 0x80, 0xA0, 0xE0, 0xFF])


def _hex(rng, width: int = 1) -> str:
    return "0x" + rng.integers(0, 256, size=width, dtype=np.uint8).tobytes().hex()


def _const(rng) -> str:
    if rng.random() < 0.85:
        return f"0x{int(_COMMON[rng.integers(len(_COMMON))]):02x}"
    return _hex(rng)


def _snippet(template: str, rng) -> str:
    return template.format(a=_const(rng), b=_const(rng), c=_const(rng), s=_const(rng), v=_const(rng),
                           w=_hex(rng, 2))


def _filler(rng, n: int) -> list[str]:
    return [_snippet(_FILLER[rng.integers(len(_FILLER))], rng) for _ in range(n)]


class _Builder:
    def __init__(self, rng):
        self.rng = rng
        self.lines: list[str] = []
        self.labels = 0

    def label(self) -> str:
        self.labels += 1
        return f"L{self.labels}"

    def emit(self, *parts: str) -> None:
        self.lines.extend(parts)

    def source(self) -> str:
        return "\n".join(self.lines)


def _body_blocks(rng, n_blocks: int, filler: tuple[int, int]) -> list[list[str]]:
    return [_filler(rng, int(rng.integers(*filler))) for _ in range(n_blocks)]


def _insert(rng, block: list[str], *snippets: str) -> None:
    at = int(rng.integers(len(block) + 1))
    block[at:at] = snippets


def _contract(rng, n_functions: int, blocks_per_fn: tuple[int, int], filler: tuple[int, int],
              motif: bool) -> str:
    b = _Builder(rng)
    ok, fallback = b.label(), b.label()
    b.emit("PUSH1 0x80 PUSH1 0x40 MSTORE CALLVALUE DUP1 ISZERO", f"PUSH2 @{ok}", "JUMPI",
           "PUSH1 0x00 DUP1 REVERT", f"{ok}:", "JUMPDEST POP",
           "PUSH1 0x04 CALLDATASIZE LT", f"PUSH2 @{fallback}", "JUMPI",
           "PUSH1 0x00 CALLDATALOAD PUSH1 0xe0 SHR")
    entries = [b.label() for _ in range(n_functions)]
    for lab in entries:
        b.emit("DUP1", f"PUSH4 {_hex(rng, 4)}", "EQ", f"PUSH2 @{lab}", "JUMPI")
    b.emit(f"{fallback}:", "JUMPDEST PUSH1 0x00 DUP1 REVERT")

    bodies = [_body_blocks(rng, int(rng.integers(*blocks_per_fn)), filler) for _ in range(n_functions)]
    roles = rng.permutation(n_functions)
    if motif:
        body = bodies[roles[0]]
        _insert(rng, body[rng.integers(len(body))], CALL, *_filler(rng, int(rng.integers(0, 3))),
                _snippet(SSTORE, rng))
    # decoys: a lone CALL in one function, lone SSTOREs in others, never sharing a function
    if n_functions >= 3 and rng.random() < DECOY_CALL_RATE:
        body = bodies[roles[1]]
        _insert(rng, body[rng.integers(len(body))], CALL)
    for f in roles[2:]:
        if rng.random() < DECOY_SSTORE_RATE:
            body = bodies[f]
            _insert(rng, body[rng.integers(len(body))], _snippet(SSTORE, rng))

    for lab, blocks in zip(entries, bodies):
        b.emit(f"{lab}:", "JUMPDEST")
        for j, block in enumerate(blocks):
            b.emit(*block)
            if j + 1 < len(blocks):
                nxt = b.label()
                if rng.random() < 0.5:
                    b.emit(f"PUSH1 {_hex(rng)} ISZERO", f"PUSH2 @{nxt}", "JUMPI", "PUSH1 0x00 DUP1 REVERT")
                b.emit(f"{nxt}:", "JUMPDEST")
        b.emit("STOP" if rng.random() < 0.5 else "PUSH1 0x20 PUSH1 0x00 RETURN")
    return b.source()


@dataclass(frozen=True)
class SyntheticContract:
    address: str
    bytecode: bytes
    label: int

    def record(self) -> dict:
        return {"address": self.address, "bytecode": "0x" + self.bytecode.hex(),
                "labels": {MOTIF_VULNERABILITY: self.label}}


def _address(rng) -> str:
    return "0x" + rng.integers(0, 256, size=20, dtype=np.uint8).tobytes().hex()


def small_contract(rng, motif: bool) -> bytes:
    """A contract under 750 instructions."""
    while True:
        code = assemble(_contract(rng, int(rng.integers(*SMALL_FUNCTIONS)), SMALL_BLOCKS, SMALL_FILLER, motif))
        if len(disassemble(parse_hex(code.hex())).instructions) < 750:
            return code


def large_contract(rng, n_instructions: int = 1000, motif: bool = False) -> bytes:
    """A contract with exactly ``n_instructions`` instructions (padding is an unreachable tail)."""
    while True:
        src = _contract(rng, int(rng.integers(8, 12)), (2, 6), (4, 9), motif)
        n = len(disassemble(parse_hex(assemble(src).hex())).instructions)
        if n <= n_instructions - 2:
            break
    pad = n_instructions - n - 2
    tail = ["JUMPDEST"] + ["PC POP"] * (pad // 2) + ["PC"] * (pad % 2) + ["STOP"]
    return assemble(src + "\n" + "\n".join(tail))


def generate_corpus(n: int, seed: int = 0, positive_fraction: float = 0.5,
                    size: str = "small") -> list[SyntheticContract]:
    rng = stream(seed, "synth", size)
    labels = np.zeros(n, dtype=np.int64)
    labels[: int(round(n * positive_fraction))] = 1
    rng.shuffle(labels)
    make = small_contract if size == "small" else (lambda r, m: large_contract(r, motif=m))
    return [SyntheticContract(_address(rng), make(rng, bool(y)), int(y)) for y in labels]


def write_jsonl(contracts, path: str | Path) -> None:
    with open(path, "w") as fh:
        for c in contracts:
            fh.write(json.dumps(c.record()) + "\n")
