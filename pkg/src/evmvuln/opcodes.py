"""Static EVM opcode table: byte -> (mnemonic, pops, pushes, terminator, jumpdest).

Adding a fork's opcodes is a table edit; nothing else in the package
hard-codes opcode values except PUSH/DUP/SWAP range arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True, slots=True)
class OpInfo:
    mnemonic: str
    pops: int
    pushes: int
    is_terminator: bool = False
    is_jumpdest: bool = False

    @property
    def push_size(self) -> int:
        if self.mnemonic.startswith("PUSH") and self.mnemonic != "PUSH0":
            return int(self.mnemonic[4:])
        return 0


UNKNOWN_MNEMONIC = "UNKNOWN"

_BASE: dict[int, tuple[str, int, int]] = {
    0x00: ("STOP", 0, 0),
    0x01: ("ADD", 2, 1),
    0x02: ("MUL", 2, 1),
    0x03: ("SUB", 2, 1),
    0x04: ("DIV", 2, 1),
    0x05: ("SDIV", 2, 1),
    0x06: ("MOD", 2, 1),
    0x07: ("SMOD", 2, 1),
    0x08: ("ADDMOD", 3, 1),
    0x09: ("MULMOD", 3, 1),
    0x0A: ("EXP", 2, 1),
    0x0B: ("SIGNEXTEND", 2, 1),
    0x10: ("LT", 2, 1),
    0x11: ("GT", 2, 1),
    0x12: ("SLT", 2, 1),
    0x13: ("SGT", 2, 1),
    0x14: ("EQ", 2, 1),
    0x15: ("ISZERO", 1, 1),
    0x16: ("AND", 2, 1),
    0x17: ("OR", 2, 1),
    0x18: ("XOR", 2, 1),
    0x19: ("NOT", 1, 1),
    0x1A: ("BYTE", 2, 1),
    0x1B: ("SHL", 2, 1),
    0x1C: ("SHR", 2, 1),
    0x1D: ("SAR", 2, 1),
    0x20: ("SHA3", 2, 1),
    0x30: ("ADDRESS", 0, 1),
    0x31: ("BALANCE", 1, 1),
    0x32: ("ORIGIN", 0, 1),
    0x33: ("CALLER", 0, 1),
    0x34: ("CALLVALUE", 0, 1),
    0x35: ("CALLDATALOAD", 1, 1),
    0x36: ("CALLDATASIZE", 0, 1),
    0x37: ("CALLDATACOPY", 3, 0),
    0x38: ("CODESIZE", 0, 1),
    0x39: ("CODECOPY", 3, 0),
    0x3A: ("GASPRICE", 0, 1),
    0x3B: ("EXTCODESIZE", 1, 1),
    0x3C: ("EXTCODECOPY", 4, 0),
    0x3D: ("RETURNDATASIZE", 0, 1),
    0x3E: ("RETURNDATACOPY", 3, 0),
    0x3F: ("EXTCODEHASH", 1, 1),
    0x40: ("BLOCKHASH", 1, 1),
    0x41: ("COINBASE", 0, 1),
    0x42: ("TIMESTAMP", 0, 1),
    0x43: ("NUMBER", 0, 1),
    0x44: ("PREVRANDAO", 0, 1),
    0x45: ("GASLIMIT", 0, 1),
    0x46: ("CHAINID", 0, 1),
    0x47: ("SELFBALANCE", 0, 1),
    0x48: ("BASEFEE", 0, 1),
    0x49: ("BLOBHASH", 1, 1),
    0x4A: ("BLOBBASEFEE", 0, 1),
    0x50: ("POP", 1, 0),
    0x51: ("MLOAD", 1, 1),
    0x52: ("MSTORE", 2, 0),
    0x53: ("MSTORE8", 2, 0),
    0x54: ("SLOAD", 1, 1),
    0x55: ("SSTORE", 2, 0),
    0x56: ("JUMP", 1, 0),
    0x57: ("JUMPI", 2, 0),
    0x58: ("PC", 0, 1),
    0x59: ("MSIZE", 0, 1),
    0x5A: ("GAS", 0, 1),
    0x5B: ("JUMPDEST", 0, 0),
    0x5C: ("TLOAD", 1, 1),
    0x5D: ("TSTORE", 2, 0),
    0x5E: ("MCOPY", 3, 0),
    0x5F: ("PUSH0", 0, 1),
    0xF0: ("CREATE", 3, 1),
    0xF1: ("CALL", 7, 1),
    0xF2: ("CALLCODE", 7, 1),
    0xF3: ("RETURN", 2, 0),
    0xF4: ("DELEGATECALL", 6, 1),
    0xF5: ("CREATE2", 4, 1),
    0xFA: ("STATICCALL", 6, 1),
    0xFD: ("REVERT", 2, 0),
    0xFE: ("INVALID", 0, 0),
    0xFF: ("SELFDESTRUCT", 1, 0),
}

TERMINATORS = frozenset({"STOP", "RETURN", "REVERT", "INVALID", "SELFDESTRUCT", "JUMP", "JUMPI"})


def _build() -> dict[int, OpInfo]:
    entries = dict(_BASE)
    for n in range(1, 33):
        entries[0x5F + n] = (f"PUSH{n}", 0, 1)
    for n in range(1, 17):
        entries[0x7F + n] = (f"DUP{n}", n, n + 1)
        entries[0x8F + n] = (f"SWAP{n}", n + 1, n + 1)
    for n in range(5):
        entries[0xA0 + n] = (f"LOG{n}", 2 + n, 0)
    return {
        code: OpInfo(name, pops, pushes, name in TERMINATORS, name == "JUMPDEST")
        for code, (name, pops, pushes) in sorted(entries.items())
    }


OPCODES: dict[int, OpInfo] = _build()
BY_MNEMONIC: dict[str, int] = {info.mnemonic: code for code, info in OPCODES.items()}

# Undefined bytes abort execution exactly like INVALID.
UNKNOWN = OpInfo(UNKNOWN_MNEMONIC, 0, 0, is_terminator=True)


def lookup(opcode: int) -> OpInfo:
    return OPCODES.get(opcode, UNKNOWN)


def is_push(opcode: int) -> bool:
    return 0x60 <= opcode <= 0x7F


def is_dup(opcode: int) -> bool:
    return 0x80 <= opcode <= 0x8F


def is_swap(opcode: int) -> bool:
    return 0x90 <= opcode <= 0x9F
