"""Hex parsing, disassembly, reassembly and the text listing format."""

from __future__ import annotations

import re
import string
from dataclasses import dataclass, field

from .errors import InconsistentListing, MalformedHex
from .opcodes import BY_MNEMONIC, UNKNOWN_MNEMONIC, lookup

_HEXDIGITS = frozenset(string.hexdigits)


@dataclass(frozen=True, slots=True)
class RawBytecode:
    data: bytes
    had_0x_prefix: bool = False

    def __len__(self) -> int:
        return len(self.data)

    def hex(self) -> str:
        return "0x" + self.data.hex()


@dataclass(frozen=True, slots=True)
class Instruction:
    offset: int
    opcode: int
    mnemonic: str
    immediate: bytes = b""
    unknown_opcode: bool = False
    truncated_immediate: bool = False
    # bytes of the immediate actually present in the code; < len(immediate) only when truncated
    present: int = -1

    def __post_init__(self) -> None:
        if self.present < 0:
            object.__setattr__(self, "present", len(self.immediate))

    @property
    def size(self) -> int:
        """Bytes this instruction occupies in the code."""
        return 1 + self.present

    @property
    def value(self) -> int:
        return int.from_bytes(self.immediate, "big") if self.immediate else 0

    def render(self) -> str:
        text = self.mnemonic
        if self.unknown_opcode:
            text = f"{UNKNOWN_MNEMONIC}_0x{self.opcode:02x}"
        if self.immediate:
            text += f" 0x{self.value:X}"
        return text


@dataclass(frozen=True, slots=True)
class DisassemblyListing:
    instructions: tuple[Instruction, ...]
    code_length: int
    index: dict[int, int] = field(default=None, compare=False, repr=False)  # offset -> position

    def __post_init__(self) -> None:
        if self.index is None:
            object.__setattr__(
                self, "index", {ins.offset: i for i, ins in enumerate(self.instructions)}
            )

    def __len__(self) -> int:
        return len(self.instructions)

    def __iter__(self):
        return iter(self.instructions)

    def __getitem__(self, i):
        return self.instructions[i]

    def mnemonics(self) -> str:
        return " ".join(ins.render() for ins in self.instructions)


def parse_hex(text: str) -> RawBytecode:
    """Decode optional-``0x`` hex text into bytes.

    Surrounding whitespace is ignored. Raises :class:`MalformedHex` on odd
    digit counts or non-hex characters (reporting the character position
    in the stripped text).
    """
    s = text.strip()
    prefix = s[:2] in ("0x", "0X")
    body = s[2:] if prefix else s
    for i, ch in enumerate(body):
        if ch not in _HEXDIGITS:
            raise MalformedHex(f"non-hex character {ch!r}", position=i + (2 if prefix else 0))
    if len(body) % 2:
        raise MalformedHex(f"odd number of hex digits ({len(body)})")
    return RawBytecode(bytes.fromhex(body), prefix)


def disassemble(code: RawBytecode | bytes) -> DisassemblyListing:
    raw = code.data if isinstance(code, RawBytecode) else bytes(code)
    out: list[Instruction] = []
    i, n = 0, len(raw)
    while i < n:
        op = raw[i]
        info = lookup(op)
        width = info.push_size
        if width:
            chunk = raw[i + 1 : i + 1 + width]
            truncated = len(chunk) < width
            out.append(
                Instruction(
                    i,
                    op,
                    info.mnemonic,
                    chunk.ljust(width, b"\x00"),
                    truncated_immediate=truncated,
                    present=len(chunk),
                )
            )
            i += 1 + len(chunk)
        else:
            out.append(
                Instruction(i, op, info.mnemonic, unknown_opcode=info.mnemonic == UNKNOWN_MNEMONIC)
            )
            i += 1
    return DisassemblyListing(tuple(out), n)


def reassemble(listing: DisassemblyListing) -> RawBytecode:
    buf = bytearray()
    for pos, ins in enumerate(listing.instructions):
        if ins.offset != len(buf):
            raise InconsistentListing(
                f"instruction {pos} at offset {ins.offset}, expected {len(buf)}"
            )
        width = lookup(ins.opcode).push_size
        if len(ins.immediate) != width:
            raise InconsistentListing(
                f"instruction {pos} ({ins.mnemonic}) carries {len(ins.immediate)} immediate bytes, expected {width}"
            )
        if ins.present < width and pos != len(listing.instructions) - 1:
            raise InconsistentListing(f"truncated immediate at instruction {pos} is not last")
        buf.append(ins.opcode)
        buf += ins.immediate[: ins.present]
    if len(buf) != listing.code_length:
        raise InconsistentListing(f"listing covers {len(buf)} bytes, code_length {listing.code_length}")
    return RawBytecode(bytes(buf))


def strip_metadata(code: RawBytecode) -> tuple[RawBytecode, RawBytecode]:
    """Split off a trailing Solidity CBOR metadata blob if one is present.

    The last two bytes give the blob length ``L``; the ``L`` bytes before
    them must start with a CBOR map header and contain the ``solc`` key.
    """
    data = code.data
    if len(data) < 2:
        return code, RawBytecode(b"")
    length = int.from_bytes(data[-2:], "big")
    start = len(data) - 2 - length
    if length == 0 or start < 0:
        return code, RawBytecode(b"")
    blob = data[start:-2]
    if not 0xA1 <= blob[0] <= 0xB7 or b"\x64solc" not in blob:
        return code, RawBytecode(b"")
    return RawBytecode(data[:start], code.had_0x_prefix), RawBytecode(data[start:])


# -- text listing -----------------------------------------------------------

_LINE = re.compile(
    r"^\s*0x(?P<off>[0-9a-fA-F]+):\s+(?P<mn>[A-Z0-9_]+(?:0x[0-9a-f]{2})?)(?:\s+0x(?P<imm>[0-9a-fA-F]+))?"
    r"(?:\s*;\s*truncated\s+(?P<present>\d+))?\s*$"
)


def format_listing(listing: DisassemblyListing) -> str:
    """One instruction per line: ``0xOFFSET: MNEMONIC [0xIMMEDIATE]``."""
    lines = []
    for ins in listing.instructions:
        line = f"0x{ins.offset:x}: {ins.render()}"
        if ins.truncated_immediate:
            line += f" ; truncated {ins.present}"
        lines.append(line)
    return "\n".join(lines)


def parse_listing(text: str) -> DisassemblyListing:
    """Inverse of :func:`format_listing`."""
    out = []
    end = 0
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        m = _LINE.match(line)
        if not m:
            raise InconsistentListing(f"line {lineno}: cannot parse {line!r}")
        mn = m["mn"]
        if mn.startswith(UNKNOWN_MNEMONIC + "_0x"):
            op = int(mn[len(UNKNOWN_MNEMONIC) + 3 :], 16)
            ins = Instruction(int(m["off"], 16), op, UNKNOWN_MNEMONIC, unknown_opcode=True)
        else:
            if mn not in BY_MNEMONIC:
                raise InconsistentListing(f"line {lineno}: unknown mnemonic {mn}")
            op = BY_MNEMONIC[mn]
            width = lookup(op).push_size
            imm = int(m["imm"] or "0", 16).to_bytes(width, "big") if width else b""
            present = int(m["present"]) if m["present"] else width
            ins = Instruction(
                int(m["off"], 16), op, mn, imm, truncated_immediate=present < width, present=present
            )
        out.append(ins)
        end = ins.offset + ins.size
    return DisassemblyListing(tuple(out), end)
