"""Tiny two-pass assembler used for fixtures and synthetic corpora.

Source is whitespace separated: ``name:`` defines a label at the current
offset, ``PUSHn @name`` pushes a label's offset, ``PUSHn 0x..`` pushes a
literal, ``RAW 0x..`` emits bytes verbatim, anything else is a mnemonic.
"""

from __future__ import annotations

import re

from .opcodes import BY_MNEMONIC, lookup

_TOKEN = re.compile(r"[^\s]+")


def _tokens(source: str) -> list[str]:
    toks = []
    for line in source.splitlines():
        line = line.split("#", 1)[0]
        toks += _TOKEN.findall(line)
    return toks


def assemble(source: str) -> bytes:
    toks = _tokens(source)
    labels: dict[str, int] = {}
    items: list[tuple[str, str | None]] = []
    i = 0
    while i < len(toks):
        tok = toks[i]
        if tok.endswith(":"):
            items.append((":", tok[:-1]))
            i += 1
            continue
        if tok == "RAW" or (tok.startswith("PUSH") and tok != "PUSH0"):
            items.append((tok, toks[i + 1]))
            i += 2
            continue
        items.append((tok, None))
        i += 1

    offset = 0
    for op, arg in items:
        if op == ":":
            if arg in labels:
                raise ValueError(f"duplicate label {arg}")
            labels[arg] = offset
        elif op == "RAW":
            offset += len(bytes.fromhex(arg.removeprefix("0x")))
        else:
            offset += 1 + lookup(BY_MNEMONIC[op]).push_size

    out = bytearray()
    for op, arg in items:
        if op == ":":
            continue
        if op == "RAW":
            out += bytes.fromhex(arg.removeprefix("0x"))
            continue
        code = BY_MNEMONIC[op]
        out.append(code)
        width = lookup(code).push_size
        if width:
            value = labels[arg[1:]] if arg.startswith("@") else int(arg, 16)
            out += value.to_bytes(width, "big")
    return bytes(out)
