"""From raw bytecode to a control-flow graph.

Assembles a small withdraw-style contract, appends a compiler metadata
trailer, then walks through disassembly, metadata stripping and CFG
recovery. Pass --dot to print Graphviz output instead of the edge list.
"""

import argparse

from evmvuln.asm import assemble
from evmvuln.cfg import build_cfg
from evmvuln.disasm import RawBytecode, disassemble, format_listing, strip_metadata

SOURCE = """
PUSH1 0x80 PUSH1 0x40 MSTORE CALLVALUE DUP1 ISZERO PUSH2 @ok JUMPI PUSH1 0x00 DUP1 REVERT
ok: JUMPDEST POP PUSH1 0x04 CALLDATASIZE LT PUSH2 @fallback JUMPI
    PUSH1 0x00 CALLDATALOAD PUSH1 0xe0 SHR DUP1 PUSH4 0x3ccfd60b EQ PUSH2 @withdraw JUMPI
fallback: JUMPDEST PUSH1 0x00 DUP1 REVERT
withdraw: JUMPDEST
    PUSH1 0x00 DUP1 DUP1 DUP1 PUSH1 0x00 SLOAD CALLER GAS CALL POP   # send the balance first
    PUSH1 0x00 PUSH1 0x00 SSTORE                                      # then zero it
    STOP
"""

# solc-style CBOR trailer: {"solc": 0.8.7} followed by its two-byte length
METADATA = bytes.fromhex("a164736f6c6343000807000a")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dot", action="store_true")
    args = ap.parse_args()

    code = RawBytecode(assemble(SOURCE) + METADATA)
    print(f"{len(code)} bytes: {code.hex()[:50]}...")

    body, trailer = strip_metadata(code)
    print(f"metadata trailer of {len(trailer)} bytes removed\n")

    listing = disassemble(body)
    print(format_listing(listing))

    cfg = build_cfg(listing)
    if args.dot:
        print(cfg.to_dot())
        return
    print(f"\n{len(cfg.nodes)} blocks, {len(cfg.edges)} edges, fixpoint after {cfg.iterations} block visits")
    for src, dst in cfg.edges:
        print(f"  0x{src:02x} -> 0x{dst:02x}")
    for d in cfg.diagnostics:
        print(f"  ! 0x{d.block:x} {d.reason}")


if __name__ == "__main__":
    main()
