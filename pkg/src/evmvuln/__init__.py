"""Bytecode-only vulnerability detection for EVM smart contracts.

Disassembly, control-flow recovery, a block encoder, a graph embedding
network with a feed-forward classifier, and a nearest-sibling detector.
"""

__version__ = "0.1.0"

from .cfg import ControlFlowGraph, build_cfg
from .disasm import RawBytecode, disassemble, parse_hex
from .errors import EvmVulnError

__all__ = ["ControlFlowGraph", "EvmVulnError", "RawBytecode", "__version__", "build_cfg", "disassemble", "parse_hex"]
