"""Fetch deployed runtime bytecode from an Ethereum JSON-RPC node."""

from __future__ import annotations

import re

import requests

from .disasm import RawBytecode, parse_hex
from .errors import EmptyCode, MalformedHex, RpcError, RpcTimeout

DEFAULT_TIMEOUT = 10.0
_ADDRESS = re.compile(r"0x[0-9a-fA-F]{40}")


def fetch_bytecode(rpc_url: str, address: str, timeout: float = DEFAULT_TIMEOUT,
                   block: str = "latest") -> RawBytecode:
    if not _ADDRESS.fullmatch(address):
        raise ValueError(f"not a 20-byte hex address: {address!r}")
    payload = {"jsonrpc": "2.0", "method": "eth_getCode", "params": [address, block], "id": 1}
    try:
        resp = requests.post(rpc_url, json=payload, timeout=timeout)
        resp.raise_for_status()
        body = resp.json()
    except requests.Timeout as e:
        raise RpcTimeout(f"{rpc_url}: no answer within {timeout}s") from e
    except (requests.RequestException, ValueError) as e:
        raise RpcError(f"{rpc_url}: {e}") from e
    if "error" in body:
        raise RpcError(f"{rpc_url}: {body['error']}")
    result = body.get("result")
    if not isinstance(result, str):
        raise RpcError(f"{rpc_url}: response has no string result")
    if result in ("0x", ""):
        raise EmptyCode(f"no code at {address}")
    try:
        return parse_hex(result)
    except MalformedHex as e:
        raise RpcError(f"{rpc_url}: malformed code in response ({e})") from e
