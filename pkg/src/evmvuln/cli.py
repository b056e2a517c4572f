"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 bad input, 3 internal failure.
Every flag may also be given in a JSON file passed with ``--config``;
explicit flags take precedence over the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cfg import build_cfg
from .disasm import RawBytecode, disassemble, format_listing, parse_hex, strip_metadata
from .errors import EvmVulnError, MalformedHex, MissingLabels, ModelFileError
from .grid import enumerate_grid
from .metrics import format_table, report_json
from .model import load_model, save_model
from .n2v import load_encoder, save_encoder
from .nn import TrainConfig
from .pipeline import (
    ENCODER_FILE, MODES, ModelStore, SizeClass, analyze_batch, build_index, evaluate, featurize, fit,
    index_filename, ingest, model_filename, split_dataset, write_records,
)
from .pipeline import ContractRecord
from .rpc import fetch_bytecode
from .sibling import SiblingConfig, TrainingIndex, find_contradictions, sibling_lookup

log = logging.getLogger("evmvuln")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read_code(source: str) -> RawBytecode:
    """Hex text given inline or in a file; files that are not hex are read as raw bytes."""
    path = Path(source)
    try:
        is_file = path.is_file()
    except OSError:  # long inline hex exceeds the filename limit
        is_file = False
    if is_file:
        raw = path.read_bytes()
        try:
            return parse_hex(raw.decode("ascii"))
        except (UnicodeDecodeError, MalformedHex):
            return RawBytecode(raw)
    return parse_hex(source)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def _code_for(args) -> RawBytecode:
    code = _read_code(args.source)
    if args.strip_metadata:
        code, _ = strip_metadata(code)
    return code


# -- subcommands ---------------------------------------------------------------

def cmd_disasm(args) -> int:
    _emit(format_listing(disassemble(_code_for(args))), args.out)
    return EXIT_OK


def cmd_cfg(args) -> int:
    cfg = build_cfg(disassemble(_code_for(args)))
    if args.dot:
        text = cfg.to_dot()
    elif args.json:
        text = json.dumps(cfg.to_json(), indent=1)
    else:
        lines = [f"nodes {len(cfg.nodes)}  edges {len(cfg.edges)}  iterations {cfg.iterations}"]
        lines += [f"0x{a:x} -> 0x{b:x}" for a, b in cfg.edges]
        lines += [f"! block 0x{d.block:x}: {d.reason}" for d in cfg.diagnostics]
        text = "\n".join(lines)
    _emit(text, args.out)
    return EXIT_OK


def cmd_split(args) -> int:
    split = split_dataset(ingest(args.dataset))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name in ("train", "valid", "test"):
            write_records(getattr(split, name), out / f"{name}.jsonl")
    print(json.dumps({k: len(getattr(split, k)) for k in ("train", "valid", "test")}))
    return EXIT_OK


def _train_config(args) -> TrainConfig:
    return TrainConfig(args.lr, args.batch_size, args.max_epochs, args.patience, args.seed)


def cmd_train(args) -> int:
    records = ingest(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    enc_path = out / ENCODER_FILE
    encoder = load_encoder(enc_path) if enc_path.exists() else None
    result = fit(records, args.vuln, args.size, _train_config(args), args.dan_epochs, encoder)
    if encoder is None:
        save_encoder(result.encoder, enc_path)
    model, train, valid = result.model, result.train, result.valid
    save_model(model, out / model_filename(args.vuln, args.size))
    build_index(model, train).save(out / index_filename(args.vuln, args.size))
    h = model.history
    print(json.dumps({
        "model": str(out / model_filename(args.vuln, args.size)),
        "train": len(train), "valid": len(valid), "epochs": len(h.valid_losses),
        "best_epoch": h.best_epoch, "best_valid_loss": min(h.valid_losses),
    }))
    return EXIT_OK


def cmd_grid(args) -> int:
    grid = enumerate_grid()
    if args.list:
        for i, arch in enumerate(grid):
            print(i, json.dumps(arch.to_dict()))
    else:
        print(len(grid))
    return EXIT_OK


def cmd_embed(args) -> int:
    model = load_model(args.model)
    encoder = load_encoder(args.encoder or Path(args.model).parent / ENCODER_FILE)
    lines = []
    for rec in ingest(args.dataset):
        vec = model.embed([featurize(rec.bytecode, encoder, id=rec.address).sample])[0]
        lines.append(json.dumps({"address": rec.address, "vulnerability": model.vulnerability,
                                 "vector": vec.tolist()}))
    _emit("\n".join(lines), args.out)
    return EXIT_OK


def _jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def cmd_index_build(args) -> int:
    emb = _jsonl(args.embeddings)
    labels = {row["address"]: row.get("labels", {}) for row in _jsonl(args.labels)}
    vulns = {row["vulnerability"] for row in emb}
    if len(vulns) != 1:
        raise ValueError(f"embeddings must cover exactly one vulnerability, found {sorted(vulns)}")
    vuln = vulns.pop()
    try:
        entries = [(row["address"], row["vector"], labels[row["address"]][vuln]) for row in emb]
    except KeyError as e:
        raise MissingLabels(f"no {vuln!r} label for {e}") from e
    index = TrainingIndex.build(vuln, entries)
    index.save(args.out)
    print(json.dumps({"vulnerability": vuln, "entries": len(index), "dimension": index.dimension}))
    return EXIT_OK


def cmd_siblings(args) -> int:
    index = TrainingIndex.load(args.index)
    config = SiblingConfig(args.max_distance, args.step)
    for row in _jsonl(args.query):
        verdict = sibling_lookup(np.asarray(row["vector"]), index, config)
        print(json.dumps({"address": row.get("address"), **verdict.to_dict()}))
    return EXIT_OK


def cmd_contradictions(args) -> int:
    for a, b, d in find_contradictions(TrainingIndex.load(args.index), args.eps):
        print(json.dumps({"a": a, "b": b, "distance": d}))
    return EXIT_OK


def cmd_analyze(args) -> int:
    if args.rpc:
        records = [ContractRecord(args.target, fetch_bytecode(args.rpc, args.target, args.timeout))]
    else:
        records = ingest(args.target)
    store = ModelStore.load(args.models, args.indices)
    vulns = args.vulns.split(",") if args.vulns else None
    rows = analyze_batch(records, store, vulns, SiblingConfig(args.max_distance, args.step))
    _emit("\n".join(json.dumps(r.to_dict(timing=not args.no_timing)) for r in rows), args.out)
    return EXIT_OK if all(r.error is None for r in rows) else EXIT_INPUT


def cmd_evaluate(args) -> int:
    records = ingest(args.dataset)
    if args.split == "test":
        records = split_dataset(records).test
    store = ModelStore.load(args.models, args.indices)
    vulns = args.vulns.split(",") if args.vulns else None
    results = evaluate(records, store, args.mode, vulns, SiblingConfig(args.max_distance, args.step))
    rows = [(e.vulnerability, e.matrix, e.report) for e in results if e.report is not None]
    text = report_json(rows) if args.json else format_table(rows, args.accuracy)
    _emit(text, args.out)
    return EXIT_OK


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="evmvuln", description="Bytecode-level vulnerability analysis for EVM contracts.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="JSON file of flag values (explicit flags win)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(func=fn)
        return sp

    for name, fn, help in (("disasm", cmd_disasm, "print an instruction listing"),
                           ("cfg", cmd_cfg, "recover the control-flow graph")):
        sp = add(name, fn, help)
        sp.add_argument("source", help="hex string or file holding hex or raw bytes")
        sp.add_argument("--strip-metadata", action="store_true", help="drop the trailing compiler metadata")
        sp.add_argument("--out")
        if name == "cfg":
            fmt = sp.add_mutually_exclusive_group()
            fmt.add_argument("--dot", action="store_true")
            fmt.add_argument("--json", action="store_true")

    sp = add("split", cmd_split, "60/20/20 split in input order")
    sp.add_argument("dataset")
    sp.add_argument("--out", help="directory for train/valid/test JSONL files")

    sp = add("train", cmd_train, "train one vulnerability model (and the block encoder if absent)")
    sp.add_argument("dataset")
    sp.add_argument("--vuln", required=True)
    sp.add_argument("--size", required=True, choices=[s.value for s in SizeClass])
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="models")
    sp.add_argument("--lr", type=float, default=5e-4)
    sp.add_argument("--batch-size", type=int, default=512)
    sp.add_argument("--max-epochs", type=int, default=100)
    sp.add_argument("--patience", type=int, default=20)
    sp.add_argument("--dan-epochs", type=int, default=15)

    sp = add("grid", cmd_grid, "hyperparameter grid")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--list", action="store_true")
    g.add_argument("--count", action="store_true")

    sp = add("embed", cmd_embed, "contract embeddings as JSONL")
    sp.add_argument("dataset")
    sp.add_argument("--model", required=True)
    sp.add_argument("--encoder")
    sp.add_argument("--out")

    sp = add("index", None, "sibling index tools")
    isub = sp.add_subparsers(dest="index_command", parser_class=_Parser)
    ib = isub.add_parser("build", help="index from embeddings plus labelled records")
    ib.set_defaults(func=cmd_index_build)
    ib.add_argument("embeddings")
    ib.add_argument("labels")
    ib.add_argument("--out", required=True)

    def sibling_flags(sp):
        sp.add_argument("--max-distance", type=float, default=SiblingConfig.max_distance)
        sp.add_argument("--step", type=float, default=SiblingConfig.step)

    sp = add("siblings", cmd_siblings, "sibling verdicts for query embeddings")
    sp.add_argument("query")
    sp.add_argument("index")
    sibling_flags(sp)

    sp = add("contradictions", cmd_contradictions, "near-identical training pairs with opposite labels")
    sp.add_argument("index")
    sp.add_argument("--eps", type=float, required=True)

    sp = add("analyze", cmd_analyze, "analyze a dataset, or one address fetched over JSON-RPC")
    sp.add_argument("target", help="dataset path, or an address when --rpc is given")
    sp.add_argument("--models", required=True)
    sp.add_argument("--indices")
    sp.add_argument("--rpc")
    sp.add_argument("--timeout", type=float, default=10.0)
    sp.add_argument("--vulns", help="comma-separated names (default: every model present)")
    sp.add_argument("--no-timing", action="store_true", help="omit wall-clock fields")
    sp.add_argument("--out")
    sibling_flags(sp)

    sp = add("evaluate", cmd_evaluate, "score a decision path on labelled records")
    sp.add_argument("dataset")
    sp.add_argument("--models", required=True)
    sp.add_argument("--mode", required=True, choices=MODES)
    sp.add_argument("--indices")
    sp.add_argument("--split", choices=["test", "all"], default="test")
    sp.add_argument("--vulns")
    sp.add_argument("--accuracy", choices=["balanced", "plain"], default="balanced")
    sp.add_argument("--json", action="store_true")
    sp.add_argument("--out")
    sibling_flags(sp)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    with open(args.config) as fh:
        values = json.load(fh)
    if not isinstance(values, dict):
        raise UsageError("config file must hold a JSON object")
    # config values become defaults, so anything typed on the command line wins
    values = {k.replace("-", "_"): v for k, v in values.items()}
    for action in parser._subparsers._group_actions if parser._subparsers else ():
        for sp in action.choices.values():
            sp.set_defaults(**values)
            for sub in getattr(sp, "_subparsers", None) and sp._subparsers._group_actions or ():
                for ssp in sub.choices.values():
                    ssp.set_defaults(**values)
    parser.set_defaults(**values)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = _apply_config(parser, argv)
        if not getattr(args, "func", None):
            raise UsageError(parser.format_usage().strip())
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError) as e:
        print(f"evmvuln: cannot read config: {e}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    except (EvmVulnError, ModelFileError, OSError, ValueError, KeyError) as e:
        print(f"evmvuln: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"evmvuln: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL
