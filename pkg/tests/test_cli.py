import json

import pytest

from evmvuln.cli import main
from evmvuln.synth import MOTIF_VULNERABILITY as VULN
from evmvuln.synth import generate_corpus, write_jsonl


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_disasm_and_cfg(capsys, tmp_path, withdraw):
    code, out, _ = run(capsys, "disasm", "6080604052")
    assert code == 0 and out.splitlines()[:3] == ["0x0: PUSH1 0x80", "0x2: PUSH1 0x40", "0x4: MSTORE"]
    src = tmp_path / "w.hex"
    src.write_text(withdraw.hex())
    code, out, _ = run(capsys, "cfg", src, "--strip-metadata", "--json")
    graph = json.loads(out)
    assert code == 0 and len(graph["edges"]) == 8
    code, out, _ = run(capsys, "cfg", src, "--dot")
    assert code == 0 and out.startswith("digraph")


def test_grid(capsys):
    assert run(capsys, "grid", "--count")[1].strip() == "972"
    code, out, _ = run(capsys, "grid", "--list")
    assert code == 0 and len(out.splitlines()) == 972


@pytest.mark.parametrize("argv,expected", [
    ([], 1),
    (["frobnicate"], 1),
    (["disasm"], 1),
    (["evaluate", "x", "--models", "m", "--mode", "nope"], 1),
    (["disasm", "0x6g"], 2),
    (["disasm", "/no/such/file.bin"], 2),
    (["split", "/no/such/file.jsonl"], 2),
])
def test_exit_codes(capsys, argv, expected):
    assert run(capsys, *argv)[0] == expected


def test_malformed_dataset_reports_line(capsys, tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text('{"address": "a", "bytecode": "0x00"}\n{oops\n')
    code, _, err = run(capsys, "split", p)
    assert code == 2 and "line 2" in err


def test_config_precedence(capsys, tmp_path, withdraw):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"strip_metadata": True}))
    hexcode = withdraw.hex()
    _, plain, _ = run(capsys, "disasm", hexcode)
    _, stripped, _ = run(capsys, "--config", cfg, "disasm", hexcode)
    assert len(stripped.splitlines()) < len(plain.splitlines())

    sib = tmp_path / "s.json"
    sib.write_text(json.dumps({"max_distance": 0.0}))
    from evmvuln.cli import _apply_config, build_parser
    args = _apply_config(build_parser(), ["--config", str(sib), "siblings", "q", "i"])
    assert args.max_distance == 0.0
    args = _apply_config(build_parser(), ["--config", str(sib), "siblings", "q", "i", "--max-distance", "2"])
    assert args.max_distance == 2.0
    bad = tmp_path / "bad.json"
    bad.write_text("[1]")
    assert run(capsys, "--config", bad, "grid", "--count")[0] == 1


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    data = d / "data.jsonl"
    write_jsonl(generate_corpus(40, seed=3), data)
    models = d / "models"
    assert main(["train", str(data), "--vuln", VULN, "--size", "small", "--out", str(models),
                 "--dan-epochs", "1", "--max-epochs", "2", "--patience", "1", "--batch-size", "16"]) == 0
    return d, data, models


def test_train_writes_artifacts(trained):
    _, _, models = trained
    assert {p.name for p in models.iterdir()} == {"encoder.dlva", f"{VULN}.small.dlva", f"{VULN}.small.jsonl"}


def test_embed_index_siblings(capsys, trained):
    d, data, models = trained
    emb = d / "emb.jsonl"
    assert run(capsys, "embed", data, "--model", models / f"{VULN}.small.dlva", "--out", emb)[0] == 0
    rows = [json.loads(line) for line in emb.read_text().splitlines()]
    assert len(rows) == 40 and {r["vulnerability"] for r in rows} == {VULN}
    idx = d / "idx.jsonl"
    code, out, _ = run(capsys, "index", "build", emb, data, "--out", idx)
    assert code == 0 and json.loads(out)["entries"] == 40
    code, out, _ = run(capsys, "siblings", emb, idx)
    verdicts = [json.loads(line) for line in out.splitlines()]
    assert code == 0 and len(verdicts) == 40
    assert all(v["outcome"] != "unknown" for v in verdicts)  # each query is in the index
    assert run(capsys, "contradictions", idx, "--eps", "0")[0] == 0


def test_analyze_and_evaluate(capsys, trained):
    _, data, models = trained
    code, out, _ = run(capsys, "analyze", data, "--models", models, "--no-timing", "--vulns", f"{VULN},tx-origin")
    rows = [json.loads(line) for line in out.splitlines()]
    assert code == 0 and len(rows) == 40
    assert rows[0]["results"]["tx-origin"]["verdict"] == "unsupported" and "seconds" not in rows[0]
    again = [json.loads(line) for line in run(capsys, "analyze", data, "--models", models, "--no-timing")[1].splitlines()]
    assert [r["results"][VULN] for r in again] == [r["results"][VULN] for r in rows]
    code, out, _ = run(capsys, "evaluate", data, "--models", models, "--mode", "cc-only", "--json")
    assert code == 0 and json.loads(out)[0]["vulnerability"] == VULN
    code, out, _ = run(capsys, "evaluate", data, "--models", models, "--mode", "sd+cc", "--split", "all")
    assert code == 0 and VULN in out


def test_analyze_reports_bad_rows(capsys, tmp_path, trained):
    _, _, models = trained
    p = tmp_path / "d.jsonl"
    p.write_text('{"address": "e", "bytecode": "0x"}\n')
    code, out, _ = run(capsys, "analyze", p, "--models", models)
    assert code == 2 and json.loads(out)["error"].startswith("EmptyCode")


def test_train_requires_labels(capsys, tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text('{"address": "a", "bytecode": "0x00"}\n')
    assert run(capsys, "train", p, "--vuln", VULN, "--size", "small", "--out", tmp_path / "m")[0] == 2
