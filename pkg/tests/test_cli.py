import json

import pytest

from crdtsim.cli import SEED_ENV, main
from crdtsim.jsoncrdt import canonical_json_bytes


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def digest_of(out, fmt="csv"):
    last = out.strip().splitlines()[-1]
    if fmt == "json-lines":
        return json.loads(last)["digest"]
    assert last.startswith("digest,")
    return last.split(",", 1)[1]


# ----------------------------------------------------------------------
# run


def test_run_prints_report_and_digest(capsys):
    code, out, err = run_cli(capsys, "run", "--txs", "8", "--mode", "crdt")
    assert code == 0 and err == ""
    lines = out.splitlines()
    assert lines[0] == "tx_id,submit_time,commit_time,validity,block_height"
    assert lines[-2].startswith("summary,")
    assert len(digest_of(out)) == 64


def test_run_json_lines_format(capsys):
    code, out, _ = run_cli(capsys, "run", "--txs", "5", "--format", "json-lines")
    assert code == 0
    lines = [json.loads(line) for line in out.splitlines()]
    assert lines[0]["tx_id"].startswith("client1-")
    assert "summary" in lines[-2]
    assert "digest" in lines[-1]


def test_run_writes_report_to_file(capsys, tmp_path):
    out_file = tmp_path / "report.csv"
    code, out, _ = run_cli(capsys, "run", "--txs", "5", "--out", str(out_file))
    assert code == 0
    assert out.startswith("digest,")  # stdout carries only the digest
    content = out_file.read_text().splitlines()
    assert content[0] == "tx_id,submit_time,commit_time,validity,block_height"
    assert len(content) == 5 + 2  # transactions, header, summary


def test_run_mode_changes_outcomes(capsys):
    _, crdt_out, _ = run_cli(capsys, "run", "--txs", "10", "--mode", "crdt")
    _, fabric_out, _ = run_cli(capsys, "run", "--txs", "10", "--mode", "fabric")
    crdt_summary = [l for l in crdt_out.splitlines() if l.startswith("summary,")][0]
    fabric_summary = [l for l in fabric_out.splitlines() if l.startswith("summary,")][0]
    assert crdt_summary.split(",")[3] == "10"  # every conflicting writer commits
    assert fabric_summary.split(",")[3] == "1"  # strict matching admits one


def test_run_is_reproducible_for_a_seed(capsys):
    _, first, _ = run_cli(capsys, "run", "--txs", "6", "--seed", "5")
    _, second, _ = run_cli(capsys, "run", "--txs", "6", "--seed", "5")
    assert digest_of(first) == digest_of(second)
    _, third, _ = run_cli(capsys, "run", "--txs", "6", "--seed", "6")
    assert digest_of(first) != digest_of(third)


def test_run_rejects_bad_flags(capsys):
    code, _, err = run_cli(capsys, "run", "--txs", "0")
    assert code == 1
    assert err.startswith("error:")


# ----------------------------------------------------------------------
# seed precedence


def test_env_seed_is_used_when_no_flag(capsys, monkeypatch):
    monkeypatch.setenv(SEED_ENV, "5")
    _, env_out, _ = run_cli(capsys, "run", "--txs", "6")
    monkeypatch.delenv(SEED_ENV)
    _, flag_out, _ = run_cli(capsys, "run", "--txs", "6", "--seed", "5")
    assert digest_of(env_out) == digest_of(flag_out)


def test_flag_seed_beats_env(capsys, monkeypatch):
    monkeypatch.setenv(SEED_ENV, "99")
    _, out, _ = run_cli(capsys, "run", "--txs", "6", "--seed", "5")
    monkeypatch.delenv(SEED_ENV)
    _, reference, _ = run_cli(capsys, "run", "--txs", "6", "--seed", "5")
    assert digest_of(out) == digest_of(reference)


def test_config_seed_beats_env(capsys, monkeypatch, tmp_path):
    cfg = tmp_path / "sim.ini"
    cfg.write_text("[workload]\nseed = 5\n")
    monkeypatch.setenv(SEED_ENV, "99")
    _, out, _ = run_cli(capsys, "run", "--txs", "6", "--config", str(cfg))
    monkeypatch.delenv(SEED_ENV)
    _, reference, _ = run_cli(capsys, "run", "--txs", "6", "--seed", "5")
    assert digest_of(out) == digest_of(reference)


def test_flag_overrides_config_file(capsys, tmp_path):
    cfg = tmp_path / "sim.ini"
    cfg.write_text("[pipeline]\nmode = fabric\n[workload]\ntotal_txs = 10\n")
    _, out, _ = run_cli(capsys, "run", "--config", str(cfg), "--mode", "crdt")
    summary = [l for l in out.splitlines() if l.startswith("summary,")][0]
    assert summary.split(",")[3] == "10"  # crdt mode commits all ten
    assert summary.split(",")[4] == "0"


def test_bad_env_seed_fails_cleanly(capsys, monkeypatch):
    monkeypatch.setenv(SEED_ENV, "not-a-number")
    code, _, err = run_cli(capsys, "run", "--txs", "4")
    assert code == 1
    assert SEED_ENV in err


# ----------------------------------------------------------------------
# replay


def test_replay_digest_matches_live_run(capsys, tmp_path):
    blocklog = tmp_path / "blocks.log"
    _, run_out, _ = run_cli(capsys, "run", "--txs", "12", "--save-blocklog", str(blocklog))
    code, replay_out, _ = run_cli(capsys, "replay", str(blocklog))
    assert code == 0
    assert digest_of(replay_out) == digest_of(run_out)


def test_replay_json_lines_format(capsys, tmp_path):
    blocklog = tmp_path / "blocks.log"
    run_cli(capsys, "run", "--txs", "4", "--save-blocklog", str(blocklog))
    code, out, _ = run_cli(capsys, "replay", str(blocklog), "--format", "json-lines")
    assert code == 0
    assert "digest" in json.loads(out.strip())


def test_replay_missing_file_fails(capsys, tmp_path):
    code, _, err = run_cli(capsys, "replay", str(tmp_path / "absent.log"))
    assert code == 1
    assert err.startswith("error:")


# ----------------------------------------------------------------------
# bench


def test_bench_named_experiment_writes_tables(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "bench", "--experiment", "conflict_pct",
                           "--scale", "0.02", "--out", str(tmp_path))
    assert code == 0
    paths = out.splitlines()
    assert paths
    for path in paths:
        assert path.startswith(str(tmp_path))
    names = {p.rsplit("/", 1)[-1] for p in paths}
    assert "conflict_pct_crdt_success_count.csv" in names


def test_bench_both_modes(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "bench", "--experiment", "conflict_pct",
                           "--scale", "0.01", "--out", str(tmp_path), "--mode", "both")
    assert code == 0
    names = {p.rsplit("/", 1)[-1] for p in out.splitlines()}
    assert "conflict_pct_crdt_success_count.csv" in names
    assert "conflict_pct_fabric_success_count.csv" in names


def test_bench_experiment_file(capsys, tmp_path):
    spec_file = tmp_path / "spec.json"
    spec_file.write_text(json.dumps({
        "name": "tiny",
        "workload": {"total_txs": 10},
        "sweep_param": "conflict_pct",
        "sweep_values": [0.0, 100.0],
    }))
    code, out, _ = run_cli(capsys, "bench", "--experiment", str(spec_file),
                           "--out", str(tmp_path / "tables"))
    assert code == 0
    names = {p.rsplit("/", 1)[-1] for p in out.splitlines()}
    assert "tiny_crdt_success_count.csv" in names


def test_bench_unknown_experiment_fails(capsys, tmp_path):
    code, _, err = run_cli(capsys, "bench", "--experiment", "warp",
                           "--out", str(tmp_path))
    assert code == 1
    assert "unknown experiment" in err


# ----------------------------------------------------------------------
# merge-demo


def write_doc(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_merge_demo_merges_in_order(capsys, tmp_path):
    a = write_doc(tmp_path, "a.json", {"tempReadings": [{"temperature": "15"}]})
    b = write_doc(tmp_path, "b.json", {"tempReadings": [{"temperature": "20"}]})
    code, out, _ = run_cli(capsys, "merge-demo", a, b)
    assert code == 0
    assert json.loads(out) == {
        "tempReadings": [{"temperature": "15"}, {"temperature": "20"}]}
    assert out.strip() == canonical_json_bytes(json.loads(out)).decode()


def test_merge_demo_dedup_flag(capsys, tmp_path):
    a = write_doc(tmp_path, "a.json", {"r": ["7"]})
    b = write_doc(tmp_path, "b.json", {"r": ["7"]})
    _, plain, _ = run_cli(capsys, "merge-demo", a, b)
    assert json.loads(plain) == {"r": ["7", "7"]}
    _, deduped, _ = run_cli(capsys, "merge-demo", a, b, "--dedup")
    assert json.loads(deduped) == {"r": ["7"]}


def test_merge_demo_rejects_numeric_leaves(capsys, tmp_path):
    bad = write_doc(tmp_path, "bad.json", {"temperature": 25})
    code, _, err = run_cli(capsys, "merge-demo", bad)
    assert code == 1
    assert err.startswith("error:")


def test_cli_requires_a_subcommand(capsys):
    with pytest.raises(SystemExit):
        main([])
