import json

import pytest

from crdtsim.bench import (
    COMPOSITE_PARAMS,
    METRIC_COLUMNS,
    ExperimentSpec,
    apply_sweep,
    emit_tables,
    load_experiment_file,
    load_table,
    median_block_merge_ms,
    named_experiments,
    populate_world_state,
    run_experiment,
    run_single,
)
from crdtsim.ledger import BlockLog, Version, WorldState
from crdtsim.txpipeline import CRDT, FABRIC, PipelineConfig
from crdtsim.workload import WorkloadConfig


def small_workload(**overrides):
    fields = dict(total_txs=40, arrival_rate_tps=300.0, conflict_pct=100.0, seed=11)
    fields.update(overrides)
    return WorkloadConfig(**fields)


# ----------------------------------------------------------------------
# sweep application


def test_apply_sweep_pipeline_field():
    pipeline, workload = apply_sweep(PipelineConfig(), WorkloadConfig(), "max_tx_count", 7)
    assert pipeline.max_tx_count == 7
    assert workload == WorkloadConfig()


def test_apply_sweep_workload_field():
    pipeline, workload = apply_sweep(PipelineConfig(), WorkloadConfig(), "conflict_pct", 25.0)
    assert workload.conflict_pct == 25.0
    assert pipeline == PipelineConfig()


def test_apply_sweep_leaves_inputs_untouched():
    base_p = PipelineConfig()
    base_w = WorkloadConfig()
    apply_sweep(base_p, base_w, "max_tx_count", 999)
    assert base_p.max_tx_count == PipelineConfig().max_tx_count


def test_apply_sweep_composites_fan_out():
    pipeline, workload = apply_sweep(PipelineConfig(), WorkloadConfig(), "rw_keys", 3)
    assert workload.n_read_keys == 3 and workload.n_write_keys == 3
    pipeline, workload = apply_sweep(PipelineConfig(), WorkloadConfig(), "json_complexity", 5)
    assert workload.json_keys == 5 and workload.json_depth == 5
    pipeline, workload = apply_sweep(PipelineConfig(), WorkloadConfig(), "block_size", 400)
    assert pipeline.max_tx_count == 400
    assert set(COMPOSITE_PARAMS) == {"block_size", "rw_keys", "json_complexity"}


def test_apply_sweep_rejects_unknown_parameter():
    with pytest.raises(ValueError):
        apply_sweep(PipelineConfig(), WorkloadConfig(), "warp_speed", 9)


# ----------------------------------------------------------------------
# populate and single runs


def test_populate_writes_skeletons_without_consuming_heights_twice():
    ws = WorldState()
    log = BlockLog()
    pipeline = PipelineConfig(max_tx_count=3)
    populate_world_state(ws, log, pipeline, [f"k{i}" for i in range(7)])
    assert len(log) == 3  # ceil(7 / 3) bootstrap blocks
    entry = ws.get_state("k0")
    assert entry is not None
    assert json.loads(entry[0]) == {"deviceID": "k0"}
    assert entry[1] == Version(0, 0)


def test_populate_handles_empty_key_set():
    ws = WorldState()
    log = BlockLog()
    populate_world_state(ws, log, PipelineConfig(), [])
    assert len(log) == 0


def test_run_single_crdt_accepts_all_conflicting_writers():
    outcome = run_single(PipelineConfig(mode=CRDT), small_workload())
    assert outcome.report.success_count == 40
    assert outcome.report.failure_count == 0


def test_run_single_fabric_admits_one_conflicting_writer():
    outcome = run_single(PipelineConfig(mode=FABRIC), small_workload())
    assert outcome.report.success_count == 1
    assert outcome.report.failure_count == 39


def test_run_single_without_populate_reads_absent_keys():
    outcome = run_single(PipelineConfig(mode=CRDT), small_workload(), populate=False)
    assert outcome.report.success_count == 40
    assert len(outcome.log) == outcome.report.blocks[-1].height + 1


def test_run_single_classifies_trailing_partial_block():
    # 12 txs in blocks of 5 leave a 2-tx tail whose timeout deadline lands on
    # a fractional instant; the final drain must still classify it
    outcome = run_single(PipelineConfig(mode=CRDT, max_tx_count=5),
                         small_workload(total_txs=12, conflict_pct=0.0, seed=3))
    rep = outcome.report
    assert rep.success_count + rep.failure_count + rep.endorsement_rejections == 12
    assert rep.blocks[-1].cut_reason == "timeout"


def test_run_single_is_reproducible():
    first = run_single(PipelineConfig(mode=CRDT), small_workload())
    second = run_single(PipelineConfig(mode=CRDT), small_workload())
    assert first.ws.digest() == second.ws.digest()
    assert first.report.summary() == second.report.summary()


# ----------------------------------------------------------------------
# experiments


def test_run_experiment_sweeps_and_accounts():
    spec = ExperimentSpec(
        name="conflict", pipeline=PipelineConfig(mode=FABRIC),
        workload=small_workload(), sweep_param="conflict_pct",
        sweep_values=[0.0, 50.0, 100.0], repetitions=2,
    )
    report = run_experiment(spec)
    assert report.mode == FABRIC
    assert [row.sweep_value for row in report.rows] == [0.0, 50.0, 100.0]
    failures = [row.failure_count for row in report.rows]
    assert failures[0] == 0
    assert failures == sorted(failures)
    for row in report.rows:
        assert row.success_count + row.failure_count + row.endorsement_rejections == 40
        assert row.error == ""


def test_run_experiment_records_point_errors_and_continues():
    spec = ExperimentSpec(
        name="rate", pipeline=PipelineConfig(),
        workload=small_workload(), sweep_param="arrival_rate_tps",
        sweep_values=[100.0, -1.0, 300.0],
    )
    report = run_experiment(spec)
    assert report.rows[1].error != ""
    assert report.rows[0].error == "" and report.rows[2].error == ""


def test_run_experiment_rejects_empty_sweep():
    spec = ExperimentSpec(
        name="x", pipeline=PipelineConfig(), workload=small_workload(),
        sweep_param="conflict_pct", sweep_values=[],
    )
    with pytest.raises(ValueError):
        run_experiment(spec)


def test_run_experiment_rejects_unknown_parameter_upfront():
    spec = ExperimentSpec(
        name="x", pipeline=PipelineConfig(), workload=small_workload(),
        sweep_param="bogus", sweep_values=[1],
    )
    with pytest.raises(ValueError):
        run_experiment(spec)


def test_median_block_merge_ms_is_positive_for_crdt_merges():
    value = median_block_merge_ms(PipelineConfig(mode=CRDT), small_workload(), 2)
    assert value > 0.0


# ----------------------------------------------------------------------
# named experiments and files


def test_named_experiments_cover_the_standard_sweeps():
    experiments = named_experiments(scale=0.05, seed=3, mode=FABRIC)
    assert set(experiments) == {
        "block_size", "rw_keys", "json_complexity", "arrival_rate", "conflict_pct"}
    for spec in experiments.values():
        assert spec.workload.total_txs == 50
        assert spec.workload.seed == 3
        assert spec.pipeline.mode == FABRIC
        spec.validate()
    assert experiments["json_complexity"].repetitions == 5
    assert experiments["conflict_pct"].sweep_values == [0, 20, 40, 60, 80, 100]
    assert experiments["block_size"].sweep_values == [25, 100, 400, 1000]


def test_named_experiments_scale_floors_at_one():
    experiments = named_experiments(scale=0.0001)
    assert all(spec.workload.total_txs == 1 for spec in experiments.values())


def test_load_experiment_file_applies_overrides(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({
        "name": "custom",
        "pipeline": {"mode": "fabric", "max_tx_count": 10},
        "workload": {"total_txs": 20, "conflict_pct": 0.0},
        "sweep_param": "arrival_rate_tps",
        "sweep_values": [100, 200],
        "repetitions": 2,
    }))
    spec = load_experiment_file(path)
    assert spec.name == "custom"
    assert spec.pipeline.mode == "fabric"
    assert spec.pipeline.max_tx_count == 10
    assert spec.workload.total_txs == 20
    assert spec.repetitions == 2


def test_load_experiment_file_rejects_unknown_fields(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({
        "name": "bad", "pipeline": {"warp": 1},
        "sweep_param": "conflict_pct", "sweep_values": [0],
    }))
    with pytest.raises(ValueError):
        load_experiment_file(path)


# ----------------------------------------------------------------------
# tables


def test_emit_tables_one_csv_per_metric(tmp_path):
    spec = ExperimentSpec(
        name="conflict", pipeline=PipelineConfig(mode=CRDT),
        workload=small_workload(), sweep_param="conflict_pct",
        sweep_values=[0.0, 100.0],
    )
    report = run_experiment(spec)
    paths = emit_tables(report, tmp_path)
    assert len(paths) == len(METRIC_COLUMNS)
    names = {p.name for p in paths}
    assert "conflict_crdt_success_count.csv" in names
    success = load_table(tmp_path / "conflict_crdt_success_count.csv")
    assert success == [("0.0", 40.0), ("100.0", 40.0)]
    header = (tmp_path / "conflict_crdt_success_count.csv").read_text().splitlines()[0]
    assert header == "conflict_pct,success_count"


def test_emit_tables_writes_error_rows_separately(tmp_path):
    spec = ExperimentSpec(
        name="rate", pipeline=PipelineConfig(),
        workload=small_workload(), sweep_param="arrival_rate_tps",
        sweep_values=[100.0, -5.0],
    )
    report = run_experiment(spec)
    paths = emit_tables(report, tmp_path)
    error_paths = [p for p in paths if p.name.endswith("_errors.csv")]
    assert len(error_paths) == 1
    content = error_paths[0].read_text().splitlines()
    assert content[0] == "arrival_rate_tps,error"
    assert content[1].startswith("-5.0,")
    clean = load_table(tmp_path / "rate_crdt_success_count.csv")
    assert clean == [("100.0", 40.0)]
