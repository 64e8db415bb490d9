import json

import pytest

from labelaudit.cli import main
from labelaudit.manifest import load_manifest, sha256_file, verify_manifest_outputs


def write_config(path, **kwargs):
    path.write_text(json.dumps(kwargs))
    return str(path)


SMALL_SYNTH = {
    "sources": 4,
    "instances_per_source": 100,
    "signal_strength": 0.4,
    "ambiguous_share": 0.18,
    "seed": 9,
    "noise_plan": {"s00": {"flip_rate": 0.15}},
}

FAST_ENCODER = {"hash_dim": 1024, "max_tokens": 64}
FAST_TRAIN = {"epochs": 5}


@pytest.fixture(scope="module")
def synth_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    config = write_config(out / "config.json", synth=SMALL_SYNTH)
    assert main(["synth", "--config", config, "--out-dir", str(out)]) == 0
    return out


def test_synth_outputs_and_manifest(synth_out):
    corpus = synth_out / "corpus.jsonl"
    ledger = synth_out / "noise_ledger.json"
    manifest_path = synth_out / "synth.manifest.json"
    assert corpus.exists() and ledger.exists() and manifest_path.exists()
    manifest = load_manifest(manifest_path)
    assert manifest["command"] == "synth"
    assert manifest["outputs"]["corpus.jsonl"] == sha256_file(corpus)
    assert verify_manifest_outputs(manifest_path) == []


def test_synth_rerun_byte_identical(tmp_path, synth_out):
    config = write_config(tmp_path / "config.json", synth=SMALL_SYNTH)
    assert main(["synth", "--config", config, "--out-dir", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "corpus.jsonl").read_bytes() == (
        synth_out / "corpus.jsonl"
    ).read_bytes()
    assert (tmp_path / "out" / "noise_ledger.json").read_bytes() == (
        synth_out / "noise_ledger.json"
    ).read_bytes()


def test_usage_errors_exit_1(capsys):
    assert main(["discover"]) == 1  # missing --config
    assert main(["--nope"]) == 1
    assert main(["discover", "--unknown-flag"]) == 1
    err = capsys.readouterr().err
    assert "usage" in err.lower()
    assert "missing --config" in err


def test_missing_corpus_is_data_error(tmp_path, capsys):
    config = write_config(
        tmp_path / "c.json", corpus=str(tmp_path / "missing.jsonl"), variable="crisis",
        target_source="s00",
    )
    code = main(["discover", "--config", config, "--out-dir", str(tmp_path / "out")])
    assert code == 2
    assert "error" in capsys.readouterr().err.lower()


def test_duplicate_ids_exit_2_with_lines(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    record = {
        "incident_id": "X1",
        "source": "s",
        "note_a": "text",
        "note_b": "",
        "labels": {"crisis": 1},
    }
    bad.write_text(json.dumps(record) + "\n" + json.dumps(record) + "\n")
    code = main(
        ["ingest", "--in", str(bad), "--out-dir", str(tmp_path / "out")]
    )
    assert code == 2
    err = capsys.readouterr().err
    assert "X1" in err and "lines 1 and 2" in err


def test_ingest_happy_path(tmp_path, synth_out):
    out = tmp_path / "out"
    code = main(["ingest", "--in", str(synth_out / "corpus.jsonl"), "--out-dir", str(out)])
    assert code == 0
    report = json.loads((out / "ingest_report.json").read_text())
    assert report["accepted"] == 400
    assert report["variables"] == ["crisis"]


@pytest.fixture(scope="module")
def pipeline_out(tmp_path_factory, synth_out):
    out = tmp_path_factory.mktemp("pipeline")
    config = write_config(
        out / "config.json",
        corpus=str(synth_out / "corpus.jsonl"),
        variable="crisis",
        target_source="s00",
        seed=4,
        encoder=FAST_ENCODER,
        train=FAST_TRAIN,
        discovery={"k": 3, "repetitions": 2, "threshold": 2},
        removal={"n_seeds": 2, "ledger": str(out / "ledger_s00_crisis.json")},
        incremental={
            "n_seeds": 1,
            "step_size": 60,
            "epochs_per_step": 2,
            "ledger": str(out / "ledger_s00_crisis.json"),
        },
        bias={"ledger": str(out / "ledger_s00_crisis.json")},
    )
    assert main(["discover", "--config", config, "--out-dir", str(out)]) == 0
    assert main(["verify-removal", "--config", config, "--out-dir", str(out)]) == 0
    assert main(["verify-incremental", "--config", config, "--out-dir", str(out)]) == 0
    assert main(["bias", "--config", config, "--out-dir", str(out)]) == 0
    return out


def test_pipeline_artifacts_exist(pipeline_out):
    for name in (
        "ledger_s00_crisis.json",
        "histogram_s00_crisis.csv",
        "removal_s00_crisis.json",
        "incremental_s00_crisis.json",
        "incremental_curves_s00_crisis.csv",
        "bias_s00_crisis.json",
        "or_table_s00_crisis.csv",
    ):
        assert (pipeline_out / name).exists(), name
    for manifest_name in (
        "discover.manifest.json",
        "verify-removal.manifest.json",
        "verify-incremental.manifest.json",
        "bias.manifest.json",
    ):
        assert verify_manifest_outputs(pipeline_out / manifest_name) == []


def test_discover_jobs_identical(tmp_path, synth_out):
    outputs = []
    for jobs in (1, 2):
        out = tmp_path / f"jobs{jobs}"
        config = write_config(
            tmp_path / f"c{jobs}.json",
            corpus=str(synth_out / "corpus.jsonl"),
            variable="crisis",
            target_source="s00",
            seed=4,
            jobs=jobs,
            encoder=FAST_ENCODER,
            train=FAST_TRAIN,
            discovery={"k": 3, "repetitions": 2, "threshold": 2},
        )
        assert main(["discover", "--config", config, "--out-dir", str(out)]) == 0
        outputs.append((out / "ledger_s00_crisis.json").read_bytes())
    assert outputs[0] == outputs[1]


def test_report_bundle(pipeline_out):
    code = main(["report", "--run-dir", str(pipeline_out)])
    assert code == 0
    report_dir = pipeline_out / "report"
    assert (report_dir / "report.md").exists()
    hist = (report_dir / "histogram_s00_crisis.csv").read_text()
    ledger = json.loads((pipeline_out / "ledger_s00_crisis.json").read_text())
    total = sum(int(line.split(",")[1]) for line in hist.strip().splitlines()[1:])
    assert total == len(ledger["counts"])
    assert (report_dir / "or_table_s00_crisis.csv").exists()
    assert (report_dir / "removal_table_s00_crisis.csv").exists()


def test_report_empty_dir_exit_2(tmp_path, capsys):
    code = main(["report", "--run-dir", str(tmp_path)])
    assert code == 2
    assert "expected any of" in capsys.readouterr().err


def test_inconsistency_command_single_target(tmp_path, synth_out):
    out = tmp_path / "out"
    config = write_config(
        tmp_path / "c.json",
        corpus=str(synth_out / "corpus.jsonl"),
        variable="crisis",
        target_source="s00",
        seed=1,
        encoder=FAST_ENCODER,
        train=FAST_TRAIN,
        inconsistency={"m": 1, "n": 1},
    )
    assert main(["inconsistency", "--config", config, "--out-dir", str(out)]) == 0
    report = json.loads((out / "inconsistency_s00_crisis.json").read_text())
    assert report["m"] == 1 and report["n"] == 1
    assert len(report["cells"]) == 3


def test_flag_overrides_config(tmp_path, synth_out):
    out = tmp_path / "out"
    config = write_config(
        tmp_path / "c.json",
        corpus=str(synth_out / "corpus.jsonl"),
        variable="crisis",
        target_source="s99",  # overridden below
        seed=4,
        encoder=FAST_ENCODER,
        train=FAST_TRAIN,
        discovery={"k": 3, "repetitions": 2, "threshold": 2},
    )
    code = main(
        [
            "discover",
            "--config",
            config,
            "--target-source",
            "s01",
            "--out-dir",
            str(out),
        ]
    )
    assert code == 0
    manifest = load_manifest(out / "discover.manifest.json")
    assert manifest["effective_config"]["target_source"] == "s01"
    assert (out / "ledger_s01_crisis.json").exists()
