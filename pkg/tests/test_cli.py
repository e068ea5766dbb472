"""End-to-end tests of the command-line interface (in-process main calls)."""

import os

import pytest

from kinet.cli import main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One tiny dataset plus a trained regression checkpoint, shared read-only."""
    ws = tmp_path_factory.mktemp("cliws")
    data = str(ws / "data.csv")
    rc = main(["gen-data", "--n", "40", "--seed", "3", "--data", data,
               "--out", str(ws)])
    assert rc == 0
    rc = main(["train", "--model", "nnreg", "--data", data, "--out", str(ws),
               "--set", "train.epochs=2", "--set", "train.acc_every=10"])
    assert rc == 0
    return {"dir": ws, "data": data, "ckpt": str(ws / "nnreg.ckpt")}


def test_gen_data_writes_dataset_and_manifest(workspace):
    from kinet.dataio import DatasetFile
    data = DatasetFile.load(workspace["data"])
    assert len(data.records) == 40
    manifest = (workspace["dir"] / "run-manifest.txt").read_text()
    assert "command = " in manifest


def test_train_writes_checkpoint_and_log(workspace):
    assert os.path.exists(workspace["ckpt"])
    log = (workspace["dir"] / "nnreg_train_log.csv").read_text().splitlines()
    assert log[0].startswith("epoch,")
    assert len(log) == 3  # header + 2 epochs


def test_eval_writes_accuracy_csv(workspace, capsys):
    out = workspace["dir"] / "evalout"
    rc = main(["eval", "--checkpoint", workspace["ckpt"],
               "--data", workspace["data"], "--out", str(out)])
    assert rc == 0
    assert "ACC" in capsys.readouterr().out
    header = (out / "accuracy.csv").read_text().splitlines()[0]
    assert header.startswith("mode,n,successes,acc")


def test_bench_runs_and_reports_speedup(workspace, capsys):
    out = workspace["dir"] / "benchout"
    rc = main(["bench", "--data", workspace["data"], "--methods", "rs,ebs",
               "--out", str(out), "--set", "bench.tasks=3",
               "--set", "bench.repeats=1"])
    assert rc == 0
    rows = (out / "bench_rows.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 3  # header + methods x tasks
    summary = (out / "bench_summary.csv").read_text()
    assert summary.splitlines()[0].startswith("method,mean_attempts")
    printed = capsys.readouterr().out
    assert "rs:" in printed and "ebs:" in printed


def test_bench_clamps_thread_requests(workspace, capsys, monkeypatch):
    monkeypatch.setenv("KINET_THREADS", "8")
    out = workspace["dir"] / "benchthreads"
    rc = main(["bench", "--data", workspace["data"], "--methods", "rs",
               "--out", str(out), "--set", "bench.tasks=2",
               "--set", "bench.repeats=1"])
    assert rc == 0
    assert "serially" in capsys.readouterr().err
    assert "threads = 1" in (out / "run-manifest.txt").read_text()


def test_bench_rejects_bad_thread_env(workspace, monkeypatch):
    monkeypatch.setenv("KINET_THREADS", "lots")
    rc = main(["bench", "--data", workspace["data"], "--methods", "rs",
               "--out", str(workspace["dir"] / "benchbad")])
    assert rc == 2


def test_predict_prints_machine_readable_result(workspace, capsys):
    rc = main(["predict", "--checkpoint", workspace["ckpt"],
               "--pose", "0,0,0,0.8,0.0,0.4",
               "--set", "predict.max_attempts=3"])
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert line.startswith("RESULT ok") or line.startswith("RESULT fail")
    assert rc == (0 if line.startswith("RESULT ok") else 1)


def test_predict_rejects_malformed_pose(workspace, capsys):
    rc = main(["predict", "--checkpoint", workspace["ckpt"], "--pose", "1,2,3"])
    assert rc == 2
    assert "configuration error" in capsys.readouterr().err


def test_unknown_config_key_exits_2(workspace, capsys):
    rc = main(["gen-data", "--n", "2", "--seed", "1",
               "--data", str(workspace["dir"] / "x.csv"),
               "--out", str(workspace["dir"]), "--set", "no.such=1"])
    assert rc == 2
    assert "configuration error" in capsys.readouterr().err


def test_unknown_bench_method_exits_2(workspace, capsys):
    rc = main(["bench", "--data", workspace["data"], "--methods", "teleport",
               "--out", str(workspace["dir"] / "benchunk")])
    assert rc == 2


def test_missing_data_file_exits_2(workspace, capsys):
    rc = main(["train", "--model", "nnreg", "--data", "/no/such/file.csv",
               "--out", str(workspace["dir"])])
    assert rc == 2
    assert "missing file" in capsys.readouterr().err


def test_network_bench_method_needs_checkpoint_flag(workspace, capsys):
    rc = main(["bench", "--data", workspace["data"], "--methods", "cmp",
               "--out", str(workspace["dir"] / "benchcmp")])
    assert rc == 2
    assert "--ckpt-cmp" in capsys.readouterr().err


def test_selftest_passes(capsys):
    rc = main(["selftest"])
    out = capsys.readouterr().out
    assert rc == 0, out
    assert "selftest ok" in out
    assert "ik-round-trip: 300/300 passed" in out
