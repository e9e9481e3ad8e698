import json

import numpy as np
import pytest

from bfnn import container
from bfnn.channel import derive_seed
from bfnn.cli import EXIT_CONFIG, EXIT_DATA, EXIT_IO, STAGE_TRAIN, main
from bfnn.network import build_model, load_model

TINY_CONFIG = """
n_t = 16
l_paths = 3
train_count = 60
val_count = 24
test_count = 24
grid_size = 64
pnr_db = 0.0
l_est = 2
lr = 0.005
batch_size = 16
epochs = 2
seed = 11
snr_grid_db = [-10.0, 0.0, 10.0]
pnr_list_db = [0.0]
l_est_list = [2]
"""


@pytest.fixture()
def cfg_file(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(TINY_CONFIG)
    return str(path)


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out.strip().splitlines()
    return code, (json.loads(out[-1]) if out else None)


def _gen(capsys, cfg_file, tmp_path, **extra):
    args = ["gen", "--config", cfg_file, "--out", str(tmp_path / "data")]
    for k, v in extra.items():
        args += [f"--{k}", str(v)]
    return _run(capsys, *args)


class TestGen:
    def test_produces_three_splits(self, capsys, cfg_file, tmp_path):
        code, summary = _gen(capsys, cfg_file, tmp_path)
        assert code == 0
        assert summary["train"]["count"] == 60
        assert summary["val"]["count"] == 24
        assert summary["test"]["count"] == 24
        for split in ("train", "val", "test"):
            ds = container.load_dataset(summary[split]["path"])
            assert len(ds.samples) == summary[split]["count"]
            assert ds.n_t == 16

    def test_count_scale(self, capsys, cfg_file, tmp_path):
        code, summary = _gen(capsys, cfg_file, tmp_path, **{"count-scale": 0.5})
        assert code == 0
        assert summary["train"]["count"] == 30
        assert summary["val"]["count"] == 12

    def test_rerun_identical_hashes(self, capsys, cfg_file, tmp_path):
        _, first = _gen(capsys, cfg_file, tmp_path)
        _, second = _gen(capsys, cfg_file, tmp_path)
        assert first == second

    def test_splits_disjoint_seeds(self, capsys, cfg_file, tmp_path):
        _, summary = _gen(capsys, cfg_file, tmp_path)
        train = container.load_dataset(summary["train"]["path"])
        val = container.load_dataset(summary["val"]["path"])
        assert {s.seed for s in train.samples}.isdisjoint(s.seed for s in val.samples)

    def test_unknown_config_key(self, capsys, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("nonsense_key = 3\n")
        code, _ = _run(capsys, "gen", "--config", str(bad), "--out", str(tmp_path / "x"))
        assert code == EXIT_CONFIG

    def test_invalid_toml(self, capsys, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("= broken")
        code, _ = _run(capsys, "gen", "--config", str(bad), "--out", str(tmp_path / "x"))
        assert code == EXIT_CONFIG


@pytest.fixture()
def pipeline(capsys, cfg_file, tmp_path):
    """gen + estimate for train/val splits, ready for train/eval commands."""
    _, gen = _gen(capsys, cfg_file, tmp_path)
    outs = {}
    for split in ("train", "val"):
        est = tmp_path / f"{split}.est"
        code, summary = _run(
            capsys,
            "estimate",
            "--config",
            cfg_file,
            "--dataset",
            gen[split]["path"],
            "--out",
            str(est),
        )
        assert code == 0 and summary["count"] == gen[split]["count"]
        outs[split] = str(est)
    return {"gen": gen, "est": outs, "cfg": cfg_file, "tmp": tmp_path}


class TestEstimate:
    def test_missing_dataset_is_io_error(self, capsys, cfg_file, tmp_path):
        code, _ = _run(
            capsys,
            "estimate",
            "--config",
            cfg_file,
            "--dataset",
            str(tmp_path / "missing.ds"),
            "--out",
            str(tmp_path / "o.est"),
        )
        assert code == EXIT_IO

    def test_estimates_align_with_dataset(self, capsys, pipeline):
        ds = container.load_dataset(pipeline["gen"]["train"]["path"])
        ests, meta = container.load_estimates(pipeline["est"]["train"])
        assert [e.source_seed for e in ests] == [s.seed for s in ds.samples]
        assert meta["estimator"]["l_est"] == 2


class TestTrain:
    def test_zero_epochs_keeps_init(self, capsys, pipeline):
        model_path = pipeline["tmp"] / "m0.bfnn"
        code, summary = _run(
            capsys,
            "train",
            "--config",
            pipeline["cfg"],
            "--train-data",
            pipeline["gen"]["train"]["path"],
            "--train-est",
            pipeline["est"]["train"],
            "--val-data",
            pipeline["gen"]["val"]["path"],
            "--val-est",
            pipeline["est"]["val"],
            "--out",
            str(model_path),
            "--epochs",
            "0",
        )
        assert code == 0 and summary["picked"] == "init"
        loaded = load_model(model_path)
        fresh = build_model(16, seed=derive_seed(11, STAGE_TRAIN, 1))
        for (_, a), (_, b) in zip(loaded.parameters(), fresh.parameters()):
            np.testing.assert_array_equal(a, b)

    def test_trains_and_records_metadata(self, capsys, pipeline):
        model_path = pipeline["tmp"] / "m.bfnn"
        code, summary = _run(
            capsys,
            "train",
            "--config",
            pipeline["cfg"],
            "--train-data",
            pipeline["gen"]["train"]["path"],
            "--train-est",
            pipeline["est"]["train"],
            "--val-data",
            pipeline["gen"]["val"]["path"],
            "--val-est",
            pipeline["est"]["val"],
            "--out",
            str(model_path),
        )
        assert code == 0
        model = load_model(model_path)
        assert model.meta["epochs_trained"] == 2
        assert "config_hash" in model.meta


class TestEval:
    def _train_model(self, capsys, pipeline, out="m.bfnn"):
        model_path = pipeline["tmp"] / out
        code, _ = _run(
            capsys,
            "train",
            "--config",
            pipeline["cfg"],
            "--train-data",
            pipeline["gen"]["train"]["path"],
            "--val-data",
            pipeline["gen"]["val"]["path"],
            "--out",
            str(model_path),
        )
        assert code == 0
        return str(model_path)

    def test_eval_writes_report(self, capsys, pipeline):
        model = self._train_model(capsys, pipeline)
        out = pipeline["tmp"] / "report.csv"
        plot = pipeline["tmp"] / "report.svg"
        manifest = pipeline["tmp"] / "report.json"
        code, summary = _run(
            capsys,
            "eval",
            "--config",
            pipeline["cfg"],
            "--model",
            model,
            "--dataset",
            pipeline["gen"]["test"]["path"],
            "--out",
            str(out),
            "--plot",
            str(plot),
            "--manifest",
            str(manifest),
        )
        assert code == 0
        text = out.read_text().splitlines()
        assert text[0] == "method,snr_db,pnr_db,l_est,mean_se,std_se,n"
        assert summary["rows"] == 3 * 3  # 3 snr points x 3 methods
        assert plot.exists() and manifest.exists()

    def test_mismatched_n_t_is_data_error(self, capsys, pipeline, tmp_path):
        other_cfg = tmp_path / "other.toml"
        other_cfg.write_text(TINY_CONFIG.replace("n_t = 16", "n_t = 8"))
        _, gen8 = _run(
            capsys, "gen", "--config", str(other_cfg), "--out", str(tmp_path / "d8")
        )
        model = self._train_model(capsys, pipeline)
        code, _ = _run(
            capsys,
            "eval",
            "--config",
            pipeline["cfg"],
            "--model",
            model,
            "--dataset",
            gen8["train"]["path"],
            "--out",
            str(tmp_path / "r.csv"),
        )
        assert code == EXIT_DATA

    def test_mixed_provenance_refused_then_allowed(self, capsys, pipeline, tmp_path):
        model = self._train_model(capsys, pipeline)
        other_cfg = tmp_path / "other.toml"
        other_cfg.write_text(TINY_CONFIG.replace("seed = 11", "seed = 12"))
        _, gen2 = _run(
            capsys, "gen", "--config", str(other_cfg), "--out", str(tmp_path / "d2")
        )
        args = [
            "eval",
            "--config",
            pipeline["cfg"],
            "--model",
            model,
            "--dataset",
            gen2["test"]["path"],
            "--out",
            str(tmp_path / "r.csv"),
        ]
        code, _ = _run(capsys, *args)
        assert code == EXIT_DATA
        code, _ = _run(capsys, *args, "--allow-mixed")
        assert code == 0


class TestFlops:
    def test_reference_count(self, capsys):
        code = main(["flops", "--n-t", "64"])
        out = capsys.readouterr().out.strip()
        assert code == 0 and out == "147520"

    def test_from_model_file(self, capsys, pipeline):
        model_path = pipeline["tmp"] / "m.bfnn"
        _run(
            capsys,
            "train",
            "--config",
            pipeline["cfg"],
            "--train-data",
            pipeline["gen"]["train"]["path"],
            "--val-data",
            pipeline["gen"]["val"]["path"],
            "--out",
            str(model_path),
            "--epochs",
            "0",
        )
        code = main(["flops", "--model", str(model_path)])
        out = capsys.readouterr().out.strip().splitlines()[-1]
        # n_t = 16: (2*33-1)*256 + (2*256-1)*128 + (2*128-1)*16
        assert code == 0 and out == str(65 * 256 + 511 * 128 + 255 * 16)


class TestReport:
    def test_gain_readout(self, capsys, tmp_path):
        csv = tmp_path / "r.csv"
        lines = ["method,snr_db,pnr_db,l_est,mean_se,std_se,n"]
        for snr in (-10.0, 0.0, 10.0):
            lines.append(f"bfnn,{snr},0.0,3,{0.4 * (snr + 12)},0.0,10")
            lines.append(f"egt_on_estimate,{snr},0.0,3,{0.4 * (snr + 9)},0.0,10")
        csv.write_text("\n".join(lines) + "\n")
        code, summary = _run(
            capsys, "report", "--csv", str(csv), "--gain-at", "4.0"
        )
        assert code == 0
        assert summary["gain_db"] == pytest.approx(3.0, abs=1e-9)


def test_pipeline_reproducible_end_to_end(capsys, tmp_path):
    """gen -> estimate -> train -> eval twice; reports must match bit for bit."""
    cfg = tmp_path / "run.toml"
    cfg.write_text(TINY_CONFIG)
    reports = []
    for tag in ("one", "two"):
        base = tmp_path / tag
        _, gen = _run(capsys, "gen", "--config", str(cfg), "--out", str(base / "d"))
        est = {}
        for split in ("train", "val"):
            out = base / f"{split}.est"
            _run(
                capsys,
                "estimate",
                "--config",
                str(cfg),
                "--dataset",
                gen[split]["path"],
                "--out",
                str(out),
            )
            est[split] = str(out)
        model = base / "m.bfnn"
        code, _ = _run(
            capsys,
            "train",
            "--config",
            str(cfg),
            "--train-data",
            gen["train"]["path"],
            "--train-est",
            est["train"],
            "--val-data",
            gen["val"]["path"],
            "--val-est",
            est["val"],
            "--out",
            str(model),
        )
        assert code == 0
        report = base / "r.csv"
        code, _ = _run(
            capsys,
            "eval",
            "--config",
            str(cfg),
            "--model",
            str(model),
            "--dataset",
            gen["test"]["path"],
            "--out",
            str(report),
        )
        assert code == 0
        reports.append(report.read_bytes())
    assert reports[0] == reports[1]
