import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from bfnn.channel import ChannelConfig, ChannelDataset, PathParams, generate_dataset, sample_from_paths
from bfnn.estimator import angle_grid
from bfnn.experiment import (
    EvalReport,
    EvalRow,
    SweepSpec,
    emit_csv,
    emit_manifest,
    emit_plot,
    gain_at_target_se,
    parse_csv,
    run_sweep,
)
from bfnn.network import build_model


def _tiny_dataset(n_t=16, count=200, seed=3):
    return generate_dataset(ChannelConfig(n_t=n_t), seed, count)


def _grid_aligned_dataset(n_t=16, count=50, grid_size=64):
    grid = angle_grid(grid_size)
    rng = np.random.default_rng(0)
    samples = []
    for i in range(count):
        aod = float(grid[rng.integers(len(grid))])
        gain = complex(rng.standard_normal(), rng.standard_normal())
        samples.append(
            sample_from_paths([PathParams(gain=gain, aod=aod, is_los=True)], n_t, seed=i)
        )
    return ChannelDataset(samples=tuple(samples), n_t=n_t, l_paths=1, meta={})


class TestRunSweep:
    def test_bound_increases_with_snr(self):
        spec = SweepSpec(
            snr_grid_db=(-10.0, 0.0, 10.0),
            pnr_list_db=(0.0,),
            l_est_list=(2,),
            methods=("perfect_bound",),
            grid_size=64,
        )
        report = run_sweep(spec, None, _tiny_dataset())
        _, se = report.curve("perfect_bound", 0.0, 2)
        assert np.all(np.diff(se) > 0)

    def test_noise_free_grid_aligned_estimation_reaches_bound(self):
        ds = _grid_aligned_dataset()
        spec = SweepSpec(
            snr_grid_db=(0.0, 10.0),
            pnr_list_db=(math.inf,),
            l_est_list=(1,),
            methods=("egt_on_estimate", "perfect_bound"),
            grid_size=64,
        )
        report = run_sweep(spec, None, ds)
        for snr in (0.0, 10.0):
            egt = report.select(method="egt_on_estimate", snr_db=snr)[0].mean_se
            bound = report.select(method="perfect_bound", snr_db=snr)[0].mean_se
            assert bound - egt < 0.05

    def test_ordering_invariant_with_fresh_model(self):
        ds = _tiny_dataset()
        model = build_model(16, seed=1)
        spec = SweepSpec(
            snr_grid_db=(-10.0, 5.0),
            pnr_list_db=(0.0,),
            l_est_list=(2,),
            grid_size=64,
        )
        report = run_sweep(spec, model, ds)
        for snr in (-10.0, 5.0):
            rows = {r.method: r.mean_se for r in report.select(snr_db=snr)}
            assert rows["perfect_bound"] >= rows["bfnn"] - 1e-9
            assert rows["perfect_bound"] >= rows["egt_on_estimate"] - 1e-9
            assert rows["bfnn"] >= 0.0

    def test_egt_rate_improves_with_pnr(self):
        ds = _tiny_dataset(count=500)
        spec = SweepSpec(
            snr_grid_db=(5.0,),
            pnr_list_db=(-20.0, 0.0, 20.0),
            l_est_list=(3,),
            methods=("egt_on_estimate",),
            grid_size=64,
        )
        report = run_sweep(spec, None, ds)
        means = [
            report.select(method="egt_on_estimate", pnr_db=p)[0].mean_se
            for p in (-20.0, 0.0, 20.0)
        ]
        assert means[0] < means[1] < means[2]

    def test_n_t_mismatch_rejected(self):
        with pytest.raises(ValueError):
            run_sweep(SweepSpec(), build_model(8), _tiny_dataset(n_t=16))

    def test_test_count_limits_samples(self):
        ds = _tiny_dataset(count=100)
        spec = SweepSpec(
            snr_grid_db=(0.0,),
            pnr_list_db=(0.0,),
            l_est_list=(1,),
            methods=("perfect_bound",),
            test_count=40,
            grid_size=64,
        )
        report = run_sweep(spec, None, ds)
        assert report.rows[0].n_samples == 40

    def test_deterministic_rows(self):
        ds = _tiny_dataset()
        model = build_model(16, seed=1)
        spec = SweepSpec(
            snr_grid_db=(0.0,), pnr_list_db=(0.0,), l_est_list=(2,), grid_size=64
        )
        a = run_sweep(spec, model, ds)
        b = run_sweep(spec, model, ds)
        assert a.rows == b.rows


def _synthetic_report(shift_db=3.0):
    rows = []
    snrs = np.arange(-10.0, 11.0, 2.0)
    for snr in snrs:
        # two parallel monotone curves separated horizontally by shift_db
        rows.append(EvalRow("bfnn", snr, 0.0, 3, float(0.4 * (snr + 12)), 0.0, 10, 0))
        rows.append(
            EvalRow(
                "egt_on_estimate", snr, 0.0, 3, float(0.4 * (snr + 12 - shift_db)), 0.0, 10, 0
            )
        )
    return EvalReport(rows=rows)


class TestGainAtTarget:
    def test_identical_curves_zero_gain(self):
        report = _synthetic_report(shift_db=0.0)
        assert gain_at_target_se(report, "bfnn", "egt_on_estimate", 4.0) == pytest.approx(
            0.0, abs=1e-12
        )

    def test_exact_shift_recovered(self):
        report = _synthetic_report(shift_db=3.0)
        assert gain_at_target_se(report, "bfnn", "egt_on_estimate", 4.0) == pytest.approx(
            3.0, abs=1e-9
        )

    def test_target_outside_range(self):
        report = _synthetic_report()
        with pytest.raises(ValueError):
            gain_at_target_se(report, "bfnn", "egt_on_estimate", 100.0)

    def test_ambiguous_condition_needs_selection(self):
        rows = _synthetic_report().rows + [
            EvalRow("bfnn", 0.0, 20.0, 3, 1.0, 0.0, 10, 0),
            EvalRow("egt_on_estimate", 0.0, 20.0, 3, 0.5, 0.0, 10, 0),
        ]
        with pytest.raises(ValueError):
            gain_at_target_se(EvalReport(rows=rows), "bfnn", "egt_on_estimate", 4.0)


class TestEmitters:
    def test_empty_report_header_only(self, tmp_path):
        path = tmp_path / "r.csv"
        emit_csv(EvalReport(rows=[]), path)
        assert path.read_text() == "method,snr_db,pnr_db,l_est,mean_se,std_se,n\n"

    def test_single_row_round_trip(self, tmp_path):
        row = EvalRow("bfnn", -5.0, 20.0, 3, 4.123456789012345, 0.25, 1000, 7)
        path = tmp_path / "r.csv"
        emit_csv(EvalReport(rows=[row]), path)
        parsed = parse_csv(path).rows[0]
        assert parsed.method == row.method
        assert parsed.snr_db == row.snr_db
        assert parsed.mean_se == row.mean_se
        assert parsed.n_samples == row.n_samples

    def test_plot_is_well_formed_xml(self, tmp_path):
        report = EvalReport(
            rows=[
                EvalRow("bfnn", 0.0, 0.0, 3, 1.0, 0.1, 10, 0),
                EvalRow("bfnn", 5.0, 0.0, 3, 2.0, 0.1, 10, 0),
            ]
        )
        path = tmp_path / "r.svg"
        emit_plot(report, path)
        root = ET.parse(path).getroot()
        assert root.tag.endswith("svg")

    def test_manifest_is_json(self, tmp_path):
        import json

        report = EvalReport(rows=[], meta={"spec": {"x": 1}})
        path = tmp_path / "m.json"
        emit_manifest(report, path)
        data = json.loads(path.read_text())
        assert data["meta"]["spec"] == {"x": 1} and data["n_rows"] == 0

    def test_csv_bytes_reproducible(self, tmp_path):
        ds = _tiny_dataset()
        spec = SweepSpec(
            snr_grid_db=(0.0, 5.0),
            pnr_list_db=(0.0,),
            l_est_list=(2,),
            methods=("egt_on_estimate", "perfect_bound"),
            grid_size=64,
        )
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        emit_csv(run_sweep(spec, None, ds), p1)
        emit_csv(run_sweep(spec, None, ds), p2)
        assert p1.read_bytes() == p2.read_bytes()
