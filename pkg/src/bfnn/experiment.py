"""Evaluation protocol: rate-versus-SNR sweeps against the baselines.

For every (PNR, assumed path count) condition the test channels are
estimated once; each method is then scored at every SNR grid point as the
mean spectral efficiency over the test set, always computed against the true
channels. The neural beamformer sees the estimate and the evaluation SNR as
its input; the traditional baseline phase-matches the estimate directly; the
perfect-CSI bound caps everything from above.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import baseline as bl
from .channel import ChannelDataset, derive_seed
from .estimator import EstimatorConfig, estimate_batch
from .network import BfnnModel, pack_inputs

METHODS = ("bfnn", "egt_on_estimate", "perfect_bound")
CSV_HEADER = "method,snr_db,pnr_db,l_est,mean_se,std_se,n"


@dataclass(frozen=True)
class SweepSpec:
    snr_grid_db: tuple = (-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
    pnr_list_db: tuple = (-20.0, 0.0, 20.0)
    l_est_list: tuple = (1, 2, 3)
    methods: tuple = METHODS
    test_count: int | None = None
    grid_size: int = 256
    estimate_seed: int = 202
    arbitrary_meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        if not self.snr_grid_db or not self.pnr_list_db or not self.l_est_list:
            raise ValueError("sweep grids must be nonempty")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        if self.test_count is not None and self.test_count < 1:
            raise ValueError("test_count must be >= 1")

    def to_dict(self) -> dict:
        return {
            "snr_grid_db": list(self.snr_grid_db),
            "pnr_list_db": list(self.pnr_list_db),
            "l_est_list": list(self.l_est_list),
            "methods": list(self.methods),
            "test_count": self.test_count,
            "grid_size": self.grid_size,
            "estimate_seed": self.estimate_seed,
        }


@dataclass(frozen=True)
class EvalRow:
    method: str
    snr_db: float
    pnr_db: float
    l_est: int
    mean_se: float
    std_se: float
    n_samples: int
    seed: int


@dataclass
class EvalReport:
    rows: list[EvalRow]
    meta: dict = field(default_factory=dict)

    def select(self, **filters) -> list[EvalRow]:
        out = self.rows
        for key, val in filters.items():
            out = [r for r in out if getattr(r, key) == val]
        return out

    def curve(self, method: str, pnr_db: float, l_est: int) -> tuple[np.ndarray, np.ndarray]:
        """(snr_db, mean_se) arrays sorted by SNR for one method/condition."""
        rows = sorted(
            self.select(method=method, pnr_db=pnr_db, l_est=l_est),
            key=lambda r: r.snr_db,
        )
        if not rows:
            raise KeyError(f"no rows for {method} at pnr={pnr_db}, l_est={l_est}")
        return (
            np.array([r.snr_db for r in rows]),
            np.array([r.mean_se for r in rows]),
        )


def run_sweep(spec: SweepSpec, model: BfnnModel, dataset: ChannelDataset) -> EvalReport:
    """Evaluate the requested methods over the sweep grid.

    Deterministic: estimation noise is keyed by spec.estimate_seed and each
    condition's own (pnr, l_est) pair, and rows are emitted in a fixed order.
    """
    spec.validate()
    if model is not None and model.n_t != dataset.n_t:
        raise ValueError(
            f"model n_t={model.n_t} does not match dataset n_t={dataset.n_t}"
        )
    if "bfnn" in spec.methods and model is None:
        raise ValueError("bfnn method requested without a model")
    samples = dataset.samples
    if spec.test_count is not None:
        samples = samples[: spec.test_count]
    n = len(samples)
    n_t = dataset.n_t
    H = np.array([s.h for s in samples])
    bound_amp2 = np.abs(H).sum(axis=1) ** 2

    rows: list[EvalRow] = []
    for pnr_db in spec.pnr_list_db:
        for l_est in spec.l_est_list:
            # seed words must be non-negative ints; use the float's bit pattern
            pnr_word = struct.unpack("<Q", struct.pack("<d", float(pnr_db)))[0]
            cond_seed = derive_seed(spec.estimate_seed, pnr_word, l_est)
            needs_est = {"bfnn", "egt_on_estimate"} & set(spec.methods)
            if needs_est:
                cfg = EstimatorConfig(pnr_db=pnr_db, l_est=l_est, grid_size=spec.grid_size)
                estimates = estimate_batch(samples, cfg, cond_seed)
                H_est = np.array([e.h_est for e in estimates])
                V_egt = np.exp(1j * np.where(H_est != 0, np.angle(H_est), 0.0))
            for snr_db in spec.snr_grid_db:
                gamma = 10.0 ** (snr_db / 10.0)
                for method in spec.methods:
                    if method == "perfect_bound":
                        se = np.log2(1.0 + (gamma / n_t) * bound_amp2)
                    elif method == "egt_on_estimate":
                        se = bl.spectral_efficiency_batch(H, V_egt, gamma, n_t)
                    else:
                        _, v = model.infer_beams(pack_inputs(H_est, gamma))
                        se = bl.spectral_efficiency_batch(H, v, gamma, n_t)
                    rows.append(
                        EvalRow(
                            method=method,
                            snr_db=float(snr_db),
                            pnr_db=float(pnr_db),
                            l_est=int(l_est),
                            mean_se=float(se.mean()),
                            std_se=float(se.std()),
                            n_samples=n,
                            seed=cond_seed,
                        )
                    )
    meta = {"spec": spec.to_dict(), "n_t": n_t, **spec.arbitrary_meta}
    return EvalReport(rows=rows, meta=meta)


def gain_at_target_se(
    report: EvalReport,
    method_a: str,
    method_b: str,
    target_se: float,
    pnr_db: float | None = None,
    l_est: int | None = None,
) -> float:
    """Horizontal dB gap between two rate curves at a target rate.

    Positive when method_a reaches the target at a lower SNR than method_b.
    The condition (pnr_db, l_est) may be omitted when the report holds only
    one. Uses monotone piecewise-linear interpolation of each curve.
    """
    conds = {(r.pnr_db, r.l_est) for r in report.rows}
    if pnr_db is None or l_est is None:
        if len(conds) != 1:
            raise ValueError("report holds several conditions; pass pnr_db and l_est")
        pnr_db, l_est = next(iter(conds))

    def snr_at(method: str) -> float:
        snr, se = report.curve(method, pnr_db, l_est)
        se = np.maximum.accumulate(se)  # monotone envelope guards tiny dips
        if not (se[0] <= target_se <= se[-1]):
            raise ValueError(
                f"target {target_se} outside {method} range [{se[0]:.3f}, {se[-1]:.3f}]"
            )
        return float(np.interp(target_se, se, snr))

    return snr_at(method_b) - snr_at(method_a)


def _fmt(x) -> str:
    return repr(float(x))


def emit_csv(report: EvalReport, path) -> None:
    """Fixed-header CSV; float fields use shortest round-trip repr."""
    lines = [CSV_HEADER]
    for r in report.rows:
        lines.append(
            ",".join(
                [
                    r.method,
                    _fmt(r.snr_db),
                    _fmt(r.pnr_db),
                    str(r.l_est),
                    _fmt(r.mean_se),
                    _fmt(r.std_se),
                    str(r.n_samples),
                ]
            )
        )
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def parse_csv(path) -> EvalReport:
    with open(path, encoding="utf-8") as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"unexpected CSV header: {lines[:1]}")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        rows.append(
            EvalRow(
                method=parts[0],
                snr_db=float(parts[1]),
                pnr_db=float(parts[2]),
                l_est=int(parts[3]),
                mean_se=float(parts[4]),
                std_se=float(parts[5]),
                n_samples=int(parts[6]),
                seed=0,
            )
        )
    return EvalReport(rows=rows)


def emit_plot(report: EvalReport, path) -> None:
    """Rate-versus-SNR figure, one series per (method, pnr, l_est), as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 5))
    seen = sorted(
        {(r.method, r.pnr_db, r.l_est) for r in report.rows},
        key=lambda k: (k[1], k[2], METHODS.index(k[0]) if k[0] in METHODS else 99),
    )
    styles = {"bfnn": "-o", "egt_on_estimate": "--s", "perfect_bound": ":"}
    for method, pnr_db, l_est in seen:
        snr, se = report.curve(method, pnr_db, l_est)
        ax.plot(
            snr,
            se,
            styles.get(method, "-"),
            markersize=3.5,
            label=f"{method} pnr={pnr_db:g} l_est={l_est}",
        )
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("spectral efficiency (bits/s/Hz)")
    ax.grid(True, alpha=0.4)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def emit_manifest(report: EvalReport, path) -> None:
    """JSON provenance record: spec, seeds, digests, row count."""
    manifest = {"meta": report.meta, "n_rows": len(report.rows)}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
