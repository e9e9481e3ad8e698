"""Analog-only transmit beamforming for mmWave MISO links.

Simulates sparse multipath channels, degrades them through a pilot-based
hierarchical estimator, trains a small phase-output network to maximize
spectral efficiency from the imperfect estimates, and benchmarks it against
the closed-form equal-gain baseline and the perfect-CSI bound.
"""

from .baseline import (
    AnalogBeamformer,
    baseline_on_estimate,
    egt_beamformer,
    perfect_csi_bound,
    spectral_efficiency,
)
from .channel import (
    ChannelConfig,
    ChannelDataset,
    ChannelSample,
    PathParams,
    array_response,
    generate_channel,
    generate_dataset,
)
from .container import load_dataset, load_estimates, save_dataset, save_estimates
from .estimator import (
    ChannelEstimate,
    EstimatorConfig,
    estimate_batch,
    estimate_channel,
    pilot_measure,
    sounding_beam,
)
from .experiment import EvalReport, SweepSpec, gain_at_target_se, run_sweep
from .network import (
    BfnnModel,
    build_model,
    count_flops,
    count_params,
    encode_snr,
    lambda_forward,
    load_model,
    pack_input,
    save_model,
)
from .training import TrainConfig, adam_step, se_loss, train

__version__ = "0.1.0"

__all__ = [
    "AnalogBeamformer",
    "BfnnModel",
    "ChannelConfig",
    "ChannelDataset",
    "ChannelEstimate",
    "ChannelSample",
    "EstimatorConfig",
    "EvalReport",
    "PathParams",
    "SweepSpec",
    "TrainConfig",
    "adam_step",
    "array_response",
    "baseline_on_estimate",
    "build_model",
    "count_flops",
    "count_params",
    "egt_beamformer",
    "encode_snr",
    "estimate_batch",
    "estimate_channel",
    "gain_at_target_se",
    "generate_channel",
    "generate_dataset",
    "lambda_forward",
    "load_dataset",
    "load_estimates",
    "load_model",
    "pack_input",
    "perfect_csi_bound",
    "pilot_measure",
    "run_sweep",
    "save_dataset",
    "save_estimates",
    "save_model",
    "se_loss",
    "sounding_beam",
    "spectral_efficiency",
    "train",
]
