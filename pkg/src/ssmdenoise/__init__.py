"""Diagonal state-space speech denoiser with FFT-batch and streaming execution."""

from .audio import (
    AudioBuffer,
    DegradeSpec,
    degrade,
    downsample_and_repeat,
    mix_at_snr,
    mulaw_degrade,
    read_wav,
    snr_db,
    write_wav,
)
from .config import NetworkConfig, compute_latency, default_config, latency_samples, load_config
from .errors import (
    AlignmentError,
    AudioFormatError,
    ConfigError,
    CostOverflowError,
    DivergenceError,
    InvalidDimensionError,
    NonDiagonalizableError,
    ShapeMismatchError,
    SilentSignalError,
    SSMDenoiseError,
    VersionMismatchError,
    WeightFileError,
)
from .execution import fft_convolve, scan_recurrent, step_recurrent
from .gradients import GradientBundle, kernel_gradients
from .network import Network, build_network, count_macs, count_params, forward_batch
from .planner import ContractionDims, Order, plan_contraction
from .ssm import ContinuousSSM, DiscreteSSM, diagonalize, discretize_zoh, init_ssm, materialize_kernel
from .streaming import reset_stream, run_streaming, stream_signal
from .training import smooth_l1, train_toy
from .weights import load_weights, save_weights

__all__ = [
    "AlignmentError",
    "AudioBuffer",
    "AudioFormatError",
    "build_network",
    "compute_latency",
    "ConfigError",
    "ContinuousSSM",
    "ContractionDims",
    "CostOverflowError",
    "count_macs",
    "count_params",
    "default_config",
    "degrade",
    "DegradeSpec",
    "diagonalize",
    "DiscreteSSM",
    "discretize_zoh",
    "DivergenceError",
    "downsample_and_repeat",
    "fft_convolve",
    "forward_batch",
    "GradientBundle",
    "init_ssm",
    "InvalidDimensionError",
    "kernel_gradients",
    "latency_samples",
    "load_config",
    "load_weights",
    "materialize_kernel",
    "mix_at_snr",
    "mulaw_degrade",
    "Network",
    "NetworkConfig",
    "NonDiagonalizableError",
    "Order",
    "plan_contraction",
    "read_wav",
    "reset_stream",
    "run_streaming",
    "save_weights",
    "scan_recurrent",
    "ShapeMismatchError",
    "SilentSignalError",
    "smooth_l1",
    "snr_db",
    "SSMDenoiseError",
    "step_recurrent",
    "stream_signal",
    "train_toy",
    "VersionMismatchError",
    "WeightFileError",
    "write_wav",
]

__version__ = "0.1.0"
