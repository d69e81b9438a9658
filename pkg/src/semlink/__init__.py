"""Importance-aware bit, mapping and power allocation over simulated MIMO-OFDM links."""

__version__ = "0.1.0"

from .link import LinkConfig, ChannelRealization, generate_channel, svd_gains
from .importance import ImportanceProfile, WeightVector, compute_weights, importance_order, topbeta_bits
from .mapping import SubcarrierMapping, build_blocks, assign_patches, build_mapping
from .ideal import AllocProblem, AllocationResult, bcd_solve, integerize, power_solve_fixed_bits
from .fbl import FblParams, bcd_solve_fbl, lc_power_fbl, q_inverse, dispersion_exact, dispersion_approx
from .quantizer import PatchImage, QuantizedImage, quantize, dequantize, weighted_error_bound
from .metrics import latency_bound, inference_latency, fbl_rate, fbl_inference_latency, ber_from_bler
from .experiments import ExperimentConfig, ResultRow, run_method, sweep

__all__ = [
    "LinkConfig",
    "ChannelRealization",
    "generate_channel",
    "svd_gains",
    "ImportanceProfile",
    "WeightVector",
    "compute_weights",
    "importance_order",
    "topbeta_bits",
    "SubcarrierMapping",
    "build_blocks",
    "assign_patches",
    "build_mapping",
    "AllocProblem",
    "AllocationResult",
    "bcd_solve",
    "integerize",
    "power_solve_fixed_bits",
    "FblParams",
    "bcd_solve_fbl",
    "lc_power_fbl",
    "q_inverse",
    "dispersion_exact",
    "dispersion_approx",
    "PatchImage",
    "QuantizedImage",
    "quantize",
    "dequantize",
    "weighted_error_bound",
    "latency_bound",
    "inference_latency",
    "fbl_rate",
    "fbl_inference_latency",
    "ber_from_bler",
    "ExperimentConfig",
    "ResultRow",
    "run_method",
    "sweep",
]
