"""Uplink SIMO-NOMA multi-user detection: simulator and BER bounds.

Builds Gray-mapped PSK alphabets, simulates superposed uplink
transmissions over Rayleigh fading, detects with either an exhaustive
joint-ML search or successive interference cancellation, and evaluates
closed-form BER upper bounds for the joint detector.
"""

__version__ = "0.1.0"

from .analysis import (
    DistanceTable,
    ErlangSpec,
    NumericError,
    approx_upper_bound,
    bound_by_quadrature,
    build_distance_table,
    conditional_pep,
    conditional_union_bound,
    erlang_pdf,
    q_function,
    upper_bound,
    upsilon,
)
from .channel import (
    ChannelRealization,
    DeviceConfig,
    ReceivedSignal,
    ScenarioConfig,
    sample_channel,
    superpose_and_noise,
)
from .constellation import (
    Constellation,
    bits_to_symbol,
    bits_to_symbol_index,
    build_psk,
    symbol_index_to_bits,
)
from .detectors import (
    ComplexityCount,
    DetectionResult,
    JmlWorkspace,
    complexity_counts,
    detect_jml,
    detect_jml_batch,
    detect_sic,
    detect_sic_batch,
)
from .montecarlo import (
    BerCurve,
    CellStats,
    SimPoint,
    StoppingRule,
    run_curve,
    run_point,
    transmit_snr_to_noise,
)

__all__ = [
    "__version__",
    "BerCurve",
    "CellStats",
    "ChannelRealization",
    "ComplexityCount",
    "Constellation",
    "DetectionResult",
    "DeviceConfig",
    "DistanceTable",
    "ErlangSpec",
    "JmlWorkspace",
    "NumericError",
    "ReceivedSignal",
    "ScenarioConfig",
    "SimPoint",
    "StoppingRule",
    "approx_upper_bound",
    "bits_to_symbol",
    "bits_to_symbol_index",
    "bound_by_quadrature",
    "build_distance_table",
    "build_psk",
    "complexity_counts",
    "conditional_pep",
    "conditional_union_bound",
    "detect_jml",
    "detect_jml_batch",
    "detect_sic",
    "detect_sic_batch",
    "erlang_pdf",
    "q_function",
    "run_curve",
    "run_point",
    "sample_channel",
    "superpose_and_noise",
    "symbol_index_to_bits",
    "transmit_snr_to_noise",
    "upper_bound",
    "upsilon",
]
