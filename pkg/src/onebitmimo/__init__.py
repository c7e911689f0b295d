"""Link-level simulator and solvers for 1-bit quantized massive MU-MIMO-OFDM uplinks."""

from .airlink import (
    ChannelRealization,
    Constellation,
    SymbolFrame,
    SystemConfig,
    demodulate,
    draw_channel,
    make_constellation,
    modulate,
    noise_from_snr,
    noise_std,
    one_bit_quantize,
    transmit,
)
from .chest import (
    ChestParams,
    PilotSet,
    estimate_channel,
    generate_pilots,
    ngd_chest,
    tdmle_denoise,
    zf_chest,
)
from .detect import (
    DetectionResult,
    DetectorParams,
    count_multiplications,
    floating_params,
    hardware_params,
    onebox_detect,
    zf_detect,
)
from .harness import SweepResult, SweepSpec, ber_sweep, chest_mse_sweep, export_results
from .numerics import ClampedMillsTable, FixedPointFormat, quantize_fixed

__version__ = "0.1.0"

__all__ = [
    "ChannelRealization",
    "ChestParams",
    "ClampedMillsTable",
    "Constellation",
    "DetectionResult",
    "DetectorParams",
    "FixedPointFormat",
    "PilotSet",
    "SweepResult",
    "SweepSpec",
    "SymbolFrame",
    "SystemConfig",
    "ber_sweep",
    "chest_mse_sweep",
    "count_multiplications",
    "demodulate",
    "draw_channel",
    "estimate_channel",
    "export_results",
    "floating_params",
    "generate_pilots",
    "hardware_params",
    "make_constellation",
    "modulate",
    "ngd_chest",
    "noise_from_snr",
    "noise_std",
    "one_bit_quantize",
    "onebox_detect",
    "quantize_fixed",
    "tdmle_denoise",
    "transmit",
    "zf_chest",
    "zf_detect",
]
