"""FBMC/OQAM massive-MIMO uplink link-level simulation."""

from .cellfree import build_layout, fractional_power_control, noise_power
from .channel import ChannelRealization, PdpProfile, apply_channel, draw_realization, tdlc_pdp
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .equalizer import (
    build_combiner,
    composite_pulse,
    design_fse,
    equalize_stream,
    equivalent_channel,
)
from .estimation import assemble_model, build_pilot_plan, error_stats, estimate_channels
from .fbmc import PrototypeFilter, SymbolFrame, analyze, design_phydyas, synthesize
from .metrics import empirical_cdf, measure_ber, measure_sinr, nmse
from .ofdm import OfdmConfig, ofdm_detect, ofdm_modulate
from .runner import run_experiment

__version__ = "0.1.0"

__all__ = [
    "ChannelRealization",
    "ConfigError",
    "ExperimentConfig",
    "OfdmConfig",
    "PdpProfile",
    "PrototypeFilter",
    "SymbolFrame",
    "analyze",
    "apply_channel",
    "assemble_model",
    "build_combiner",
    "build_layout",
    "build_pilot_plan",
    "composite_pulse",
    "design_fse",
    "design_phydyas",
    "draw_realization",
    "empirical_cdf",
    "equalize_stream",
    "equivalent_channel",
    "error_stats",
    "estimate_channels",
    "fractional_power_control",
    "load_config",
    "measure_ber",
    "measure_sinr",
    "nmse",
    "noise_power",
    "ofdm_detect",
    "ofdm_modulate",
    "parse_config",
    "run_experiment",
    "synthesize",
    "tdlc_pdp",
]
