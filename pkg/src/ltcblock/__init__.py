"""Liquid time-constant networks with NCP wiring for mmWave blockage prediction."""

__version__ = "0.1.0"

from .cell import (Checkpoint, LtcParameters, ModelConfig, ObservationWindow, classify,  # noqa: E402
                   forward_sequence, fused_step, init_parameters, predict_proba)
from .errors import (ConfigError, GenerationError, LtcBlockError, NumericError,  # noqa: E402
                     SchemaError, WiringError)
from .wiring import Fanouts, LayerCounts, NcpWiring, Synapse, build_ncp, validate_wiring  # noqa: E402

__all__ = [
    "Checkpoint", "ConfigError", "Fanouts", "GenerationError", "LayerCounts", "LtcBlockError",
    "LtcParameters", "ModelConfig", "NcpWiring", "NumericError", "ObservationWindow",
    "SchemaError", "Synapse", "WiringError", "build_ncp", "classify", "forward_sequence",
    "fused_step", "init_parameters", "predict_proba", "validate_wiring",
]
