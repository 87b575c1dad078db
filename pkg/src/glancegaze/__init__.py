"""Causal multi-stage speech enhancement with glance and gaze refinement stages."""

from .config import ConfigError, ModelConfig, PQ_GRID, toy_config
from .dsp import ComplexSpectrogram, WaveBuffer, compress, decompress, istft, stft
from .model import StageOutputs, count_macs, count_params, forward, model_init
from .engine import enhance, evaluate, train
from .streaming import StreamState, enhance_stream, flush, init_stream, stream_signal, stream_state_size

__all__ = [
    "ConfigError", "ModelConfig", "PQ_GRID", "toy_config",
    "ComplexSpectrogram", "WaveBuffer", "compress", "decompress", "istft", "stft",
    "StageOutputs", "count_macs", "count_params", "forward", "model_init",
    "enhance", "evaluate", "train",
    "StreamState", "enhance_stream", "flush", "init_stream", "stream_signal", "stream_state_size",
]
