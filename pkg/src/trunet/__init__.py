"""Streaming TRU-Net speech enhancement.

Frequency-axis recurrent U-Net, phase-aware beta-sigmoid masks for joint
denoising and dereverberation, multi-scale losses and an INT8 inference path.
"""

from trunet.dsp import StftConfig, istft, stft
from trunet.engine import Enhancer, StreamState
from trunet.graph import Network, TrunetConfig, build, random_init
from trunet.weights import WeightStore, load_weights, save_weights

__all__ = [
    "Enhancer",
    "Network",
    "StftConfig",
    "StreamState",
    "TrunetConfig",
    "WeightStore",
    "build",
    "istft",
    "load_weights",
    "random_init",
    "save_weights",
    "stft",
]

__version__ = "0.1.0"
