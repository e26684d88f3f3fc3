"""Guidable diffusion model for phoneme-level prosody sequences.

Generates (log-pitch, energy, log-duration) triples per phoneme with a
pair of dilated-convolution denoisers under classifier-free guidance,
style-token conditioning and a std-rescale correction for large guiding
scales.
"""

__version__ = "0.1.0"

from .config import RunConfig
from .corpus import Corpus, generate_corpus, load_corpus, save_corpus
from .guidance import GuidanceParams, cfg_combine, rescale, reverse_step, sample
from .schedule import NoiseSchedule, cosine_schedule, forward_diffuse
from .training import ModelBundle, TrainConfig, build_models, train

__all__ = [
    "RunConfig",
    "Corpus",
    "generate_corpus",
    "load_corpus",
    "save_corpus",
    "GuidanceParams",
    "cfg_combine",
    "rescale",
    "reverse_step",
    "sample",
    "NoiseSchedule",
    "cosine_schedule",
    "forward_diffuse",
    "ModelBundle",
    "TrainConfig",
    "build_models",
    "train",
]
