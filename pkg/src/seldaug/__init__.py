"""Data augmentation for sound event localization and detection (SELD).

Channel swapping, multichannel simulation, time-domain mixing and
time-frequency masking for tetrahedral microphone (MIC) and first-order
Ambisonics (FOA) recordings, plus the feature stack and segment-based
location-aware scoring.
"""
from .acs import ChannelSwapAugmenter, DoaTransform, augment_acs, get_transform, transform_table
from .annotations import CLASS_NAMES, EventAnnotationList, EventRow
from .arrays import Doa, cos_gamma, foa_steering, mic_response, synthesize_point_source
from .clip import MultichannelClip
from .dsp import StftConfig, StftTensor, eigh, gev_principal, istft, mel_filterbank, stft
from .features import FeatureStack, SeldFeatureExtractor, build_stack, read_features, write_features
from .mcs import MultichannelSimulator, augment_mcs, cgmm_em, simulate
from .metrics import SeldEvaluator, SeldScores, compute_scores, segmentize
from .mix_mask import TfmConfig, TimeDomainMixer, TimeFrequencyMasker, tdm_mix, tfm_apply

__version__ = "0.1.0"

__all__ = [
    "ChannelSwapAugmenter", "DoaTransform", "augment_acs", "get_transform", "transform_table",
    "CLASS_NAMES", "EventAnnotationList", "EventRow",
    "Doa", "cos_gamma", "foa_steering", "mic_response", "synthesize_point_source",
    "MultichannelClip",
    "StftConfig", "StftTensor", "eigh", "gev_principal", "istft", "mel_filterbank", "stft",
    "FeatureStack", "SeldFeatureExtractor", "build_stack", "read_features", "write_features",
    "MultichannelSimulator", "augment_mcs", "cgmm_em", "simulate",
    "SeldEvaluator", "SeldScores", "compute_scores", "segmentize",
    "TfmConfig", "TimeDomainMixer", "TimeFrequencyMasker", "tdm_mix", "tfm_apply",
]
