"""panscope: padding-aware-neuron diagnostics for convolutional networks."""

__version__ = "0.1.0"

from .detector import DetectorConfig, NeuronRef, census, census_trace, label_neuron, score_neuron
from .engine import ActivationTrace, ConvLayerSpec, ConvNetSpec, conv2d, forward, pad_map
from .ks import ks_greater, ks_less, ks_two_sided
from .regions import RegionSamples, extract_regions, histogram, truncate_centre

__all__ = [
    "__version__",
    "ActivationTrace",
    "ConvLayerSpec",
    "ConvNetSpec",
    "DetectorConfig",
    "NeuronRef",
    "RegionSamples",
    "census",
    "census_trace",
    "conv2d",
    "extract_regions",
    "forward",
    "histogram",
    "ks_greater",
    "ks_less",
    "ks_two_sided",
    "label_neuron",
    "pad_map",
    "score_neuron",
    "truncate_centre",
]
