"""Compile spiking neural networks onto neuromorphic cores and simulate them."""

from ._version import __version__
from .errors import SpikemapError
from .mapper import DeploymentImage, build_image, emit, load_image, place
from .model_ir import LayerKind, LayerSpec, NetworkSpec, NeuronConfig, load_network, lower
from .normalizer import QuantizationConfig, normalize
from .partitioner import CostWeights, Plan, optimize
from .resources import CoreConstraints, Sharing
from .simulator import run_mapped, run_reference

__all__ = [
    "CoreConstraints",
    "CostWeights",
    "DeploymentImage",
    "LayerKind",
    "LayerSpec",
    "NetworkSpec",
    "NeuronConfig",
    "Plan",
    "QuantizationConfig",
    "Sharing",
    "SpikemapError",
    "__version__",
    "build_image",
    "emit",
    "load_image",
    "load_network",
    "lower",
    "normalize",
    "optimize",
    "place",
    "run_mapped",
    "run_reference",
]
