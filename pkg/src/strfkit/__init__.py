"""strfkit: parameterized Gabor spectro-temporal receptive fields.

Kernel synthesis with analytic gradients, complex 2-D convolution over
mel spectrograms (compiled direct core with a pure-NumPy fallback, plus
an FFT path), gradient-based learning of the 4 filter parameters, and a
population-analysis suite (modulation descriptors, KDE/SVD separability,
bootstrap, Sinkhorn task distances, hierarchical clustering).
"""

__version__ = "0.1.0"

from .errors import (
    ConvergenceWarning,
    DegenerateAxis,
    DegenerateDistribution,
    DivergedError,
    InvalidConfig,
    InvalidInput,
    NumericalError,
    StrfkitError,
)
from .gaborkit import (
    FilterBank,
    GaborParams,
    KernelGrid,
    ModulationPoint,
    canonicalize,
    from_cartesian,
    gabor_gradients,
    gabor_kernel,
    load_bank,
    save_bank,
    to_cartesian,
)
from .melfront import (
    MelConfig,
    MelSpectrogram,
    Waveform,
    channels_per_octave,
    instance_normalize,
    load_wav,
    mel_filterbank_matrix,
    mel_spectrogram,
)
from .strfconv import FeatureMap, OutputMode, apply_bank, project
from .learner import Readout, ToyTask, TrainConfig, TrainReport, train
from .modanalysis import (
    DensityGrid,
    PopulationStats,
    alpha_asymmetry,
    alpha_low,
    alpha_separability,
    alpha_star,
    bootstrap_ci,
    kde_density,
    population_stats,
)
from .taskdist import (
    DendrogramNode,
    NormalizationFrame,
    TaskPopulation,
    TransportResult,
    cost_matrix,
    linkage,
    normalize_populations,
    pairwise_distances,
    sinkhorn,
)

__all__ = [name for name in dir() if not name.startswith("_")]
