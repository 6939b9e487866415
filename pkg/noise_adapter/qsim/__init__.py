from .channels import (
    GateDurations,
    NoiseChannelSet,
    amplitude_damping,
    build_channels,
    depolarizing,
    kraus_completeness_error,
    phase_damping,
    readout_confusion,
)
from .simulator import (
    CountsMap,
    Distribution,
    bitstring,
    counts_to_distribution,
    ideal_distribution,
    noisy_distribution,
    sample_counts,
)

__all__ = [
    'GateDurations',
    'NoiseChannelSet',
    'amplitude_damping',
    'build_channels',
    'depolarizing',
    'kraus_completeness_error',
    'phase_damping',
    'readout_confusion',
    'CountsMap',
    'Distribution',
    'bitstring',
    'counts_to_distribution',
    'ideal_distribution',
    'noisy_distribution',
    'sample_counts',
]
