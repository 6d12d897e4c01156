"""Target-speaker separation trained with speaker representation loss."""

from ._core import (
    Encoder,
    Separator,
    gradient_suite,
    istft,
    mse_loss,
    read_wav,
    run,
    si_sdr,
    srl_distance,
    srl_objective,
    stft,
    triplet_hinge,
    triplet_objective,
    write_wav,
)

__all__ = [
    "Encoder",
    "Separator",
    "gradient_suite",
    "istft",
    "mse_loss",
    "read_wav",
    "run",
    "si_sdr",
    "srl_distance",
    "srl_objective",
    "stft",
    "triplet_hinge",
    "triplet_objective",
    "write_wav",
]
