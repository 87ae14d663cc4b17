"""Heterogeneous multiscale integrators for spectrally truncated SPDEs with
a slow dominant mode."""

from .amplitude import (
    AmplitudeCoeffs,
    AveragedCoeffs,
    averaged_closed_form,
    averaged_coeffs,
    blow_up_time,
    burgers_homog_coeffs,
    homog_coeffs_general,
    limit_coeffs,
)
from .direct import BudgetExceeded, Trajectory, run_amplitude_em, run_direct_stiff
from .hmm import HmmParams, StabilityError, hmm_macro_run_advective, hmm_macro_run_diffusive
from .sde import Diverged, RngStream
from .spectral import (
    ModelSpec,
    Scaling,
    build_truncated_system,
    burgers_model,
    custom_model,
    ks_model,
)

__version__ = "0.1.0"
