"""Biodynamic feedthrough (BDFT) simulation, identification and cancellation
for touchscreen input under vehicle motion."""

from .bdft_model import (
    BdftParams,
    FrequencyResponse,
    LpvSchedule,
    ParamSlopes,
    discrete_frf_values,
    discretize,
    evaluate_frf,
    evaluate_schedule,
    frf_values,
    periodic_response,
    simulate_response,
    transient_samples,
)
from .cancellation import CancellerState, cancel_batch, canceller_push, make_canceller, update_params
from .identification import (
    FitResult,
    average_params,
    estimate_frf,
    fit_bdft_model,
    fit_lpv_schedule,
    model_vaf,
    vaf,
)
from .signals import (
    MeasurementWindow,
    MultisineSpec,
    TimeSeries,
    crest_factor,
    excitation_bins,
    fit_multisine_to_psd,
    generate_multisine,
    randomize_phases,
)
from .simulator import SyntheticParticipant, Trial, make_population, make_reference, run_trial

__version__ = "0.1.0"
