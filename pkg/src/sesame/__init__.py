"""Self-constructive system energy modeling toolkit.

Simulates a mobile system's power draw and smart-battery interface, then
reconstructs high-rate energy models from the coarse, noisy battery
readings: stretch to an accurate low-rate training set, transform the
predictors with PCA, fit by total least squares, and compress the
coefficients back to high rates. A model manager monitors the active
model and rebuilds it when a configuration or usage change degrades it.
"""

from .battery import (
    BatteryInterfaceModel,
    BatteryReading,
    BatteryReadings,
    average_to_rate,
    rms_relative_error,
    rms_relative_error_detail,
    sample_capacity,
    sample_filtered,
    sample_instant,
    sample_interface,
)
from .collector import (
    DesignMatrix,
    aggregate_response,
    attach_response,
    bundle_read,
    collect,
)
from .constructor import (
    EnergyModel,
    PCABasis,
    RegressogramModel,
    build_model,
    compress,
    fit_ols,
    fit_regressogram,
    fit_tls,
    iterate_construction,
    pca_transform,
    predict_regressogram,
    select_components,
    stretch,
)
from .manager import (
    ConfigurationKey,
    ModelTable,
    install_model,
    load,
    lookup_or_create,
    maybe_rebuild,
    monitor,
    persist,
)
from .tracesim import (
    Component,
    ComponentStateModel,
    DutyCycle,
    FixedState,
    MarkovChain,
    Phase,
    PredictorSpec,
    Schedule,
    StateResidency,
    Trace,
    TraceSample,
    WorkloadSpec,
    gen_trace,
    observe_predictors,
    residency_beta_true,
    residency_predictors,
    true_energy,
)

__version__ = "0.1.0"
