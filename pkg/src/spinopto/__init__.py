"""Semiclassical simulator for a collective spin coupled to a driven two-mode cavity."""

from spinopto.model import (
    CavityState,
    EffectiveField,
    MicroscopicParams,
    OptomechAnalogue,
    SpinState,
    SystemParams,
    analogy_equivalence_check,
    analogy_map,
    cavity_drift,
    derive_couplings,
    effective_field,
    spin_drift,
)
from spinopto.steady import (
    BranchTrace,
    FixedPoint,
    classify,
    find_fixed_points,
    make_fixed_point,
    lambda_response,
    operating_point_drive,
    photon_numbers_static,
    quasistatic_sweep,
    residual,
)
from spinopto.dynamics import (
    NoiseInput,
    Ramp,
    SimConfig,
    TrajectoryRecord,
    dynamic_hysteresis,
    measure_ringdown,
    simulate,
    simulate_ensemble,
    step,
)
from spinopto.linear import (
    LinearResponse,
    NoiseSpectrum,
    StateSpace,
    baseline_params,
    build_state_space,
    field_transfer_eq9,
    noise_spectrum_linear,
    quadrature_psd_linear,
    response_at,
    response_functions,
    sampled_quadrature_psd,
)
from spinopto.spectral import (
    PsdEstimate,
    expected_noise_map,
    quadrature_series,
    relative_noise_db,
    simulated_noise_map,
    welch_psd,
    window_kernel,
)
from spinopto.config import RunConfig, emit_config, load_config, parse_config
from spinopto.errors import (
    ConfigError,
    DomainError,
    FitQualityError,
    IntegrationError,
    PoleProximityError,
    SpinoptoError,
    UnsupportedConfigurationError,
)

__version__ = "0.1.0"
