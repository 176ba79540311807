"""Spectra of a driven dissipative three-level atom by three
cross-validated routes: the stationary Fourier-transform spectrum from
steady-state correlations, the causally filtered time-dependent spectrum,
and a cascaded two-level analyzer atom read out by its excitation.
"""

__version__ = "0.1.0"

from .hilbert import (
    DensityMatrix,
    HilbertSpace,
    Operator,
    StateVector,
    expectation,
    lift,
    partial_trace,
    tensor,
)
from .lindblad import (
    DriveTerm,
    LindbladModel,
    ThreeLevelParams,
    build_superoperator,
    evolve,
    rhs,
    steady_state,
    three_level_model,
)
from .qrt import (
    CorrelationGrid,
    DetectionOperator,
    SpectrumTrace,
    correlation_grid,
    qrt_sandwich,
    qrt_two_time,
    wk_spectrum,
)
from .physical import FilterParams, filter_response, physical_spectrum, physical_spectrum_scan
from .cascade import (
    AnalyzerBankConfig,
    CascadedModel,
    CascadedParams,
    ExcitationRecord,
    analyzer_spectrum,
    bank_excitation_master,
    build_cascaded,
    ensemble_excitation,
    mcwf_trajectory,
)
from .peaks import Peak, PeakList, find_peaks
from .config import ScenarioConfig, parse_config
from .harness import RunReport, run_scenario

__all__ = [name for name in dir() if not name.startswith("_")]
