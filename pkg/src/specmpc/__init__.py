"""Spectral predictive control of switching power converters.

The controller picks each switch state so that the spectrum of the recent
switching history follows a frequency-dependent weighting, spreading
switching distortion and keeping chosen bands clear.
"""
from .analysis import (
    PowerSpectrum,
    RippleStats,
    avg_switching_frequency,
    distortion_power,
    gap_depth,
    ripple_stats,
    sfdr,
    spectrogram,
    welch_spectrum,
)
from .controller import (
    ControllerState,
    CostWeights,
    HorizonConfig,
    PredictiveController,
    evaluate_candidates,
    ripple_feasibility,
    spectral_cost,
    step,
    switching_cost,
)
from .converter import (
    PIParams,
    PlantParams,
    PlantState,
    design_cascade,
    design_voltage_pi,
    equilibrium,
    plant_step,
    pwm_baseline,
)
from .estimator import SpectralModulator
from .filters import FilterSpec, Gap, ReferenceSpectrum, Segment, compile_weights, move_gap
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario
from .simulate import RunArtifacts, run_scenario
from .spectrum import ConfigurationError, EngineConfig, SpectrumState, SwitchingWindow, resync, slide

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
