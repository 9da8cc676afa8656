"""Simulator for the regularized chemotaxis-Navier-Stokes system with
discrete monitors for its a-priori estimates."""

from .config import Config, emit_config, load_config, parse_config
from .diagnostics import CSV_COLUMNS, EnergyReport, SpaceTimeAccumulator, energy_report, monitor_bounds
from .errors import ChemoflowError
from .grid import Grid
from .model import (
    ModelParams,
    Regime,
    RegimeTag,
    check_structural_hypotheses,
    classify_regime,
    psi,
    select_interpolation_exponents,
)
from .stepper import SimState, StepControl, cfl_dt, initial_data, run, step
from .sweep import SweepReport, epsilon_sweep

__version__ = "0.1.0"
