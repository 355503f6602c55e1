"""Laser powder-bed heat simulation, annealed nozzle tours and LSTM forecasting of
sub-domain temperature-gradient features."""

from .heatsim import GridSpec, LaserParams, MaterialParams, TemperatureField, simulate_tour
from .tour import AnnealSchedule, build_penalty_matrix, simulated_annealing
from .lstm import TrainConfig, forecast, train

__version__ = "0.1.0"
