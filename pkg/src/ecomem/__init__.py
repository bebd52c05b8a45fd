"""Ecological memory functions from time series via Bayesian distributed-lag models."""

from .dataset import MemorySpec, TimeSeriesDataset, build_lag_panel, load_csv, standardize
from .fit import Fit, fit, prepare_model
from .formula import Formula, parse_formula
from .memcore import MemoryModel, ModelConfig, ModelState, Priors
from .sampler import ChainSet, SamplerConfig, run_chains

__version__ = "0.1.0"
