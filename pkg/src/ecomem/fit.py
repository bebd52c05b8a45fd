"""Glue from a validated dataset to a posterior model and its chains."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .dataset import MemorySpec, StandardizationRecord, TimeSeriesDataset, build_lag_panel, standardize
from .formula import Formula, parse_formula
from .memcore import MemoryModel, ModelConfig, Priors, build_designs
from .sampler import ChainSet, SamplerConfig, run_chains


@dataclass
class Fit:
    model: MemoryModel
    chains: ChainSet
    standardization: StandardizationRecord


def prepare_model(
    ds: TimeSeriesDataset,
    formula: str | Formula,
    family: str,
    spec: MemorySpec,
    trials: str | None = None,
    priors: Priors | None = None,
    spline_order: int = 4,
) -> MemoryModel:
    """Standardize continuous covariates, build the lag panel and spline designs."""
    if isinstance(formula, str):
        formula = parse_formula(formula)
    for v in spec.mem_vars:
        if v not in formula.variables:
            raise ValueError(f"memory covariate {v!r} does not appear in the formula")
    if family == "binomial" and trials is None:
        trials = "trials"
    used = formula.variables
    std_cols = [v for v in used if ds.covariate_kinds.get(v, "continuous") == "continuous"]
    kinds = dict(ds.covariate_kinds)
    for v in used:
        kinds.setdefault(v, "continuous")
    ds = TimeSeriesDataset(ds.time, ds.group, ds.columns, kinds, ds.time_id, ds.group_id)
    ds_std, record = standardize(ds, std_cols)
    panel = build_lag_panel(
        ds_std,
        spec,
        formula.response,
        covariates=[v for v in used if v not in spec.mem_vars],
        trials=trials,
        standardization=record,
    )
    designs = build_designs(spec, order=spline_order)
    config = ModelConfig(family, formula, spec, priors or Priors())
    return MemoryModel(panel, designs, config)


def fit(
    ds: TimeSeriesDataset,
    formula: str | Formula,
    family: str,
    mem_vars: Sequence[str],
    lags: Sequence[int],
    k: Sequence[int] | None = None,
    sampler: SamplerConfig | None = None,
    trials: str | None = None,
    priors: Priors | None = None,
) -> Fit:
    spec = MemorySpec.build(mem_vars, lags, k)
    model = prepare_model(ds, formula, family, spec, trials=trials, priors=priors)
    chains = run_chains(model, sampler or SamplerConfig())
    return Fit(model, chains, model.panel.standardization)
