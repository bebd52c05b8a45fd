"""Forward simulation from the memory model and recovery scoring."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataset import BINARY, CONTINUOUS, TimeSeriesDataset, lag_matrix, validate
from .diagnostics import MemoryFunction
from .formula import parse_formula
from .memcore import filter_covariate, inv_link, term_matrix


class ShapeMismatch(ValueError):
    pass


@dataclass
class CovariateGen:
    kind: str = CONTINUOUS
    # binary: event probability per step
    p: float = 0.1
    # continuous: AR(1) coefficient and innovation sd
    ar: float = 0.0
    sd: float = 1.0


@dataclass
class WeightShape:
    """Parametric lag-weight shape; normalized onto the simplex by :meth:`weights`."""

    L: int
    shape: str = "uniform"
    peak: float = 0.0
    width: float = 1.0
    rate: float = 0.5
    values: list[float] | None = None

    def weights(self) -> np.ndarray:
        lags = np.arange(self.L + 1, dtype=float)
        if self.shape == "uniform":
            w = np.ones_like(lags)
        elif self.shape == "hump":
            w = np.exp(-0.5 * ((lags - self.peak) / self.width) ** 2)
        elif self.shape == "exp_decay":
            w = np.exp(-self.rate * lags)
        elif self.shape == "custom":
            w = np.asarray(self.values, dtype=float)
            if w.shape != lags.shape:
                raise ValueError(f"custom weights need {self.L + 1} values")
        else:
            raise ValueError(f"unknown weight shape {self.shape!r}")
        if np.any(w < 0) or not w.sum() > 0:
            raise ValueError("weights must be nonnegative with positive sum")
        return w / w.sum()


@dataclass
class SimScenario:
    family: str
    formula: str
    mu: float
    beta: dict[str, float]
    covariates: dict[str, CovariateGen]
    memory: dict[str, WeightShape]
    T: int = 120
    n_groups: int = 1
    seed: int = 0
    sigma: float = 1.0
    trials: int = 10

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimScenario":
        d = dict(d)
        d["covariates"] = {k: CovariateGen(**v) for k, v in d["covariates"].items()}
        d["memory"] = {k: WeightShape(**v) for k, v in d.get("memory", {}).items()}
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def load(cls, path: str | Path) -> "SimScenario":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def true_weights(self) -> dict[str, np.ndarray]:
        return {v: s.weights() for v, s in self.memory.items()}


def canonical_scenario(seed: int = 0) -> SimScenario:
    """Poisson scenario with binary ``v1`` (L=10, hump at lag 2), AR(1) ``v2``
    (L=6, exponential decay) and i.i.d. ``v3``; response ``y ~ v1*v2 + v2*v3``.
    """
    return SimScenario(
        family="poisson",
        formula="y ~ v1*v2 + v2*v3",
        mu=1.0,
        beta={"v1": -0.5, "v2": 0.4, "v3": 0.3, "v1:v2": -0.2, "v2:v3": 0.1},
        covariates={
            "v1": CovariateGen(kind=BINARY, p=0.1),
            "v2": CovariateGen(kind=CONTINUOUS, ar=0.3, sd=1.0),
            "v3": CovariateGen(kind=CONTINUOUS, ar=0.0, sd=1.0),
        },
        memory={
            "v1": WeightShape(L=10, shape="hump", peak=2.0, width=1.5),
            "v2": WeightShape(L=6, shape="exp_decay", rate=0.5),
        },
        T=120,
        n_groups=1,
        seed=seed,
    )


@dataclass
class SimResult:
    dataset: TimeSeriesDataset
    truth: dict = field(default_factory=dict)

    @property
    def true_weights(self) -> dict[str, np.ndarray]:
        return {v: np.asarray(w) for v, w in self.truth["weights"].items()}


def _draw_covariate(gen: CovariateGen, n: int, rng: np.random.Generator) -> np.ndarray:
    if gen.kind == BINARY:
        if not 0 < gen.p < 1:
            raise ValueError("binary event probability must be in (0, 1)")
        return (rng.uniform(size=n) < gen.p).astype(float)
    eps = rng.standard_normal(n) * gen.sd
    x = np.empty(n)
    x[0] = eps[0] / np.sqrt(1.0 - gen.ar**2)
    for t in range(1, n):
        x[t] = gen.ar * x[t - 1] + eps[t]
    return x


def forward_predictor(
    formula_terms: Sequence[tuple[str, ...]],
    raw: Mapping[str, np.ndarray],
    weights: Mapping[str, np.ndarray],
    mu: float,
    beta: Mapping[str, float],
    presample: int,
) -> np.ndarray:
    """Linear predictor for rows ``presample..`` of raw covariate series."""
    n = len(next(iter(raw.values()))) - presample
    cols = {}
    for v, x in raw.items():
        if v in weights and len(weights[v]) > 1:
            L = len(weights[v]) - 1
            cols[v] = filter_covariate(lag_matrix(x, L, presample), weights[v])
        else:
            cols[v] = x[presample:]
    Z = term_matrix(formula_terms, cols, n)
    b = np.array([beta.get(":".join(t), 0.0) for t in formula_terms])
    return mu + Z @ b


def generate(scenario: SimScenario) -> SimResult:
    """Draw covariates and a response from the forward model.

    Each group's covariates are simulated over ``T + max(L)`` steps and only
    the last ``T`` rows are kept, so every kept response has full history.
    Covariates and response use separate child streams of ``scenario.seed``.
    """
    sc = scenario
    formula = parse_formula(sc.formula)
    for v in formula.variables:
        if v not in sc.covariates:
            raise ValueError(f"no generator for covariate {v!r}")
    weights = sc.true_weights()
    presample = max((len(w) - 1 for w in weights.values()), default=0)
    cov_rng, resp_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(sc.seed).spawn(2)
    )
    names = list(sc.covariates)
    group, time, y, trials = [], [], [], []
    cols: dict[str, list[np.ndarray]] = {v: [] for v in names}
    preds = []
    for g in range(sc.n_groups):
        raw = {v: _draw_covariate(sc.covariates[v], sc.T + presample, cov_rng) for v in names}
        pred = forward_predictor(formula.terms, raw, weights, sc.mu, sc.beta, presample)
        preds.append(pred)
        mean = inv_link(sc.family, pred)
        if sc.family == "gaussian":
            yg = mean + sc.sigma * resp_rng.standard_normal(sc.T)
        elif sc.family == "poisson":
            yg = resp_rng.poisson(mean).astype(float)
        elif sc.family == "binomial":
            yg = resp_rng.binomial(sc.trials, mean).astype(float)
            trials.append(np.full(sc.T, float(sc.trials)))
        else:
            raise ValueError(f"unknown family {sc.family!r}")
        y.append(yg)
        group.append(np.full(sc.T, str(g + 1), dtype=object))
        time.append(np.arange(1, sc.T + 1))
        for v in names:
            cols[v].append(raw[v][presample:])
    columns = {formula.response: np.concatenate(y)}
    if trials:
        columns["trials"] = np.concatenate(trials)
    columns.update({v: np.concatenate(cols[v]) for v in names})
    ds = TimeSeriesDataset(
        time=np.concatenate(time).astype(np.int64),
        group=np.concatenate(group),
        columns=columns,
        covariate_kinds={v: sc.covariates[v].kind for v in names},
        time_id="time",
        group_id="group",
    )
    validate(ds)
    truth = {
        "weights": {v: w.tolist() for v, w in weights.items()},
        "mu": sc.mu,
        "beta": dict(sc.beta),
        "scenario": sc.to_dict(),
        "note": "beta is on the raw (unstandardized) covariate scale",
    }
    return SimResult(ds, truth)


@dataclass
class RecoveryReport:
    abs_error: dict[str, np.ndarray]
    covered: dict[str, np.ndarray]

    @property
    def mae(self) -> dict[str, float]:
        return {v: float(e.mean()) for v, e in self.abs_error.items()}

    @property
    def coverage(self) -> dict[str, float]:
        return {v: float(c.mean()) for v, c in self.covered.items()}

    @property
    def overall_mae(self) -> float:
        return float(np.concatenate(list(self.abs_error.values())).mean())

    @property
    def overall_coverage(self) -> float:
        return float(np.concatenate(list(self.covered.values())).mean())

    def to_dict(self) -> dict:
        return {
            "mae": self.mae,
            "coverage": self.coverage,
            "overall_mae": self.overall_mae,
            "overall_coverage": self.overall_coverage,
            "abs_error": {v: e.tolist() for v, e in self.abs_error.items()},
            "covered": {v: c.astype(bool).tolist() for v, c in self.covered.items()},
        }


def score_recovery(
    fit: Sequence[MemoryFunction], truth: Mapping[str, Sequence[float]]
) -> RecoveryReport:
    """Per-lag absolute error of posterior-mean weights and band coverage."""
    err, cov = {}, {}
    for mf in fit:
        if mf.var not in truth:
            continue
        t = np.asarray(truth[mf.var], dtype=float)
        if t.shape != mf.mean.shape:
            raise ShapeMismatch(
                f"{mf.var}: fit has {mf.mean.size} lags, truth has {t.size}"
            )
        err[mf.var] = np.abs(mf.mean - t)
        cov[mf.var] = (mf.lower <= t) & (t <= mf.upper)
    return RecoveryReport(err, cov)
