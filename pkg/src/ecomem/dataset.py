"""Long-format time-series ingestion, standardization and lag-panel assembly."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

CONTINUOUS = "continuous"
BINARY = "binary"
DEFAULT_GROUP = "1"


class DatasetError(ValueError):
    """Base class for input validation failures."""


class MissingColumn(DatasetError):
    def __init__(self, column: str):
        super().__init__(f"missing column {column!r}")
        self.column = column


class NonContiguousTime(DatasetError):
    def __init__(self, group: str, after: int, before: int):
        super().__init__(
            f"group {group!r}: time jumps from {after} to {before} (unit steps required)"
        )
        self.group, self.after, self.before = group, after, before


class NonBinaryValue(DatasetError):
    def __init__(self, column: str, row: int, value: float):
        super().__init__(f"column {column!r} row {row}: value {value!r} is not 0/1")
        self.column, self.row = column, row


class MissingValue(DatasetError):
    def __init__(self, column: str, row: int):
        super().__init__(f"column {column!r} row {row}: missing value")
        self.column, self.row = column, row


class ZeroVariance(DatasetError):
    def __init__(self, column: str):
        super().__init__(f"column {column!r} has zero variance")
        self.column = column


class ResponseExceedsTrials(DatasetError):
    def __init__(self, row: int, y: float, n: float):
        super().__init__(f"binomial response {y:g} outside [0, {n:g}] trials at row {row}")
        self.row = row


class SeriesTooShort(DatasetError):
    def __init__(self, groups: Sequence[str], max_lag: int):
        super().__init__(
            f"no group has more than max lag {max_lag} time points: {list(groups)}"
        )
        self.groups, self.max_lag = list(groups), max_lag


@dataclass
class TimeSeriesDataset:
    """Validated panel sorted by (group, time).

    ``columns`` holds every numeric column (response, trials, covariates);
    ``covariate_kinds`` marks which of them are covariates and how they are
    treated by :func:`standardize`.
    """

    time: np.ndarray
    group: np.ndarray
    columns: dict[str, np.ndarray]
    covariate_kinds: dict[str, str]
    time_id: str = "time"
    group_id: str | None = None

    def __len__(self) -> int:
        return len(self.time)

    @property
    def groups(self) -> list[str]:
        return list(dict.fromkeys(self.group.tolist()))

    def group_slices(self) -> list[tuple[str, slice]]:
        out = []
        start = 0
        g = self.group
        for i in range(1, len(g) + 1):
            if i == len(g) or g[i] != g[start]:
                out.append((str(g[start]), slice(start, i)))
                start = i
        return out

    def to_frame(self) -> pd.DataFrame:
        data: dict[str, np.ndarray] = {}
        if self.group_id is not None:
            data[self.group_id] = self.group
        data[self.time_id] = self.time
        data.update(self.columns)
        return pd.DataFrame(data)


@dataclass(frozen=True)
class StandardizationRecord:
    mean: dict[str, float] = field(default_factory=dict)
    sd: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"mean": dict(self.mean), "sd": dict(self.sd)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "StandardizationRecord":
        return cls(mean=dict(d.get("mean", {})), sd=dict(d.get("sd", {})))


@dataclass(frozen=True)
class MemorySpec:
    """Memory covariates with their maximum lag ``L`` and basis dimension ``k``.

    ``L == 0`` is allowed and means the covariate enters at lag 0 only
    (no weight function is estimated for it).
    """

    mem_vars: tuple[str, ...]
    L: dict[str, int]
    k: dict[str, int]

    @classmethod
    def build(
        cls,
        mem_vars: Sequence[str],
        L: Sequence[int] | Mapping[str, int],
        k: Sequence[int] | Mapping[str, int] | None = None,
    ) -> "MemorySpec":
        mem_vars = tuple(mem_vars)
        if not isinstance(L, Mapping):
            L = list(L)
            if len(L) != len(mem_vars):
                raise ValueError(
                    f"{len(mem_vars)} memory variables but {len(L)} lags given"
                )
            L = dict(zip(mem_vars, L))
        L = {v: int(L[v]) for v in mem_vars}
        if k is None:
            k = {v: default_basis_dim(L[v]) for v in mem_vars}
        elif not isinstance(k, Mapping):
            k = dict(zip(mem_vars, k))
        k = {v: int(k[v]) for v in mem_vars}
        for v in mem_vars:
            if L[v] < 0:
                raise ValueError(f"negative lag for {v!r}")
        return cls(mem_vars, L, k)

    @property
    def max_lag(self) -> int:
        return max(self.L.values(), default=0)

    def has_memory(self, var: str) -> bool:
        return var in self.L and self.L[var] > 0


def default_basis_dim(L: int) -> int:
    return min(10, L + 1)


@dataclass
class LagPanel:
    """Model-ready arrays restricted to rows with full lag history.

    ``lagged[v]`` is ``n_eff x (L_v + 1)`` with column ``l`` holding the
    covariate ``l`` steps back; ``plain[v]`` holds non-memory covariates
    (and memory covariates with ``L == 0``) as vectors.
    """

    y: np.ndarray
    lagged: dict[str, np.ndarray]
    plain: dict[str, np.ndarray]
    trials: np.ndarray | None
    time: np.ndarray
    group: np.ndarray
    standardization: StandardizationRecord = field(default_factory=StandardizationRecord)

    @property
    def n(self) -> int:
        return len(self.y)


def _check_finite(name: str, values: np.ndarray) -> None:
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise MissingValue(name, int(bad[0]))


def validate(ds: TimeSeriesDataset) -> TimeSeriesDataset:
    """Check unit time steps within groups and covariate kinds; returns ``ds``."""
    for g, sl in ds.group_slices():
        t = ds.time[sl]
        steps = np.diff(t)
        bad = np.flatnonzero(steps != 1)
        if bad.size:
            i = bad[0]
            raise NonContiguousTime(g, int(t[i]), int(t[i + 1]))
    for name, kind in ds.covariate_kinds.items():
        if name not in ds.columns:
            raise MissingColumn(name)
        if kind not in (CONTINUOUS, BINARY):
            raise ValueError(f"unknown covariate kind {kind!r} for {name!r}")
        col = ds.columns[name]
        _check_finite(name, col)
        if kind == BINARY:
            bad = np.flatnonzero((col != 0) & (col != 1))
            if bad.size:
                raise NonBinaryValue(name, int(bad[0]), float(col[bad[0]]))
    return ds


def from_frame(
    df: pd.DataFrame,
    time_id: str,
    group_id: str | None = None,
    covariate_kinds: Mapping[str, str] | None = None,
) -> TimeSeriesDataset:
    covariate_kinds = dict(covariate_kinds or {})
    for col in [time_id, *([group_id] if group_id else []), *covariate_kinds]:
        if col not in df.columns:
            raise MissingColumn(col)
    df = df.reset_index(drop=True)
    tcol = df[time_id]
    if tcol.isna().any():
        raise MissingValue(time_id, int(np.flatnonzero(tcol.isna().to_numpy())[0]))
    tvals = tcol.to_numpy(dtype=float)
    if np.any(tvals != np.round(tvals)):
        raise DatasetError(f"time column {time_id!r} must hold integers")
    if group_id:
        gcol = df[group_id]
        if gcol.isna().any():
            raise MissingValue(group_id, int(np.flatnonzero(gcol.isna().to_numpy())[0]))
        group = gcol.astype(str).to_numpy()
    else:
        group = np.full(len(df), DEFAULT_GROUP, dtype=object)
    # stable sort keeps first-appearance group order
    order_groups = {g: i for i, g in enumerate(dict.fromkeys(group.tolist()))}
    gkey = np.array([order_groups[g] for g in group])
    order = np.lexsort((tvals, gkey))
    columns = {}
    for name in df.columns:
        if name in (time_id, group_id):
            continue
        try:
            columns[name] = pd.to_numeric(df[name]).to_numpy(dtype=float)[order]
        except (ValueError, TypeError) as exc:
            raise DatasetError(f"column {name!r} is not numeric") from exc
    ds = TimeSeriesDataset(
        time=tvals.astype(np.int64)[order],
        group=np.asarray(group, dtype=object)[order],
        columns=columns,
        covariate_kinds=covariate_kinds,
        time_id=time_id,
        group_id=group_id,
    )
    return validate(ds)


def load_csv(
    path: str | Path,
    time_id: str,
    group_id: str | None = None,
    covariate_kinds: Mapping[str, str] | None = None,
) -> TimeSeriesDataset:
    """Read a long-format CSV and validate it.

    Columns not listed in ``covariate_kinds`` (response, trials, ...) are
    kept as numeric columns but never standardized.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    df = pd.read_csv(path, encoding="utf-8", float_precision="round_trip")
    return from_frame(df, time_id, group_id, covariate_kinds)


def write_csv(ds: TimeSeriesDataset, path: str | Path) -> None:
    ds.to_frame().to_csv(path, index=False, float_format="%.17g")


def standardize(
    ds: TimeSeriesDataset, columns: Sequence[str] | None = None
) -> tuple[TimeSeriesDataset, StandardizationRecord]:
    """Center and scale continuous covariates (sample sd, ``ddof=1``).

    Binary covariates are left as 0/1 indicators.
    """
    if columns is None:
        columns = [c for c, kind in ds.covariate_kinds.items() if kind == CONTINUOUS]
    new_cols = dict(ds.columns)
    mean, sd = {}, {}
    for c in columns:
        if ds.covariate_kinds.get(c) == BINARY:
            continue
        x = ds.columns[c]
        m = float(np.mean(x))
        s = float(np.std(x, ddof=1)) if len(x) > 1 else 0.0
        if not s > 0 or not np.isfinite(s):
            raise ZeroVariance(c)
        new_cols[c] = (x - m) / s
        mean[c], sd[c] = m, s
    return replace(ds, columns=new_cols), StandardizationRecord(mean, sd)


def lag_matrix(x: np.ndarray, L: int, start: int) -> np.ndarray:
    """Rows ``start..len(x)-1`` of the lag expansion ``[x_t, x_{t-1}, ..., x_{t-L}]``."""
    if start < L:
        raise ValueError("start must leave L points of history")
    n = len(x) - start
    if n <= 0:
        return np.empty((0, L + 1))
    idx = np.arange(start, len(x))[:, None] - np.arange(L + 1)[None, :]
    return x[idx]


def build_lag_panel(
    ds: TimeSeriesDataset,
    spec: MemorySpec,
    response: str,
    covariates: Sequence[str] = (),
    trials: str | None = None,
    standardization: StandardizationRecord | None = None,
) -> LagPanel:
    """Assemble lagged histories for every group.

    Each group contributes rows ``max(L)..T_g-1``; earlier rows only serve as
    history. Windows never cross group boundaries.
    """
    for name in [response, *spec.mem_vars, *covariates, *([trials] if trials else [])]:
        if name not in ds.columns:
            raise MissingColumn(name)
    for name in [response, *([trials] if trials else [])]:
        _check_finite(name, ds.columns[name])
    for name in [*spec.mem_vars, *covariates]:
        _check_finite(name, ds.columns[name])
    if trials:
        y, n = ds.columns[response], ds.columns[trials]
        bad = np.flatnonzero((y < 0) | (y > n))
        if bad.size:
            raise ResponseExceedsTrials(int(bad[0]), float(y[bad[0]]), float(n[bad[0]]))

    max_lag = spec.max_lag
    keep: list[np.ndarray] = []
    lagged_parts: dict[str, list[np.ndarray]] = {
        v: [] for v in spec.mem_vars if spec.has_memory(v)
    }
    for _, sl in ds.group_slices():
        T_g = sl.stop - sl.start
        if T_g <= max_lag:
            continue
        keep.append(np.arange(sl.start + max_lag, sl.stop))
        for v in lagged_parts:
            lagged_parts[v].append(lag_matrix(ds.columns[v][sl], spec.L[v], max_lag))
    if not keep:
        raise SeriesTooShort(ds.groups, max_lag)
    rows = np.concatenate(keep)
    lagged = {v: np.vstack(parts) for v, parts in lagged_parts.items()}
    plain_names = [v for v in spec.mem_vars if not spec.has_memory(v)]
    plain_names += [c for c in covariates if c not in spec.mem_vars]
    plain = {c: ds.columns[c][rows].copy() for c in dict.fromkeys(plain_names)}
    return LagPanel(
        y=ds.columns[response][rows].copy(),
        lagged=lagged,
        plain=plain,
        trials=ds.columns[trials][rows].copy() if trials else None,
        time=ds.time[rows].copy(),
        group=ds.group[rows].copy(),
        standardization=standardization or StandardizationRecord(),
    )
