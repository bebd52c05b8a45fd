"""On-disk fit format: one wide CSV per chain plus ``fit_meta.json``.

``chain_<c>.csv`` has a header row with the parameter manifest (``mu``,
``beta.<term>``, ``eta.<var>.<i>``, ``tau.<var>``, ``sigma2``,
``w.<var>.<lag>``) and one row per retained draw, written with 17
significant digits so a re-read reproduces the doubles exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .sampler import ChainSet

META_NAME = "fit_meta.json"
FORMAT = "ecomem-fit/1"


class FitNotFound(FileNotFoundError):
    pass


def chain_path(out: Path, c: int) -> Path:
    return out / f"chain_{c}.csv"


def _fmt(x: float) -> str:
    return repr(float(x))


def write_chains(chains: ChainSet, out: str | Path) -> list[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for c in range(chains.n_chains):
        p = chain_path(out, c)
        with p.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(chains.names)
            for row in chains.draws[c]:
                w.writerow([_fmt(x) for x in row])
        paths.append(p)
    return paths


def write_meta(meta: dict, out: str | Path) -> Path:
    p = Path(out) / META_NAME
    p.write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")
    return p


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def read_meta(fit_dir: str | Path) -> dict:
    p = Path(fit_dir) / META_NAME
    if not p.exists():
        raise FitNotFound(f"no {META_NAME} in {fit_dir}")
    return json.loads(p.read_text())


def read_fit(fit_dir: str | Path) -> tuple[ChainSet, dict]:
    fit_dir = Path(fit_dir)
    meta = read_meta(fit_dir)
    n_chains = int(meta["sampler"]["n_chains"])
    draws, names = [], None
    for c in range(n_chains):
        p = chain_path(fit_dir, c)
        if not p.exists():
            raise FitNotFound(f"missing {p.name} in {fit_dir}")
        with p.open(encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        if names is None:
            names = header
        elif header != names:
            raise ValueError(f"{p.name} header differs from chain_0.csv")
        draws.append(data.reshape(-1, len(header)))
    chains = ChainSet(
        names=names,
        draws=np.stack(draws),
        acceptance=meta.get("acceptance", []),
        seeds=meta.get("seeds", []),
        config=meta.get("sampler", {}),
    )
    return chains, meta
