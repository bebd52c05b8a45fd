"""Command-line interface: ``ecomem {simulate,fit,summary,plot,compare}``.

Exit codes: 0 success, 2 usage or validation error, 3 fit written but some
split R-hat exceeds 1.1.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import BINARY, CONTINUOUS, DatasetError, MemorySpec, load_csv, write_csv
from .diagnostics import (
    TermNotFound,
    effect_comparison,
    memory_function,
    summarize,
)
from .fit import prepare_model
from .formula import ParseError, parse_formula
from .io import FitNotFound, read_fit, write_chains, write_meta
from .plotting import comparison_svg, memory_svg
from .sampler import SamplerConfig, SamplerError, run_chains
from .simulate import SimScenario, canonical_scenario, generate
from .splinebasis import InvalidDimension

EXIT_OK, EXIT_USAGE, EXIT_RHAT = 0, 2, 3
RHAT_LIMIT = 1.1

log = logging.getLogger("ecomem")


class UsageError(Exception):
    pass


def _csv_list(text: str | None) -> list[str]:
    if not text:
        return []
    return [t.strip() for t in text.split(",") if t.strip()]


def _int_list(text: str | None) -> list[int]:
    try:
        return [int(t) for t in _csv_list(text)]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from exc


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    if args.scenario == "canonical":
        scenario = canonical_scenario()
    else:
        path = Path(args.scenario)
        if not path.exists():
            raise UsageError(f"scenario file not found: {path}")
        scenario = SimScenario.load(path)
    if args.seed is not None:
        scenario.seed = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sim = generate(scenario)
    write_csv(sim.dataset, out / "data.csv")
    (out / "truth.json").write_text(json.dumps(sim.truth, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out / 'data.csv'} ({len(sim.dataset)} rows) and {out / 'truth.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit


def _covariate_kinds(path: Path, variables, binary: list[str] | None) -> dict[str, str]:
    if binary is not None:
        return {v: BINARY if v in binary else CONTINUOUS for v in variables}
    import pandas as pd

    df = pd.read_csv(path, usecols=lambda c: c in set(variables), float_precision="round_trip")
    kinds = {}
    for v in variables:
        vals = df[v].dropna().unique() if v in df else []
        kinds[v] = BINARY if len(vals) and set(np.unique(vals)) <= {0, 1} else CONTINUOUS
    return kinds


def max_rhat(chains, summaries) -> float:
    vals = [
        s.rhat
        for s in summaries
        if not s.name.startswith("eta.") and np.isfinite(s.rhat)
    ]
    return max(vals, default=float("nan"))


def cmd_fit(args) -> int:
    formula = parse_formula(args.formula)
    mem_vars = _csv_list(args.mem_vars)
    lags = _int_list(args.lags)
    if len(mem_vars) != len(lags):
        raise UsageError(f"--mem-vars has {len(mem_vars)} entries but --lags has {len(lags)}")
    k = _int_list(args.k) if args.k else None
    if k is not None and len(k) != len(mem_vars):
        raise UsageError("--k must have one entry per memory variable")
    data = Path(args.data)
    if not data.exists():
        raise UsageError(f"data file not found: {data}")
    binary = _csv_list(args.binary) if args.binary is not None else None
    kinds = _covariate_kinds(data, formula.variables, binary)
    ds = load_csv(data, args.time_id, args.group_id, kinds)
    spec = MemorySpec.build(mem_vars, lags, k)
    model = prepare_model(ds, formula, args.family, spec, trials=args.trials)
    sconfig = SamplerConfig(
        n_chains=args.chains,
        n_iter=args.iters,
        burn_in=args.burn_in,
        thin=args.thin,
        base_seed=args.seed,
        n_jobs=args.jobs,
    )
    t0 = time.perf_counter()
    chains = run_chains(model, sconfig)
    wall = time.perf_counter() - t0

    out = Path(args.out)
    write_chains(chains, out)
    params, _ = summarize(chains)
    rhat = max_rhat(chains, params)
    meta = {
        "format": "ecomem-fit/1",
        "version": __version__,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "data": str(data),
        "formula": str(formula),
        "family": args.family,
        "link": model.config.link,
        "mem_vars": mem_vars,
        "lags": lags,
        "k": [spec.k[v] for v in mem_vars],
        "time_id": args.time_id,
        "group_id": args.group_id,
        "trials": args.trials,
        "covariate_kinds": kinds,
        "n_eff": model.n,
        "sampler": sconfig.to_dict(),
        "seeds": chains.seeds,
        "priors": model.priors.to_dict(),
        "sigma_scale": model.sigma_scale,
        "standardization": model.panel.standardization.to_dict(),
        "designs": {v: d.to_dict() for v, d in model.designs.items()},
        "acceptance": chains.acceptance,
        "names": chains.names,
        "max_rhat": rhat,
        "wall_time_s": wall,
    }
    write_meta(meta, out)
    for c, acc in enumerate(chains.acceptance):
        print(f"chain {c}: " + ", ".join(f"{b}={r:.2f}" for b, r in acc.items()))
    print(f"max split R-hat: {rhat:.3f}  ({wall:.1f}s)")
    if np.isfinite(rhat) and rhat > RHAT_LIMIT:
        print(f"warning: R-hat above {RHAT_LIMIT}; run longer chains", file=sys.stderr)
        return EXIT_RHAT
    return EXIT_OK


# ---------------------------------------------------------------------------
# summary / plot / compare


def _load(fit_dir: str):
    try:
        return read_fit(fit_dir)
    except FitNotFound as exc:
        raise UsageError(str(exc)) from exc


def cmd_summary(args) -> int:
    chains, meta = _load(args.fit)
    params, mems = summarize(chains, args.cred, args.threshold)
    out = Path(args.out or args.fit)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "summary.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "mean", "sd", "lower", "upper", "rhat", "ess"])
        for p in params:
            w.writerow([p.name] + [repr(float(x)) for x in (p.mean, p.sd, p.lower, p.upper, p.rhat, p.ess)])
    for mf in mems:
        with (out / f"memory_{mf.var}.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lag", "mean", "lower", "upper"])
            for lag in mf.lags:
                w.writerow([int(lag)] + [repr(float(x)) for x in (mf.mean[lag], mf.lower[lag], mf.upper[lag])])
    print(f"credible level {args.cred:g}, threshold {args.threshold:g}")
    for p in params:
        if p.name.startswith(("eta.", "w.")):
            continue
        print(f"  {p.name:<16} {p.mean:9.4f} [{p.lower:9.4f}, {p.upper:9.4f}]  R-hat {p.rhat:6.3f}  ESS {p.ess:7.0f}")
    for mf in mems:
        print(f"  memory {mf.var}: lags above threshold {mf.memory_lags}")
    return EXIT_OK


def cmd_plot(args) -> int:
    chains, meta = _load(args.fit)
    mems = [memory_function(chains, v, args.cred, args.threshold) for v in chains.memory_vars()]
    truth = None
    if args.truth:
        tp = Path(args.truth)
        if not tp.exists():
            raise UsageError(f"truth file not found: {tp}")
        t = json.loads(tp.read_text())
        truth = t.get("weights", t)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(memory_svg(mems, truth), encoding="utf-8")
    print(f"wrote {args.out} ({len(mems)} panels)")
    return EXIT_OK


def cmd_compare(args) -> int:
    chains, _ = _load(args.fit)
    base, _ = _load(args.baseline)
    try:
        cmp = effect_comparison(chains, base, args.term)
    except TermNotFound as exc:
        raise UsageError(str(exc)) from exc
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(comparison_svg(cmp), encoding="utf-8")
    print(
        f"beta.{args.term}: memory mean {cmp.memory.mean():.4f}, "
        f"no-memory mean {cmp.baseline.mean():.4f}; wrote {args.out}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ecomem", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a dataset from a scenario")
    s.add_argument("--scenario", required=True, help="scenario JSON path or 'canonical'")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit the memory model by MCMC")
    f.add_argument("--data", required=True)
    f.add_argument("--formula", required=True)
    f.add_argument("--family", required=True, choices=["gaussian", "poisson", "binomial"])
    f.add_argument("--mem-vars", required=True)
    f.add_argument("--lags", required=True)
    f.add_argument("--k", help="basis dimension per memory variable (default min(10, L+1))")
    f.add_argument("--time-id", default="time")
    f.add_argument("--group-id")
    f.add_argument("--trials", help="trials column (binomial)")
    f.add_argument("--binary", help="binary covariates; default: detect 0/1 columns")
    f.add_argument("--chains", type=int, default=3)
    f.add_argument("--iters", type=int, default=10000)
    f.add_argument("--burn-in", type=int, default=5000)
    f.add_argument("--thin", type=int, default=5)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--jobs", type=int, default=1)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    m = sub.add_parser("summary", help="posterior summaries and memory functions")
    m.add_argument("--fit", required=True)
    m.add_argument("--cred", type=float, default=0.95)
    m.add_argument("--threshold", type=float, default=0.01)
    m.add_argument("--out", help="output directory (default: the fit directory)")
    m.set_defaults(func=cmd_summary)

    g = sub.add_parser("plot", help="SVG of the memory functions")
    g.add_argument("--fit", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--truth")
    g.add_argument("--cred", type=float, default=0.95)
    g.add_argument("--threshold", type=float, default=0.01)
    g.set_defaults(func=cmd_plot)

    c = sub.add_parser("compare", help="memory vs no-memory effect densities")
    c.add_argument("--fit", required=True)
    c.add_argument("--baseline", required=True)
    c.add_argument("--term", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (
        UsageError,
        DatasetError,
        ParseError,
        InvalidDimension,
        SamplerError,
        FileNotFoundError,
        ValueError,
        KeyError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
