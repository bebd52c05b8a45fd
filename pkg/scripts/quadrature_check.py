"""Compare MCMC moments with the dense-grid quadrature reference on the toy model.

    python scripts/quadrature_check.py --iters 50000 --seed 0
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

import quadrature_oracle  # noqa: E402
from ecomem.sampler import SamplerConfig, run_chains  # noqa: E402


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--iters", type=int, default=50000)
    p.add_argument("--burn-in", type=int, default=10000)
    p.add_argument("--thin", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beta", type=float, default=3.0, help="true coefficient of the toy")
    p.add_argument("--noise", type=float, default=0.1, help="residual sd of the toy")
    a = p.parse_args()

    model = quadrature_oracle.toy_model(beta=a.beta, noise=a.noise)
    t0 = time.perf_counter()
    ref, edge, _ = quadrature_oracle.posterior_moments(model)
    print(f"quadrature: {time.perf_counter() - t0:.1f}s, boundary mass {edge:.1e}")
    t0 = time.perf_counter()
    sc = SamplerConfig(n_chains=a.chains, n_iter=a.iters, burn_in=a.burn_in, thin=a.thin, base_seed=a.seed)
    chains = run_chains(model, sc)
    print(f"mcmc: {time.perf_counter() - t0:.1f}s\n")
    print(f"{'parameter':<10} {'mean':>9} {'ref':>9} {'sd':>8} {'ref':>8} {'sd rel':>7}")
    for name, (m, s) in ref.items():
        x = chains.pooled(name)
        print(f"{name:<10} {x.mean():9.4f} {m:9.4f} {x.std():8.4f} {s:8.4f} {x.std() / s - 1:+7.1%}")


if __name__ == "__main__":
    main()
