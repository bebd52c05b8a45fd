import numpy as np
import pandas as pd
import pytest

from ecomem.dataset import from_frame

# Acceptance-criterion PASS/FAIL lines collected for the terminal summary.
REPORT_KEY = pytest.StashKey[list]()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def make_dataset(T=50, groups=("1",), kinds=None, seed=0, binary=("v1",)):
    """Small synthetic panel with y, v1 (binary), v2, v3."""
    r = np.random.default_rng(seed)
    frames = []
    for g in groups:
        frames.append(
            pd.DataFrame(
                {
                    "group": g,
                    "time": np.arange(1, T + 1),
                    "y": r.poisson(3.0, T),
                    "v1": r.binomial(1, 0.3, T),
                    "v2": r.normal(size=T),
                    "v3": r.normal(size=T),
                }
            )
        )
    df = pd.concat(frames, ignore_index=True)
    if kinds is None:
        kinds = {v: ("binary" if v in binary else "continuous") for v in ("v1", "v2", "v3")}
    return from_frame(df, "time", "group", kinds)


def toy_model(family="poisson", T=40, seed=0, L=(6, 4), formula="y ~ v1*v2 + v3", priors=None, mem=("v1", "v2")):
    """Model on a random panel with two memory covariates and an interaction."""
    from ecomem.dataset import MemorySpec
    from ecomem.fit import prepare_model

    r = np.random.default_rng(seed)
    ds = make_dataset(T=T, seed=seed, binary=())
    if family == "gaussian":
        ds.columns["y"] = r.normal(2.0, 1.5, T)
    elif family == "binomial":
        ds.columns["trials"] = np.full(T, 8.0)
        ds.columns["y"] = r.binomial(8, 0.4, T).astype(float)
    spec = MemorySpec.build(list(mem), list(L), [min(5, l + 1) for l in L])
    return prepare_model(ds, formula, family, spec, priors=priors)


def random_theta(model, rng, scale=0.5):
    theta = model.pack(model.initial_state())
    return theta + scale * rng.normal(size=theta.size)


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(REPORT_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
