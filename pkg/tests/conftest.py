"""Shared fixtures: bundled series and cached snapshot fits."""

import numpy as np
import pytest

from richfit.data import load_bundled_series, weekday_design
from richfit.estimator import FitConfig, fit
from richfit.growth import RichardsParams
from richfit.model import ModelSpec

FIT_CFG = FitConfig(seed=3, n_starts=40)


def random_gammas(rng, n):
    """Valid Richards parameter draws spanning 4 orders of magnitude in r."""
    out = []
    for _ in range(n):
        out.append(RichardsParams(
            b=float(rng.uniform(0.0, 10.0)),
            r=float(10.0 ** rng.uniform(1.0, 5.0)),
            h=float(rng.uniform(0.01, 0.3)),
            p=float(rng.uniform(-50.0, 100.0)),
            s=float(10.0 ** rng.uniform(-1.0, 2.0)),
        ))
    return out


@pytest.fixture(scope="session")
def positives():
    return load_bundled_series("positives")


@pytest.fixture(scope="session")
def deceased():
    return load_bundled_series("deceased")


@pytest.fixture(scope="session")
def pos_fit_baseline(positives):
    return fit(positives, ModelSpec(family="negbin", baseline="constant"),
               FIT_CFG)


@pytest.fixture(scope="session")
def pos_fit_nobaseline(positives):
    return fit(positives, ModelSpec(family="negbin", baseline="none"), FIT_CFG)


@pytest.fixture(scope="session")
def pos_fit_weekday(positives):
    X = weekday_design(positives.dates, ["mon", "tue"]).X
    spec = ModelSpec(family="negbin", baseline="none",
                     covariates="additive", X=X)
    return fit(positives, spec, FIT_CFG)


@pytest.fixture(scope="session")
def dec_fit_baseline(deceased):
    return fit(deceased, ModelSpec(family="negbin", baseline="constant"),
               FIT_CFG)
