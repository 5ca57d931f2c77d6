import numpy as np
import pytest

from checkins import EventLog, HyperParams, ModelParams


def make_log(events, n_users=2, n_categories=2, n_locations=4,
             horizon=100.0, location_categories=None):
    """Small event log; locations split evenly over categories by default."""
    if location_categories is None:
        per = n_locations // n_categories
        location_categories = np.repeat(np.arange(n_categories), per)
    return EventLog(events, n_users, n_categories, n_locations, horizon,
                    location_categories)


def make_params(n_users=2, n_categories=2, mu=0.05, beta=0.1, alpha=0.0, eta=0.05):
    return ModelParams(
        np.full((n_users, n_categories), mu),
        np.full(n_users, beta),
        np.full((n_users, n_users), alpha),
        np.full((n_users, n_categories), eta),
    )


@pytest.fixture
def hyper():
    return HyperParams()  # tau=12, sigma=0.5, floor mode


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
