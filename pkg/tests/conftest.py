import numpy as np
import pytest

from pvcg import Economy, LinearCost, PriorSupport, SqrtSumValuation, TrainingConfig
from pvcg.learner import train


@pytest.fixture
def split_cost_economy():
    """Two producers, one cheap and one priced out: optimum accepts only the first."""
    return Economy.sqrt_sum([1.0, 1.0], [0.1, 10.0], [1.0])


@pytest.fixture
def cheap_pair_economy():
    """Two producers both worth accepting in full."""
    return Economy.sqrt_sum([1.0, 1.0], [0.1, 0.2], [1.0])


@pytest.fixture
def paper_support():
    return PriorSupport.uniform_box(10, 2, cap=(0.0, 5.0), gamma=(0.0, 1.0), theta=(0.0, 1.0))


@pytest.fixture
def paper_families():
    return SqrtSumValuation(scale=10.0), LinearCost()


@pytest.fixture(scope="session")
def trained_paper_model():
    """One trained flagship model shared by the acceptance criteria.

    Trains the n=10, m=2 configuration (hidden 3x10, lr 1e-2 with momentum
    0.9) on the uniform priors; the convergence criterion asserts on the
    returned trace.
    """
    support = PriorSupport.uniform_box(10, 2, cap=(0.0, 5.0), gamma=(0.0, 1.0), theta=(0.0, 1.0))
    config = TrainingConfig(
        batch_size=256,
        epochs=500,
        learning_rate=1e-2,
        momentum=0.9,
        hidden=(10, 10, 10),
        seed=20240,
        loss_tol=1e-3,
    )
    model, trace = train(SqrtSumValuation(scale=10.0), LinearCost(), support, config)
    return model, trace, config


def random_sqrt_sum_economy(rng, n_choices=(1, 2, 3), m_choices=(1, 2), cap_high=5.0):
    """Small random economy drawn from the standard uniform ranges."""
    n = int(rng.choice(n_choices))
    m = int(rng.choice(m_choices))
    caps = rng.uniform(0.0, cap_high, n)
    gammas = rng.uniform(0.0, 1.0, n)
    thetas = rng.uniform(0.0, 1.0, m)
    return Economy.sqrt_sum(caps, gammas, thetas)
