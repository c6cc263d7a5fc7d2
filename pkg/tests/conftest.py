import numpy as np
import pytest

from ergmvi.network import Network, karate


@pytest.fixture(scope="session")
def karate_net():
    return karate()


def random_network(n, p, rng, attributes=None):
    a = np.triu((rng.random((n, n)) < p).astype(np.uint8), 1)
    return Network(a + a.T, dict(attributes or {}))


@pytest.fixture(scope="session")
def quick_adjustments(karate_net):
    """Low-effort adjustments for the three karate models (unit-test grade)."""
    from ergmvi.pseudo import AdjustConfig, TemperSchedule, fit_adjustment
    from ergmvi.reproduce import KARATE_MODELS
    from ergmvi.sampler import SamplerConfig
    from ergmvi.stats import ModelSpec

    cfg = AdjustConfig(sampler=SamplerConfig(aux_iters=3000, thin=100, count=1000),
                       temper=TemperSchedule.uniform(10, K=200, aux_iters=3000, thin=100), seed=0)
    return {m: fit_adjustment(karate_net, ModelSpec.parse(t), cfg) for m, t in KARATE_MODELS.items()}


# -- acceptance reporting ----------------------------------------------------

ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
