import os
import time

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_VERDICTS = pytest.StashKey[list]()


class Campaign(dict):
    def __init__(self, results, elapsed):
        super().__init__(results)
        self.elapsed = elapsed


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """``verdict(label, ok, detail)`` logs one PASS/FAIL line for the terminal summary."""
    log = request.config.stash[_VERDICTS]

    def record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        log.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def paper_campaign():
    """20 paired seeds at the published configuration (a1 = 0.95), shared by the acceptance tests.

    Maps ``seed -> {mode: RunResult}``; the wall time is kept in ``elapsed``.
    """
    from nlos_track.pipeline import RunConfig, run_campaign_results

    t0 = time.perf_counter()
    results = run_campaign_results(RunConfig(seed=0, n_steps=500), 20)
    return Campaign(results, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def matched_run():
    """2000 tracked steps under a model the channel filter matches exactly."""
    import numpy as np

    from nlos_track.calibration import MatchedModelConfig, matched_model_run

    return matched_model_run(MatchedModelConfig(), np.random.default_rng(2024))


@pytest.fixture(scope="session")
def parked_run():
    """2000 steps with a parked vehicle and fixed scatterers: no abrupt change ever happens."""
    from nlos_track.channel_tracker import ChannelProcessConfig
    from nlos_track.pipeline import RunConfig, run
    from nlos_track.scene import TrajectoryConfig

    cfg = RunConfig(seed=0, n_steps=2000, static_scatterers=True, trajectory=TrajectoryConfig(speed=0.0),
                    process=ChannelProcessConfig(ar_coeffs=[1.0]))
    return run(cfg)
