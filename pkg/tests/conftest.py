import numpy as np
import pytest

from badhmp.synth import SynthConfig, stick_skeleton, synth_generate


@pytest.fixture(scope="session")
def topo():
    return stick_skeleton()


@pytest.fixture(scope="session")
def small_synth():
    """A few noisy samples of every action, full N=50 / T=25 layout."""
    return synth_generate(SynthConfig(samples_per_action=5, noise_std=4.0, rng_seed=11))


@pytest.fixture(scope="session")
def rigid_synth():
    return synth_generate(SynthConfig(samples_per_action=3, noise_std=0.0, rng_seed=12))



def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        passed, title, detail = RESULTS[number]
        terminalreporter.write_line(f"criterion {number} {'PASS' if passed else 'FAIL'}: {title} | {detail}")
