import numpy as np
import pytest

from ssvepbci.core import DEFAULT_STIMULI, RecordingSpec
from ssvepbci.ensemble import build_ensemble
from ssvepbci.protocol import make_offline_schedule, split_subjectwise_stratified
from ssvepbci.synth import clean_profile, moderate_profile, synth_dataset


@pytest.fixture(scope="session")
def rec_spec():
    return RecordingSpec()


@pytest.fixture(scope="session")
def clean_dataset():
    return synth_dataset(clean_profile(11), make_offline_schedule(0))


@pytest.fixture(scope="session")
def clean_split(clean_dataset):
    return split_subjectwise_stratified(clean_dataset, 0.8, 0)


@pytest.fixture(scope="session")
def clean_model(clean_split, clean_dataset):
    train, _ = clean_split
    return build_ensemble(train, stimuli=clean_dataset.stimuli, rec_spec=clean_dataset.spec)


@pytest.fixture(scope="session")
def moderate_dataset():
    return synth_dataset(moderate_profile(21), make_offline_schedule(3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def stimuli():
    return DEFAULT_STIMULI


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per criterion; lines are echoed now and in the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(number, passed, detail):
        line = f"CRITERION {number:>2}: {'PASS' if passed else 'FAIL'} | {detail}"
        lines.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
