import pytest

from launderscan import synthgen as sg
from launderscan.ingest import MalwareProcessList
from launderscan.model import DAY_MS

DAY0 = sg.DEFAULT_EPOCH_MS
WINDOW = (DAY0, DAY0 + DAY_MS)


@pytest.fixture(scope="session")
def small_corpus():
    """Five-scheme scenario at desk scale: 320 background machines is the
    smallest population whose rotation schedule still visits every pool
    domain daily, keeping plant eligibility deterministic."""
    scenario = sg.five_scheme_scenario(seed=11, divisor=100, background_machines=320)
    return sg.generate(scenario)


@pytest.fixture(scope="session")
def small_malware(small_corpus):
    return MalwareProcessList(frozenset(small_corpus.malware_names))


@pytest.fixture(scope="session")
def clean_corpus():
    return sg.generate(sg.clean_scenario(seed=5, background_machines=200))
