import json

import pytest

from src.chain_core import chain_to_dict
from tests.chains import biased_chain, corpus, golden_mean_chain, single_state_chain, uniform_chain


@pytest.fixture(scope="session")
def chain_corpus():
    return corpus()


@pytest.fixture
def uniform():
    return uniform_chain(2)


@pytest.fixture
def biased():
    return biased_chain()


@pytest.fixture
def golden():
    return golden_mean_chain()


@pytest.fixture
def single():
    return single_state_chain()


@pytest.fixture
def chain_file(tmp_path):
    """Write a chain to tmp_path and return the path"""
    def write(chain, name='chain.json'):
        path = tmp_path / name
        path.write_text(json.dumps(chain_to_dict(chain)), encoding='utf-8')
        return path
    return write
