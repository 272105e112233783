"""
Shared fixtures: generated TrainTicket log corpora and the graphs built from them.
Generation runs once per session; the analysis tests only read the files.
"""

import pytest

from meshsdg.access_log import discover_sources, parse_file
from meshsdg.loggen import generate_logs, load_topology
from meshsdg.sdg import build_graph

from tests.graphs import prototype_graph


def _generate(tmp_path_factory, name: str):
    spec = load_topology(name)
    out_dir = tmp_path_factory.mktemp(name.replace(".", "_"))
    ledger = generate_logs(spec, out_dir)
    return spec, out_dir, ledger


def _build(out_dir):
    pairs = []
    for source in discover_sources(out_dir):
        pairs.extend((source, e) for e in parse_file(source).entries)
    return build_graph(pairs)


@pytest.fixture(scope="session")
def v021_corpus(tmp_path_factory):
    """(spec, logs dir, ledger) for the v0.2.1 topology"""
    return _generate(tmp_path_factory, "trainticket-v0.2.1")


@pytest.fixture(scope="session")
def v010_corpus(tmp_path_factory):
    """(spec, logs dir, ledger) for the v0.1.0 topology"""
    return _generate(tmp_path_factory, "trainticket-v0.1.0")


@pytest.fixture(scope="session")
def v021_graph(v021_corpus):
    return _build(v021_corpus[1])


@pytest.fixture(scope="session")
def v010_graph(v010_corpus):
    return _build(v010_corpus[1])


@pytest.fixture
def prototype():
    return prototype_graph()
