from pathlib import Path

import numpy as np
import pytest
import yaml

from sdta import (
    fixture_path,
    generate_events,
    parse_network,
    parse_scenario,
    parse_ttd,
    round_to_grid,
)


def read_fixture(name: str) -> str:
    return Path(fixture_path(name)).read_text()


def load_network(name: str):
    return parse_network(read_fixture(f"{name}.net.yaml"))


def load_scenario(name: str, network, steps: int | None = None):
    """Parse a fixture scenario, optionally truncating the horizon."""
    doc = yaml.safe_load(read_fixture(f"{name}.scn.yaml"))
    if steps is not None:
        doc["steps"] = steps
    return parse_scenario(doc, network)


@pytest.fixture(scope="session")
def parallel3():
    return round_to_grid(parse_ttd(read_fixture("parallel3.ttd.yaml")))


@pytest.fixture(scope="session")
def parallel3_tree(parallel3):
    return generate_events(parallel3)


@pytest.fixture(scope="session")
def twolinks():
    net = load_network("twolinks")
    return net, load_scenario("twolinks", net)


@pytest.fixture(scope="session")
def diamond():
    net = load_network("diamond")
    return net, load_scenario("diamond", net)


def dyadic_probs(rng: np.random.Generator, n: int) -> np.ndarray:
    base = {1: [1.0], 2: [0.5, 0.5], 3: [0.25, 0.25, 0.5]}[n]
    return np.array(rng.permutation(base))
