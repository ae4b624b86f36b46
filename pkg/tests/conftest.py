import pytest

from faasflow import FunctionDef, LatencyModel, sleep_behavior


@pytest.fixture
def zero_latency():
    return LatencyModel()


@pytest.fixture
def sleep1s():
    return [FunctionDef("sleep1s", sleep_behavior(1000))]


@pytest.fixture
def sleep20s():
    return [FunctionDef("sleep20s", sleep_behavior(20_000))]
