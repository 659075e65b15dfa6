import math
import os

import pytest

from edgeplan.core import (ClusterSpec, LayerProfile, LinkSpec, ModelProfile,
                           ProblemInstance, ServerSpec)
from edgeplan.delay import build_delay_table

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


def data_path(name: str) -> str:
    return os.path.join(DATA_DIR, name)


def make_2x2_instance(**overrides) -> ProblemInstance:
    """Hand-checked fixture: optimum 3.0 s with (l0 -> s0@8, l1 -> s1@8),
    3.5 s swapped."""
    cluster = ClusterSpec(
        servers=(ServerSpec(0, 100.0, 1e9), ServerSpec(1, 200.0, 1e9)),
        links=(LinkSpec(0, 1, 32.0), LinkSpec(1, 0, 32.0)),
    )
    model = ModelProfile(
        layers=(LayerProfile(0, 100.0, 10, 4.0, 32),
                LayerProfile(1, 200.0, 10, 4.0, 32)),
        batch_size=1, embedding_size=4,
    )
    kwargs = dict(cluster=cluster, model=model, bit_menu=(8,),
                  delta=math.inf, tokens=1)
    kwargs.update(overrides)
    return ProblemInstance(**kwargs)


@pytest.fixture
def golden_instance():
    return make_2x2_instance()


@pytest.fixture
def golden_table(golden_instance):
    return build_delay_table(golden_instance)
