from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

from zerog.manipulator import PayloadAttachment, default_arm
from zerog.spacecraft import RigidSpacecraft
from zerog.spatial import block_inertia

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

Q_TEST = np.array([0.1, 0.7, 3.0, 0.2, 0.8, 0.3])
C_TEST = np.array([0.02, -0.01, 0.2])


@pytest.fixture(scope="session")
def arm():
    return default_arm()


@pytest.fixture
def payload():
    I = np.array([[5.0, 0.3, -0.2], [0.3, 4.0, 0.1], [-0.2, 0.1, 3.5]])
    return RigidSpacecraft(block_inertia(12.0, I), name="payload")


@pytest.fixture
def attachment(payload):
    return PayloadAttachment(payload, C_TEST.copy())


@pytest.fixture
def flight():
    return RigidSpacecraft(block_inertia(200.0, np.diag([120.0, 100.0, 80.0])), name="flight")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_q(arm, rng, margin=0.1):
    return rng.uniform(arm.q_min + margin, arm.q_max - margin)


def scenario_doc(base="rigid_half_scale.toml", **sections):
    """Load a bundled scenario as a dict and merge section overrides into it."""
    import copy

    from zerog.config import load_toml

    doc = copy.deepcopy(load_toml(SCENARIOS / base))
    for name, val in sections.items():
        if isinstance(val, dict) and isinstance(doc.get(name), dict):
            doc[name].update(val)
        else:
            doc[name] = val
    return doc


def make_scenario(base="rigid_half_scale.toml", **sections):
    from zerog.scenario import parse_scenario

    return parse_scenario(scenario_doc(base, **sections), SCENARIOS)
