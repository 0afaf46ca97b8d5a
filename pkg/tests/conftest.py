import numpy as np
import pytest

from chunkdrift.kinematics import EEState
from chunkdrift.simenv import Scene


@pytest.fixture
def line_scene():
    """Target 0.5 m along +x from an end-effector at the origin."""
    return Scene({"target": np.array([0.5, 0.0, 0.0]), "other": np.array([0.0, 0.3, 0.0])}, "target", EEState.origin())
