import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from storyscale import GenerationConfig, StorySpec


@pytest.fixture
def story4():
    return StorySpec(
        identity_text="a dog",
        expression_texts=(
            "springing toward a frisbee",
            "on a porch swing with pillows",
            "chasing autumn leaves",
            "splashing in a lake",
        ),
    )


@pytest.fixture
def story7():
    return StorySpec(
        identity_text="a red fox",
        expression_texts=tuple(f"in scene {i}" for i in range(1, 8)),
    )


@pytest.fixture
def toy_config():
    return GenerationConfig(global_seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
