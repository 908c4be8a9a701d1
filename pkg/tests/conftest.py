import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from crosscompose.backbone import toy_backbone
from crosscompose.integrator.mlp import IntegratorModel


@pytest.fixture(scope="session")
def backbone():
    return toy_backbone()


@pytest.fixture(scope="session")
def zero_model(backbone):
    p = backbone.profile
    return IntegratorModel.zero(p.token_count, p.token_dim, 128)
