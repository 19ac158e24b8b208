import sys
from pathlib import Path

import pytest

SCRIPTS_DIR = Path(__file__).resolve().parent.parent / "scripts"
sys.path.insert(0, str(SCRIPTS_DIR))

from core_model import Dataset  # noqa: E402
from workloads import PlantedSpec, gen_planted  # noqa: E402


@pytest.fixture
def small_dataset():
    # H: 0→3, 1→1, 2→2, 3→1, 4→1
    return Dataset.from_sets(10, [{0, 1, 2}, {0, 2, 3}, {0, 4}])


@pytest.fixture
def planted_dataset():
    return gen_planted(PlantedSpec(f0_target=1000, collisions_target=137, alpha=8, seed=3), 10 ** 6)


@pytest.fixture
def edge_file(tmp_path):
    path = tmp_path / "edges.csv"
    path.write_text(
        "sender,receiver\n"
        "10.0.0.1,r1\n"
        "10.0.0.2,r1\n"
        "10.0.0.1,r2\n"
        "10.0.0.1,r1\n"
        "10.0.0.3,r1\n",
        encoding="utf-8",
    )
    return path
