from pathlib import Path

import numpy as np
import pytest

from panel_cf.panel import PanelMatrix, TreatmentMask


@pytest.fixture
def fixtures_dir() -> Path:
    return Path(__file__).parent / "fixtures"


@pytest.fixture
def toy_panel() -> PanelMatrix:
    # contoh 2x2: unit b treated mulai periode 1
    return PanelMatrix(np.array([[1.0, 2.0], [1.0, 3.0]]), ("a", "b"), (0, 1))


@pytest.fixture
def random_panel() -> PanelMatrix:
    rng = np.random.default_rng(7)
    values = rng.normal(size=(6, 12)).cumsum(axis=1) + 10.0
    return PanelMatrix(values, tuple(f"u{i}" for i in range(6)), tuple(range(12)))


def make_mask(n_units: int, treated: list[int], t0: int) -> TreatmentMask:
    flags = np.zeros(n_units, dtype=bool)
    flags[treated] = True
    return TreatmentMask(flags, t0)


def write_config(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path
