from __future__ import annotations

from pathlib import Path

import pytest

from insightloop.execution import TINY_PNG
from insightloop.model import AnalysisGoal
from insightloop.profiler import profile_dataset
from support import SALES_CSV


@pytest.fixture
def sales_csv(tmp_path: Path) -> Path:
    path = tmp_path / "sales.csv"
    path.write_text(SALES_CSV, encoding="utf-8")
    return path


@pytest.fixture
def sales_profile(sales_csv: Path):
    return profile_dataset(sales_csv)


@pytest.fixture
def goal() -> AnalysisGoal:
    return AnalysisGoal("Explain weekly sales movements and their drivers")


@pytest.fixture
def tiny_png(tmp_path: Path) -> Path:
    path = tmp_path / "plot.png"
    path.write_bytes(TINY_PNG)
    return path
