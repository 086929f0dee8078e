import pytest

# whole directory is meaningless without the package (the main pipeline's
# suite runs fully without it via the scripted executor)
pytest.importorskip("sandbox_runner")
