from __future__ import annotations

import math
import random
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from insightloop.errors import ParseError
from insightloop.profiler import (
    DatasetProfile,
    infer_column_type,
    parse_profile,
    profile_dataset,
    render_profile,
)


def write_csv(tmp_path: Path, text: str, name: str = "data.csv") -> Path:
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


# -- oracle ---------------------------------------------------------------
# Sort-based reference statistics, deliberately a different code path
# (numpy) from the pure-Python implementation under test.


def oracle_stats(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    return {
        "mean": float(np.mean(arr)),
        "std_dev": 0.0 if arr.size < 2 else float(np.std(arr, ddof=1)),
        "min": float(np.min(arr)),
        "max": float(np.max(arr)),
        "q25": float(np.quantile(arr, 0.25, method="linear")),
        "q50": float(np.quantile(arr, 0.5, method="linear")),
        "q75": float(np.quantile(arr, 0.75, method="linear")),
    }


def assert_matches_oracle(stats, values, tol=1e-9):
    expected = oracle_stats(values)
    assert stats.mean == pytest.approx(expected["mean"], abs=tol)
    assert stats.std_dev == pytest.approx(expected["std_dev"], abs=tol)
    assert stats.min == pytest.approx(expected["min"], abs=tol)
    assert stats.max == pytest.approx(expected["max"], abs=tol)
    assert stats.quantiles["0.25"] == pytest.approx(expected["q25"], abs=tol)
    assert stats.quantiles["0.5"] == pytest.approx(expected["q50"], abs=tol)
    assert stats.quantiles["0.75"] == pytest.approx(expected["q75"], abs=tol)


# -- spec examples ----------------------------------------------------------


def test_missing_cell_hand_count(tmp_path):
    path = write_csv(tmp_path, "a,b\n1,x\n,y\n3,z\n")
    profile = profile_dataset(path)
    assert profile.row_count == 3
    assert profile.column("a").missing_count == 1
    assert profile.column("b").missing_count == 0


def test_single_numeric_column_against_oracle(tmp_path):
    path = write_csv(tmp_path, "v\n1\n2\n3\n")
    profile = profile_dataset(path)
    stats = profile.column("v").numeric_stats
    assert stats.mean == 2.0
    assert stats.quantiles["0.5"] == 2.0
    assert stats.min == 1.0
    assert stats.max == 3.0
    assert_matches_oracle(stats, [1.0, 2.0, 3.0])


def test_duplicate_rows_flagged(tmp_path):
    path = write_csv(tmp_path, "a,b\n1,x\n1,x\n2,y\n")
    profile = profile_dataset(path)
    flags = [f for f in profile.diagnostics if f.kind == "duplicated_rows"]
    assert len(flags) == 1
    assert flags[0].count == 1


def test_missing_values_diagnostic_totals(tmp_path):
    path = write_csv(tmp_path, "a,b\n,x\nNA,\nn/a,null\n")
    profile = profile_dataset(path)
    flags = [f for f in profile.diagnostics if f.kind == "missing_values"]
    assert flags[0].count == 5
    assert profile.column("a").missing_count == 3
    assert profile.column("b").missing_count == 2


# -- render / parse -----------------------------------------------------------


def test_render_round_trips(sales_csv):
    profile = profile_dataset(sales_csv)
    assert parse_profile(render_profile(profile)) == profile


def test_render_is_byte_stable(sales_csv):
    profile = profile_dataset(sales_csv)
    assert render_profile(profile) == render_profile(profile_dataset(sales_csv))


def test_zero_rows_is_not_an_error(tmp_path):
    path = write_csv(tmp_path, "a,b\n")
    profile = profile_dataset(path)
    assert profile.row_count == 0
    assert profile.sample_rows == []
    assert '"row_count": 0' in render_profile(profile)


# -- errors -------------------------------------------------------------------


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        profile_dataset("/nonexistent/nowhere.csv")


def test_malformed_row_carries_index(tmp_path):
    path = write_csv(tmp_path, "a,b\n1,2\n3,4,5\n")
    with pytest.raises(ParseError) as err:
        profile_dataset(path)
    assert err.value.row_index == 2


def test_headerless_file(tmp_path):
    path = write_csv(tmp_path, "")
    with pytest.raises(ParseError):
        profile_dataset(path)


def test_sample_k_must_be_positive(sales_csv):
    with pytest.raises(ValueError):
        profile_dataset(sales_csv, sample_k=0)


# -- type inference -----------------------------------------------------------


@pytest.mark.parametrize(
    "values,expected",
    [
        (["true", "False", "TRUE"], "boolean"),
        (["1", "2.5", "-3e2"], "numeric"),
        (["2024-01-01", "2024-02-29T10:00:00"], "datetime"),
        (["01/15/2024", "2024/01/15"], "datetime"),
        (["x", "y", "x"], "categorical"),
        ([f"v{i}" for i in range(25)], "text"),
        ([], "text"),
        (["nan", "inf"], "categorical"),  # non-finite tokens are not numeric
        (["yes", "no"], "categorical"),  # boolean set is strictly true/false
    ],
)
def test_type_inference(values, expected):
    assert infer_column_type(values) == expected


def test_inference_precedence_boolean_before_categorical():
    # two distinct values would also satisfy the categorical branch
    assert infer_column_type(["true", "false"]) == "boolean"


def test_all_missing_column_has_no_stats(tmp_path):
    path = write_csv(tmp_path, "a,b\nNA,1\nnull,2\n")
    profile = profile_dataset(path)
    col = profile.column("a")
    assert col.inferred_type == "text"
    assert col.missing_count == 2
    assert col.numeric_stats is None


# -- invariants over generated tables -----------------------------------------


def make_random_table(rng: random.Random, tmp_path: Path, rows: int, name: str):
    """Random CSV with independently tracked ground truth."""
    n_numeric = rng.randint(1, 3)
    columns = [f"n{i}" for i in range(n_numeric)] + ["label"]
    truth = {c: {"missing": 0, "values": []} for c in columns}
    lines = [",".join(columns)]
    for _ in range(rows):
        cells = []
        for c in columns[:-1]:
            if rng.random() < 0.08:
                cells.append(rng.choice(["", "NA", "N/A", "null"]))
                truth[c]["missing"] += 1
            else:
                value = round(rng.uniform(-1e4, 1e4), 6)
                truth[c]["values"].append(value)
                cells.append(repr(value))
        cells.append(rng.choice(["red", "green", "blue"]))
        lines.append(",".join(cells))
    return write_csv(tmp_path, "\n".join(lines) + "\n", name), truth


def test_counts_and_stats_on_generated_tables(tmp_path):
    rng = random.Random(20250809)
    for t in range(8):
        rows = rng.randint(0, 400)
        path, truth = make_random_table(rng, tmp_path, rows, f"t{t}.csv")
        profile = profile_dataset(path)
        assert profile.row_count == rows
        for col in profile.columns:
            if col.name == "label":
                continue
            info = truth[col.name]
            assert col.missing_count == info["missing"]
            assert col.missing_count + len(info["values"]) == rows
            if info["values"]:
                assert col.inferred_type == "numeric"
                assert_matches_oracle(col.numeric_stats, info["values"])


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False),
        min_size=1,
        max_size=200,
    )
)
def test_numeric_stats_match_oracle_property(values):
    from insightloop.profiler import compute_numeric_stats

    stats = compute_numeric_stats(values)
    assert_matches_oracle(stats, values)
    q = stats.quantiles
    assert stats.min <= q["0.25"] <= q["0.5"] <= q["0.75"] <= stats.max
    assert stats.std_dev >= 0


def test_profiling_does_not_mutate_input(sales_csv):
    before = sales_csv.read_bytes()
    profile_dataset(sales_csv)
    assert sales_csv.read_bytes() == before


def test_validate_rejects_inconsistent_profile(sales_csv):
    profile = profile_dataset(sales_csv)
    profile.column_count += 1
    with pytest.raises(ValueError):
        profile.validate()
