"""Measurement apparatus: embedding diversity/coverage formulas, judge-based
insight and summary scoring, and the four-dimension plot rubric.

The two formula operations are exact definitions:

    diversity(v_1..v_n) = 1 - (2 / (n(n-1))) * sum_{i<j} cos(v_i, v_j)
    coverage(v_1..v_n)  = (1/n) * sum_i ||v_i - centroid||_2

with the centroid the arithmetic mean vector. Judge-backed scores live in
[0, 1]; plot rubric scores are integers in [0, 10], all zero for a missing
plot (scored without any judge call).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import prompts
from .artifacts import read_json, write_json
from .errors import DegenerateInput, DimensionMismatch, SchemaError
from .gateway import Gateway, ModelRequest

METRIC_NAMES = ("insight_level", "summary_level", "diversity", "coverage")


@dataclass
class MetricResult:
    name: str
    value: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "details": self.details}


@dataclass(frozen=True)
class PlotScore:
    relevance: int
    clarity: int
    annotation: int
    interpretability: int

    def __post_init__(self) -> None:
        for value in (self.relevance, self.clarity, self.annotation, self.interpretability):
            if not 0 <= value <= 10:
                raise ValueError("plot scores must be in [0, 10]")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.relevance, self.clarity, self.annotation, self.interpretability)

    def to_dict(self) -> dict:
        return {
            "relevance": self.relevance,
            "clarity": self.clarity,
            "annotation": self.annotation,
            "interpretability": self.interpretability,
        }


def _as_matrix(vectors: list[list[float]]) -> np.ndarray:
    if not vectors:
        raise ValueError("vectors must be non-empty")
    dims = {len(v) for v in vectors}
    if len(dims) > 1:
        raise DimensionMismatch(f"inconsistent vector dimensions: {sorted(dims)}")
    matrix = np.asarray(vectors, dtype=np.float64)
    if not np.all(np.isfinite(matrix)):
        raise DegenerateInput("vectors must contain only finite entries")
    return matrix


def diversity(vectors: list[list[float]]) -> float:
    """Mean pairwise cosine dissimilarity; 0 for identical directions."""
    matrix = _as_matrix(vectors)
    n = matrix.shape[0]
    if n < 2:
        raise ValueError("diversity requires at least two vectors")
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateInput("cosine similarity is undefined for a zero vector")
    unit = matrix / norms[:, None]
    gram = unit @ unit.T
    pair_sum = (gram.sum() - np.trace(gram)) / 2.0
    return float(1.0 - (2.0 / (n * (n - 1))) * pair_sum)


def coverage(vectors: list[list[float]]) -> float:
    """Mean Euclidean distance from the centroid (the spread radius)."""
    matrix = _as_matrix(vectors)
    centroid = matrix.mean(axis=0)
    return float(np.linalg.norm(matrix - centroid, axis=1).mean())


class GatewayJudge:
    """Judge-model scoring backed by the gateway, with per-pair caching."""

    def __init__(self, gateway: Gateway):
        self.gateway = gateway
        self._pair_cache: dict[str, float] = {}

    @staticmethod
    def _parse_score(text: str) -> float:
        payload = prompts.parse_json_block(text)
        value = prompts.require_keys(payload, "score")["score"]
        if not isinstance(value, (int, float)):
            raise SchemaError("score must be numeric")
        return float(value)

    def pair_score(self, gold: str, predicted: str) -> float:
        key = hashlib.sha256(f"{gold}\x1f{predicted}".encode("utf-8")).hexdigest()
        if key in self._pair_cache:
            return self._pair_cache[key]
        request = ModelRequest(
            role_name="pair_scorer",
            prompt=prompts.render("pair_score", gold=gold, predicted=predicted),
        )
        value = self.gateway.complete(request, parser=self._parse_score).parsed
        self._pair_cache[key] = value
        return value

    def summary_score(self, gold: str, predicted: str) -> float:
        request = ModelRequest(
            role_name="summary_scorer",
            prompt=prompts.render("summary_score", gold=gold, predicted=predicted),
        )
        return self.gateway.complete(request, parser=self._parse_score).parsed

    def plot_score(self, question: str, image_path: Path) -> tuple[int, int, int, int]:
        def parse(text: str) -> tuple[int, int, int, int]:
            payload = prompts.parse_json_block(text)
            values = []
            for key in ("relevance", "clarity", "annotation", "interpretability"):
                value = prompts.require_keys(payload, key)[key]
                if not isinstance(value, (int, float)):
                    raise SchemaError(f"{key} must be numeric")
                values.append(int(round(value)))
            return tuple(values)

        request = ModelRequest(
            role_name="plot_scorer",
            prompt=prompts.render("plot_score", question=question),
            attachments=(Path(image_path),),
        )
        return self.gateway.complete(request, parser=parse).parsed


def _clamp_unit(value: float, flags: list[str] | None, label: str) -> float:
    if 0.0 <= value <= 1.0:
        return value
    if flags is not None:
        flags.append(f"{label}: score {value} clamped to [0, 1]")
    return min(1.0, max(0.0, value))


def score_insights(
    predicted: list[str],
    gold: list[str],
    judge,
    flags: list[str] | None = None,
) -> MetricResult:
    """Per gold insight, the best judge score over all predictions; mean over gold."""
    if not gold:
        raise ValueError("score_insights requires non-empty gold insights")
    per_gold = []
    for g in gold:
        best = 0.0
        best_index = None
        for i, p in enumerate(predicted):
            try:
                value = _clamp_unit(judge.pair_score(g, p), flags, "pair_score")
            except SchemaError:
                if flags is not None:
                    flags.append("pair_score: schema failure, pair scored 0")
                value = 0.0
            if value > best:
                best = value
                best_index = i
        per_gold.append({"gold": g, "score": best, "matched_prediction": best_index})
    value = sum(item["score"] for item in per_gold) / len(per_gold)
    return MetricResult(name="insight_level", value=value, details={"per_gold": per_gold})


def score_summary(
    predicted: str,
    gold: str,
    judge,
    flags: list[str] | None = None,
) -> MetricResult:
    if not predicted.strip() or not gold.strip():
        raise ValueError("score_summary requires non-empty texts")
    try:
        value = _clamp_unit(judge.summary_score(gold, predicted), flags, "summary_score")
    except SchemaError:
        if flags is not None:
            flags.append("summary_score: schema failure, scored 0")
        value = 0.0
    return MetricResult(name="summary_level", value=value, details={})


def judge_plot(
    question: str,
    plot_path: Path | None,
    judge,
    flags: list[str] | None = None,
) -> PlotScore:
    """Four-dimension rubric; a missing plot scores all zeros with no judge call."""
    if plot_path is None or not Path(plot_path).is_file():
        return PlotScore(0, 0, 0, 0)
    try:
        from PIL import Image

        with Image.open(plot_path) as image:
            image.verify()
    except Exception as exc:
        if flags is not None:
            flags.append(f"judge_plot: unreadable image {plot_path} ({exc})")
        return PlotScore(0, 0, 0, 0)
    try:
        raw = judge.plot_score(question, Path(plot_path))
    except SchemaError:
        if flags is not None:
            flags.append("judge_plot: schema failure, scored 0")
        return PlotScore(0, 0, 0, 0)
    clamped = []
    for value in raw:
        if not 0 <= value <= 10:
            if flags is not None:
                flags.append(f"judge_plot: score {value} clamped to [0, 10]")
            value = min(10, max(0, value))
        clamped.append(value)
    return PlotScore(*clamped)


def evaluate_run(
    run_dir: Path,
    gold_path: Path,
    gateway: Gateway,
    out_path: Path | None = None,
) -> dict:
    """Score a finished run directory against a gold file.

    The gold file is JSON: {"insights": [...], "summary": "..."}. Plot
    scoring walks each answered question's judged version; question
    diversity/coverage embed the answered questions.
    """
    run_dir = Path(run_dir)
    report = read_json(run_dir / "report.json")
    gold = read_json(gold_path)
    judge = GatewayJudge(gateway)
    flags: list[str] = []

    predicted_insights = [entry["insight"]["text"] for entry in report["history"]]
    insight_metric = score_insights(
        predicted_insights, list(gold["insights"]), judge, flags=flags
    )

    if report["summary"] and gold.get("summary"):
        summary_metric = score_summary(report["summary"], gold["summary"], judge, flags=flags)
    else:
        summary_metric = MetricResult(name="summary_level", value=0.0, details={})
        flags.append("summary missing on one side; summary_level scored 0")

    questions = [entry["question"]["text"] for entry in report["history"]]
    if len(questions) >= 2:
        vectors = gateway.embed(questions)
        diversity_value = diversity(vectors)
        coverage_value = coverage(vectors)
    else:
        diversity_value = None
        coverage_value = coverage(gateway.embed(questions)) if questions else None
        flags.append("fewer than two answered questions; diversity undefined")

    plot_scores = {}
    for entry in report["questions"]:
        if entry.get("status") != "answered":
            plot_scores[entry["id"]] = PlotScore(0, 0, 0, 0).to_dict()
            continue
        version_dir = run_dir / entry["id"] / "versions" / str(entry["judged_version"])
        plot = version_dir / "plot.png"
        score = judge_plot(
            entry["question"]["text"], plot if plot.is_file() else None, judge, flags=flags
        )
        plot_scores[entry["id"]] = score.to_dict()
    dimension_means = {}
    if plot_scores:
        for key in ("relevance", "clarity", "annotation", "interpretability"):
            dimension_means[key] = sum(s[key] for s in plot_scores.values()) / len(plot_scores)

    doc = {
        "insight_level": insight_metric.to_dict(),
        "summary_level": summary_metric.to_dict(),
        "diversity": diversity_value,
        "coverage": coverage_value,
        "plot_scores": plot_scores,
        "plot_dimension_means": dimension_means,
        "flags": flags,
    }
    if out_path is not None:
        write_json(out_path, doc)
    return doc
