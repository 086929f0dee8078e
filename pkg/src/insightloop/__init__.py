"""Agent-orchestrated insight discovery over tabular datasets.

The pipeline profiles a dataset, acquires domain knowledge on demand,
raises analytical questions through designed role perspectives, answers
them with multi-strategy code generation plus a review/fix loop in a
sandbox, and consolidates the insights into a summary. A record/replay
gateway makes every run reproducible offline.
"""

__version__ = "0.1.0"

from .model import AnalysisGoal, History, Insight, KnowledgeSet, Question  # noqa: F401
from .profiler import DatasetProfile, profile_dataset, render_profile  # noqa: F401
