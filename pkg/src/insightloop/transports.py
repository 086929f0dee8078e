"""Transport backends behind the gateway.

``HttpTransport`` talks to an OpenAI-compatible completion/embedding endpoint
and a JSON search endpoint; credentials come from environment variables only.

``ScriptedTransport`` is a deterministic rule-based stand-in for both: every
response is a pure function of the request text. It exists so the pipeline
can run end to end with no network at all, and it is what generates the
shipped replay fixtures. It is not a model; outputs are canned.
"""

from __future__ import annotations

import base64
import hashlib
import os
import re
from datetime import date, timedelta
from pathlib import Path

from .errors import TransportError
from .gateway import ModelRequest

API_KEY_ENV = "INSIGHTLOOP_API_KEY"
SEARCH_KEY_ENV = "INSIGHTLOOP_SEARCH_KEY"


class HttpTransport:
    """OpenAI-style chat/embedding client plus a JSON web-search client."""

    def __init__(
        self,
        base_url: str,
        model: str,
        embed_model: str = "text-embedding-3-small",
        search_url: str | None = None,
        per_agent_models: dict[str, str] | None = None,
        timeout: float = 120.0,
    ):
        import httpx

        self._client = httpx.Client(timeout=timeout)
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.embed_model = embed_model
        self.search_url = search_url
        self.per_agent_models = per_agent_models or {}

    def _headers(self, env: str) -> dict:
        key = os.environ.get(env, "")
        if not key:
            raise TransportError(f"missing credential: set {env}")
        return {"Authorization": f"Bearer {key}"}

    def complete(self, request: ModelRequest) -> tuple[str, dict]:
        import httpx

        content: list[dict] = [{"type": "text", "text": request.prompt}]
        for path in request.attachments:
            encoded = base64.b64encode(Path(path).read_bytes()).decode("ascii")
            content.append(
                {
                    "type": "image_url",
                    "image_url": {"url": f"data:image/png;base64,{encoded}"},
                }
            )
        body = {
            "model": self.per_agent_models.get(request.role_name, self.model),
            "messages": [{"role": "user", "content": content}],
            "temperature": request.decoding.temperature,
            "max_tokens": request.decoding.max_output,
        }
        try:
            resp = self._client.post(
                f"{self.base_url}/chat/completions",
                json=body,
                headers=self._headers(API_KEY_ENV),
            )
            resp.raise_for_status()
            doc = resp.json()
            text = doc["choices"][0]["message"]["content"]
            usage = {
                k: int(v)
                for k, v in doc.get("usage", {}).items()
                if isinstance(v, (int, float))
            }
            return text, usage
        except httpx.HTTPError as exc:
            raise TransportError(f"completion request failed: {exc}") from exc
        except (KeyError, IndexError, ValueError) as exc:
            raise TransportError(f"malformed completion response: {exc}") from exc

    def embed(self, texts: list[str]) -> list[list[float]]:
        import httpx

        try:
            resp = self._client.post(
                f"{self.base_url}/embeddings",
                json={"model": self.embed_model, "input": list(texts)},
                headers=self._headers(API_KEY_ENV),
            )
            resp.raise_for_status()
            doc = resp.json()
            return [list(map(float, item["embedding"])) for item in doc["data"]]
        except httpx.HTTPError as exc:
            raise TransportError(f"embedding request failed: {exc}") from exc
        except (KeyError, ValueError, TypeError) as exc:
            raise TransportError(f"malformed embedding response: {exc}") from exc

    def search(self, query: str, max_date: str, k: int) -> list[dict]:
        import httpx

        if not self.search_url:
            raise TransportError("no search endpoint configured")
        try:
            resp = self._client.post(
                self.search_url,
                json={"q": query, "num": k},
                headers={"X-API-KEY": os.environ.get(SEARCH_KEY_ENV, "")},
            )
            resp.raise_for_status()
            doc = resp.json()
        except httpx.HTTPError as exc:
            raise TransportError(f"search request failed: {exc}") from exc
        results = []
        for item in doc.get("organic", [])[:k]:
            results.append(
                {
                    "query": query,
                    "title": item.get("title", ""),
                    "snippet": item.get("snippet", ""),
                    "url": item.get("link", ""),
                    "date": item.get("date"),
                }
            )
        return results


def _h(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _fraction(text: str, salt: str = "") -> float:
    """Deterministic pseudo-score in [0, 1] derived from content."""
    return (int(_h(salt + text)[:8], 16) % 1001) / 1000.0


_ANALYSIS_SCRIPT = '''import pandas as pd
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

df = pd.read_csv("data.csv")
print(f"rows={len(df)} columns={len(df.columns)}")
numeric = df.select_dtypes("number")
for name in numeric.columns:
    print(f"{name}: mean={numeric[name].mean():.4f} total={numeric[name].sum():.4f}")
key = df.columns[0]
counts = df[key].astype(str).value_counts().head(10)
ax = counts.plot(kind="bar")
ax.set_title("Breakdown by " + key)
ax.set_xlabel(key)
ax.set_ylabel("count")
plt.tight_layout()
plt.savefig("plot.png")
'''

_PERSONAS = [
    {
        "name": "Trend Analyst",
        "background": "time-series specialist watching growth and decay",
        "domain_focus": "temporal dynamics across the date-like columns",
        "traits": ["patient", "skeptical of single-point readings"],
        "capabilities": ["trend fitting", "seasonality checks"],
    },
    {
        "name": "Anomaly Hunter",
        "background": "forensic analyst looking for outliers and rare events",
        "domain_focus": "extreme values and unexpected gaps",
        "traits": ["suspicious", "detail-oriented"],
        "capabilities": ["outlier detection", "distribution comparison"],
    },
    {
        "name": "Operations Reviewer",
        "background": "efficiency auditor focused on workload and throughput",
        "domain_focus": "volumes, ratios, and resource allocation",
        "traits": ["pragmatic", "cost-conscious"],
        "capabilities": ["ratio analysis", "cohort comparison"],
    },
    {
        "name": "Distribution Skeptic",
        "background": "statistician who distrusts averages",
        "domain_focus": "shape of value distributions per segment",
        "traits": ["rigorous", "contrarian"],
        "capabilities": ["quantile analysis", "variance decomposition"],
    },
]


class ScriptedTransport:
    """Offline deterministic stand-in for model, embedding, and search calls.

    Every handler derives its output only from the prompt text, so record
    and replay runs are bit-identical. ``unanswerable_iteration`` makes the
    first persona's first question of that iteration unanswerable (its code
    generations fail to parse), which scripted fixtures use to exercise the
    skipped-question path.
    """

    EMBED_DIM = 8
    UNANSWERABLE = "[unanswerable]"

    def __init__(self, unanswerable_iteration: int | None = None):
        self.unanswerable_iteration = unanswerable_iteration

    # -- helpers -----------------------------------------------------------

    @staticmethod
    def _line(prompt: str, prefix: str) -> str:
        for line in prompt.splitlines():
            if line.startswith(prefix):
                return line[len(prefix):].strip()
        return ""

    @staticmethod
    def _columns(prompt: str) -> list[str]:
        row = ScriptedTransport._line(prompt, "Columns: ")
        return [c.strip() for c in row.split(",") if c.strip()] if row else ["value"]

    @staticmethod
    def _int_after(prompt: str, pattern: str, default: int) -> int:
        m = re.search(pattern, prompt)
        return int(m.group(1)) if m else default

    @staticmethod
    def _json(payload: str) -> str:
        return f"```json\n{payload}\n```"

    # -- transport interface ------------------------------------------------

    def complete(self, request: ModelRequest) -> tuple[str, dict]:
        handler = getattr(self, f"_agent_{request.role_name}", None)
        if handler is None:
            raise TransportError(f"scripted transport has no handler for {request.role_name}")
        return handler(request.prompt), {"prompt_tokens": 0, "completion_tokens": 0}

    def embed(self, texts: list[str]) -> list[list[float]]:
        vectors = []
        for text in texts:
            digest = hashlib.sha256(text.encode("utf-8")).digest()
            vectors.append([digest[i] / 255.0 + 0.05 for i in range(self.EMBED_DIM)])
        return vectors

    def search(self, query: str, max_date: str, k: int) -> list[dict]:
        cap = date.fromisoformat(max_date)
        digest = _h(query)[:10]
        results = []
        for i in range(k):
            # Last result postdates the cap so the date filter has work to do.
            if i == k - 1:
                stamp = cap + timedelta(days=30)
            else:
                stamp = cap - timedelta(days=7 * (i + 1))
            results.append(
                {
                    "query": query,
                    "title": f"Reference {i + 1} on {query}",
                    "snippet": f"Background fact {i + 1} relevant to {query}.",
                    "url": f"https://example.org/{digest}/{i + 1}",
                    "date": stamp.isoformat(),
                }
            )
        return results

    # -- per-agent handlers --------------------------------------------------

    def _agent_search_judge(self, prompt: str) -> str:
        return self._json('{"verdict": "yes", "reason": "the goal depends on domain context the table does not carry"}')

    def _agent_query_generator(self, prompt: str) -> str:
        n = self._int_after(prompt, r"Produce exactly (\d+) distinct", 3)
        goal = self._line(prompt, "Analysis goal: ") or "the dataset domain"
        cols = self._columns(prompt)
        queries = [
            f"{goal} industry benchmarks",
            f"typical seasonality of {cols[0]} data",
            f"common causes of shifts in {cols[-1]}",
            f"{goal} best practices",
            f"reporting conventions for {cols[0]}",
        ]
        import json

        return self._json(json.dumps({"queries": queries[:n]}))

    def _agent_knowledge_generator(self, prompt: str) -> str:
        import json

        urls = re.findall(r"https://[^\s)]+", prompt)
        goal = self._line(prompt, "Analysis goal: ") or "the analysis"
        items = [
            {
                "statement": f"Domain sources frame {goal} against seasonal baselines.",
                "relevance": "prevents misreading routine seasonal swings as anomalies",
                "citation": urls[0] if urls else None,
            },
            {
                "statement": "Comparable datasets report week-over-week deltas rather than raw totals.",
                "relevance": "suggests normalizing volumes before comparing segments",
                "citation": urls[1] if len(urls) > 1 else (urls[0] if urls else None),
            },
        ]
        return self._json(json.dumps({"items": items}))

    def _agent_vanilla_knowledge_generator(self, prompt: str) -> str:
        import json

        goal = self._line(prompt, "Analysis goal: ") or "the analysis"
        items = [
            {
                "statement": f"General practice for {goal} is to segment by category before aggregating.",
                "relevance": "avoids averaging away segment-level effects",
            },
            {
                "statement": "Missing values in operational tables are usually not missing at random.",
                "relevance": "missingness itself may carry signal",
            },
        ]
        return self._json(json.dumps({"items": items}))

    def _agent_role_designer(self, prompt: str) -> str:
        import json

        n = self._int_after(prompt, r"Design exactly (\d+) personas", 3)
        cols = self._columns(prompt)
        personas = []
        for persona in _PERSONAS[:n]:
            entry = dict(persona)
            entry["domain_focus"] = f"{persona['domain_focus']} (notably `{cols[0]}`)"
            personas.append(entry)
        return self._json(json.dumps({"roles": personas}))

    def _agent_question_raiser(self, prompt: str) -> str:
        import json

        role = self._line(prompt, "Name: ") or "Analyst"
        iteration = self._int_after(prompt, r"Iteration: (\d+)", 1)
        m = self._int_after(prompt, r"Pose at most (\d+) questions", 3)
        cols = self._columns(prompt)
        anchor = cols[min(len(cols) - 1, 1)]
        questions = [
            f"How does `{anchor}` change across `{cols[0]}` in iteration {iteration}, from the {role} view?",
            f"Which segment of `{cols[0]}` is most unusual for {role} in round {iteration}?",
            f"What relationship between `{cols[0]}` and `{cols[-1]}` should {role} verify in round {iteration}?",
        ]
        if (
            self.unanswerable_iteration is not None
            and iteration == self.unanswerable_iteration
            and role == _PERSONAS[0]["name"]
        ):
            questions[0] = (
                f"What untracked factor {self.UNANSWERABLE} explains the residual variance?"
            )
        return self._json(json.dumps({"questions": questions[:m]}))

    def _agent_question_judge(self, prompt: str) -> str:
        import json

        n = self._int_after(prompt, r"Select exactly (\d+) questions", 2)
        pool = re.findall(r"^\s*\d+\. (.+?) \(from .+\)$", prompt, re.MULTILINE)
        seen: list[str] = []
        for text in pool:
            if text not in seen:
                seen.append(text)
        selections = [
            {"question": text, "justification": "Covers an angle no other selection does."}
            for text in seen[:n]
        ]
        return self._json(json.dumps({"selections": selections}))

    def _agent_question_rewriter(self, prompt: str) -> str:
        import json

        question = self._line(prompt, "Original question: ")
        cols = self._columns(prompt)
        rewritten = (
            f"{question} Compute it over all rows of the table, grouping by `{cols[0]}`."
        )
        return self._json(
            json.dumps({"question": rewritten, "notes": "pinned the grouping column and scope"})
        )

    def _code_response(self, prompt: str, flavor: str) -> str:
        question = self._line(prompt, "Question: ")
        if self.UNANSWERABLE in question:
            return "The question references data that does not exist, so no script can answer it."
        body = f"# approach: {flavor}\n# draft revision\n{_ANALYSIS_SCRIPT}"
        return (
            f"Plan ({flavor}): load the table, compute the grouped aggregates, chart the result.\n\n"
            f"```python\n{body}```"
        )

    def _agent_coder_divide_and_conquer(self, prompt: str) -> str:
        return self._code_response(prompt, "solve sub-problems independently, then combine")

    def _agent_coder_query_plan(self, prompt: str) -> str:
        return self._code_response(prompt, "write the query plan, then translate to code")

    def _agent_coder_negative_reasoning(self, prompt: str) -> str:
        return self._code_response(prompt, "enumerate pitfalls, then code around them")

    def _agent_code_selector(self, prompt: str) -> str:
        return self._json(
            '{"strategy": "divide_and_conquer", "rationale": "Decomposition kept each aggregation simple and checkable."}'
        )

    def _agent_code_reviewer(self, prompt: str) -> str:
        if "# draft revision" in prompt:
            return self._json(
                '{"verdict": "FAIL", "findings": [{"dimension": "data_integrity", '
                '"issue": "draft revision does not normalize missing values before aggregating"}]}'
            )
        return self._json('{"verdict": "PASS", "findings": []}')

    def _agent_plot_reviewer(self, prompt: str) -> str:
        return self._json('{"verdict": "PASS", "findings": []}')

    def _agent_code_fixer(self, prompt: str) -> str:
        blocks = re.findall(r"```python\s*\n(.*?)```", prompt, re.DOTALL)
        code = blocks[-1] if blocks else _ANALYSIS_SCRIPT
        fixed = "\n".join(
            line for line in code.splitlines() if "# draft revision" not in line
        ).strip("\n")
        fixed = fixed.replace(
            'df = pd.read_csv("data.csv")',
            'df = pd.read_csv("data.csv")\ndf = df.dropna(how="all")',
        )
        return f"Applied the review findings.\n\n```python\n{fixed}\n```"

    def _agent_interpreter(self, prompt: str) -> str:
        import json

        question = self._line(prompt, "Question: ")
        stdout_lines = []
        grab = False
        for line in prompt.splitlines():
            if line.startswith("Script stdout:"):
                grab = True
                continue
            if grab:
                if line.startswith("Answer with"):
                    break
                if line.strip():
                    stdout_lines.append(line.strip())
        headline = stdout_lines[0] if stdout_lines else "no output"
        detail = stdout_lines[1] if len(stdout_lines) > 1 else "no numeric detail"
        insight = (
            f"On '{question}': the execution ({headline}) indicates {detail}; "
            "the chart shows the grouped breakdown behind that figure."
        )
        return self._json(json.dumps({"insight": insight}))

    def _agent_insight_judge(self, prompt: str) -> str:
        indices = [int(i) for i in re.findall(r"^- version (\d+):", prompt, re.MULTILINE)]
        chosen = max(indices) if indices else 0
        return self._json(
            f'{{"version": {chosen}, "rationale": "latest revision passed review with the same finding"}}'
        )

    def _agent_summarizer(self, prompt: str) -> str:
        import json

        insights = re.findall(r"Insight: (.+)$", prompt, re.MULTILINE)
        bullets = " ".join(
            f"({i + 1}) {text}" for i, text in enumerate(insights)
        )
        summary = f"Across {len(insights)} answered questions: {bullets}"
        return self._json(json.dumps({"summary": summary}))

    def _agent_pair_scorer(self, prompt: str) -> str:
        gold = self._line(prompt, "Reference insight: ")
        predicted = self._line(prompt, "Predicted insight: ")
        return self._json(f'{{"score": {_fraction(gold + "|" + predicted):.3f}}}')

    def _agent_summary_scorer(self, prompt: str) -> str:
        return self._json(f'{{"score": {_fraction(prompt, salt="summary"):.3f}}}')

    def _agent_plot_scorer(self, prompt: str) -> str:
        question = self._line(prompt, "Question: ")
        digest = hashlib.sha256(question.encode("utf-8")).digest()
        scores = [4 + digest[i] % 7 for i in range(4)]
        return self._json(
            '{{"relevance": {}, "clarity": {}, "annotation": {}, "interpretability": {}}}'.format(*scores)
        )
