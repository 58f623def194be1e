"""Per-example orchestration: initial generation, entity linking, skeleton
hallucination, deterministic comparison, then ordered correction rounds
(entities first, then skeleton, then execution retries), all captured in a
CorrectionTrace.

A failed sub-task only disables its own feedback channel; the pipeline always
emits a final SQL. Rounds never loop backward: after a correction the earlier
checks are not re-run, and the skeleton check is evaluated against the
post-entity-correction SQL.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .alignment import Alignment, linked_entities, parse_alignment, tokenize_question
from .backends import ModelBackend, ModelRequest, prompt_sha256
from .comparison import Feedback, compare_entities, compare_skeletons, render_notification
from .datasets import Example
from .errors import FixtureMissingError, SqlMendError
from .evaluation import DEFAULT_TIMEOUT, execute_sql
from .prompts import PromptDemo, PromptKind, build_prompt, extract_sql_block
from .retrieval import Bm25Index, Demonstration, top_k
from .schema import SchemaCatalog, render_schema_prompt
from .sql_analysis import Skeleton, extract_skeleton

ORACLE_MODES = ("none", "oracle_entities", "oracle_skeleton", "oracle_both")

STAGE_GENERATION = "sql_generation"
STAGE_LINKING = "entity_linking"
STAGE_SKELETON = "skeleton_parsing"
STAGE_CORRECTION = "correction"


@dataclass
class PipelineConfig:
    shots: int = 5
    max_execution_retries: int = 1
    demonstration_order: str = "nearest-last"  # or nearest-first
    oracle_mode: str = "none"
    temperature: float = 0.0
    max_output_tokens: int = 512
    execution_timeout: float = DEFAULT_TIMEOUT
    workers: int = 1

    def __post_init__(self):
        if self.shots < 0:
            raise ValueError("shots must be >= 0")
        if self.max_execution_retries < 0:
            raise ValueError("max_execution_retries must be >= 0")
        if self.oracle_mode not in ORACLE_MODES:
            raise ValueError(f"oracle_mode must be one of {ORACLE_MODES}")
        if self.demonstration_order not in ("nearest-last", "nearest-first"):
            raise ValueError("demonstration_order must be nearest-last or nearest-first")

    @property
    def oracle_entities(self) -> bool:
        return self.oracle_mode in ("oracle_entities", "oracle_both")

    @property
    def oracle_skeleton(self) -> bool:
        return self.oracle_mode in ("oracle_skeleton", "oracle_both")


@dataclass
class CorrectionRound:
    feedback: Feedback
    prompt_sha256: str
    corrected_sql: str


@dataclass
class CorrectionTrace:
    example_id: str
    initial_sql: str = ""
    alignment: Alignment | None = None
    hallucinated_sql: str | None = None
    parsed_skeleton: Skeleton | None = None
    rounds: list[CorrectionRound] = field(default_factory=list)
    final_sql: str = ""
    stage_errors: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "initial_sql": self.initial_sql,
            "alignment": self.alignment.to_records() if self.alignment else None,
            "hallucinated_sql": self.hallucinated_sql,
            "parsed_skeleton": self.parsed_skeleton.text if self.parsed_skeleton else None,
            "rounds": [
                {
                    "feedback": r.feedback.to_dict(),
                    "prompt_sha256": r.prompt_sha256,
                    "corrected_sql": r.corrected_sql,
                }
                for r in self.rounds
            ],
            "final_sql": self.final_sql,
            "stage_errors": [
                {"stage": stage, "error": error} for stage, error in self.stage_errors
            ],
        }


class MendPipeline:
    """Runs the generate/link/parse/compare/correct flow over examples."""

    def __init__(
        self,
        catalogs: dict[str, SchemaCatalog],
        pool: list[Demonstration],
        index: Bm25Index | None,
        backend: ModelBackend,
        config: PipelineConfig | None = None,
    ):
        self.catalogs = catalogs
        self.pool = pool
        self.index = index
        self.backend = backend
        self.config = config or PipelineConfig()
        if self.config.shots > 0 and (not pool or index is None):
            raise SqlMendError("few-shot inference requires a demonstration pool and index")

    # -- stage helpers -----------------------------------------------------

    def _complete(self, prompt: str) -> str:
        request = ModelRequest(
            prompt=prompt,
            temperature=self.config.temperature,
            max_output_tokens=self.config.max_output_tokens,
        )
        return self.backend.complete(request).text

    def _select_demos(self, question: str) -> list[Demonstration]:
        if self.config.shots == 0 or self.index is None:
            return []
        ranked = top_k(self.index, question, self.config.shots)
        demos = [self.pool[i] for i, _ in ranked]
        if self.config.demonstration_order == "nearest-last":
            demos.reverse()
        return demos

    def _demo_schema_text(self, demo: Demonstration) -> str:
        catalog = self.catalogs.get(demo.db_id)
        return render_schema_prompt(catalog) if catalog else ""

    def generate_initial_sql(self, example: Example, trace: CorrectionTrace) -> str:
        catalog = self.catalogs[example.db_id]
        demos = [
            PromptDemo(
                question=d.question, sql=d.sql, schema_text=self._demo_schema_text(d)
            )
            for d in self._select_demos(example.question)
        ]
        prompt = build_prompt(
            PromptKind.SQL_GENERATION, catalog, example.question, demos
        )
        try:
            raw = self._complete(prompt)
            return extract_sql_block(raw)
        except FixtureMissingError:
            raise
        except SqlMendError as exc:
            trace.stage_errors.append((STAGE_GENERATION, str(exc)))
            return ""

    def link_entities(
        self, example: Example, initial_sql: str, trace: CorrectionTrace
    ) -> Alignment | None:
        if self.config.oracle_entities:
            if example.gold_alignment is not None:
                return example.gold_alignment
            trace.stage_errors.append((STAGE_LINKING, "oracle mode without gold alignment"))
            return None
        catalog = self.catalogs[example.db_id]
        tokenized = " ".join(tokenize_question(example.question))
        demos = []
        for demo in self._select_demos(example.question):
            demo_tokens = " ".join(tokenize_question(demo.question))
            alignment_text = (
                repr(demo.alignment.to_records()) if demo.alignment else "[]"
            )
            demos.append(
                PromptDemo(
                    question=demo_tokens,
                    sql=demo.sql,
                    schema_text=self._demo_schema_text(demo),
                    alignment_text=alignment_text,
                )
            )
        prompt = build_prompt(
            PromptKind.ENTITY_LINKING, catalog, tokenized, demos, sql=initial_sql
        )
        try:
            raw = self._complete(prompt)
            return parse_alignment(raw, question=example.question)
        except FixtureMissingError:
            raise
        except SqlMendError as exc:
            trace.stage_errors.append((STAGE_LINKING, str(exc)))
            return None

    def parse_question_skeleton(
        self, example: Example, trace: CorrectionTrace
    ) -> Skeleton | None:
        if self.config.oracle_skeleton:
            if example.gold_sql:
                return extract_skeleton(example.gold_sql)
            trace.stage_errors.append((STAGE_SKELETON, "oracle mode without gold SQL"))
            return None
        demos = [
            PromptDemo(question=d.question, sql=d.sql)
            for d in self._select_demos(example.question)
        ]
        prompt = build_prompt(PromptKind.SKELETON_PARSING, None, example.question, demos)
        try:
            raw = self._complete(prompt)
            hallucinated = extract_sql_block(raw)
            trace.hallucinated_sql = hallucinated
            return extract_skeleton(hallucinated)
        except FixtureMissingError:
            raise
        except SqlMendError as exc:
            trace.stage_errors.append((STAGE_SKELETON, str(exc)))
            return None

    def _correction_round(
        self,
        example: Example,
        current_sql: str,
        feedback: Feedback,
        trace: CorrectionTrace,
    ) -> str:
        """One correction completion; on extraction failure the SQL is kept."""
        catalog = self.catalogs[example.db_id]
        if feedback.kind == "missing_entities":
            prompt = build_prompt(
                PromptKind.CORRECTION_ENTITY,
                catalog,
                example.question,
                sql=current_sql,
                notification=render_notification(feedback),
            )
        elif feedback.kind == "skeleton_mismatch":
            prompt = build_prompt(
                PromptKind.CORRECTION_SKELETON,
                catalog,
                example.question,
                sql=current_sql,
                skeleton=feedback.expected_skeleton.text,
            )
        else:
            prompt = build_prompt(
                PromptKind.CORRECTION_EXECUTION,
                catalog,
                example.question,
                sql=current_sql,
                error_message=feedback.error_message,
            )
        digest = prompt_sha256(prompt)
        try:
            corrected = extract_sql_block(self._complete(prompt))
        except FixtureMissingError:
            raise
        except SqlMendError as exc:
            trace.stage_errors.append((STAGE_CORRECTION, str(exc)))
            trace.rounds.append(
                CorrectionRound(feedback=feedback, prompt_sha256=digest, corrected_sql=current_sql)
            )
            return current_sql
        trace.rounds.append(
            CorrectionRound(feedback=feedback, prompt_sha256=digest, corrected_sql=corrected)
        )
        return corrected

    def correct(
        self,
        example: Example,
        trace: CorrectionTrace,
        alignment: Alignment | None,
        parsed_skeleton: Skeleton | None,
    ) -> str:
        catalog = self.catalogs[example.db_id]
        current = trace.initial_sql

        if alignment is not None and current:
            feedback = compare_entities(linked_entities(alignment), current, catalog)
            if feedback is not None:
                current = self._correction_round(example, current, feedback, trace)

        if parsed_skeleton is not None and current:
            feedback = compare_skeletons(current, parsed_skeleton)
            if feedback is not None:
                current = self._correction_round(example, current, feedback, trace)

        if catalog.source_path is not None:
            for _ in range(self.config.max_execution_retries):
                result = execute_sql(current, catalog, timeout=self.config.execution_timeout)
                if result.ok:
                    break
                feedback = Feedback(
                    kind="execution_error",
                    error_message=result.error_message or "execution failed",
                )
                current = self._correction_round(example, current, feedback, trace)

        return current

    # -- whole-example and whole-dataset entry points ----------------------

    def run_example(self, example: Example) -> CorrectionTrace:
        trace = CorrectionTrace(example_id=example.example_id)
        if example.db_id not in self.catalogs:
            trace.stage_errors.append((STAGE_GENERATION, f"unknown db_id {example.db_id!r}"))
            return trace
        trace.initial_sql = self.generate_initial_sql(example, trace)
        alignment = self.link_entities(example, trace.initial_sql, trace)
        trace.alignment = alignment
        parsed = self.parse_question_skeleton(example, trace)
        trace.parsed_skeleton = parsed
        trace.final_sql = self.correct(example, trace, alignment, parsed)
        return trace

    def run(self, examples: list[Example]) -> list[CorrectionTrace]:
        """Run every example; output order always matches input order."""
        if self.config.workers <= 1:
            return [self.run_example(example) for example in examples]
        with ThreadPoolExecutor(max_workers=self.config.workers) as executor:
            return list(executor.map(self.run_example, examples))


def write_traces(traces: list[CorrectionTrace], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for trace in traces:
            handle.write(json.dumps(trace.to_dict(), sort_keys=True) + "\n")


def read_traces(path: str | Path) -> list[dict]:
    return [
        json.loads(line)
        for line in Path(path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
