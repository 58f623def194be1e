"""Command-line surface: ``run`` the pipeline, ``evaluate`` its traces, and
the ``skeleton`` / ``link`` / ``analyze-errors`` debugging commands.

Configuration comes from flags with an optional JSON manifest file
(``--manifest``); explicit flags win over manifest values. API credentials
are read from the environment only (``SQLMEND_API_KEY`` by default), never
from flags. Exit status is nonzero only for infrastructure failures, not for
low accuracy.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .backends import (
    HttpBackend,
    HttpBackendConfig,
    ModelBackend,
    RecordingBackend,
    ReplayBackend,
    ReplayStore,
)
from .datasets import Example, load_alignment_sidecar, load_dataset
from .errors import EmptyInputError, FixtureMissingError, SqlMendError
from .evaluation import ERROR_CATEGORIES, evaluate_run
from .pipeline import (
    CorrectionTrace,
    MendPipeline,
    PipelineConfig,
    read_traces,
    write_traces,
)
from .retrieval import build_index, load_demonstration_pool
from .schema import SchemaCatalog, load_database_dir, load_tables_json
from .sql_analysis import extract_skeleton

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FIXTURE_MISSING = 3


@dataclass
class RunManifest:
    dataset: str = ""
    databases: str = ""
    tables: str = ""
    pool: str = ""
    alignments: str = ""
    pool_alignments: str = ""
    backend: str = "replay"  # http | replay | record
    replay_store: str = ""
    output: str = "runs/latest"
    workers: int = 1
    shots: int = 5
    oracle: str = "none"
    max_execution_retries: int = 1
    demonstration_order: str = "nearest-last"
    temperature: float = 0.0
    max_output_tokens: int = 512
    base_url: str = ""
    model: str = ""

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunManifest":
        manifest = cls()
        if getattr(args, "manifest", None):
            payload = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
            for key, value in payload.items():
                if hasattr(manifest, key):
                    setattr(manifest, key, value)
        for key in vars(manifest):
            value = getattr(args, key, None)
            if value is not None:
                setattr(manifest, key, value)
        return manifest

    def resolved(self) -> dict:
        payload = asdict(self)
        for key in ("dataset", "databases", "tables", "pool", "alignments",
                    "pool_alignments", "replay_store", "output"):
            if payload[key]:
                payload[key] = str(Path(payload[key]).resolve())
        return payload


@dataclass
class LoadedRun:
    manifest: RunManifest
    catalogs: dict[str, SchemaCatalog]
    examples: list[Example] = field(default_factory=list)
    pool: list = field(default_factory=list)
    backend: ModelBackend | None = None


def _load_catalogs(manifest: RunManifest) -> dict[str, SchemaCatalog]:
    if not manifest.tables:
        raise SqlMendError("--tables is required")
    catalogs = {c.db_id: c for c in load_tables_json(manifest.tables)}
    if manifest.databases:
        for db_id, path in load_database_dir(manifest.databases).items():
            if db_id in catalogs:
                catalogs[db_id].source_path = path
    return catalogs


def _load_run(manifest: RunManifest, need_dataset: bool = True) -> LoadedRun:
    catalogs = _load_catalogs(manifest)
    run = LoadedRun(manifest=manifest, catalogs=catalogs)
    if need_dataset:
        if not manifest.dataset:
            raise SqlMendError("--dataset is required")
        run.examples = load_dataset(manifest.dataset)
        if manifest.alignments:
            sidecar = load_alignment_sidecar(
                manifest.alignments, [e.question for e in run.examples]
            )
            for example, alignment in zip(run.examples, sidecar):
                example.gold_alignment = alignment
    if manifest.pool:
        run.pool = load_demonstration_pool(manifest.pool)
        if manifest.pool_alignments:
            sidecar = load_alignment_sidecar(
                manifest.pool_alignments, [d.question for d in run.pool]
            )
            for demo, alignment in zip(run.pool, sidecar):
                demo.alignment = alignment
    return run


def _make_backend(manifest: RunManifest) -> ModelBackend:
    if manifest.backend == "replay":
        if not manifest.replay_store:
            raise SqlMendError("replay backend requires --replay-store")
        return ReplayBackend(ReplayStore(manifest.replay_store))
    if manifest.backend in ("http", "record"):
        if not manifest.base_url or not manifest.model:
            raise SqlMendError(f"{manifest.backend} backend requires --base-url and --model")
        http = HttpBackend(HttpBackendConfig(base_url=manifest.base_url, model=manifest.model))
        if manifest.backend == "record":
            if not manifest.replay_store:
                raise SqlMendError("record backend requires --replay-store")
            return RecordingBackend(http, ReplayStore(manifest.replay_store))
        return http
    raise SqlMendError(f"unknown backend {manifest.backend!r}")


def _pipeline_config(manifest: RunManifest) -> PipelineConfig:
    oracle = manifest.oracle
    if oracle in ("entities", "skeleton", "both"):
        oracle = {"entities": "oracle_entities", "skeleton": "oracle_skeleton",
                  "both": "oracle_both"}[oracle]
    return PipelineConfig(
        shots=manifest.shots,
        max_execution_retries=manifest.max_execution_retries,
        demonstration_order=manifest.demonstration_order,
        oracle_mode=oracle,
        temperature=manifest.temperature,
        max_output_tokens=manifest.max_output_tokens,
        workers=manifest.workers,
    )


def cmd_run(args: argparse.Namespace) -> int:
    manifest = RunManifest.from_args(args)
    run = _load_run(manifest)
    backend = _make_backend(manifest)
    config = _pipeline_config(manifest)
    index = build_index(run.pool) if run.pool else None
    pipeline = MendPipeline(
        catalogs=run.catalogs, pool=run.pool, index=index, backend=backend, config=config
    )
    output_dir = Path(manifest.output)
    output_dir.mkdir(parents=True, exist_ok=True)
    print(f"running {len(run.examples)} examples with backend={manifest.backend}")
    try:
        traces = pipeline.run(run.examples)
    except FixtureMissingError as exc:
        print(f"fixture missing from replay store: {exc.prompt_sha256}", file=sys.stderr)
        return EXIT_FIXTURE_MISSING
    trace_path = output_dir / "traces.jsonl"
    write_traces(traces, trace_path)
    manifest_path = output_dir / "manifest.json"
    manifest_path.write_text(
        json.dumps(manifest.resolved(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    corrected = sum(1 for t in traces if t.rounds)
    print(f"wrote {len(traces)} traces to {trace_path} ({corrected} with correction rounds)")
    return EXIT_OK


def _print_report(report_dict: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(report_dict, indent=2, sort_keys=True))
        return
    def pct(value):
        return "n/a" if value is None else f"{value:.4f}"
    print(f"examples evaluated : {report_dict['record_count']}")
    print(f"EX (initial SQL)   : {pct(report_dict['ex_accuracy_initial'])}")
    print(f"EX (final SQL)     : {pct(report_dict['ex_accuracy'])}")
    print(f"EX delta           : {pct(report_dict['ex_delta'])}")
    print(f"skeleton accuracy  : {pct(report_dict['skeleton_accuracy'])}")
    if report_dict.get("parsed_skeleton_accuracy") is not None:
        print(f"parsed skeletons   : {pct(report_dict['parsed_skeleton_accuracy'])}")
    if report_dict.get("linking_scores"):
        scores = report_dict["linking_scores"]
        print(
            "entity linking     : "
            f"P={scores['precision']:.4f} R={scores['recall']:.4f} F={scores['f1']:.4f}"
        )
    print("error histogram (before -> after correction):")
    histogram = report_dict["error_histogram"]
    for category in ERROR_CATEGORIES:
        before = histogram["initial"][category]
        after = histogram["final"][category]
        print(f"  {category:<16} {before:>4} -> {after:<4}")
    if report_dict.get("per_hardness"):
        print("per-hardness EX (initial/final of count):")
        for label, bucket in sorted(report_dict["per_hardness"].items()):
            print(
                f"  {label:<12} {bucket['ex_initial']}/{bucket['count']}"
                f" -> {bucket['ex_final']}/{bucket['count']}"
            )
    if report_dict.get("invalid_gold"):
        print(f"invalid gold (excluded): {report_dict['invalid_gold']}")


def cmd_evaluate(args: argparse.Namespace) -> int:
    manifest = RunManifest.from_args(args)
    run = _load_run(manifest)
    traces = read_traces(args.traces)
    report = evaluate_run(traces, run.examples, run.catalogs)
    report_dict = report.to_dict()
    output = Path(args.report_out) if args.report_out else Path(args.traces).parent / "report.json"
    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_text(json.dumps(report_dict, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _print_report(report_dict, args.format)
    print(f"report written to {output}")
    return EXIT_OK


def cmd_skeleton(args: argparse.Namespace) -> int:
    skeleton = extract_skeleton(args.sql)
    if args.format == "json":
        print(json.dumps({"sql": args.sql, "skeleton": skeleton.text}, sort_keys=True))
    else:
        print(skeleton.text)
    return EXIT_OK


def cmd_link(args: argparse.Namespace) -> int:
    manifest = RunManifest.from_args(args)
    run = _load_run(manifest, need_dataset=False)
    backend = _make_backend(manifest)
    config = _pipeline_config(manifest)
    index = build_index(run.pool) if run.pool else None
    if config.shots > 0 and index is None:
        config.shots = 0
    pipeline = MendPipeline(
        catalogs=run.catalogs, pool=run.pool, index=index, backend=backend, config=config
    )
    example = Example(example_id="adhoc", question=args.question, db_id=args.db_id)
    trace = CorrectionTrace(example_id="adhoc")
    alignment = pipeline.link_entities(example, args.sql or "", trace)
    if alignment is None:
        print(f"entity linking failed: {trace.stage_errors}", file=sys.stderr)
        return 1
    if args.format == "json":
        print(json.dumps(alignment.to_records(), sort_keys=True))
    else:
        for record in alignment.to_records():
            linked = (
                f"{record['schema']} ({record['type']})" if record["schema"] else "-"
            )
            print(f"{record['token']:<20} {linked}")
    return EXIT_OK


def cmd_analyze_errors(args: argparse.Namespace) -> int:
    manifest = RunManifest.from_args(args)
    run = _load_run(manifest)
    traces = read_traces(args.traces)
    report = evaluate_run(traces, run.examples, run.catalogs)
    histogram = report.error_histogram
    if args.format == "json":
        print(json.dumps(histogram, indent=2, sort_keys=True))
    else:
        print("error histogram (before -> after correction):")
        for category in ERROR_CATEGORIES:
            print(
                f"  {category:<16} {histogram['initial'][category]:>4} -> "
                f"{histogram['final'][category]:<4}"
            )
    return EXIT_OK


def _add_common_data_flags(parser: argparse.ArgumentParser, dataset: bool = True) -> None:
    parser.add_argument("--manifest", help="JSON manifest with default flag values")
    if dataset:
        parser.add_argument("--dataset", help="dataset JSON (question/db_id/query records)")
        parser.add_argument("--alignments", help="gold alignment sidecar for the dataset")
    parser.add_argument("--databases", help="directory of <db_id>/<db_id>.sqlite files")
    parser.add_argument("--tables", help="Spider-style tables.json")
    parser.add_argument("--pool", help="demonstration pool JSON")
    parser.add_argument("--pool-alignments", dest="pool_alignments",
                        help="gold alignment sidecar for the pool")


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=["http", "replay", "record"])
    parser.add_argument("--replay-store", dest="replay_store", help="JSONL fixture store")
    parser.add_argument("--base-url", dest="base_url", help="chat-completions base URL")
    parser.add_argument("--model", help="model name for the HTTP backend")
    parser.add_argument("--shots", type=int, help="demonstrations per few-shot prompt")
    parser.add_argument("--oracle", choices=["none", "entities", "skeleton", "both"],
                        help="replace sub-task outputs with gold data")
    parser.add_argument("--workers", type=int, help="concurrent examples")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sqlmend",
        description="Generate, check, and mend SQL for natural-language questions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="run the full pipeline over a dataset")
    _add_common_data_flags(run_parser)
    _add_backend_flags(run_parser)
    run_parser.add_argument("--output", help="output directory for traces + manifest")
    run_parser.set_defaults(func=cmd_run)

    eval_parser = sub.add_parser("evaluate", help="score a trace file against its dataset")
    eval_parser.add_argument("traces", help="traces.jsonl produced by run")
    _add_common_data_flags(eval_parser)
    eval_parser.add_argument("--report-out", dest="report_out", help="report JSON path")
    eval_parser.add_argument("--format", choices=["text", "json"], default="text")
    eval_parser.set_defaults(func=cmd_evaluate)

    skeleton_parser = sub.add_parser("skeleton", help="print the skeleton of a SQL string")
    skeleton_parser.add_argument("sql")
    skeleton_parser.add_argument("--format", choices=["text", "json"], default="text")
    skeleton_parser.set_defaults(func=cmd_skeleton)

    link_parser = sub.add_parser("link", help="run entity linking for one question")
    link_parser.add_argument("question")
    link_parser.add_argument("db_id")
    link_parser.add_argument("--sql", default="", help="initial SQL shown to the linker")
    _add_common_data_flags(link_parser, dataset=False)
    _add_backend_flags(link_parser)
    link_parser.add_argument("--format", choices=["text", "json"], default="text")
    link_parser.set_defaults(func=cmd_link)

    analyze_parser = sub.add_parser(
        "analyze-errors", help="print the error histogram for a trace file"
    )
    analyze_parser.add_argument("traces")
    _add_common_data_flags(analyze_parser)
    analyze_parser.add_argument("--format", choices=["text", "json"], default="text")
    analyze_parser.set_defaults(func=cmd_analyze_errors)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (EmptyInputError, OSError, SqlMendError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
