"""Operator CLI: ingest, ask, eval, judge, serve.

Every command is a thin adapter over the same engine the HTTP service
uses. Exit codes: 0 success, 1 runtime or provider failure, 2 usage,
config or schema error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import build_backends, build_deps, build_embedder, build_gateway, load_config
from .corpus import chunk_document, ingest_report, record_body_text
from .errors import (
    AuraError,
    DecodeError,
    DuplicateId,
    EmptyDocument,
    EmptyTestSet,
    EmptyText,
    IndexIoError,
    InsufficientGenerations,
    InvalidConfig,
    ManifestVersionMismatch,
    StageError,
    UnknownActor,
)
from .evaluation import ActorAliasTable, judge_many, run_eval
from .extraction import ThreatEntities
from .session import SessionStore, run_turn
from .vector_store import VectorIndex, build_index

_USAGE_ERRORS = (
    InvalidConfig,
    DecodeError,
    DuplicateId,
    EmptyDocument,
    EmptyText,
    EmptyTestSet,
    InsufficientGenerations,
    IndexIoError,
    ManifestVersionMismatch,
    UnknownActor,
)

_INGEST_SUFFIXES = {".txt": "plain_text", ".md": "plain_text", ".json": "structured_record"}


def _load_index(config) -> VectorIndex:
    index_dir = config.resolve(config.index_dir)
    if not (index_dir / "manifest.json").is_file():
        raise InvalidConfig(
            f"index not built at {index_dir}; run 'aura ingest' first"
        )
    return VectorIndex.restore(index_dir)


def _print_result(payload: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(payload, indent=2, sort_keys=True))
        return
    result = payload["result"]
    secondary = result["secondary_actor"] or "-"
    nation_secondary = result["nation_secondary"] or "-"
    print(f"primary:   {result['primary_actor']} ({result['nation']})")
    print(f"secondary: {secondary} ({nation_secondary})")
    print(f"low confidence: {str(result['low_confidence']).lower()}")
    print()
    print("justification:")
    print(result["justification"])


def cmd_ingest(args) -> int:
    config = load_config(args.config)
    chunk_size = args.chunk_size or config.chunk_size
    overlap = args.overlap if args.overlap is not None else config.overlap
    if overlap >= chunk_size:
        raise InvalidConfig(
            f"overlap must be < chunk_size, got {overlap} >= {chunk_size}"
        )
    source_dir = Path(args.dir)
    if not source_dir.is_dir():
        raise InvalidConfig(f"not a directory: {source_dir}")
    index_dir = Path(args.out) if args.out else config.resolve(config.index_dir)

    if (index_dir / "manifest.json").is_file():
        index = VectorIndex.restore(index_dir)
    else:
        index = VectorIndex(dims=config.dims, embedder_name=config.embedder)
    embedder = build_embedder(
        config, build_backends(config) if config.embedder == "remote" else None
    )

    files = sorted(
        p for p in source_dir.iterdir() if p.suffix.lower() in _INGEST_SUFFIXES
    )
    if not files:
        raise InvalidConfig(f"no ingestable files (.txt/.md/.json) in {source_dir}")

    reports = []
    failures = []
    for path in files:
        try:
            reports.append(
                ingest_report(
                    path.read_bytes(),
                    _INGEST_SUFFIXES[path.suffix.lower()],
                    {"title": path.stem, "source": path.name},
                )
            )
        except AuraError as exc:
            failures.append(f"{path.name}: {exc}")
    if failures:
        for line in failures:
            print(f"error: {line}", file=sys.stderr)
        return 2

    known = index.report_ids()
    new_reports = [r for r in reports if r.id not in known]
    chunks = []
    for report in new_reports:
        chunks.extend(chunk_document(report, chunk_size, overlap))
    build_index(chunks, embedder, index=index)
    index.snapshot(index_dir)

    summary = {
        "files": len(files),
        "new": len(new_reports),
        "skipped": len(reports) - len(new_reports),
        "chunks_indexed": len(chunks),
        "index_dir": str(index_dir),
        "reports": [{"id": r.id, "title": r.title} for r in new_reports],
    }
    if args.format == "json":
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        print(
            f"{summary['new']} new, {summary['skipped']} skipped, "
            f"{summary['chunks_indexed']} chunks indexed -> {index_dir}"
        )
    return 0


def cmd_ask(args) -> int:
    if not args.query and not args.record:
        raise InvalidConfig("ask needs --query and/or --record")
    config = load_config(args.config)
    index = _load_index(config)
    deps = build_deps(config, index)
    store = SessionStore(config.resolve(config.sessions_dir))

    entities = None
    query = args.query
    if args.record:
        record_path = Path(args.record)
        if not record_path.is_file():
            raise InvalidConfig(f"record file not found: {record_path}")
        try:
            record = json.loads(record_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DecodeError(f"record file is not valid JSON: {exc}") from exc
        entities = ThreatEntities.from_record(record)
        if not query:
            query = record_body_text(record)

    memory = store.load(args.session)
    result, new_memory = run_turn(memory, query, deps, entities=entities)
    turn = new_memory.turns[-1]
    store.append_turn(args.session, turn)

    payload = {
        "session_id": args.session,
        "turn_index": turn.turn_index,
        "rewritten": turn.rewritten,
        "result": result.to_payload(),
        "stage_trace": [event.to_payload() for event in turn.stage_trace],
    }
    _print_result(payload, args.format)
    return 0


def cmd_eval(args) -> int:
    config = load_config(args.config)
    index = _load_index(config)
    deps = build_deps(config, index)

    test_path = Path(args.test_set)
    if not test_path.is_file():
        raise InvalidConfig(f"test set not found: {test_path}")
    try:
        records = json.loads(test_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DecodeError(f"test set is not valid JSON: {exc}") from exc
    if not isinstance(records, list):
        raise InvalidConfig("test set must be a JSON array of records")

    aliases = ActorAliasTable.from_file(args.aliases) if args.aliases else None
    report = run_eval(
        records,
        deps,
        n_generations=args.n,
        pass_rank=args.pass_rank,
        pass_k=args.pass_k,
        aliases=aliases,
    )

    stem = Path(args.out) if args.out else test_path.with_suffix("")
    json_path = stem.with_name(stem.name + ".report.json")
    table_path = stem.with_name(stem.name + ".report.txt")
    csv_path = stem.with_name(stem.name + ".report.csv")
    json_path.write_text(report.to_json() + "\n", encoding="utf-8")
    table_path.write_text(report.to_table(), encoding="utf-8")
    csv_path.write_text(report.to_csv(), encoding="utf-8")

    if args.format == "json":
        print(report.to_json())
    else:
        print(report.to_table(), end="")
    print(f"report written to {json_path}", file=sys.stderr)
    return 0


def cmd_judge(args) -> int:
    config = load_config(args.config)
    gateway = build_gateway(config)
    backend = gateway.backend_for("judge")

    input_path = Path(args.input)
    if not input_path.is_file():
        raise InvalidConfig(f"input file not found: {input_path}")
    try:
        payload = json.loads(input_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DecodeError(f"input is not valid JSON: {exc}") from exc

    if isinstance(payload, list):
        texts = payload
    elif isinstance(payload, dict) and "details" in payload:
        texts = [d.get("justification") for d in payload["details"] if d.get("justification")]
    elif isinstance(payload, dict) and "justifications" in payload:
        texts = payload["justifications"]
    else:
        raise InvalidConfig(
            "input must be a JSON array of justifications, a MetricReport, "
            "or {'justifications': [...]}"
        )
    if not texts or any(not isinstance(t, str) for t in texts):
        raise InvalidConfig("no justification strings found in input")

    scores = judge_many(texts, backend, audit=gateway.audit, retry=gateway.retry)
    rendered = json.dumps(scores, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(rendered + "\n", encoding="utf-8")
        print(f"scores written to {args.out}", file=sys.stderr)
    print(rendered)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = load_config(args.config)
    static_dir = args.static
    if static_dir is None and Path("frontend/dist").is_dir():
        static_dir = "frontend/dist"
    app = create_app(config=config, static_dir=static_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aura",
        description="Threat attribution engine: retrieval-augmented actor "
        "attribution with justifications.",
    )
    parser.add_argument("--config", help="config file (default: $AURA_CONFIG)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="ingest a directory of reports and build the index")
    p.add_argument("--dir", required=True, help="directory of .txt/.md/.json reports")
    p.add_argument("--chunk-size", type=int, default=None)
    p.add_argument("--overlap", type=int, default=None)
    p.add_argument("--out", help="index directory (default: config index_dir)")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("ask", help="run one attribution turn")
    p.add_argument("--session", default="default", help="session id (default: 'default')")
    p.add_argument("--query", help="analyst query text")
    p.add_argument("--record", help="structured record JSON file (skips LLM extraction)")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(func=cmd_ask)

    p = sub.add_parser("eval", help="evaluate against a held-out test set")
    p.add_argument("--test-set", required=True, help="JSON array of structured test records")
    p.add_argument("--n", type=int, default=3, help="generations per record (default 3)")
    p.add_argument("--pass-rank", type=int, default=1,
                   help="rank within a generation that counts as a pass (default 1)")
    p.add_argument("--pass-k", type=int, default=None,
                   help="generations considered by pass@k (default: --n)")
    p.add_argument("--aliases", help="custom actor alias table JSON")
    p.add_argument("--out", help="output path stem (default: beside the test set)")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("judge", help="score justifications with the LLM judge")
    p.add_argument("--input", required=True,
                   help="JSON array of justifications or an eval report JSON")
    p.add_argument("--out", help="write scores JSON here")
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--static", help="static UI directory (default: frontend/dist if present)")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error at stage '{exc.stage}': {exc.cause}", file=sys.stderr)
        return 1
    except AuraError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
