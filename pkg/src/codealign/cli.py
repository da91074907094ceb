"""Command-line interface.

Providers default to the offline mocks; pass ``--provider http`` with a
config file (key=value lines) to use real backends. API keys are read from
the environment variable named in the config, never from the config itself.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .analysis import (
    extrapolation_analysis,
    fit_exp_curve,
    learning_curve,
    random_baseline,
)
from .annotation import Annotation, Codebook, CodedSegment, Span, import_corpus
from .coder import HttpChatProvider, MockChatProvider, group_codes_into_themes
from .embeddings import CachedEmbeddingProvider, HttpEmbeddingProvider, MockEmbeddingProvider
from .errors import CodealignError
from .metrics import alignment_report, rank_texts
from .project import ProjectService


def parse_config(path: str | Path) -> dict[str, str]:
    """Parse a key=value config file; '#' starts a comment."""
    config: dict[str, str] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line (expected key=value): {raw!r}")
        key, value = line.split("=", 1)
        config[key.strip()] = value.strip()
    return config


def build_providers(provider: str, config: dict[str, str]):
    if provider == "mock":
        chat = MockChatProvider()
        embed = MockEmbeddingProvider()
    elif provider == "http":
        chat = HttpChatProvider(
            base_url=config.get("chat_base_url", "https://api.openai.com/v1"),
            model=config.get("chat_model", "gpt-4o"),
            api_key_env=config.get("chat_api_key_env", "OPENAI_API_KEY"),
        )
        embed = HttpEmbeddingProvider(
            base_url=config.get("embedding_base_url", "https://api.openai.com/v1"),
            model=config.get("embedding_model", "text-embedding-3-large"),
            api_key_env=config.get("embedding_api_key_env", "OPENAI_API_KEY"),
        )
    else:
        raise ValueError(f"unknown provider {provider!r}")
    cache_path = config.get("cache_path")
    if cache_path:
        embed = CachedEmbeddingProvider(embed, cache_path)
    return chat, embed


def load_layer(path: str | Path, annotator: str) -> dict[str, Annotation]:
    """Annotation layer JSONL: one {"text_id", "segments": [...]} per line."""
    layer: dict[str, Annotation] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        segments = tuple(
            CodedSegment(Span(s["start"], s["end"]), tuple(s["codes"]))
            for s in obj["segments"]
        )
        layer[obj["text_id"]] = Annotation.from_segments(
            obj["text_id"], annotator, segments
        )
    return layer


def _service(args) -> ProjectService:
    config = parse_config(args.config) if getattr(args, "config", None) else {}
    chat, embed = build_providers(getattr(args, "provider", "mock"), config)
    return ProjectService(args.project_dir, chat_provider=chat, embedding_provider=embed)


def _project_inputs(args):
    service = _service(args)
    state = service.get_state(args.project_id)
    return service, state, state.corpus, state.human_layer


def cmd_import(args) -> int:
    service = _service(args)
    project_id = service.create_project(
        Path(args.corpus), project_id=args.project_id, corpus_format=args.format
    )
    state = service.get_state(project_id)
    print(f"created project {project_id} with {len(state.corpus)} texts")
    return 0


def cmd_code(args) -> int:
    service = _service(args)
    if args.examples:
        service.set_examples(args.project_id, args.examples.split(","))
    run_id = service.start_run(args.project_id, args.scope)
    status = service.wait_for_run(args.project_id, run_id, timeout=args.timeout)
    print(f"{run_id}: {status['status']} ({status['n_done']}/{status['n_targets']} texts)")
    if status["status"] == "complete":
        state = service.get_state(args.project_id)
        record = state.runs[run_id]
        if record.report is not None:
            print(f"mean IoU {record.report.mean_iou:.4f}  mean MHD {record.report.mean_mhd:.4f}")
    return 0 if status["status"] == "complete" else 1


def cmd_eval(args) -> int:
    config = parse_config(args.config) if args.config else {}
    _, embed = build_providers(args.provider, config)
    texts = {t.id: t for t in import_corpus(args.corpus, args.format)}
    human = load_layer(args.human, "human")
    llm = load_layer(args.llm, "llm")
    ids = [tid for tid in texts if tid in human and tid in llm]
    report = alignment_report(human, llm, texts, ids, embed)
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
    if args.json:
        Path(args.json).write_text(json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")
    print(f"texts evaluated: {len(report.per_text)}")
    if report.mean_iou is None:
        print("no texts present in corpus, human layer, and llm layer at once")
        return 1
    print(f"mean IoU {report.mean_iou:.4f}  mean MHD {report.mean_mhd:.4f}")
    for tid in rank_texts(report, args.sort):
        row = next(r for r in report.per_text if r.text_id == tid)
        mhd_str = f"{row.mhd:.4f}" if row.mhd is not None else "n/a"
        print(f"  {tid}\tIoU {row.iou:.4f}\tMHD {mhd_str}")
    return 0


def cmd_curve(args) -> int:
    service, state, corpus, human = _project_inputs(args)
    sizes = [int(s) for s in args.sizes.split(",")]
    points = learning_curve(
        corpus, human, sizes, service.chat_provider, service.embedding_provider
    )
    rows = "n_examples,mean_iou,mean_mhd\n" + "".join(
        f"{p.n_examples},{p.mean_iou!r},{p.mean_mhd!r}\n" for p in points
    )
    print(rows, end="")
    fit = None
    if args.fit and len(points) >= 3:
        fit = fit_exp_curve([(p.n_examples, p.mean_iou) for p in points])
        print(
            f"IoU fit: a={fit.a:.4f} b={fit.b:.4f} c={fit.c:.4f} sse={fit.residual_sse:.6g}"
        )
    if args.csv:
        Path(args.csv).write_text(rows, encoding="utf-8")
    if args.json:
        payload = {
            "points": [
                {"n_examples": p.n_examples, "mean_iou": p.mean_iou, "mean_mhd": p.mean_mhd}
                for p in points
            ],
            "iou_fit": None
            if fit is None
            else {"a": fit.a, "b": fit.b, "c": fit.c, "residual_sse": fit.residual_sse},
        }
        Path(args.json).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    if args.plot:
        from .plotting import save_line_chart

        save_line_chart(
            args.plot,
            [p.n_examples for p in points],
            {"mean IoU": [p.mean_iou for p in points], "mean MHD": [p.mean_mhd for p in points]},
            xlabel="few-shot examples",
            ylabel="metric",
            title="learning curve",
        )
        print(f"wrote {args.plot}")
    return 0


def cmd_extrapolate(args) -> int:
    service, state, corpus, human = _project_inputs(args)
    result = extrapolation_analysis(
        corpus,
        human,
        service.chat_provider,
        service.embedding_provider,
        k=args.k,
        seed=args.seed,
    )
    rows = "example_set_mhd,output_mhd\n" + "".join(f"{x!r},{y!r}\n" for x, y in result.points)
    print(rows, end="")
    r = "undefined" if result.pearson_r is None else f"{result.pearson_r:.4f}"
    print(f"pearson_r: {r}  (taught from cluster {result.teaching_cluster}, "
          f"{len(result.example_ids)} examples)")
    if args.csv:
        Path(args.csv).write_text(rows, encoding="utf-8")
    if args.json:
        payload = {
            "points": [{"example_set_mhd": x, "output_mhd": y} for x, y in result.points],
            "pearson_r": result.pearson_r,
            "teaching_cluster": result.teaching_cluster,
            "example_ids": list(result.example_ids),
        }
        Path(args.json).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    if args.plot:
        from .plotting import save_scatter_chart

        save_scatter_chart(
            args.plot,
            list(result.points),
            xlabel="MHD(human codes, example codes)",
            ylabel="MHD(human codes, LLM codes)",
            title="extrapolation beyond the example set",
            identity_line=True,
        )
        print(f"wrote {args.plot}")
    return 0


def cmd_baseline(args) -> int:
    service, state, corpus, human = _project_inputs(args)
    result = random_baseline(
        corpus,
        human,
        args.n,
        service.chat_provider,
        service.embedding_provider,
        trials=args.trials,
        seed=args.seed,
    )
    for i, report in enumerate(result.trial_reports):
        print(f"trial {i}: mean IoU {report.mean_iou:.4f}  mean MHD {report.mean_mhd:.4f}")
    print(f"averaged over {args.trials} trials: "
          f"mean IoU {result.mean_iou:.4f}  mean MHD {result.mean_mhd:.4f}")
    if args.json:
        payload = {
            "trials": [
                {
                    "example_ids": list(ids),
                    "mean_iou": report.mean_iou,
                    "mean_mhd": report.mean_mhd,
                }
                for ids, report in zip(result.trial_example_ids, result.trial_reports)
            ],
            "mean_iou": result.mean_iou,
            "mean_mhd": result.mean_mhd,
        }
        Path(args.json).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_themes(args) -> int:
    service, state, corpus, human = _project_inputs(args)
    if args.run:
        record = state.runs.get(args.run)
        if record is None:
            print(f"no run {args.run!r}", file=sys.stderr)
            return 1
        codebook = Codebook(record.codebook_entries)
    else:
        codebook = Codebook()
        for tid in state.annotated_ids():
            for code in human[tid].code_set():
                if code not in codebook:
                    codebook.add(code, code)
    themes = group_codes_into_themes(
        codebook, service.chat_provider, service.embedding_provider, args.k, seed=args.seed
    )
    for theme in themes:
        print(f"{theme.label}:")
        for code in theme.codes:
            print(f"  - {code}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    service = _service(args)
    app = create_app(service, frontend_dir=args.frontend)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="codealign")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, project: bool = True):
        p.add_argument("--provider", choices=("mock", "http"), default="mock")
        p.add_argument("--config", help="key=value config file")
        if project:
            p.add_argument("--project-dir", default="projects")
            p.add_argument("--project-id", required=True)

    p = sub.add_parser("import", help="create a project from a corpus file")
    p.add_argument("corpus")
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    common(p)
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("code", help="run the coder over a scope")
    common(p)
    p.add_argument("--scope", choices=("validation", "remainder", "test"), default="validation")
    p.add_argument("--examples", help="comma-separated example text ids")
    p.add_argument("--timeout", type=float, default=600.0)
    p.set_defaults(func=cmd_code)

    p = sub.add_parser("eval", help="metrics for two annotation layer files")
    p.add_argument("corpus")
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    p.add_argument("--human", required=True)
    p.add_argument("--llm", required=True)
    p.add_argument("--sort", default="iou_asc")
    p.add_argument("--csv", help="write per-text rows to this CSV file")
    p.add_argument("--json", help="write the full report to this JSON file")
    common(p, project=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("curve", help="learning curve over example-set sizes")
    common(p)
    p.add_argument("--sizes", default="2,4,8")
    p.add_argument("--fit", action="store_true")
    p.add_argument("--csv", help="write curve points to this CSV file")
    p.add_argument("--json", help="write points and fit params to this JSON file")
    p.add_argument("--plot", help="write an SVG line chart here")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("extrapolate", help="single-cluster teaching analysis")
    common(p)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="write correlation points to this CSV file")
    p.add_argument("--json", help="write points and Pearson r to this JSON file")
    p.add_argument("--plot", help="write an SVG scatter chart here")
    p.set_defaults(func=cmd_extrapolate)

    p = sub.add_parser("baseline", help="random example-selection baseline")
    common(p)
    p.add_argument("--n", type=int, required=True, help="examples per trial")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", help="write per-trial and averaged results to this JSON file")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("themes", help="group codes into themes")
    common(p)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--run", help="use this run's codebook instead of human codes")
    p.set_defaults(func=cmd_themes)

    p = sub.add_parser("serve", help="start the HTTP API / workbench server")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--frontend", default="frontend/dist", help="built SPA directory")
    p.add_argument("--provider", choices=("mock", "http"), default="mock")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--project-dir", default="projects")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CodealignError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
