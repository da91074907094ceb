"""Project lifecycle: persistence, annotation editing, example curation, runs.

A project lives in its own directory as one canonical JSON document plus an
append-only JSONL change log and one JSONL log per coding run. Writes are
atomic (write-temp-then-rename), so a killed process never leaves a
half-written project behind. All mutations to one project are serialized
through a per-project lock; coding runs execute on a background thread, one
active run per project.
"""

from __future__ import annotations

import io
import json
import re
import threading
import time
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .annotation import (
    ANNOTATOR_HUMAN,
    ANNOTATOR_LLM,
    Annotation,
    Codebook,
    CodedSegment,
    SourceText,
    Span,
    import_corpus,
    serialize_annotated,
)
from .analysis import DataSplit
from .coder import ChatProvider, MockChatProvider, PromptSpec, code_inductively
from .embeddings import EmbeddingProvider, MockEmbeddingProvider
from .errors import (
    DuplicateId,
    InvalidSpan,
    NoExamples,
    RunAborted,
    RunIncomplete,
    RunInProgress,
    TestSetViolation,
    UnannotatedExample,
    UnknownProject,
    UnknownRun,
    UnknownText,
)
from .metrics import AlignmentReport, alignment_report, rank_texts

PROJECT_FILE = "project.json"
CHANGELOG_FILE = "changelog.jsonl"
RUNS_DIR = "runs"

SCOPE_VALIDATION = "validation"
SCOPE_REMAINDER = "remainder"
SCOPE_TEST = "test"
SCOPES = (SCOPE_VALIDATION, SCOPE_REMAINDER, SCOPE_TEST)

STATUS_RUNNING = "running"
STATUS_COMPLETE = "complete"
STATUS_FAILED = "failed"


def canonical_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=2) + "\n"


def _text_to_json(t: SourceText) -> dict:
    return {"id": t.id, "body": t.body, "context": list(t.context), "created_order": t.created_order}


def _text_from_json(obj: dict) -> SourceText:
    return SourceText(
        id=obj["id"],
        body=obj["body"],
        context=tuple(obj["context"]),
        created_order=obj["created_order"],
    )


def _annotation_to_json(a: Annotation) -> dict:
    return {
        "annotator": a.annotator,
        "segments": [
            {"start": s.span.start, "end": s.span.end, "codes": list(s.codes)} for s in a.segments
        ],
    }


def _annotation_from_json(text_id: str, obj: dict) -> Annotation:
    segments = tuple(
        CodedSegment(Span(s["start"], s["end"]), tuple(s["codes"])) for s in obj["segments"]
    )
    return Annotation(text_id=text_id, annotator=obj["annotator"], segments=segments)


@dataclass
class RunRecord:
    run_id: str
    scope: str
    status: str
    target_ids: tuple[str, ...] = ()
    example_ids: tuple[str, ...] = ()
    instruction_snapshot: tuple[str, ...] = ()
    llm_layer: dict[str, Annotation] = field(default_factory=dict)
    codebook_entries: tuple[tuple[str, str], ...] = ()
    outcomes: list[dict] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    report: AlignmentReport | None = None
    error: str = ""

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id,
            "scope": self.scope,
            "status": self.status,
            "target_ids": list(self.target_ids),
            "example_ids": list(self.example_ids),
            "instruction_snapshot": list(self.instruction_snapshot),
            "llm_layer": {tid: _annotation_to_json(a) for tid, a in self.llm_layer.items()},
            "codebook": [list(e) for e in self.codebook_entries],
            "outcomes": self.outcomes,
            "provenance": self.provenance,
            "warnings": self.warnings,
            "report": self.report.to_json() if self.report is not None else None,
            "error": self.error,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RunRecord":
        return cls(
            run_id=obj["run_id"],
            scope=obj["scope"],
            status=obj["status"],
            target_ids=tuple(obj["target_ids"]),
            example_ids=tuple(obj["example_ids"]),
            instruction_snapshot=tuple(obj["instruction_snapshot"]),
            llm_layer={
                tid: _annotation_from_json(tid, a) for tid, a in obj["llm_layer"].items()
            },
            codebook_entries=tuple((e[0], e[1]) for e in obj["codebook"]),
            outcomes=list(obj["outcomes"]),
            provenance=dict(obj["provenance"]),
            warnings=list(obj["warnings"]),
            report=AlignmentReport.from_json(obj["report"]) if obj["report"] else None,
            error=obj.get("error", ""),
        )


@dataclass
class ProjectState:
    project_id: str
    corpus: list[SourceText]
    human_layer: dict[str, Annotation] = field(default_factory=dict)
    runs: dict[str, RunRecord] = field(default_factory=dict)
    split: DataSplit = field(default_factory=DataSplit)
    custom_instructions: tuple[str, ...] = ()
    iteration_history: list[dict] = field(default_factory=list)
    run_counter: int = 0

    def text(self, text_id: str) -> SourceText:
        for t in self.corpus:
            if t.id == text_id:
                return t
        raise UnknownText(f"no text {text_id!r} in project {self.project_id!r}")

    def texts_by_id(self) -> dict[str, SourceText]:
        return {t.id: t for t in self.corpus}

    def annotated_ids(self) -> list[str]:
        ordered = sorted(self.corpus, key=lambda t: (t.created_order, t.id))
        return [t.id for t in ordered if t.id in self.human_layer]

    def to_json(self) -> dict:
        return {
            "version": 1,
            "project_id": self.project_id,
            "corpus": [_text_to_json(t) for t in self.corpus],
            "human_layer": {
                tid: _annotation_to_json(a) for tid, a in self.human_layer.items()
            },
            "runs": {rid: r.to_json() for rid, r in self.runs.items()},
            "split": {
                "example_ids": list(self.split.example_ids),
                "validation_ids": list(self.split.validation_ids),
                "test_ids": list(self.split.test_ids),
                "test_frozen": self.split.test_frozen,
            },
            "custom_instructions": list(self.custom_instructions),
            "iteration_history": self.iteration_history,
            "run_counter": self.run_counter,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ProjectState":
        split = obj["split"]
        return cls(
            project_id=obj["project_id"],
            corpus=[_text_from_json(t) for t in obj["corpus"]],
            human_layer={
                tid: _annotation_from_json(tid, a) for tid, a in obj["human_layer"].items()
            },
            runs={rid: RunRecord.from_json(r) for rid, r in obj["runs"].items()},
            split=DataSplit(
                example_ids=tuple(split["example_ids"]),
                validation_ids=tuple(split["validation_ids"]),
                test_ids=tuple(split["test_ids"]),
                test_frozen=split["test_frozen"],
            ),
            custom_instructions=tuple(obj["custom_instructions"]),
            iteration_history=list(obj["iteration_history"]),
            run_counter=obj["run_counter"],
        )


def _atomic_write(path: Path, content: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(content, encoding="utf-8")
    tmp.replace(path)


class ProjectStore:
    """Directory-per-project persistence with atomic writes."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def project_dir(self, project_id: str) -> Path:
        return self.root / project_id

    def exists(self, project_id: str) -> bool:
        return (self.project_dir(project_id) / PROJECT_FILE).exists()

    def list_projects(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if (p / PROJECT_FILE).exists())

    def save(self, state: ProjectState) -> None:
        d = self.project_dir(state.project_id)
        d.mkdir(parents=True, exist_ok=True)
        _atomic_write(d / PROJECT_FILE, canonical_dumps(state.to_json()))

    def load(self, project_id: str) -> ProjectState:
        path = self.project_dir(project_id) / PROJECT_FILE
        if not path.exists():
            raise UnknownProject(f"no project {project_id!r} under {self.root}")
        return ProjectState.from_json(json.loads(path.read_text(encoding="utf-8")))

    def append_changelog(self, project_id: str, entry: dict) -> None:
        d = self.project_dir(project_id)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / CHANGELOG_FILE, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")

    def read_changelog(self, project_id: str) -> list[dict]:
        path = self.project_dir(project_id) / CHANGELOG_FILE
        if not path.exists():
            return []
        return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line]

    def write_run_log(self, project_id: str, run_id: str, records: Sequence[dict]) -> None:
        d = self.project_dir(project_id) / RUNS_DIR
        d.mkdir(parents=True, exist_ok=True)
        lines = "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records)
        _atomic_write(d / f"{run_id}.jsonl", lines)

    def read_run_log(self, project_id: str, run_id: str) -> list[dict]:
        path = self.project_dir(project_id) / RUNS_DIR / f"{run_id}.jsonl"
        if not path.exists():
            return []
        return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line]


def _recomputed_validation(state: ProjectState) -> tuple[str, ...]:
    excluded = set(state.split.example_ids) | set(state.split.test_ids)
    return tuple(tid for tid in state.annotated_ids() if tid not in excluded)


class ProjectService:
    """The backend the UI and scripts drive."""

    def __init__(
        self,
        root: str | Path,
        chat_provider: ChatProvider | None = None,
        embedding_provider: EmbeddingProvider | None = None,
        min_annotated: int = 20,
    ):
        self.store = ProjectStore(root)
        self.chat_provider = chat_provider or MockChatProvider()
        self.embedding_provider = embedding_provider or MockEmbeddingProvider()
        # runs below this many annotated texts get a warning, never a refusal
        self.min_annotated = min_annotated
        self._locks: dict[str, threading.RLock] = {}
        self._locks_guard = threading.Lock()
        self._active_runs: dict[str, str] = {}

    def _lock(self, project_id: str) -> threading.RLock:
        with self._locks_guard:
            if project_id not in self._locks:
                self._locks[project_id] = threading.RLock()
            return self._locks[project_id]

    def _log(self, project_id: str, actor: str, operation: str, payload: dict) -> None:
        self.store.append_changelog(
            project_id,
            {
                "timestamp": time.time(),
                "actor": actor,
                "operation": operation,
                "payload": payload,
            },
        )

    # -- lifecycle -------------------------------------------------------

    def create_project(
        self,
        corpus: Sequence[SourceText] | str | Path,
        project_id: str | None = None,
        corpus_format: str = "jsonl",
    ) -> str:
        if isinstance(corpus, (str, Path)):
            texts = import_corpus(corpus, corpus_format)
        else:
            texts = list(corpus)
        ids = [t.id for t in texts]
        if len(set(ids)) != len(ids):
            raise DuplicateId("corpus contains duplicate text ids")
        if project_id is None:
            project_id = f"project-{int(time.time() * 1000):x}"
        state = ProjectState(project_id=project_id, corpus=texts)
        with self._lock(project_id):
            self.store.save(state)
            self._log(project_id, "system", "create_project", {"n_texts": len(texts)})
        return project_id

    def get_state(self, project_id: str) -> ProjectState:
        return self.store.load(project_id)

    # -- annotation editing ----------------------------------------------

    def upsert_human_annotation(
        self, project_id: str, text_id: str, segments: Sequence[CodedSegment]
    ) -> None:
        with self._lock(project_id):
            state = self.store.load(project_id)
            text = state.text(text_id)
            for seg in segments:
                if seg.span.end > len(text.body):
                    raise InvalidSpan(
                        f"span {seg.span} exceeds text {text_id!r} length {len(text.body)}"
                    )
            annotation = Annotation(
                text_id=text_id, annotator=ANNOTATOR_HUMAN, segments=tuple(
                    sorted(segments, key=lambda s: (s.span.start, s.span.end))
                )
            )
            state.human_layer[text_id] = annotation
            state.split = _with_validation(state)
            self.store.save(state)
            self._log(
                project_id,
                "human",
                "upsert_human_annotation",
                {"text_id": text_id, "annotation": _annotation_to_json(annotation)},
            )

    # -- example curation --------------------------------------------------

    def set_examples(self, project_id: str, text_ids: Sequence[str]) -> None:
        with self._lock(project_id):
            state = self.store.load(project_id)
            known = state.texts_by_id()
            for tid in text_ids:
                if tid not in known:
                    raise UnknownText(f"no text {tid!r}")
                if tid not in state.human_layer:
                    raise UnannotatedExample(f"text {tid!r} has no human annotation")
            state.split = state.split.with_examples(tuple(text_ids))
            state.split = _with_validation(state)
            self.store.save(state)
            self._log(project_id, "human", "set_examples", {"text_ids": list(text_ids)})

    def set_instructions(self, project_id: str, lines: Sequence[str]) -> None:
        with self._lock(project_id):
            state = self.store.load(project_id)
            state.custom_instructions = tuple(lines)
            self.store.save(state)
            self._log(project_id, "human", "set_instructions", {"lines": list(lines)})

    def set_test_set(self, project_id: str, text_ids: Sequence[str]) -> None:
        with self._lock(project_id):
            state = self.store.load(project_id)
            known = state.texts_by_id()
            for tid in text_ids:
                if tid not in known:
                    raise UnknownText(f"no text {tid!r}")
            state.split = state.split.with_test(tuple(text_ids))
            state.split = _with_validation(state)
            self.store.save(state)
            self._log(project_id, "human", "set_test_set", {"text_ids": list(text_ids)})

    # -- runs ---------------------------------------------------------------

    def _scope_targets(self, state: ProjectState, scope: str) -> list[str]:
        if scope == SCOPE_VALIDATION:
            return list(state.split.validation_ids)
        if scope == SCOPE_TEST:
            return list(state.split.test_ids)
        if scope == SCOPE_REMAINDER:
            ordered = sorted(state.corpus, key=lambda t: (t.created_order, t.id))
            return [t.id for t in ordered if t.id not in state.human_layer]
        raise ValueError(f"unknown scope {scope!r}; expected one of {SCOPES}")

    def start_run(self, project_id: str, scope: str = SCOPE_VALIDATION) -> str:
        """Launch an asynchronous coding run over the scoped texts.

        Returns the run id immediately; poll run_status or wait_for_run."""
        with self._lock(project_id):
            state = self.store.load(project_id)
            if project_id in self._active_runs:
                raise RunInProgress(
                    f"run {self._active_runs[project_id]!r} is active on {project_id!r}"
                )
            if not state.split.example_ids:
                raise NoExamples("select at least one example before starting a run")
            target_ids = self._scope_targets(state, scope)
            state.run_counter += 1
            run_id = f"run-{state.run_counter:04d}"
            record = RunRecord(
                run_id=run_id,
                scope=scope,
                status=STATUS_RUNNING,
                target_ids=tuple(target_ids),
                example_ids=state.split.example_ids,
                instruction_snapshot=state.custom_instructions,
            )
            n_annotated = len(state.annotated_ids())
            if n_annotated < self.min_annotated:
                record.warnings.append(
                    f"only {n_annotated} texts are manually annotated "
                    f"(below the suggested minimum of {self.min_annotated}); "
                    "metrics may be unstable"
                )
            if not target_ids:
                record.status = STATUS_COMPLETE
                record.warnings.append(f"scope {scope!r} contains no texts; nothing to code")
                state.runs[run_id] = record
                self.store.save(state)
                self._log(project_id, "system", "run_complete", {"run_id": run_id, "empty": True})
                return run_id
            state.runs[run_id] = record
            self._active_runs[project_id] = run_id
            self.store.save(state)
            self._log(
                project_id,
                "system",
                "start_run",
                {"run_id": run_id, "scope": scope, "n_texts": len(target_ids)},
            )
        thread = threading.Thread(
            target=self._execute_run, args=(project_id, run_id), daemon=True
        )
        thread.start()
        return run_id

    def _execute_run(self, project_id: str, run_id: str) -> None:
        state = self.store.load(project_id)
        record = state.runs[run_id]
        by_id = state.texts_by_id()
        targets = [by_id[tid] for tid in record.target_ids]
        spec = PromptSpec(
            codebook=Codebook(),
            examples=tuple(
                (by_id[i], state.human_layer[i]) for i in record.example_ids
            ),
            custom_instructions=record.instruction_snapshot,
        )
        try:
            run = code_inductively(targets, spec, self.chat_provider)
            report = None
            if all(tid in state.human_layer for tid in record.target_ids) and record.target_ids:
                report = alignment_report(
                    state.human_layer,
                    run.llm_layer,
                    by_id,
                    list(record.target_ids),
                    self.embedding_provider,
                )
            with self._lock(project_id):
                state = self.store.load(project_id)
                record = state.runs[run_id]
                record.status = STATUS_COMPLETE
                record.llm_layer = run.llm_layer
                record.codebook_entries = run.codebook.entries()
                record.outcomes = [
                    {
                        "text_id": o.text_id,
                        "status": o.status,
                        "edit_ratio": o.edit_ratio,
                        "note": o.note,
                    }
                    for o in run.outcomes
                ]
                record.provenance = run.provenance
                record.warnings.extend(run.warnings)
                record.report = report
                if report is not None:
                    state.iteration_history.append(
                        {
                            "run_id": run_id,
                            "scope": record.scope,
                            "example_ids": list(record.example_ids),
                            "instruction_snapshot": list(record.instruction_snapshot),
                            "mean_iou": report.mean_iou,
                            "mean_mhd": report.mean_mhd,
                            "n_texts": len(report.per_text),
                        }
                    )
                self.store.save(state)
                self.store.write_run_log(project_id, run_id, run.log_records)
                self._log(project_id, "system", "run_complete", {"run_id": run_id})
        except Exception as exc:  # noqa: BLE001 -- failures land in the record
            with self._lock(project_id):
                state = self.store.load(project_id)
                record = state.runs[run_id]
                record.status = STATUS_FAILED
                record.error = str(exc)
                self.store.save(state)
                self._log(
                    project_id, "system", "run_failed", {"run_id": run_id, "error": str(exc)}
                )
        finally:
            with self._lock(project_id):
                self._active_runs.pop(project_id, None)

    def run_status(self, project_id: str, run_id: str) -> dict:
        state = self.store.load(project_id)
        if run_id not in state.runs:
            raise UnknownRun(f"no run {run_id!r} in project {project_id!r}")
        record = state.runs[run_id]
        return {
            "run_id": run_id,
            "scope": record.scope,
            "status": record.status,
            "n_targets": len(record.target_ids),
            "n_done": len(record.outcomes),
            "error": record.error,
        }

    def wait_for_run(self, project_id: str, run_id: str, timeout: float = 60.0) -> dict:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            status = self.run_status(project_id, run_id)
            if status["status"] != STATUS_RUNNING:
                return status
            time.sleep(0.02)
        raise TimeoutError(f"run {run_id!r} still active after {timeout}s")

    def get_report(self, project_id: str, run_id: str, sort: str = "iou_asc") -> dict:
        """Report plus side-by-side annotation pairs, ordered by the sort key.

        Viewing a validation report freezes the test set."""
        with self._lock(project_id):
            state = self.store.load(project_id)
            if run_id not in state.runs:
                raise UnknownRun(f"no run {run_id!r} in project {project_id!r}")
            record = state.runs[run_id]
            if record.status == STATUS_RUNNING:
                raise RunIncomplete(f"run {run_id!r} is still running")
            if record.status == STATUS_FAILED:
                raise RunIncomplete(f"run {run_id!r} failed: {record.error}")
            if record.report is None:
                raise RunIncomplete(
                    f"run {run_id!r} has no report (scope {record.scope!r} lacks human annotations)"
                )
            if record.scope == SCOPE_VALIDATION and not state.split.test_frozen:
                state.split = state.split.freeze_test()
                self.store.save(state)
            by_id = state.texts_by_id()
            ordered = rank_texts(record.report, sort)
            rows = {r.text_id: r for r in record.report.per_text}
            pairs = []
            for tid in ordered:
                text = by_id[tid]
                human = state.human_layer[tid]
                llm = record.llm_layer[tid]
                pairs.append(
                    {
                        "text_id": tid,
                        "body": text.body,
                        "context": list(text.context),
                        "created_order": text.created_order,
                        "metrics": rows[tid].to_json(),
                        "human": _annotation_to_json(human),
                        "llm": _annotation_to_json(llm),
                        "human_markdown": serialize_annotated(text, human.segments),
                        "llm_markdown": serialize_annotated(text, llm.segments),
                    }
                )
            return {
                "run_id": run_id,
                "scope": record.scope,
                "sort": sort,
                "report": record.report.to_json(),
                "texts": pairs,
            }

    # -- export ---------------------------------------------------------------

    def export_zip(self, project_id: str) -> bytes:
        state = self.store.load(project_id)
        buf = io.BytesIO()
        with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
            zf.writestr(f"{project_id}/project.json", canonical_dumps(state.to_json()))
            for text in sorted(state.corpus, key=lambda t: (t.created_order, t.id)):
                ann = state.human_layer.get(text.id)
                rendered = serialize_annotated(text, ann.segments if ann else ())
                lines = [f"CONTEXT: {c}" for c in text.context]
                lines.append(rendered)
                safe = re.sub(r"[^A-Za-z0-9_.-]", "_", text.id)
                zf.writestr(
                    f"{project_id}/texts/{text.created_order:05d}-{safe}.md",
                    "\n".join(lines) + "\n",
                )
        return buf.getvalue()


def _with_validation(state: ProjectState) -> DataSplit:
    return DataSplit(
        example_ids=state.split.example_ids,
        validation_ids=_recomputed_validation(state),
        test_ids=state.split.test_ids,
        test_frozen=state.split.test_frozen,
    )


def replay_changelog(
    corpus: Sequence[SourceText], entries: Sequence[dict], project_id: str = "replay"
) -> ProjectState:
    """Rebuild editing state by replaying a change log over a fresh corpus.

    Covers the human-editing operations; run execution entries are skipped
    (their results live in the run records, not the log)."""
    state = ProjectState(project_id=project_id, corpus=list(corpus))
    for entry in entries:
        op = entry["operation"]
        payload = entry["payload"]
        if op == "upsert_human_annotation":
            state.human_layer[payload["text_id"]] = _annotation_from_json(
                payload["text_id"], payload["annotation"]
            )
        elif op == "set_examples":
            state.split = state.split.with_examples(tuple(payload["text_ids"]))
        elif op == "set_test_set":
            state.split = state.split.with_test(tuple(payload["text_ids"]))
        elif op == "set_instructions":
            state.custom_instructions = tuple(payload["lines"])
        state.split = _with_validation(state)
    return state
