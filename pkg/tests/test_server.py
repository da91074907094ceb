import json
import zipfile
from io import BytesIO

import numpy as np
import pytest
from fastapi.testclient import TestClient

from codealign.annotation import serialize_annotated
from codealign.coder import MockChatProvider
from codealign.embeddings import MockEmbeddingProvider
from codealign.project import ProjectService
from codealign.server import create_app

from conftest import make_annotated_corpus


@pytest.fixture
def setup(tmp_path):
    rng = np.random.default_rng(17)
    texts, layer = make_annotated_corpus(rng, 8)
    scripted = {t.body: serialize_annotated(t, layer[t.id].segments) for t in texts}
    service = ProjectService(
        tmp_path / "projects",
        chat_provider=MockChatProvider(scripted),
        embedding_provider=MockEmbeddingProvider(),
    )
    client = TestClient(create_app(service))
    return client, service, texts, layer


def create_project(client, texts, pid="web"):
    payload = {
        "project_id": pid,
        "corpus": [
            {"id": t.id, "text": t.body, "context": list(t.context), "order": t.created_order}
            for t in texts
        ],
    }
    resp = client.post("/api/v1/projects", json=payload)
    assert resp.status_code == 200, resp.text
    return resp.json()["project_id"]


def annotate_all(client, pid, texts, layer):
    for t in texts:
        segments = [
            {"start": s.span.start, "end": s.span.end, "codes": list(s.codes)}
            for s in layer[t.id].segments
        ]
        resp = client.put(
            f"/api/v1/projects/{pid}/texts/{t.id}/annotation", json={"segments": segments}
        )
        assert resp.status_code == 200, resp.text


def run_to_completion(client, pid, scope="validation"):
    resp = client.post(f"/api/v1/projects/{pid}/runs", json={"scope": scope})
    assert resp.status_code == 200, resp.text
    run_id = resp.json()["run_id"]
    for _ in range(500):
        status = client.get(f"/api/v1/projects/{pid}/runs/{run_id}").json()
        if status["status"] != "running":
            break
    assert status["status"] == "complete", status
    return run_id


class TestProjectEndpoints:
    def test_create_and_fetch(self, setup):
        client, _, texts, _ = setup
        pid = create_project(client, texts)
        body = client.get(f"/api/v1/projects/{pid}").json()
        assert body["project_id"] == pid
        assert len(body["texts"]) == len(texts)
        assert body["split"]["example_ids"] == []

    def test_create_requires_corpus(self, setup):
        client, *_ = setup
        resp = client.post("/api/v1/projects", json={})
        assert resp.status_code == 400

    def test_missing_project_404(self, setup):
        client, *_ = setup
        assert client.get("/api/v1/projects/nope").status_code == 404

    def test_annotation_roundtrip(self, setup):
        client, _, texts, layer = setup
        pid = create_project(client, texts)
        annotate_all(client, pid, texts, layer)
        body = client.get(f"/api/v1/projects/{pid}").json()
        tid = texts[0].id
        expected = [
            {"start": s.span.start, "end": s.span.end, "codes": list(s.codes)}
            for s in layer[tid].segments
        ]
        assert body["human_layer"][tid]["segments"] == expected

    def test_overlap_rejected_409(self, setup):
        client, _, texts, _ = setup
        pid = create_project(client, texts)
        resp = client.put(
            f"/api/v1/projects/{pid}/texts/{texts[0].id}/annotation",
            json={"segments": [
                {"start": 0, "end": 5, "codes": ["a"]},
                {"start": 3, "end": 8, "codes": ["b"]},
            ]},
        )
        assert resp.status_code == 409
        assert resp.json()["detail"]["error"] == "OverlapRejected"

    def test_example_on_test_set_text_conflicts(self, setup):
        client, _, texts, layer = setup
        pid = create_project(client, texts)
        annotate_all(client, pid, texts, layer)
        tid = texts[0].id
        assert client.put(f"/api/v1/projects/{pid}/testset", json={"text_ids": [tid]}).status_code == 200
        resp = client.put(f"/api/v1/projects/{pid}/examples", json={"text_ids": [tid]})
        assert resp.status_code == 409
        assert resp.json()["detail"]["error"] == "TestSetViolation"

    def test_unannotated_example_400(self, setup):
        client, _, texts, _ = setup
        pid = create_project(client, texts)
        resp = client.put(f"/api/v1/projects/{pid}/examples", json={"text_ids": [texts[0].id]})
        assert resp.status_code == 400


class TestRunEndpoints:
    def test_full_iteration_workflow(self, setup):
        client, _, texts, layer = setup
        pid = create_project(client, texts)
        annotate_all(client, pid, texts, layer)
        client.put(f"/api/v1/projects/{pid}/examples", json={"text_ids": [texts[0].id]})
        client.put(f"/api/v1/projects/{pid}/instructions", json={"lines": ["- Be literal."]})
        run_id = run_to_completion(client, pid)
        report = client.get(f"/api/v1/projects/{pid}/runs/{run_id}/report").json()
        assert report["run_id"] == run_id
        assert report["report"]["mean_iou"] == 1.0  # scripted mock reproduces the layer
        project = client.get(f"/api/v1/projects/{pid}").json()
        assert len(project["iteration_history"]) == 1
        assert project["iteration_history"][0]["instruction_snapshot"] == ["- Be literal."]

    def test_report_sort_param_respected(self, setup):
        client, _, texts, layer = setup
        pid = create_project(client, texts)
        annotate_all(client, pid, texts, layer)
        client.put(f"/api/v1/projects/{pid}/examples", json={"text_ids": [texts[0].id]})
        run_id = run_to_completion(client, pid)
        asc = client.get(f"/api/v1/projects/{pid}/runs/{run_id}/report?sort=iou_asc").json()
        desc = client.get(f"/api/v1/projects/{pid}/runs/{run_id}/report?sort=iou_desc").json()
        asc_vals = [t["metrics"]["iou"] for t in asc["texts"]]
        desc_vals = [t["metrics"]["iou"] for t in desc["texts"]]
        assert asc_vals == sorted(asc_vals)
        assert desc_vals == sorted(desc_vals, reverse=True)

    def test_bad_sort_rejected(self, setup):
        client, _, texts, layer = setup
        pid = create_project(client, texts)
        annotate_all(client, pid, texts, layer)
        client.put(f"/api/v1/projects/{pid}/examples", json={"text_ids": [texts[0].id]})
        run_id = run_to_completion(client, pid)
        resp = client.get(f"/api/v1/projects/{pid}/runs/{run_id}/report?sort=bogus")
        assert resp.status_code == 400

    def test_run_requires_examples(self, setup):
        client, _, texts, _ = setup
        pid = create_project(client, texts)
        resp = client.post(f"/api/v1/projects/{pid}/runs", json={"scope": "validation"})
        assert resp.status_code == 400
        assert resp.json()["detail"]["error"] == "NoExamples"

    def test_sse_stream_ends_with_terminal_status(self, setup):
        client, _, texts, layer = setup
        pid = create_project(client, texts)
        annotate_all(client, pid, texts, layer)
        client.put(f"/api/v1/projects/{pid}/examples", json={"text_ids": [texts[0].id]})
        run_id = run_to_completion(client, pid)
        with client.stream("GET", f"/api/v1/projects/{pid}/runs/{run_id}/events") as resp:
            assert resp.status_code == 200
            assert resp.headers["content-type"].startswith("text/event-stream")
            payload = b"".join(resp.iter_raw()).decode("utf-8")
        events = [line for line in payload.splitlines() if line.startswith("data: ")]
        final = json.loads(events[-1][len("data: "):])
        assert final["status"] == "complete"
        assert final["run_id"] == run_id

    def test_report_immutable_across_calls(self, setup):
        client, _, texts, layer = setup
        pid = create_project(client, texts)
        annotate_all(client, pid, texts, layer)
        client.put(f"/api/v1/projects/{pid}/examples", json={"text_ids": [texts[0].id]})
        run_id = run_to_completion(client, pid)
        url = f"/api/v1/projects/{pid}/runs/{run_id}/report"
        assert client.get(url).content == client.get(url).content


class TestExportEndpoint:
    def test_zip_download(self, setup):
        client, _, texts, layer = setup
        pid = create_project(client, texts)
        annotate_all(client, pid, texts, layer)
        resp = client.get(f"/api/v1/projects/{pid}/export")
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "application/zip"
        zf = zipfile.ZipFile(BytesIO(resp.content))
        assert f"{pid}/project.json" in zf.namelist()
