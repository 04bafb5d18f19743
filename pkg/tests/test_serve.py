import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from ebcbm import datagen, evaluation, pipeline, serve, trainer


@pytest.fixture(scope="module")
def ctx():
    cfg = datagen.DatasetConfig(train_size=256, test_size=64, seed=41)
    train, test = datagen.generate(cfg)
    params, _ = trainer.fit(train, trainer.TrainConfig(epochs=2, seed=3, sgld_steps=3))
    app = serve.create_app(params, {"train": train, "test": test})
    return params, test, TestClient(app, raise_server_exceptions=False)


def test_model_summary(ctx):
    params, test, client = ctx
    r = client.get("/api/model")
    assert r.status_code == 200
    doc = r.json()
    assert doc["num_concepts"] == params.config.num_concepts
    assert doc["num_classes"] == params.config.num_classes
    assert doc["dataset_sizes"]["test"] == test.num_samples
    assert len(doc["concept_names"]) == params.config.num_concepts
    info = pipeline.model_info(params, latency_runs=1)
    assert doc["total_parameters"] == info["total_parameters"]


def test_samples_pagination(ctx):
    _, test, client = ctx
    r = client.get("/api/samples", params={"split": "test", "offset": 10, "limit": 5})
    doc = r.json()
    assert doc["total"] == test.num_samples
    assert [item["id"] for item in doc["items"]] == list(range(10, 15))
    assert doc["items"][0]["class_label"] == int(test.y_star[10])


def test_predict_deterministic_and_bounded(ctx):
    _, _, client = ctx
    a = client.get("/api/predict/7")
    b = client.get("/api/predict/7")
    assert a.status_code == 200
    assert a.content == b.content
    doc = a.json()
    assert all(0.0 < u <= 1.0 for u in doc["uncertainties"])
    assert all(0.0 <= s <= 1.0 for s in doc["concept_scores"])


def test_predict_unknown_id(ctx):
    _, _, client = ctx
    r = client.get("/api/predict/99999")
    assert r.status_code == 404
    doc = r.json()
    assert doc["code"] == "not_found"
    assert "99999" in doc["message"]


def test_intervention_empty_equals_predict(ctx):
    _, _, client = ctx
    plain = client.get("/api/predict/3").json()
    posted = client.post("/api/predict/3", json={"overrides": {}}).json()
    assert posted == plain


def test_intervention_matches_pipeline(ctx):
    params, test, client = ctx
    overrides = {"0": 1, "2": 0}
    r = client.post("/api/predict/5", json={"overrides": overrides})
    assert r.status_code == 200
    doc = r.json()
    record = pipeline.intervene_predict(test.X[5], params, {0: 1, 2: 0})
    assert doc == record.to_json_dict(sample_id=5)


def test_full_override_equals_intervene_path(ctx):
    # the prototype-match claim for full overrides needs a converged model and
    # is asserted in the acceptance suite; here we pin path parity
    params, test, client = ctx
    i = 9
    overrides = {str(k): int(test.C_star[i, k]) for k in range(test.num_concepts)}
    doc = client.post(f"/api/predict/{i}", json={"overrides": overrides}).json()
    record = pipeline.intervene_predict(
        test.X[i], params, {k: int(test.C_star[i, k]) for k in range(test.num_concepts)})
    assert doc == record.to_json_dict(sample_id=i)


def test_intervention_validation(ctx):
    _, _, client = ctx
    r = client.post("/api/predict/1", json={"overrides": {"0": 2}})
    assert r.status_code == 400
    assert r.json()["code"] == "bad_request"
    r = client.post("/api/predict/1", json={"overrides": {"99": 1}})
    assert r.status_code == 400
    assert "99" in r.json()["message"]
    r = client.post("/api/predict/1", json={"overrides": {"zero": 1}})
    assert r.status_code == 400


def test_sweep_endpoint_matches_eval(ctx):
    params, test, client = ctx
    body = {"ratios": [0.0, 1.0], "strategy": "random", "seeds": [4, 5]}
    r = client.post("/api/sweep", json=body)
    assert r.status_code == 200
    doc = r.json()
    direct = evaluation.intervention_sweep(params, test, [0.0, 1.0], "random", [4, 5])
    assert doc == direct.to_json_dict()
    assert len(doc["ratios"]) == 2


def test_sweep_single_zero_ratio_equals_plain_eval(ctx):
    params, test, client = ctx
    doc = client.post("/api/sweep", json={"ratios": [0.0], "seeds": [1]}).json()
    plain = evaluation.dataset_metrics(params, test)["task_accuracy"]
    assert doc["accuracy_per_seed"][0][0] == pytest.approx(plain)


def test_sweep_bad_strategy(ctx):
    _, _, client = ctx
    r = client.post("/api/sweep", json={"ratios": [0.5], "strategy": "magic"})
    assert r.status_code == 400
    assert r.json()["code"] == "bad_request"


def test_error_body_shape(ctx):
    _, _, client = ctx
    r = client.get("/api/predict/99999")
    assert set(r.json()) == {"code", "message"}
