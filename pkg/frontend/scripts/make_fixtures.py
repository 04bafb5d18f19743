#!/usr/bin/env python3
"""Record API fixtures for the frontend test suite.

Trains a small real model, then captures: the model summary, a sample
listing, plain predictions, 20 random (sample, override) intervention pairs
recorded through BOTH the HTTP endpoint and the CLI intervene command, and a
sweep table. Frontend tests replay these to verify UI/CLI parity without a
running server.
"""

import json
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[2]
sys.path.insert(0, str(ROOT / "src"))

import numpy as np
from fastapi.testclient import TestClient

from ebcbm import cli, datagen, pipeline, serve, trainer
from ebcbm.numerics import seed_stream

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"


def main() -> int:
    FIXTURES.mkdir(exist_ok=True)
    data_cfg = datagen.DatasetConfig(train_size=512, test_size=96, seed=77)
    train, test = datagen.generate(data_cfg)
    params, _ = trainer.fit(train, trainer.TrainConfig(epochs=4, seed=5))
    client = TestClient(serve.create_app(params, {"train": train, "test": test}))

    (FIXTURES / "model.json").write_text(
        json.dumps(client.get("/api/model").json(), indent=2))
    (FIXTURES / "samples.json").write_text(
        json.dumps(client.get("/api/samples?split=test&offset=0&limit=20").json(),
                   indent=2))
    (FIXTURES / "prediction_3.json").write_text(
        json.dumps(client.get("/api/predict/3").json(), indent=2))

    # 20 random (sample, overrides) pairs through both surfaces
    with tempfile.TemporaryDirectory() as tmp:
        tmpdir = Path(tmp)
        datagen.save(train, tmpdir / cli.TRAIN_FILE)
        datagen.save(test, tmpdir / cli.TEST_FILE)
        pipeline.save_checkpoint(params, tmpdir / cli.CHECKPOINT_FILE)

        rng = seed_stream(424242, "parity-pairs")
        pairs = []
        for _ in range(20):
            sample = int(rng.integers(0, test.num_samples))
            n_over = int(rng.integers(1, test.num_concepts + 1))
            concepts = rng.choice(test.num_concepts, size=n_over, replace=False)
            overrides = {int(k): int(rng.integers(0, 2)) for k in concepts}

            http_doc = client.post(
                f"/api/predict/{sample}",
                json={"overrides": {str(k): v for k, v in overrides.items()}},
            ).json()

            import contextlib
            import io

            buf = io.StringIO()
            spec = ",".join(f"{k}={v}" for k, v in sorted(overrides.items()))
            with contextlib.redirect_stdout(buf):
                rc = cli.run(["intervene", "--dataset", str(tmpdir),
                              "--checkpoint", str(tmpdir / cli.CHECKPOINT_FILE),
                              "--sample", str(sample), "--set", spec])
            assert rc == 0
            cli_doc = json.loads(buf.getvalue())
            pairs.append({"sample_id": sample,
                          "overrides": {str(k): v for k, v in sorted(overrides.items())},
                          "http": http_doc, "cli": cli_doc})
        (FIXTURES / "parity_pairs.json").write_text(json.dumps(pairs, indent=2))

    sweep_doc = client.post("/api/sweep", json={
        "ratios": [0.0, 0.25, 0.5, 0.75, 1.0],
        "strategy": "random",
        "seeds": [10, 11, 12],
    }).json()
    (FIXTURES / "sweep.json").write_text(json.dumps(sweep_doc, indent=2))

    print(f"fixtures written to {FIXTURES}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
