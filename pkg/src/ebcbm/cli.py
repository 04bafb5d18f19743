"""Command-line surface: data generation, training, evaluation, sweeps,
analysis exports, single-sample interventions, and the HTTP service.

All commands read an optional JSON config with namespaced sections (data.*,
train.*, eval.*, serve.*) plus targeted flag overrides; every output lands
under --out. One root seed reproduces an entire experiment: section seeds
default to it, and all module streams derive from their section seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import datagen, evaluation, pipeline, trainer
from .errors import ConfigError

TRAIN_FILE = "dataset_train.bin"
TEST_FILE = "dataset_test.bin"
CHECKPOINT_FILE = "checkpoint.bin"


@dataclass
class EvalConfig:
    ratios: list = field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    strategy: str = "random"
    seeds: list = field(default_factory=lambda: [10, 11, 12])
    bins: int = 30

    def validate(self) -> "EvalConfig":
        if self.strategy not in evaluation.STRATEGIES:
            raise ConfigError("eval.strategy",
                              f"must be one of {list(evaluation.STRATEGIES)}")
        if any(not 0.0 <= float(r) <= 1.0 for r in self.ratios):
            raise ConfigError("eval.ratios", "entries must lie in [0, 1]")
        if self.bins < 2:
            raise ConfigError("eval.bins", "must be at least 2")
        return self


@dataclass
class ServeConfig:
    host: str = "127.0.0.1"
    port: int = 8765

    def validate(self) -> "ServeConfig":
        if not 0 < self.port < 65536:
            raise ConfigError("serve.port", "must be a valid TCP port")
        return self


@dataclass
class RunConfig:
    seed: int
    data: datagen.DatasetConfig
    train: trainer.TrainConfig
    eval: EvalConfig
    serve: ServeConfig


_SECTIONS = {
    "data": datagen.DatasetConfig,
    "train": trainer.TrainConfig,
    "eval": EvalConfig,
    "serve": ServeConfig,
}

_SCALARS = {int: "integer", float: "number", bool: "boolean", str: "string", list: "list"}


def _coerce(section: str, name: str, expected, value):
    key = f"{section}.{name}"
    if expected is bool:
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected boolean, got {type(value).__name__}")
        return value
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected integer, got {type(value).__name__}")
        return value
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected number, got {type(value).__name__}")
        return float(value)
    if expected is str:
        if not isinstance(value, str):
            raise ConfigError(key, f"expected string, got {type(value).__name__}")
        return value
    if expected is list:
        if not isinstance(value, list):
            raise ConfigError(key, f"expected list, got {type(value).__name__}")
        return value
    raise ConfigError(key, f"unsupported field type {expected}")


def validate_config(document: dict, seed_override: int | None = None) -> RunConfig:
    """Normalize a config document: fill defaults, reject unknown keys, and
    enforce types and cross-field invariants. Empty input yields defaults."""
    if not isinstance(document, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown_root = set(document) - set(_SECTIONS) - {"seed"}
    if unknown_root:
        raise ConfigError(sorted(unknown_root)[0], "unknown top-level key")
    root_seed = document.get("seed", 0)
    if isinstance(root_seed, bool) or not isinstance(root_seed, int):
        raise ConfigError("seed", "expected integer")
    if seed_override is not None:
        root_seed = int(seed_override)

    named_types = {"int": int, "float": float, "bool": bool, "str": str, "list": list}
    built = {}
    for section, cls in _SECTIONS.items():
        types = {}
        for f in dataclasses.fields(cls):
            tname = f.type if isinstance(f.type, str) else f.type.__name__
            if tname not in named_types:
                raise ConfigError(f"{section}.{f.name}",
                                  f"unsupported config field type '{tname}'")
            types[f.name] = named_types[tname]
        fields = types
        doc = document.get(section, {})
        if not isinstance(doc, dict):
            raise ConfigError(section, "expected a JSON object")
        unknown = set(doc) - set(fields)
        if unknown:
            raise ConfigError(f"{section}.{sorted(unknown)[0]}", "unknown key")
        kwargs = {name: _coerce(section, name, types[name], value)
                  for name, value in doc.items()}
        if "seed" in fields and "seed" not in kwargs:
            kwargs["seed"] = root_seed
        built[section] = cls(**kwargs)

    try:
        built["data"].validate()
        built["train"].validate()
    except Exception as e:  # surface contract violations as config errors
        raise ConfigError("data/train", str(e)) from e
    built["eval"].validate()
    built["serve"].validate()
    return RunConfig(seed=root_seed, data=built["data"], train=built["train"],
                     eval=built["eval"], serve=built["serve"])


def load_config(path: str | None, seed_override: int | None = None) -> RunConfig:
    doc = {}
    if path:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return validate_config(doc, seed_override)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _load_model_and_data(args) -> tuple[pipeline.ModelParams, dict]:
    params = pipeline.load_checkpoint(args.checkpoint)
    data_dir = Path(args.dataset)
    splits = {}
    for name, fname in (("train", TRAIN_FILE), ("test", TEST_FILE)):
        p = data_dir / fname if data_dir.is_dir() else Path(str(args.dataset))
        if p.exists():
            splits[name] = datagen.load(p)
    if not splits:
        raise FileNotFoundError(f"no dataset files under {args.dataset}")
    return params, splits


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config, args.seed)
    out = Path(args.out)
    train, test = datagen.generate(cfg.data)
    out.mkdir(parents=True, exist_ok=True)
    datagen.save(train, out / TRAIN_FILE)
    datagen.save(test, out / TEST_FILE)
    summary = {"train": train.num_samples, "test": test.num_samples,
               "config": dataclasses.asdict(cfg.data)}
    _write(out / "dataset_summary.json", evaluation.canonical_json(summary))
    print(f"wrote {out / TRAIN_FILE} and {out / TEST_FILE}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.seed)
    out = Path(args.out)
    train = datagen.load(Path(args.dataset) / TRAIN_FILE)
    params, history = trainer.fit(train, cfg.train)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.save_checkpoint(params, out / CHECKPOINT_FILE)
    history.to_jsonl(out / "history.jsonl")
    _write(out / "train_summary.json", evaluation.canonical_json(history.last()))
    print(f"wrote {out / CHECKPOINT_FILE}")
    return 0


def cmd_eval(args) -> int:
    params, splits = _load_model_and_data(args)
    out = Path(args.out)
    split = splits[args.split]
    doc = evaluation.dataset_metrics(params, split)
    _write(out / "metrics.json", evaluation.canonical_json(doc))
    _write(out / "metrics.txt", evaluation.format_table([doc]))
    robust = evaluation.robustness_report(params, split)
    _write(out / "robustness.json", evaluation.canonical_json(robust))
    _write(out / "robustness.txt", evaluation.format_table(robust["rows"]))
    print(evaluation.format_table([doc]), end="")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.seed)
    params, splits = _load_model_and_data(args)
    out = Path(args.out)
    result = evaluation.intervention_sweep(
        params, splits[args.split], cfg.eval.ratios, cfg.eval.strategy,
        cfg.eval.seeds)
    _write(out / "sweep.json", evaluation.canonical_json(result.to_json_dict()))
    rows = [{"ratio": r, "mean_accuracy": m, "ci95": c}
            for r, m, c in zip(result.ratios, result.mean, result.ci95)]
    _write(out / "sweep.txt", evaluation.format_table(rows))
    print(evaluation.format_table(rows), end="")
    return 0


def cmd_analyze(args) -> int:
    cfg = load_config(args.config, args.seed)
    params, splits = _load_model_and_data(args)
    out = Path(args.out)
    if args.what == "energy-histogram":
        reference = splits.get("train", splits["test"])
        base = evaluation.energy_histogram(params, reference, args.concept,
                                           cfg.eval.bins)
        edges = np.array(base["edges"])
        docs = [evaluation.energy_histogram(params, splits["test"], args.concept,
                                            cfg.eval.bins, edges=edges)]
        for mode in ("black", "random"):
            variant = datagen.shift_variant(splits["test"], mode)
            docs.append(evaluation.energy_histogram(params, variant, args.concept,
                                                    cfg.eval.bins, edges=edges))
        doc = {"reference_split": reference.split, "histograms": docs}
        _write(out / f"energy_hist_concept{args.concept}.json",
               evaluation.canonical_json(doc))
    elif args.what == "nn":
        nn = evaluation.nearest_neighbors(params, splits[args.split],
                                          args.concept, args.query, args.n)
        doc = {"concept": args.concept, "query": args.query,
               "neighbors": [{"index": i, "distance": d} for i, d in nn]}
        _write(out / "neighbors.json", evaluation.canonical_json(doc))
    elif args.what == "export-embeddings":
        evaluation.export_embeddings(params, splits[args.split],
                                     out / "embeddings.csv")
    elif args.what == "info":
        info = pipeline.model_info(params)
        _write(out / "model_info.json", evaluation.canonical_json(info))
        print(evaluation.canonical_json(info), end="")
    return 0


def cmd_intervene(args) -> int:
    params, splits = _load_model_and_data(args)
    split = splits[args.split]
    overrides = {}
    if args.set:
        for item in args.set.split(","):
            k, _, v = item.partition("=")
            overrides[int(k)] = int(v)
    record = pipeline.intervene_predict(split.X[args.sample], params, overrides)
    doc = record.to_json_dict(sample_id=args.sample)
    text = evaluation.canonical_json(doc)
    if args.out:
        _write(Path(args.out) / "intervention.json", text)
    print(text, end="")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .serve import create_app

    cfg = load_config(args.config, args.seed)
    params, splits = _load_model_and_data(args)
    app = create_app(params, splits)
    host = args.host or cfg.serve.host
    port = args.port or cfg.serve.port
    uvicorn.run(app, host=host, port=port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ebcbm",
        description="Energy-based concept bottleneck with quantized concept vectors")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dataset=True, checkpoint=False):
        p.add_argument("--config", default=None, help="JSON run config")
        p.add_argument("--seed", type=int, default=None, help="root seed override")
        p.add_argument("--out", default="out", help="output directory")
        if dataset:
            p.add_argument("--dataset", default="out", help="dataset directory")
        if checkpoint:
            p.add_argument("--checkpoint", default="out/" + CHECKPOINT_FILE)

    p = sub.add_parser("gen-data", help="generate synthetic dataset splits")
    common(p, dataset=False)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a generated dataset")
    common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="metrics and robustness report")
    common(p, checkpoint=True)
    p.add_argument("--split", default="test", choices=["train", "test"])
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="intervention sweep over ratios")
    common(p, checkpoint=True)
    p.add_argument("--split", default="test", choices=["train", "test"])
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("analyze", help="analysis exports")
    p.add_argument("what", choices=["energy-histogram", "nn",
                                    "export-embeddings", "info"])
    common(p, checkpoint=True)
    p.add_argument("--split", default="test", choices=["train", "test"])
    p.add_argument("--concept", type=int, default=0)
    p.add_argument("--query", type=int, default=0)
    p.add_argument("--n", type=int, default=5)
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("intervene", help="single-sample intervention record")
    common(p, checkpoint=True)
    p.add_argument("--split", default="test", choices=["train", "test"])
    p.add_argument("--sample", type=int, required=True)
    p.add_argument("--set", default="", help="overrides as k=v[,k=v...]")
    p.set_defaults(fn=cmd_intervene)

    p = sub.add_parser("serve", help="serve the inspection/intervention API")
    common(p, checkpoint=True)
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(fn=cmd_serve)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
