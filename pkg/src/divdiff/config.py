"""Single JSON configuration schema shared by every command.

A document carries the generation knobs (temperature, steps, length,
batch, seed, guidance, alpha, tolerance, jitter, anneal), a model section
selecting a denoiser, optional grid lists, and a versioned "schema"
field. Command-line overrides use dotted keys; the ODD_SEED environment
variable overrides the seed.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .engine import GenerationConfig
from .errors import InvalidInputError
from .harness import GridSpec
from .models import PlantedDenoiser, PlantedTask, bigram_train, default_task
from .trace import trace_read

SCHEMA_VERSION = 1

DEFAULT_GRID = {
    "temperatures": [0.0, 0.5, 1.0, 1.5, 2.0],
    "alphas": [2.0, 8.0, 16.0, 32.0, 64.0, 128.0],
    "guidances": ["none", "odd"],
    "seeds": list(range(8)),
    "problems": list(range(10)),
}

DEFAULTS = {
    "temperature": 0.0,
    "batch": 16,
    "seed": 0,
    "guidance": "none",
    "alpha": 16.0,
    "tolerance": 1e-8,
    "jitter": 1e-3,
    "anneal": True,
    "prompt": "default",
    "model": {"kind": "planted", "problem": 0},
}

DEFAULT_STEPS = 32


def load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise InvalidInputError(f"config file not found: {path}")
    try:
        with open(p, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise InvalidInputError("config root must be a JSON object")
    if doc.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise InvalidInputError(
            f"config schema {doc.get('schema')!r} not supported (expected {SCHEMA_VERSION})"
        )
    merged = dict(DEFAULTS)
    merged.update(doc)
    merged["schema"] = SCHEMA_VERSION
    return merged


def apply_overrides(doc: dict, assignments) -> dict:
    """Apply repeatable KEY=VALUE overrides; dotted keys reach nested maps."""
    out = json.loads(json.dumps(doc))  # deep copy via JSON round-trip
    for item in assignments or []:
        if "=" not in item:
            raise InvalidInputError(f"override {item!r} is not KEY=VALUE")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise InvalidInputError(f"override {key!r} crosses a non-object value")
        node[parts[-1]] = value
    return out


def apply_env(doc: dict, environ=None) -> dict:
    env = os.environ if environ is None else environ
    if "ODD_SEED" in env:
        try:
            doc = dict(doc, seed=int(env["ODD_SEED"]))
        except ValueError as exc:
            raise InvalidInputError(f"ODD_SEED is not an integer: {env['ODD_SEED']!r}") from exc
    return doc


def _anneal_mode(value) -> str:
    if value is True:
        return "factor"
    if value is False:
        return "off"
    if value in ("factor", "linear", "off"):
        return value
    raise InvalidInputError(f"anneal must be true/false or factor/linear/off, got {value!r}")


def build_model(doc: dict, base_dir=None):
    """Instantiate the configured denoiser; returns (model, task-or-None)."""
    spec = doc.get("model", DEFAULTS["model"])
    if not isinstance(spec, dict) or "kind" not in spec:
        raise InvalidInputError("model section must be an object with a 'kind'")
    kind = spec["kind"]
    root = Path(base_dir) if base_dir else Path.cwd()
    if kind == "planted":
        if "task" in spec:
            task = PlantedTask.from_json(spec["task"])
        elif "task_path" in spec:
            path = root / spec["task_path"]
            if not path.is_file():
                raise InvalidInputError(f"task file not found: {path}")
            with open(path, "r", encoding="utf-8") as fh:
                task = PlantedTask.from_json(json.load(fh))
        else:
            task = default_task(int(spec.get("problem", 0)))
        return PlantedDenoiser(task), task
    if kind == "bigram":
        vocab = spec.get("vocab")
        corpus = spec.get("corpus")
        if corpus is None and "corpus_path" in spec:
            with open(root / spec["corpus_path"], "r", encoding="utf-8") as fh:
                corpus = json.load(fh)
        if vocab is None or corpus is None:
            raise InvalidInputError("bigram model needs 'vocab' and 'corpus'")
        return bigram_train(corpus, int(vocab)), None
    if kind == "trace":
        if "path" not in spec:
            raise InvalidInputError("trace model needs a 'path'")
        path = root / spec["path"]
        if not path.is_file():
            raise InvalidInputError(f"trace file not found: {path}")
        return trace_read(path), None
    raise InvalidInputError(f"unknown model kind {kind!r}")


def resolve_prompt(doc: dict, model=None, task=None):
    """Conditioning prefix: explicit token list, "default", or none."""
    spec = doc.get("prompt", DEFAULTS["prompt"])
    if spec is None or spec == "none":
        return None
    if spec == "default":
        if task is not None:
            from .models import default_prompt

            return default_prompt(task)
        return None
    return [int(t) for t in spec]


def generation_config(doc: dict, model=None, prompt=None) -> GenerationConfig:
    """Resolve the generation knobs; the length defaults to the model's."""
    length = doc.get("length")
    if length is None:
        if model is not None and hasattr(model, "length"):
            length = model.length
        elif model is not None and hasattr(model, "task"):
            length = model.task.length
        else:
            length = 64
    batch = doc.get("batch", DEFAULTS["batch"])
    if model is not None and hasattr(model, "batch"):
        batch = model.batch
    usable = int(length) - (0 if prompt is None else len(prompt))
    steps = doc.get("steps")
    if steps is None:
        steps = min(DEFAULT_STEPS, usable)
    if model is not None and hasattr(model, "steps"):
        steps = min(int(steps), model.steps)
    config = GenerationConfig(
        temperature=float(doc.get("temperature", DEFAULTS["temperature"])),
        steps=int(steps),
        length=int(length),
        batch=int(batch),
        seed=int(doc.get("seed", DEFAULTS["seed"])),
        guidance=str(doc.get("guidance", DEFAULTS["guidance"])),
        alpha=float(doc.get("alpha", DEFAULTS["alpha"])),
        tolerance=float(doc.get("tolerance", DEFAULTS["tolerance"])),
        jitter=float(doc.get("jitter", DEFAULTS["jitter"])),
        anneal=_anneal_mode(doc.get("anneal", DEFAULTS["anneal"])),
        feature_top_k=doc.get("feature_top_k"),
    )
    return config.validate()


def grid_spec(doc: dict) -> GridSpec:
    grid = dict(DEFAULT_GRID)
    grid.update(doc.get("grid", {}))
    return GridSpec(
        temperatures=[float(t) for t in grid["temperatures"]],
        alphas=[float(a) for a in grid["alphas"]],
        guidances=[str(g) for g in grid["guidances"]],
        seeds=[int(s) for s in grid["seeds"]],
        problems=[int(p) for p in grid["problems"]],
    )


def echo_config(doc: dict, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "effective_config.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
