"""Command-line entry point.

Exit codes: 0 ok, 1 check failure (gradcheck), 2 configuration error,
3 runtime error. Every command is deterministic given its config and
seed; timings are the only exception.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import config as cfg
from . import gradcheck, reporting
from .engine import run_generation
from .errors import DivDiffError, InvalidInputError
from .harness import (
    RunReport,
    final_feature_vectors,
    grid_run,
    invariance_check,
    overhead_profile,
)
from .models import check_answer


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="divdiff",
        description="Diversity-guided sampling for masked diffusion language models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="JSON config path")
        else:
            p.add_argument("--config", help="JSON config path")
        p.add_argument("--out", help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value (repeatable, dotted keys)")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers")

    common(sub.add_parser("generate", help="run one batch and print the outputs"))
    common(sub.add_parser("grid", help="run the full experiment grid"))
    common(sub.add_parser("gradcheck", help="finite-difference gradient suites"),
           needs_config=False)
    common(sub.add_parser("invariance", help="check batch-size prefix invariance"))
    common(sub.add_parser("replay", help="generate against a recorded logits trace"))
    common(sub.add_parser("profile", help="measure guidance overhead"))
    report = sub.add_parser("report", help="regenerate tables and plots from raw reports")
    report.add_argument("results", help="directory of run report JSON documents")
    report.add_argument("--out", help="output directory (defaults to the results dir)")
    return parser


def _load(args) -> dict:
    doc = cfg.load_config(args.config)
    doc = cfg.apply_overrides(doc, args.set)
    return cfg.apply_env(doc)


def _cmd_generate(args) -> int:
    doc = _load(args)
    model, task = cfg.build_model(doc, Path(args.config).parent)
    prompt = cfg.resolve_prompt(doc, model, task)
    config = cfg.generation_config(doc, model, prompt)
    run = run_generation(model, config, prompt=prompt)
    flags = None
    if task is not None:
        flags = [check_answer(task, seq) for seq in run.sequences]
    for i, seq in enumerate(run.sequences):
        line = f"sample {i}: {' '.join(str(t) for t in seq.tolist())}"
        if flags is not None:
            line += f"  correct={flags[i]}"
        print(line)
    if flags is not None:
        print(f"correct {sum(flags)}/{len(flags)}")
    if args.out:
        cfg.echo_config(doc, args.out)
        report = RunReport(
            problem=int(doc.get("model", {}).get("problem", 0)),
            guidance=config.guidance,
            theta=config.temperature,
            alpha=config.alpha if config.guidance != "none" else 0.0,
            seed=config.seed,
            outputs=[s.tolist() for s in run.sequences],
            correct=[bool(f) for f in (flags or [])],
            guidance_seconds=float(sum(run.guidance_seconds)),
            total_seconds=run.total_seconds,
            per_step_guidance_seconds=list(run.guidance_seconds),
            final_features=final_feature_vectors(
                run.sequences, model.vocab, run.state.prompt_len
            ).tolist(),
        )
        reporting.write_reports([report], args.out)
    return 0


def _cmd_grid(args) -> int:
    doc = _load(args)
    model_spec = doc.get("model", {})
    if model_spec.get("kind", "planted") != "planted":
        raise InvalidInputError("grid runs need a planted model (correctness oracle)")
    spec = cfg.grid_spec(doc)
    probe_model, probe_task = cfg.build_model(doc, Path(args.config).parent)
    probe_prompt = cfg.resolve_prompt(doc, probe_model, probe_task)
    base = cfg.generation_config(doc, probe_model, probe_prompt)
    base = replace(base, length=probe_task.length)
    use_default_prompt = doc.get("prompt", cfg.DEFAULTS["prompt"]) == "default"

    from .models import default_prompt, default_task

    def factory(problem):
        if "task" in model_spec or "task_path" in model_spec:
            return probe_task, probe_prompt
        task = default_task(problem)
        return task, (default_prompt(task) if use_default_prompt else None)

    reports, aggregates = grid_run(
        spec, factory, base, jobs=max(1, args.jobs),
        log=lambda line: print(line, file=sys.stderr),
    )
    if args.out:
        cfg.echo_config(doc, args.out)
        reporting.write_reports(reports, args.out)
        paths = reporting.write_artifacts(aggregates, args.out)
        print(f"wrote {len(reports)} reports and {paths['csv']}")
    print(f"cells={len(reports)} failed={aggregates['failed_runs']}")
    return 0


def _cmd_gradcheck(args) -> int:
    instances = 120
    if args.config:
        doc = _load(args)
        instances = int(doc.get("gradcheck_instances", instances))
    results = gradcheck.run_all_suites(instances=instances)
    failed = False
    for res in results:
        status = "ok" if res.passed else "FAIL"
        print(
            f"{res.name}: {res.instances} instances, worst rel err "
            f"{res.worst:.3e} (tolerance {res.tolerance:g}) {status}"
        )
        failed = failed or not res.passed
    return 1 if failed else 0


def _cmd_invariance(args) -> int:
    doc = _load(args)
    model, task = cfg.build_model(doc, Path(args.config).parent)
    prompt = cfg.resolve_prompt(doc, model, task)
    config = cfg.generation_config(doc, model, prompt)
    section = doc.get("invariance", {})
    m = int(section.get("m", 8))
    b1 = int(section.get("b1", 8))
    b2 = int(section.get("b2", 16))
    ok = invariance_check(model, config, m, b1, b2, prompt=prompt)
    print(f"guidance={config.guidance} m={m} b1={b1} b2={b2} prefix-invariant={ok}")
    return 0


def _cmd_replay(args) -> int:
    doc = _load(args)
    model, _ = cfg.build_model(doc, Path(args.config).parent)
    if not hasattr(model, "blocks"):
        raise InvalidInputError("replay needs model.kind == 'trace'")
    config = cfg.generation_config(doc, model)
    run = run_generation(model, config)
    for i, seq in enumerate(run.sequences):
        print(f"sample {i}: {' '.join(str(t) for t in seq.tolist())}")
    if args.out:
        cfg.echo_config(doc, args.out)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "replay_outputs.json", "w", encoding="utf-8") as fh:
            json.dump([s.tolist() for s in run.sequences], fh)
            fh.write("\n")
    return 0


def _cmd_profile(args) -> int:
    doc = _load(args)
    model, task = cfg.build_model(doc, Path(args.config).parent)
    prompt = cfg.resolve_prompt(doc, model, task)
    config = cfg.generation_config(doc, model, prompt)
    stats = overhead_profile(model, config)
    print(f"baseline_seconds={stats['baseline_seconds']:.4f}")
    print(f"guided_seconds={stats['guided_seconds']:.4f}")
    print(f"overhead_fraction={stats['overhead_fraction']:.4f}")
    print(f"hook_seconds={stats['hook_seconds']:.4f}")
    return 0


def _cmd_report(args) -> int:
    results = Path(args.results)
    if not results.is_dir():
        raise InvalidInputError(f"{args.results} is not a directory")
    out = args.out or args.results
    warnings: list[str] = []
    paths = reporting.regenerate(results, out, warn=warnings.append)
    for line in warnings:
        print(f"warning: {line}", file=sys.stderr)
    print(f"wrote {paths['csv']}, {paths['passk']}, {paths['pareto']}")
    return 0


_HANDLERS = {
    "generate": _cmd_generate,
    "grid": _cmd_grid,
    "gradcheck": _cmd_gradcheck,
    "invariance": _cmd_invariance,
    "replay": _cmd_replay,
    "profile": _cmd_profile,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivDiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
