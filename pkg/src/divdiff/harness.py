"""Measurement harness: pass@k, coverage, diversity, grids, and overhead.

pass@k uses prefix semantics (the first k of a batch), which is the right
estimator here because guided samples within a batch are dependent. Grid
cells are independent pure functions of their configuration, so they can
run in parallel; aggregation is a single sorted reduction over reports.
"""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .engine import GenerationConfig, run_generation
from .errors import InvalidInputError
from .models import PlantedDenoiser, PlantedTask, check_answer

@dataclass
class RunReport:
    """One generation run: outputs, correctness flags, and timings."""

    problem: int
    guidance: str
    theta: float
    alpha: float
    seed: int
    outputs: list = field(default_factory=list)   # list of token-id lists
    correct: list = field(default_factory=list)   # list of bool
    guidance_seconds: float = 0.0
    total_seconds: float = 0.0
    per_step_guidance_seconds: list = field(default_factory=list)
    final_features: list = field(default_factory=list)
    failed: bool = False
    error: str = ""

    @property
    def batch(self) -> int:
        return len(self.outputs)

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "problem": self.problem,
            "guidance": self.guidance,
            "theta": self.theta,
            "alpha": self.alpha,
            "seed": self.seed,
            "outputs": self.outputs,
            "correct": self.correct,
            "guidance_seconds": self.guidance_seconds,
            "total_seconds": self.total_seconds,
            "per_step_guidance_seconds": self.per_step_guidance_seconds,
            "final_features": self.final_features,
            "failed": self.failed,
            "error": self.error,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RunReport":
        if not isinstance(doc, dict) or doc.get("schema") != 1:
            raise InvalidInputError("RunReport: unsupported document schema")
        report = cls(
            problem=int(doc["problem"]),
            guidance=str(doc["guidance"]),
            theta=float(doc["theta"]),
            alpha=float(doc["alpha"]),
            seed=int(doc["seed"]),
            outputs=[list(map(int, out)) for out in doc["outputs"]],
            correct=[bool(c) for c in doc["correct"]],
            guidance_seconds=float(doc.get("guidance_seconds", 0.0)),
            total_seconds=float(doc.get("total_seconds", 0.0)),
            per_step_guidance_seconds=list(doc.get("per_step_guidance_seconds", [])),
            final_features=list(doc.get("final_features", [])),
            failed=bool(doc.get("failed", False)),
            error=str(doc.get("error", "")),
        )
        if not report.failed and len(report.correct) != len(report.outputs):
            raise InvalidInputError("RunReport: flags and outputs disagree in length")
        return report


@dataclass
class GridSpec:
    """The experiment grid: every combination becomes one run."""

    temperatures: list
    alphas: list
    guidances: list
    seeds: list
    problems: list

    def __post_init__(self):
        for name in ("temperatures", "alphas", "guidances", "seeds", "problems"):
            if not getattr(self, name):
                raise InvalidInputError(f"GridSpec: {name} must be non-empty")

    def cells(self):
        """Unique cells; baseline guidance collapses its alpha axis to 0."""
        seen = set()
        for guidance, theta, alpha, seed, problem in itertools.product(
            self.guidances, self.temperatures, self.alphas, self.seeds, self.problems
        ):
            if guidance == "none":
                alpha = 0.0
            key = (guidance, float(theta), float(alpha), seed, problem)
            if key not in seen:
                seen.add(key)
                yield key


def final_feature_vectors(outputs, vocab: int, prompt_len: int = 0) -> np.ndarray:
    """Token-presence features of finished sequences (max-pooled one-hots)."""
    feats = np.zeros((len(outputs), vocab), dtype=np.float64)
    for i, seq in enumerate(outputs):
        feats[i, np.asarray(seq, dtype=np.int64)[prompt_len:]] = 1.0
    return feats


def run_single(task: PlantedTask, config: GenerationConfig, problem: int = 0,
               prompt=None) -> RunReport:
    """Generate one batch on a planted task and grade every sample."""
    run = run_generation(PlantedDenoiser(task), config, prompt=prompt)
    outputs = [seq.tolist() for seq in run.sequences]
    flags = [bool(check_answer(task, seq)) for seq in run.sequences]
    feats = final_feature_vectors(run.sequences, task.vocab, run.state.prompt_len)
    return RunReport(
        problem=problem,
        guidance=config.guidance,
        theta=config.temperature,
        alpha=config.alpha if config.guidance != "none" else 0.0,
        seed=config.seed,
        outputs=outputs,
        correct=flags,
        guidance_seconds=float(sum(run.guidance_seconds)),
        total_seconds=run.total_seconds,
        per_step_guidance_seconds=list(run.guidance_seconds),
        final_features=feats.tolist(),
    )


def pass_at_k(reports, k: int) -> float:
    """Fraction of problems whose first k outputs contain a correct one."""
    reports = list(reports)
    if not reports:
        raise InvalidInputError("pass_at_k: no reports")
    if k < 1:
        raise InvalidInputError("pass_at_k: k must be >= 1")
    for report in reports:
        if k > report.batch:
            raise InvalidInputError(
                f"pass_at_k: k={k} exceeds batch size {report.batch}"
            )
    hits = sum(1 for report in reports if any(report.correct[:k]))
    return hits / len(reports)


def union_coverage(reports) -> tuple[int, float]:
    """Problems solved in at least one run of any configuration."""
    reports = list(reports)
    if not reports:
        raise InvalidInputError("union_coverage: no reports")
    solved = {}
    for report in reports:
        hit = (not report.failed) and any(report.correct)
        solved[report.problem] = solved.get(report.problem, False) or hit
    count = sum(solved.values())
    return count, count / len(solved)


def pairwise_diversity(items) -> float:
    """Mean over unordered pairs of one minus cosine similarity.

    Token sequences are turned into L2-normalized vocabulary histograms;
    float vectors are compared directly.
    """
    rows = [np.asarray(item) for item in items]
    if len(rows) < 2:
        raise InvalidInputError("pairwise_diversity: need at least two items")
    if rows[0].dtype.kind in "iu":
        width = int(max(r.max() for r in rows)) + 1
        rows = [np.bincount(r, minlength=width).astype(np.float64) for r in rows]
    else:
        rows = [r.astype(np.float64) for r in rows]
    normed = []
    for r in rows:
        norm = np.linalg.norm(r)
        normed.append(r / norm if norm > 0 else r)
    total, pairs = 0.0, 0
    for i in range(len(normed)):
        for j in range(i + 1, len(normed)):
            term = 1.0 - float(np.dot(normed[i], normed[j]))
            total += min(2.0, max(0.0, term))
            pairs += 1
    return total / pairs


def invariance_check(model, config: GenerationConfig, m: int, b1: int, b2: int,
                     prompt=None) -> bool:
    """Do the first m outputs agree between batch sizes b1 and b2?"""
    if not (1 <= m <= b1 < b2):
        raise InvalidInputError("invariance_check: need 1 <= m <= b1 < b2")
    small = run_generation(model, replace(config, batch=b1), prompt=prompt).sequences
    large = run_generation(model, replace(config, batch=b2), prompt=prompt).sequences
    return all(np.array_equal(small[i], large[i]) for i in range(m))


def _run_cell(task_factory, base_config, cell) -> RunReport:
    guidance, theta, alpha, seed, problem = cell
    config = replace(
        base_config,
        guidance=guidance, temperature=theta, alpha=alpha, seed=seed,
    )
    try:
        produced = task_factory(problem)
        task, prompt = produced if isinstance(produced, tuple) else (produced, None)
        return run_single(task, config, problem=problem, prompt=prompt)
    except Exception as exc:  # a failed cell is recorded, never fatal
        return RunReport(
            problem=problem, guidance=guidance, theta=theta, alpha=alpha,
            seed=seed, failed=True,
            error=f"{type(exc).__name__}: {exc}",
        )


def grid_run(spec: GridSpec, task_factory, base_config: GenerationConfig,
             jobs: int = 1, log=None):
    """Run every grid cell and aggregate pass@k per configuration.

    Returns (reports, aggregates); aggregates come from aggregate_reports,
    so regenerating them later from persisted reports is bit-identical.
    """
    from .reporting import aggregate_reports

    cells = list(spec.cells())
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(lambda c: _run_cell(task_factory, base_config, c), cells))
    else:
        reports = [_run_cell(task_factory, base_config, c) for c in cells]
    if log is not None:
        for cell, report in zip(cells, reports):
            status = "failed" if report.failed else "ok"
            log(f"cell guidance={cell[0]} theta={cell[1]} alpha={cell[2]} "
                f"seed={cell[3]} problem={cell[4]}: {status}")
    return reports, aggregate_reports(reports)


def overhead_profile(model, config: GenerationConfig, repeats: int = 3):
    """Compare wall time with and without guidance under identical seeds.

    Returns a dict with per-batch means for the guided and baseline runs,
    the relative overhead fraction, and the model-independent time spent
    inside the guidance hook itself.
    """
    if config.guidance == "none":
        baseline = replace(config)
        guided = None
    else:
        baseline = replace(config, guidance="none")
        guided = config
    run_generation(model, baseline)  # warmup both paths before timing
    if guided is not None:
        run_generation(model, guided)
    base_times, guided_times, hook_times = [], [], []
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        run_generation(model, baseline)
        base_times.append(time.perf_counter() - t0)
        if guided is not None:
            t0 = time.perf_counter()
            run = run_generation(model, guided)
            guided_times.append(time.perf_counter() - t0)
            hook_times.append(sum(run.guidance_seconds))
    base_s = float(np.median(base_times))
    if guided is None:
        return {
            "baseline_seconds": base_s,
            "guided_seconds": base_s,
            "overhead_fraction": 0.0,
            "hook_seconds": 0.0,
        }
    guided_s = float(np.median(guided_times))
    return {
        "baseline_seconds": base_s,
        "guided_seconds": guided_s,
        "overhead_fraction": (guided_s - base_s) / base_s,
        "hook_seconds": float(np.median(hook_times)),
    }
