"""Reverse generation loop with confidence remasking and a guidance hook.

Each step asks the denoiser for a full logits batch, lets the configured
guidance rewrite those logits, samples proposals, and commits the highest
confidence masked positions per the schedule. Randomness comes from
streams keyed by (seed, sample, step), so every sample's draws are
independent of the batch size and of the host thread count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractError, InvalidInputError
from .linalg import softmax_rows
from .state import MaskState, Schedule, build_schedule

GUIDANCE_KINDS = ("none", "odd", "dpp")
ANNEAL_MODES = ("factor", "linear", "off")

_SEED_MASK = (1 << 64) - 1


@dataclass
class GenerationConfig:
    """Knobs for one generation run."""

    temperature: float = 0.0
    steps: int = 32
    length: int = 64
    batch: int = 16
    seed: int = 0
    guidance: str = "none"
    alpha: float = 16.0
    tolerance: float = 1e-8
    jitter: float = 1e-3
    anneal: str = "factor"
    feature_top_k: int | None = None

    def validate(self) -> "GenerationConfig":
        if self.temperature < 0:
            raise InvalidInputError("temperature must be >= 0")
        if self.steps < 1 or self.length < 1 or self.batch < 1:
            raise InvalidInputError("steps, length and batch must be >= 1")
        if self.guidance not in GUIDANCE_KINDS:
            raise InvalidInputError(f"unknown guidance {self.guidance!r}")
        if self.anneal not in ANNEAL_MODES:
            raise InvalidInputError(f"unknown anneal mode {self.anneal!r}")
        if self.alpha < 0:
            raise InvalidInputError("alpha must be >= 0")
        if self.tolerance <= 0 or self.jitter <= 0:
            raise InvalidInputError("tolerance and jitter must be > 0")
        if self.feature_top_k is not None and self.feature_top_k < 1:
            raise InvalidInputError("feature_top_k must be >= 1 when set")
        return self


def sample_stream(seed: int, sample: int, step: int) -> np.random.Generator:
    """Random stream for one sample at one step, invariant to batch size."""
    return np.random.default_rng([seed & _SEED_MASK, sample, step])


def sample_tokens(logits, temperature: float, rngs) -> tuple[np.ndarray, np.ndarray]:
    """Propose one token per position with its confidence.

    temperature 0 takes the per-position argmax (ties to the lowest token
    id) with confidence 1; otherwise draws from softmax(logits / theta)
    using each sample's own stream, with confidence equal to the drawn
    token's probability.
    """
    x = np.asarray(logits, dtype=np.float64)
    if x.ndim != 3:
        raise InvalidInputError("sample_tokens: expected a (B, S, V) logits batch")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("sample_tokens: non-finite logits")
    if temperature < 0:
        raise InvalidInputError("sample_tokens: temperature must be >= 0")
    b, s, v = x.shape
    if temperature == 0.0:
        proposals = np.argmax(x, axis=-1)
        return proposals, np.ones((b, s), dtype=np.float64)
    probs = softmax_rows(x / temperature)
    cdf = np.cumsum(probs, axis=-1)
    proposals = np.empty((b, s), dtype=np.int64)
    for i in range(b):
        u = rngs[i].random(s)
        proposals[i] = np.minimum((cdf[i] < u[:, None]).sum(axis=-1), v - 1)
    confidences = np.take_along_axis(probs, proposals[..., None], axis=-1)[..., 0]
    return proposals, confidences


def make_guidance_hook(config: GenerationConfig):
    """Build the per-step logits hook for the configured guidance, or None."""
    if config.guidance == "none":
        return None
    if config.guidance == "odd":
        from .odd import OddParams, odd_step

        params = OddParams(
            alpha=config.alpha, tolerance=config.tolerance, anneal=config.anneal
        )

        def hook(logits, state, remaining):
            return odd_step(
                logits, state, params, remaining,
                total_steps=config.steps, top_k=config.feature_top_k,
            )

        return hook
    if config.guidance == "dpp":
        from .dpp import DppParams, dpp_step

        params = DppParams(
            alpha=config.alpha, jitter=config.jitter, anneal=config.anneal
        )

        def hook(logits, state, remaining):
            return dpp_step(
                logits, state, params, remaining,
                total_steps=config.steps, top_k=config.feature_top_k,
            )

        return hook
    raise InvalidInputError(f"unknown guidance {config.guidance!r}")


def denoise_step(model, state: MaskState, t: int, config: GenerationConfig,
                 schedule: Schedule | None = None, guidance=None) -> MaskState:
    """One reverse step: predict, guide, sample, commit the top confidences.

    Per sample, the unmask_counts[t] masked positions with the highest
    confidence are committed (ties to the lowest position index); the rest
    stay masked. Committed positions are never revisited.
    """
    if schedule is None:
        schedule = build_schedule(state.length - state.prompt_len, config.steps)
    if not 0 <= t < schedule.steps:
        raise InvalidInputError(f"denoise_step: step {t} outside [0, {schedule.steps})")
    logits = np.asarray(model.predict(state, t), dtype=np.float64)
    expected = (state.batch, state.length, state.vocab)
    if logits.shape != expected:
        raise ContractError(f"model returned logits {logits.shape}, expected {expected}")
    if guidance is not None:
        logits = np.asarray(guidance(logits, state, schedule.steps - t), dtype=np.float64)
        if logits.shape != expected:
            raise ContractError("guidance hook changed the logits shape")
    if config.temperature == 0.0:
        rngs = []  # argmax proposals consume no randomness
    else:
        rngs = [sample_stream(config.seed, i, t) for i in range(state.batch)]
    proposals, confidences = sample_tokens(logits, config.temperature, rngs)
    need = schedule.unmask_counts[t]
    out = state.copy()
    for i in range(state.batch):
        cand = np.flatnonzero(state.masked[i])
        if cand.size < need:
            raise ContractError(
                f"sample {i} has {cand.size} masked positions, schedule needs {need}"
            )
        order = np.argsort(-confidences[i, cand], kind="stable")
        chosen = cand[order[:need]]
        out.realized[i, chosen] = proposals[i, chosen]
        out.masked[i, chosen] = False
    return out


@dataclass
class GenerationRun:
    """Everything one run produced, including hook timings."""

    sequences: list[np.ndarray]
    state: MaskState
    guidance_seconds: list[float] = field(default_factory=list)
    total_seconds: float = 0.0


def run_generation(model, config: GenerationConfig, prompt=None,
                   guidance="auto") -> GenerationRun:
    """Run all steps from the fully masked state and return the full record.

    Deterministic given (seed, model, config). Pass guidance explicitly to
    override the hook built from the config (None disables guidance).
    """
    config.validate()
    prompt_arr = None if prompt is None else np.asarray(prompt, dtype=np.int64)
    plen = 0 if prompt_arr is None else prompt_arr.size
    if plen >= config.length:
        raise InvalidInputError("prompt must be shorter than the generation length")
    schedule = build_schedule(config.length - plen, config.steps)
    state = MaskState.fully_masked(config.batch, config.length, model.vocab, prompt_arr)
    hook = make_guidance_hook(config) if guidance == "auto" else guidance
    times: list[float] = []
    timed = None
    if hook is not None:
        def timed(logits, st, remaining):
            t0 = time.perf_counter()
            result = hook(logits, st, remaining)
            times.append(time.perf_counter() - t0)
            return result
    start = time.perf_counter()
    for t in range(schedule.steps):
        state = denoise_step(model, state, t, config, schedule, timed)
    total = time.perf_counter() - start
    if state.masked.any():
        raise ContractError("generation finished with masked positions")
    seqs = [state.realized[i].copy() for i in range(config.batch)]
    return GenerationRun(seqs, state, times, total)


def generate_batch(model, config: GenerationConfig, prompt=None) -> list[np.ndarray]:
    """Generate a batch of fully realized sequences."""
    return run_generation(model, config, prompt).sequences


def config_with(config: GenerationConfig, **kwargs) -> GenerationConfig:
    """Copy a config with some fields replaced."""
    return replace(config, **kwargs)
