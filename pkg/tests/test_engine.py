import numpy as np
import pytest

from divdiff.engine import (
    GenerationConfig,
    denoise_step,
    generate_batch,
    run_generation,
    sample_stream,
    sample_tokens,
)
from divdiff.errors import ContractError, InvalidInputError
from divdiff.models import PlantedDenoiser, default_problem, default_task
from divdiff.state import MaskState, build_schedule, forward_mask, mask_token


class TestBuildSchedule:
    def test_even_split(self):
        sched = build_schedule(64, 32)
        assert sched.unmask_counts == [2] * 32

    def test_remainder_goes_first(self):
        assert build_schedule(7, 3).unmask_counts == [3, 2, 2]

    def test_one_per_step(self):
        assert build_schedule(5, 5).unmask_counts == [1] * 5

    def test_gamma_linear(self):
        sched = build_schedule(10, 4)
        np.testing.assert_allclose(sched.gamma, [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_too_many_steps(self):
        with pytest.raises(InvalidInputError):
            build_schedule(3, 4)


class TestForwardMask:
    def test_t_zero_is_identity(self, rng):
        sched = build_schedule(16, 4)
        tokens = rng.integers(0, 9, size=16)
        out = forward_mask(tokens, 0, sched, rng, vocab=9)
        np.testing.assert_array_equal(out, tokens)

    def test_t_final_masks_everything(self, rng):
        sched = build_schedule(16, 4)
        out = forward_mask(rng.integers(0, 9, size=16), 4, sched, rng, vocab=9)
        assert np.all(out == mask_token(9))

    def test_out_of_range(self, rng):
        sched = build_schedule(8, 2)
        with pytest.raises(InvalidInputError):
            forward_mask(np.zeros(8, dtype=int), 3, sched, rng, vocab=4)

    def test_masked_fraction_matches_binomial_oracle(self):
        # gamma = 0.5, S = 10000: every one of 100 fixed seeds stays within
        # 0.5 +/- 0.02 (4 sigma of the binomial)
        sched = build_schedule(10000, 2)
        tokens = np.zeros(10000, dtype=np.int64)
        for seed in range(100):
            gen = np.random.default_rng(seed)
            out = forward_mask(tokens, 1, sched, gen, vocab=3)
            fraction = np.mean(out == mask_token(3))
            assert abs(fraction - 0.5) <= 0.02


class TestSampleTokens:
    def test_greedy_argmax(self):
        logits = np.array([[[1.0, 3.0, 2.0]]])
        proposals, conf = sample_tokens(logits, 0.0, [])
        assert proposals[0, 0] == 1 and conf[0, 0] == 1.0

    def test_greedy_tie_lowest_id(self):
        proposals, _ = sample_tokens(np.array([[[5.0, 5.0, 0.0]]]), 0.0, [])
        assert proposals[0, 0] == 0

    def test_uniform_draw_frequencies(self):
        # 100000 draws from uniform logits: each token within 3 binomial sigma
        v, n = 5, 100000
        logits = np.zeros((1, n, v))
        rngs = [sample_stream(123, 0, 0)]
        proposals, conf = sample_tokens(logits, 1.0, rngs)
        counts = np.bincount(proposals[0], minlength=v)
        sigma = np.sqrt((1 / v) * (1 - 1 / v) / n)
        assert np.all(np.abs(counts / n - 1 / v) <= 3 * sigma)
        np.testing.assert_allclose(conf, 1 / v)

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidInputError):
            sample_tokens(np.array([[[np.nan, 0.0]]]), 0.0, [])

    def test_negative_temperature_rejected(self):
        with pytest.raises(InvalidInputError):
            sample_tokens(np.zeros((1, 1, 2)), -0.1, [])


class FixedDenoiser:
    """Returns a constant logits tensor regardless of the state."""

    def __init__(self, logits):
        self.logits = np.asarray(logits, dtype=np.float64)
        self.vocab = self.logits.shape[-1]

    def predict(self, state, step):
        b = state.batch
        return np.broadcast_to(self.logits, (b,) + self.logits.shape[-2:]).copy()


class TestDenoiseStep:
    def test_single_step_commits_everything(self, rng):
        logits = rng.normal(size=(1, 6, 5))
        model = FixedDenoiser(logits[0])
        config = GenerationConfig(temperature=0.0, steps=1, length=6, batch=1)
        state = MaskState.fully_masked(1, 6, 5)
        out = denoise_step(model, state, 0, config, build_schedule(6, 1))
        assert not out.masked.any()
        np.testing.assert_array_equal(out.realized[0], np.argmax(logits[0], axis=-1))

    def test_commit_count_exact(self, rng):
        sched = build_schedule(10, 4)
        model = FixedDenoiser(rng.normal(size=(10, 7)))
        config = GenerationConfig(temperature=1.0, steps=4, length=10, batch=3)
        state = MaskState.fully_masked(3, 10, 7)
        for t in range(4):
            new = denoise_step(model, state, t, config, sched)
            committed = (state.masked & ~new.masked).sum(axis=1)
            assert np.all(committed == sched.unmask_counts[t])
            state = new

    def test_shape_mismatch_is_contract_error(self):
        model = FixedDenoiser(np.zeros((4, 3)))
        config = GenerationConfig(steps=2, length=6, batch=1)
        state = MaskState.fully_masked(1, 6, 3)
        with pytest.raises(ContractError):
            denoise_step(model, state, 0, config, build_schedule(6, 2))

    def test_alpha_zero_guidance_matches_none(self):
        task = default_task(3)
        model = PlantedDenoiser(task)
        base = GenerationConfig(
            temperature=1.0, steps=task.length, length=task.length, batch=4, seed=9
        )
        plain = generate_batch(model, base)
        guided = generate_batch(
            model,
            GenerationConfig(
                temperature=1.0, steps=task.length, length=task.length, batch=4,
                seed=9, guidance="odd", alpha=0.0,
            ),
        )
        for a, b in zip(plain, guided):
            np.testing.assert_array_equal(a, b)


class TestGenerateBatch:
    def test_greedy_collapse(self):
        task = default_task(0)
        config = GenerationConfig(
            temperature=0.0, steps=task.length, length=task.length, batch=5, seed=1
        )
        seqs = generate_batch(PlantedDenoiser(task), config)
        for seq in seqs[1:]:
            np.testing.assert_array_equal(seq, seqs[0])
        np.testing.assert_array_equal(seqs[0], task.templates[0])

    def test_deterministic_given_seed(self):
        task = default_task(1)
        config = GenerationConfig(
            temperature=1.5, steps=task.length, length=task.length, batch=6, seed=77
        )
        first = generate_batch(PlantedDenoiser(task), config)
        second = generate_batch(PlantedDenoiser(task), config)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)

    def test_no_mask_in_output_and_commitment_is_final(self):
        task, prompt = default_problem(2)
        config = GenerationConfig(
            temperature=1.0, steps=task.length - 1, length=task.length, batch=4, seed=5
        )
        states = []

        def recorder(logits, state, remaining):
            states.append(state.copy())
            return logits

        run = run_generation(PlantedDenoiser(task), config, prompt=prompt, guidance=recorder)
        assert not run.state.masked.any()
        for seq in run.sequences:
            assert seq.max() < task.vocab
        # positions committed at step t never change afterwards
        for earlier, later in zip(states, states[1:]):
            done = ~earlier.masked
            assert np.all(~later.masked[done])
            np.testing.assert_array_equal(later.realized[done], earlier.realized[done])

    def test_prefix_invariance_under_odd(self):
        task, prompt = default_problem(4)
        base = dict(
            temperature=1.0, steps=task.length - 1, length=task.length,
            seed=13, guidance="odd", alpha=16.0,
        )
        model = PlantedDenoiser(task)
        small = generate_batch(model, GenerationConfig(batch=8, **base), prompt=prompt)
        large = generate_batch(model, GenerationConfig(batch=16, **base), prompt=prompt)
        for i in range(8):
            np.testing.assert_array_equal(small[i], large[i])

    def test_per_sample_streams_do_not_depend_on_batch(self):
        task = default_task(5)
        base = dict(temperature=2.0, steps=task.length, length=task.length, seed=21)
        model = PlantedDenoiser(task)
        small = generate_batch(model, GenerationConfig(batch=3, **base))
        large = generate_batch(model, GenerationConfig(batch=9, **base))
        for i in range(3):
            np.testing.assert_array_equal(small[i], large[i])

    def test_prompt_positions_never_masked(self):
        task, prompt = default_problem(6)
        config = GenerationConfig(
            temperature=1.0, steps=task.length - 1, length=task.length, batch=2, seed=0
        )
        run = run_generation(PlantedDenoiser(task), config, prompt=prompt)
        for seq in run.sequences:
            assert seq[0] == prompt[0]

    def test_prompt_too_long(self):
        task = default_task(0)
        config = GenerationConfig(steps=2, length=4, batch=1)
        with pytest.raises(InvalidInputError):
            run_generation(PlantedDenoiser(task), config, prompt=np.zeros(4, dtype=int))


class TestConfigValidation:
    def test_rejects_bad_guidance(self):
        with pytest.raises(InvalidInputError):
            GenerationConfig(guidance="both").validate()

    def test_rejects_negative_temperature(self):
        with pytest.raises(InvalidInputError):
            GenerationConfig(temperature=-1.0).validate()
