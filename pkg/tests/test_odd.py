import numpy as np
import pytest

from conftest import random_state
from divdiff.errors import DegenerateInputError, InvalidInputError
from divdiff.features import FeatureSet, feature_set
from divdiff.gradcheck import fd_odd_gradient, frozen_odd_targets, has_pool_tie, run_odd_suite
from divdiff.odd import (
    OddParams,
    OrthoBasis,
    anneal_alpha,
    extend_basis,
    odd_losses,
    odd_step,
    project_onto_basis,
)

E1 = np.array([1.0, 0.0])
E2 = np.array([0.0, 1.0])


def features_only(vectors, qualities=None):
    v = np.asarray(vectors, dtype=np.float64)
    q = np.ones(v.shape[0]) if qualities is None else np.asarray(qualities, dtype=np.float64)
    return FeatureSet(features=v, routing=np.zeros(v.shape, dtype=np.int64), qualities=q)


class TestProjection:
    def test_single_axis(self):
        basis = OrthoBasis([E1])
        np.testing.assert_allclose(project_onto_basis(basis, [3.0, 4.0]), [3.0, 0.0])

    def test_empty_basis(self):
        assert not project_onto_basis(OrthoBasis([]), [1.0, 2.0]).any()

    def test_full_span_reproduces_input(self, rng):
        vectors = np.linalg.qr(rng.normal(size=(4, 4)))[0]
        basis = OrthoBasis([vectors[:, i] for i in range(4)])
        v = rng.normal(size=4)
        np.testing.assert_allclose(project_onto_basis(basis, v), v, atol=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            project_onto_basis(OrthoBasis([E1]), [1.0, 2.0, 3.0])


class TestExtendBasis:
    def test_orthogonal_vector_appends(self):
        basis = extend_basis(OrthoBasis([E1]), E2)
        assert len(basis) == 2
        np.testing.assert_allclose(basis.vectors[1], E2)

    def test_duplicate_direction_is_noop(self):
        basis = OrthoBasis([E1])
        assert extend_basis(basis, 2.5 * E1) is basis

    def test_oblique_vector_normalizes_residual(self):
        basis = extend_basis(OrthoBasis([E1]), np.array([1.0, 1.0]) / np.sqrt(2))
        np.testing.assert_allclose(basis.vectors[1], E2, atol=1e-12)

    def test_orthonormality_survives_near_dependence(self, rng):
        basis = OrthoBasis([], tolerance=1e-8)
        base = rng.normal(size=24)
        for k in range(12):
            # vectors nearly inside the current span
            noise = rng.normal(size=24) * 1e-6
            basis = extend_basis(basis, base + k * noise)
        gram = np.array([[float(np.dot(a, b)) for b in basis.vectors] for a in basis.vectors])
        np.testing.assert_allclose(gram, np.eye(len(basis)), atol=1e-7)


class TestAnnealAlpha:
    def test_final_step_unguided(self):
        assert anneal_alpha(16.0, 1) == 0.0

    def test_printed_formula(self):
        assert anneal_alpha(16.0, 32) == pytest.approx((1 - 1 / 32) * 16.0)

    def test_zero_alpha(self):
        assert anneal_alpha(0.0, 7) == 0.0

    def test_off_mode(self):
        assert anneal_alpha(5.0, 1, mode="off") == 5.0

    def test_linear_mode(self):
        assert anneal_alpha(10.0, 1, mode="linear", total_steps=5) == 0.0
        assert anneal_alpha(10.0, 5, mode="linear", total_steps=5) == 10.0
        assert anneal_alpha(10.0, 3, mode="linear", total_steps=5) == pytest.approx(5.0)

    def test_invalid_remaining(self):
        with pytest.raises(InvalidInputError):
            anneal_alpha(1.0, 0)


class TestOddLosses:
    def test_single_sample_seeds_basis(self):
        fs = features_only([[3.0, 0.0]])
        losses, dirs, basis = odd_losses(fs, 1e-8)
        assert losses == [] and dirs == []
        np.testing.assert_allclose(basis.vectors[0], E1)

    def test_orthogonal_second_sample(self):
        fs = features_only([[1.0, 0.0], [0.0, 2.0]])
        losses, dirs, _ = odd_losses(fs, 1e-8)
        assert losses[0] == pytest.approx(-2.0)
        np.testing.assert_allclose(dirs[0], E2)

    def test_duplicate_sample_guarded(self):
        fs = features_only([[1.0, 1.0], [1.0, 1.0]])
        losses, dirs, basis = odd_losses(fs, 1e-8)
        assert losses[0] == 0.0 and dirs[0] is None
        assert len(basis) == 1

    def test_quality_weighting(self):
        fs = features_only([[1.0, 0.0], [0.0, 1.0]], qualities=[1.0, 0.25])
        losses, _, _ = odd_losses(fs, 1e-8)
        assert losses[0] == pytest.approx(-0.25)

    def test_degenerate_first_feature(self):
        fs = features_only([[0.0, 0.0], [1.0, 0.0]])
        with pytest.raises(DegenerateInputError):
            odd_losses(fs, 1e-8)


def guided_instance(seed, batch=3, length=4, vocab=6):
    gen = np.random.default_rng(seed)
    while True:
        logits = gen.normal(0, 1.5, size=(batch, length, vocab))
        state = random_state(gen, batch, length, vocab)
        if not has_pool_tie(logits, state):
            return logits, state


class TestOddStep:
    def test_alpha_zero_identity(self, rng):
        logits, state = guided_instance(1)
        out = odd_step(logits, state, OddParams(alpha=0.0), t=5)
        np.testing.assert_array_equal(out, logits)

    def test_single_sample_identity(self, rng):
        logits, state = guided_instance(2, batch=1)
        out = odd_step(logits, state, OddParams(alpha=8.0, anneal="off"), t=5)
        np.testing.assert_array_equal(out, logits)

    def test_first_sample_bit_identical(self):
        logits, state = guided_instance(3)
        out = odd_step(logits, state, OddParams(alpha=4.0, anneal="off"), t=5)
        np.testing.assert_array_equal(out[0], logits[0])
        assert np.abs(out[1:] - logits[1:]).max() > 0

    def test_final_step_anneal_is_identity(self):
        logits, state = guided_instance(4)
        out = odd_step(logits, state, OddParams(alpha=64.0), t=1)
        np.testing.assert_array_equal(out, logits)

    def test_matches_gradient_descent_oracle(self):
        # update equals X - alpha * (frozen-constant finite-difference gradient)
        logits, state = guided_instance(5, batch=2, length=1, vocab=3)
        alpha = 0.5
        out = odd_step(logits, state, OddParams(alpha=alpha, anneal="off"), t=9)
        numeric = fd_odd_gradient(logits, state, 1e-8, h=1e-4)
        expected = logits - alpha * numeric
        scale = max(np.abs(out - logits).max(), 1e-9)
        assert np.abs(out - expected).max() / scale <= 1e-5

    def test_prefix_determinism_bitwise(self):
        logits, state = guided_instance(6, batch=6, length=4, vocab=7)
        params = OddParams(alpha=3.0, anneal="off")
        full = odd_step(logits, state, params, t=4)
        for m in (2, 3, 5):
            sliced_state = type(state)(
                state.masked[:m].copy(), state.realized[:m].copy(), state.vocab
            )
            part = odd_step(logits[:m], sliced_state, params, t=4)
            np.testing.assert_array_equal(part, full[:m])

    def test_no_gradient_leakage_from_later_samples(self):
        logits, state = guided_instance(7, batch=4, length=3, vocab=5)
        params = OddParams(alpha=2.0, anneal="off")
        out = odd_step(logits, state, params, t=3)
        bumped = logits.copy()
        bumped[3] += 0.37
        out2 = odd_step(bumped, state, params, t=3)
        np.testing.assert_array_equal(out2[:3], out[:3])

    def test_zero_residual_sample_untouched(self):
        gen = np.random.default_rng(8)
        logits = gen.normal(size=(1, 3, 4))
        logits = np.concatenate([logits, logits], axis=0)  # sample 2 duplicates sample 1
        state = random_state(gen, 1, 3, 4)
        state = type(state)(
            np.concatenate([state.masked] * 2), np.concatenate([state.realized] * 2),
            state.vocab,
        )
        out = odd_step(logits, state, OddParams(alpha=5.0, anneal="off"), t=2)
        np.testing.assert_array_equal(out, logits)

    def test_basis_orthonormal_after_step(self):
        gen = np.random.default_rng(9)
        for _ in range(5):
            logits = gen.normal(0, 1.5, size=(16, 4, 32))
            state = random_state(gen, 16, 4, 32)
            fs, _ = feature_set(logits, state)
            _, _, basis = odd_losses(fs, 1e-8)
            gram = np.array(
                [[float(np.dot(a, b)) for b in basis.vectors] for a in basis.vectors]
            )
            np.testing.assert_allclose(gram, np.eye(len(basis)), atol=1e-7)

    def test_first_order_descent(self):
        # the frozen-constants objective decreases for small alpha
        for seed in range(5):
            logits, state = guided_instance(30 + seed, batch=4, length=4, vocab=6)
            fs0, _ = feature_set(logits, state)
            targets = frozen_odd_targets(fs0.features, 1e-8)
            q0 = fs0.qualities.copy()

            def frozen_loss(x):
                fs, _ = feature_set(x, state)
                total = 0.0
                for i in range(1, x.shape[0]):
                    total += -q0[i] * np.linalg.norm(fs.features[i] - targets[i - 1])
                return total

            alpha = 1e-3
            out = odd_step(logits, state, OddParams(alpha=alpha, anneal="off"), t=10)
            assert frozen_loss(out) <= frozen_loss(logits) + 1e-9


def test_odd_gradient_suite():
    result = run_odd_suite(instances=120, seed=31)
    assert result.passed, f"worst relative error {result.worst:.3e}"
