import math
import time

import numpy as np
import pytest
from pytest import approx

from errors import (
    DegenerateStateError,
    InvalidBatchError,
    InvalidConfigError,
    InvalidRewardError,
    InvalidStateError,
)
from rewards import (
    GLOBAL_REWARDS,
    LOCAL_REWARDS,
    RewardSample,
    SequentialRewardCalculator,
    ThreadPoolRewardCalculator,
    cos_sim_reward,
    cosine_similarity,
    draw_reward_batches,
    global_reward_gradnorm,
    local_reward_ppl_ratio,
    mean_loss_reward,
    mean_ppl_reward,
    reward_calculator,
    reward_function,
)
from toy_trainer import Batch, ToyLanguageModel, backward_gradients, gradient_norm


def test_cosine_similarity():
    assert cosine_similarity(np.array([1.0, 0.0]), np.array([1.0, 1.0])) == approx(
        0.7071, abs=1e-4
    )
    assert cosine_similarity(np.array([2.0, 0.0]), np.array([-1.0, 0.0])) == -1.0


def test_cosine_of_zero_vector():
    with pytest.raises(DegenerateStateError):
        cosine_similarity(np.zeros(3), np.ones(3))


def test_gradnorm_is_norm_of_batch_gradient(model, batch):
    expected = gradient_norm(backward_gradients(model, batch))
    assert global_reward_gradnorm(model, batch) == approx(expected)
    assert expected > 0


def test_gradnorm_vanishes_at_stationary_model(example):
    model = ToyLanguageModel(
        {
            "embedding": np.ones((3, 2)),
            "hidden_weight": np.zeros((4, 3)),
            "hidden_bias": np.zeros(3),
            "output_weight": np.zeros((3, 2)),
            "output_bias": np.zeros(2),
        },
        context_window=2,
    )
    batch = Batch.of([example(instruction=(0,), response=(0, 1))])
    assert global_reward_gradnorm(model, batch) == approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_mean_perplexity_bounds_exp_of_mean_loss(seed, example, tiny_model_config):
    rng = np.random.default_rng(seed)
    model = ToyLanguageModel.initialize(8, tiny_model_config, seed)
    batch = Batch.of(
        [
            example(
                instruction=rng.integers(8, size=2).tolist(),
                response=rng.integers(8, size=rng.integers(1, 5)).tolist(),
            )
            for _ in range(6)
        ]
    )
    mean_ppl = mean_ppl_reward(model, batch)
    assert mean_ppl >= math.exp(mean_loss_reward(model, batch)) * (1 - 1e-12)


def test_uniform_predictor_rewards(example):
    model = ToyLanguageModel(
        {
            "embedding": np.ones((9, 2)),
            "hidden_weight": np.zeros((4, 3)),
            "hidden_bias": np.zeros(3),
            "output_weight": np.zeros((3, 8)),
            "output_bias": np.zeros(8),
        },
        context_window=2,
    )
    batch = Batch.of([example(response=(0, 7, 3)), example(response=(5,))])
    assert mean_ppl_reward(model, batch) == approx(8.0)
    assert mean_loss_reward(model, batch) == approx(math.log(8))


def test_ppl_ratio_is_one_before_training(model, batch):
    assert local_reward_ppl_ratio(model, model.snapshot(), batch) == approx(1.0)


def test_ppl_ratio_follows_the_model(model, batch):
    snapshot = model.snapshot()
    model.parameters["output_bias"][4] += 2.0
    model.parameters["output_bias"][5] += 2.0
    assert local_reward_ppl_ratio(model, snapshot, batch) < 1.0


def test_ppl_ratio_needs_a_snapshot(model, batch):
    with pytest.raises(InvalidStateError):
        local_reward_ppl_ratio(model, None, batch)


def test_cos_sim_reward_is_bounded(model, batch, example):
    other = Batch.of([example(instruction=(6, 6), response=(7, 0, 1))])
    value = cos_sim_reward(model, batch, other)
    assert -1.0 <= value <= 1.0
    assert cos_sim_reward(model, batch, batch) == approx(1.0)


def test_registries():
    assert list(GLOBAL_REWARDS) == ["gradnorm", "cossim"]
    assert list(LOCAL_REWARDS) == ["ppl_ratio", "ppl", "loss"]
    assert reward_function("global", "cossim").batches_per_unit == 2
    assert reward_function("local", "loss").batches_per_unit == 1
    with pytest.raises(InvalidConfigError, match="gradnorm"):
        reward_function("global", "ppl_ratio")


def test_local_rewards_through_the_registry(model, batch):
    snapshot = model.snapshot()
    ratio = reward_function("local", "ppl_ratio")
    assert ratio(model, snapshot, [batch]) == approx(1.0)
    assert reward_function("local", "loss")(model, None, [batch]) > 0
    assert reward_function("local", "ppl")(model, None, [batch]) > 1


def test_one_batch_is_drawn_with_replacement(example):
    pool = [example(index=n) for n in range(3)]
    [batch] = draw_reward_batches(pool, 7, 1, np.random.default_rng(0))
    assert len(batch) == 7
    assert {e.index for e in batch.examples} <= {0, 1, 2}


def test_two_batches_are_disjoint(example):
    pool = [example(index=n) for n in range(10)]
    first, second = draw_reward_batches(pool, 4, 2, np.random.default_rng(0))
    assert len(first) == len(second) == 4
    assert not {e.index for e in first.examples} & {e.index for e in second.examples}


def test_small_pool_is_split_evenly(example):
    pool = [example(index=n) for n in range(5)]
    first, second = draw_reward_batches(pool, 8, 2, np.random.default_rng(0))
    assert (len(first), len(second)) == (3, 2)


def test_batch_drawing_errors(example):
    rng = np.random.default_rng(0)
    with pytest.raises(InvalidBatchError):
        draw_reward_batches([], 4, 1, rng)
    with pytest.raises(InvalidBatchError):
        draw_reward_batches([example()], 4, 2, rng)


def test_thread_pool_keeps_task_order():
    def task(value, delay):
        def compute():
            time.sleep(delay)
            return value

        return compute

    tasks = [task(v, d) for v, d in [(1.0, 0.05), (2.0, 0.0), (3.0, 0.02)]]
    assert ThreadPoolRewardCalculator(3).compute_rewards(tasks) == [1.0, 2.0, 3.0]
    assert SequentialRewardCalculator().compute_rewards(tasks) == [1.0, 2.0, 3.0]


def test_calculator_choice():
    assert isinstance(reward_calculator(1), SequentialRewardCalculator)
    assert isinstance(reward_calculator(4), ThreadPoolRewardCalculator)


def test_reward_sample():
    sample = RewardSample("local", 1, 2, 0.5, step=200)
    assert sample.to_dict() == {
        "level": "local",
        "subset_id": 1,
        "group_id": 2,
        "value": 0.5,
        "step": 200,
    }
    with pytest.raises(InvalidRewardError):
        RewardSample("global", 0, None, math.nan, step=0)


@pytest.fixture
def model(tiny_model_config):
    return ToyLanguageModel.initialize(8, tiny_model_config, seed=3)


@pytest.fixture
def batch(example):
    return Batch.of(
        [
            example(instruction=(1, 2), response=(4, 5)),
            example(instruction=(3,), response=(5, 4, 4)),
        ]
    )
