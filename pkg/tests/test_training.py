import numpy as np
import numpy.testing as npt
import pytest

from cirkit.composer import init_params
from cirkit.errors import DataError, EmptyDataset
from cirkit.oracles import params_to_vector
from cirkit.synthesis import SynthConfig
from cirkit.training import (
    AdamState,
    ModelConfig,
    TrainConfig,
    adam_step,
    train_on_items,
    train_on_triplets,
)

from conftest import random_unit

SMALL_MODEL = ModelConfig(d_img=16, d_h=32, d_out=16, vocab_buckets=256)


def test_zero_steps_returns_init(corpus64):
    cfg = TrainConfig(steps=0, seed=3)
    result = train_on_items(corpus64, SMALL_MODEL, cfg)
    expected = init_params(16, 32, 16, 256, tau=SMALL_MODEL.tau, seed=3)
    npt.assert_array_equal(
        params_to_vector(result.params), params_to_vector(expected)
    )
    assert result.losses == []


def test_fixed_seed_identical_traces(corpus64):
    cfg = TrainConfig(steps=20, seed=4, synth=SynthConfig(seed=4))
    a = train_on_items(corpus64, SMALL_MODEL, cfg)
    b = train_on_items(corpus64, SMALL_MODEL, cfg)
    assert a.losses == b.losses
    assert params_to_vector(a.params).tobytes() == params_to_vector(b.params).tobytes()


def test_loss_decreases_on_overfit_task(corpus64):
    cfg = TrainConfig(steps=120, seed=0, synth=SynthConfig(seed=0))
    result = train_on_items(corpus64, SMALL_MODEL, cfg)
    assert result.losses[-1] < result.losses[0]
    assert np.mean(result.losses[-20:]) < np.mean(result.losses[:20])


def test_empty_dataset_rejected():
    with pytest.raises(EmptyDataset):
        train_on_items([], SMALL_MODEL, TrainConfig(steps=1))


def test_config_validation():
    with pytest.raises(DataError):
        TrainConfig(batch_size=1).validate()
    with pytest.raises(DataError):
        TrainConfig(steps=-1).validate()


def test_tau_stays_clamped(corpus64):
    cfg = TrainConfig(steps=30, seed=1, learning_rate=0.5, synth=SynthConfig(seed=1))
    result = train_on_items(corpus64, SMALL_MODEL, cfg)
    assert 0.01 <= result.params.tau <= 1.0


def test_train_on_triplets_runs(rng):
    triplets = []
    for k in range(8):
        triplets.append(
            (random_unit(rng, 6), f"text token{k}", random_unit(rng, 5))
        )
    model = ModelConfig(d_img=6, d_h=8, d_out=5, vocab_buckets=32)
    cfg = TrainConfig(steps=40, batch_size=8, seed=2)
    result = train_on_triplets(triplets, model, cfg)
    assert len(result.losses) == 40
    assert result.losses[-1] < result.losses[0]


def test_adam_moves_toward_minimum():
    # minimize f(params) = sum of squares of one tensor via its gradient
    params = init_params(3, 4, 3, 8, seed=0)
    state = AdamState.for_params(params)
    from cirkit.composer import zero_like_params

    for _ in range(400):
        grads = zero_like_params(params)
        grads.w_g = 2.0 * params.w_g
        adam_step(params, grads, state, lr=0.05)
    assert np.abs(params.w_g).max() < 1e-3
