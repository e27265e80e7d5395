import math

import numpy as np
import pytest

from mccnn.model import (
    CheckpointError, Ensemble, ModelConfig, count_parameters, ensemble_predict,
    finite_difference_gradients, forward, init_model, load_model, model_gradients, save_model,
    trace_forward,
)
from mccnn.numerics import relative_error

SMALL = ModelConfig(embedding_dim=3, filter_sizes=(1, 2), groups_per_size=(2, 1), group_size=3,
                    hidden_size=4, num_classes=3, ensemble_size=2)


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(filter_sizes=(1, 2), groups_per_size=(1,))
    with pytest.raises(ValueError):
        ModelConfig(hidden_size=0)
    with pytest.raises(ValueError):
        ModelConfig(filter_activation="swish")
    with pytest.raises(ValueError):
        ModelConfig(num_classes=1)
    assert ModelConfig().concat_dim == 154


def test_init_is_deterministic_with_zero_biases():
    a, b, c = init_model(SMALL, 1), init_model(SMALL, 1), init_model(SMALL, 2)
    for k in a.params:
        np.testing.assert_array_equal(a.params[k], b.params[k])
    assert any(not np.array_equal(a.params[k], c.params[k]) for k in a.params)
    for k, v in a.params.items():
        if k.endswith(".biases"):
            assert np.all(v == 0.0)
        else:
            fan_out, fan_in = v.shape
            assert np.all(np.abs(v) <= math.sqrt(6 / (fan_in + fan_out)))


def test_forward_is_probability_vector():
    model = init_model(ModelConfig(embedding_dim=8), 0)
    rng = np.random.default_rng(0)
    for T in (0, 1, 5, 80):
        p = forward(model, rng.normal(size=(T, 8)))
        assert abs(p.sum() - 1) <= 1e-12
        assert np.all((p > 0) & (p < 1))


def test_forward_default_concat_and_groups():
    model = init_model(ModelConfig(embedding_dim=8), 3)
    tr = trace_forward(model, np.random.default_rng(1).normal(size=(6, 8)))
    assert tr.pooled.shape == (154,)
    np.testing.assert_allclose(tr.grouped.reshape(22, 7).sum(axis=1), 1.0, atol=1e-12)


def test_forward_dimension_mismatch():
    with pytest.raises(ValueError):
        forward(init_model(SMALL, 0), np.zeros((4, 5)))


def test_forward_order_invariant_for_width_one_filters():
    cfg = ModelConfig(embedding_dim=4, filter_sizes=(1,), groups_per_size=(3,), group_size=7)
    model = init_model(cfg, 5)
    rng = np.random.default_rng(5)
    for _ in range(20):
        seq = rng.normal(size=(3, 4))
        for perm in ([1, 0, 2], [2, 1, 0], [1, 2, 0]):
            np.testing.assert_array_equal(forward(model, seq), forward(model, seq[perm]))


def _randomize_biases(model, rng):
    for k, v in model.params.items():
        if k.endswith(".biases"):
            v[:] = rng.normal(0, 0.5, v.shape)


@pytest.mark.parametrize("cfg, T", [
    (SMALL, 5),
    (ModelConfig(embedding_dim=2, filter_sizes=(1, 3, 4), groups_per_size=(1, 1, 2), group_size=2,
                 hidden_size=3, num_classes=2, filter_activation="tanh"), 2),
    (ModelConfig(embedding_dim=3, filter_sizes=(2,), groups_per_size=(2,), group_size=2,
                 hidden_size=2, num_classes=4, filter_activation="relu"), 6),
    (ModelConfig(embedding_dim=2, filter_sizes=(3,), groups_per_size=(1,), group_size=2,
                 hidden_size=2, num_classes=2), 0),
])
def test_model_gradients_match_finite_differences(cfg, T):
    rng = np.random.default_rng(T)
    model = init_model(cfg, 11)
    _randomize_biases(model, rng)
    seq = rng.normal(size=(T, cfg.embedding_dim))
    for cls in range(cfg.num_classes):
        loss, grads = model_gradients(model, seq, cls)
        numeric = finite_difference_gradients(model, seq, cls, 1e-5)
        assert set(grads) == set(model.params)
        for k in grads:
            assert grads[k].shape == model.params[k].shape
            assert relative_error(grads[k], numeric[k]) <= 1e-4, k


def test_zero_model_gradients():
    cfg = ModelConfig(embedding_dim=4, num_classes=3)
    model = init_model(cfg, 0)
    for v in model.params.values():
        v[:] = 0.0
    seq = np.random.default_rng(0).normal(size=(5, 4))
    loss, grads = model_gradients(model, seq, 2)
    assert loss == pytest.approx(math.log(3), abs=1e-15)
    np.testing.assert_allclose(grads["output.biases"], [1 / 3, 1 / 3, -2 / 3], atol=1e-15)


def test_max_pool_inactive_parameter_has_zero_gradient():
    cfg = ModelConfig(embedding_dim=2, filter_sizes=(1,), groups_per_size=(1,), group_size=2,
                      hidden_size=2, num_classes=2)
    model = init_model(cfg, 0)
    model.params["conv0.weights"][:] = [[1.0, 0.0], [0.5, 0.0]]
    # position 0 wins every filter's max; dimension 1 is zero there and nonzero at position 1
    seq = np.array([[5.0, 0.0], [1.0, 3.0]])
    _, grads = model_gradients(model, seq, 1)
    numeric = finite_difference_gradients(model, seq, 1)
    np.testing.assert_array_equal(grads["conv0.weights"][:, 1], 0.0)
    np.testing.assert_allclose(numeric["conv0.weights"][:, 1], 0.0, atol=1e-12)
    assert np.all(grads["conv0.weights"][:, 0] != 0.0)


def test_ensemble_members_gradients_are_independent():
    a, b = init_model(SMALL, 1), init_model(SMALL, 2)
    seq = np.random.default_rng(0).normal(size=(4, 3))
    _, ga = model_gradients(a, seq, 0)
    Ensemble([a, b])
    _, ga2 = model_gradients(a, seq, 0)
    for k in ga:
        np.testing.assert_array_equal(ga[k], ga2[k])


def test_ensemble_predict_mean():
    members = [init_model(SMALL, s) for s in range(4)]
    ens = Ensemble(members)
    seq = np.random.default_rng(2).normal(size=(5, 3))
    outs = np.array([forward(m, seq) for m in members])
    avg = ensemble_predict(ens, seq)
    assert np.max(np.abs(avg - outs.mean(axis=0))) <= 1e-12
    assert abs(avg.sum() - 1) <= 1e-12
    np.testing.assert_array_equal(ensemble_predict(Ensemble(members[:1]), seq), outs[0])
    with pytest.raises(ValueError):
        Ensemble([])
    with pytest.raises(ValueError):
        Ensemble([members[0], init_model(ModelConfig(embedding_dim=3), 0)])


def _constant_member(probs):
    """Zero weights make the logits equal the output biases."""
    cfg = ModelConfig(embedding_dim=3, filter_sizes=(1,), groups_per_size=(1,), group_size=2,
                      hidden_size=2, num_classes=2)
    model = init_model(cfg, 0)
    for v in model.params.values():
        v[:] = 0.0
    model.params["output.biases"][:] = np.log(probs)
    return model


def test_ensemble_predict_two_member_hand_example():
    ens = Ensemble([_constant_member([0.6, 0.4]), _constant_member([0.8, 0.2])])
    np.testing.assert_allclose(ensemble_predict(ens, np.zeros((2, 3))), [0.7, 0.3], atol=1e-15)


def test_count_parameters():
    assert count_parameters(ModelConfig(embedding_dim=8, num_classes=2)) == 4078
    tiny = ModelConfig(embedding_dim=1, filter_sizes=(1,), groups_per_size=(1,), group_size=1,
                       hidden_size=1, num_classes=2)
    assert count_parameters(tiny) == 8
    for cfg in (SMALL, tiny, ModelConfig(embedding_dim=8), ModelConfig(embedding_dim=5, num_classes=3)):
        assert count_parameters(cfg) == init_model(cfg, 0).n_parameters()
    base = ModelConfig(embedding_dim=8)
    doubled = ModelConfig(embedding_dim=16)
    extra = sum(base.group_size * g * k * 8 for k, g in zip(base.filter_sizes, base.groups_per_size))
    assert count_parameters(doubled) - count_parameters(base) == extra


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    ens = Ensemble([init_model(SMALL, s) for s in (3, 4)])
    rng = np.random.default_rng(0)
    for m in ens.members:
        _randomize_biases(m, rng)
    path = tmp_path / "model.ckpt"
    save_model(ens, path)
    loaded = load_model(path)
    assert loaded.config == ens.config and len(loaded) == 2
    for a, b in zip(ens.members, loaded.members):
        for k in a.params:
            assert a.params[k].tobytes() == b.params[k].tobytes()
    for _ in range(5):
        seq = rng.normal(size=(int(rng.integers(0, 8)), 3))
        assert ensemble_predict(ens, seq).tobytes() == ensemble_predict(loaded, seq).tobytes()
    save_model(loaded, tmp_path / "again.ckpt")
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()


def test_checkpoint_errors(tmp_path):
    path = tmp_path / "model.ckpt"
    save_model(Ensemble([init_model(SMALL, 0)]), path)
    text = path.read_text()

    path.write_text(text.replace("tensor hidden.weights 4 9", "tensor hidden.weights 4 8"))
    with pytest.raises(CheckpointError, match="hidden.weights"):
        load_model(path)

    path.write_text(text.replace("mccnn-checkpoint 1", "mccnn-checkpoint 2"))
    with pytest.raises(CheckpointError, match="version 2"):
        load_model(path)

    path.write_text("\n".join(text.splitlines()[:12]))
    with pytest.raises(CheckpointError, match="truncated"):
        load_model(path)
