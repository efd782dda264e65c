import numpy as np
import pytest

from qutrit_readout.mlp import (
    MLPModel,
    TrainConfig,
    cross_entropy,
    infer,
    init_params,
    layer_sizes,
    loss_and_grads,
    mlp_parameter_count,
    parameter_count,
    softmax,
    train_mlp,
)


def count_by_hand(p, k=3):
    h1, h2 = p // 2, p // 4
    return p * h1 + h1 + h1 * h2 + h2 + h2 * k + k


@pytest.mark.parametrize("p,want", [(45, 1301), (9, 59), (4, 19)])
def test_parameter_counts(p, want):
    assert mlp_parameter_count(p) == want == count_by_hand(p)


def test_five_qubit_total_and_ratio():
    total = 5 * mlp_parameter_count(45)
    assert total == 6505
    assert 100 <= 686000 / total <= 110


def blobs(rng, n, p=6, shift=6.0, centers=None):
    y = np.arange(n) % 3
    if centers is None:
        centers = np.random.default_rng(99).normal(size=(3, p)) * shift
    return centers[y] + rng.normal(size=(n, p)), y


def test_separable_blobs(rng):
    # P=12 keeps a 3-wide bottleneck; P=6 would squeeze through one ReLU
    x, y = blobs(rng, 1200, p=12)
    xv, yv = blobs(np.random.default_rng(12345), 300, p=12)
    model = train_mlp(x, y, xv, yv, TrainConfig(max_epochs=60))
    assert np.mean(model.predict(xv) == yv) >= 0.99
    assert parameter_count(model) == mlp_parameter_count(12)


def test_training_deterministic(rng):
    x, y = blobs(rng, 400, p=8, shift=1.0)
    cfg = TrainConfig(max_epochs=15, seed=5)
    a = train_mlp(x[:300], y[:300], x[300:], y[300:], cfg)
    b = train_mlp(x[:300], y[:300], x[300:], y[300:], cfg)
    for wa, wb in zip(a.weights + a.biases, b.weights + b.biases):
        assert np.array_equal(wa, wb)


def test_early_stopping_returns_best_epoch(rng):
    x, y = blobs(rng, 600, p=8, shift=0.4)
    cfg = TrainConfig(max_epochs=200, patience=5)
    model = train_mlp(x[:400], y[:400], x[400:], y[400:], cfg)
    h = model.history
    assert h["best_epoch"] == int(np.argmin(h["val_loss"]))
    assert all(np.isfinite(h["train_loss"]))
    xs = model.standardize(x[400:])
    from qutrit_readout.mlp import forward

    assert cross_entropy(forward(model.params, xs)[0], y[400:]) == min(h["val_loss"])
    assert len(h["val_loss"]) < 200 or h["best_epoch"] >= 190


def test_zero_model_uniform_probs():
    sizes = layer_sizes(8)
    model = MLPModel(
        0,
        sizes,
        [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
        [np.zeros(b) for b in sizes[1:]],
        np.zeros(8),
        np.ones(8),
    )
    probs, label = infer(model, np.arange(8.0))
    assert np.allclose(probs, 1 / 3, rtol=0, atol=1e-15) and label == 0
    assert parameter_count(model) == mlp_parameter_count(8)


def test_final_logits_decide_label():
    sizes = layer_sizes(4)
    ws = [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    bs = [np.zeros(b) for b in sizes[1:]]
    bs[-1] = np.array([0.0, 10.0, 0.0])
    model = MLPModel(0, sizes, ws, bs, np.zeros(4), np.ones(4))
    assert infer(model, np.ones(4))[1] == 1


def test_probabilities_normalized(rng):
    for _ in range(200):
        p = int(rng.integers(4, 20))
        sizes = layer_sizes(p)
        params = init_params(sizes, rng)
        params = [t + rng.normal(size=t.shape) for t in params]
        model = MLPModel(0, sizes, params[0::2], params[1::2], np.zeros(p), np.ones(p))
        probs = model.predict_proba(rng.normal(size=(50, p)) * 10)
        assert np.all(np.abs(probs.sum(axis=1) - 1) <= 1e-9)


def test_softmax_shift_invariance(rng):
    z = rng.normal(size=(100, 3)) * 5
    assert np.allclose(softmax(z + 123.4), softmax(z), rtol=0, atol=1e-12)


def test_gradient_check(rng):
    for trial in range(5):
        sizes = layer_sizes(8)
        params = [t + 0.1 * rng.normal(size=t.shape) for t in init_params(sizes, rng)]
        x = rng.normal(size=(16, 8))
        y = rng.integers(0, 3, 16)
        _, grads = loss_and_grads(params, x, y)
        h = 1e-5
        for p, g in zip(params, grads):
            num = np.zeros_like(p)
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + h
                up = loss_and_grads(params, x, y)[0]
                p[idx] = old - h
                down = loss_and_grads(params, x, y)[0]
                p[idx] = old
                num[idx] = (up - down) / (2 * h)
            rel = np.abs(g - num) / np.maximum(np.abs(g) + np.abs(num), 1e-8)
            assert rel.max() <= 1e-4


def test_standardization_round_trip(rng):
    x, y = blobs(rng, 300, p=6)
    x[:, 2] = 4.0  # constant column
    model = train_mlp(x[:240], y[:240], x[240:], y[240:], TrainConfig(max_epochs=3))
    assert np.array_equal(model.standardize(x), (x - x[:240].mean(0)) / np.where(x[:240].std(0) > 0, x[:240].std(0), 1))
    again = MLPModel.from_dict(model.to_dict())
    assert np.array_equal(again.predict_proba(x), model.predict_proba(x))


def test_errors(rng):
    x, y = blobs(rng, 90, p=6)
    with pytest.raises(ValueError, match="absent"):
        train_mlp(x, np.where(y == 2, 0, y), x, y)
    model = train_mlp(x, y, x, y, TrainConfig(max_epochs=1))
    with pytest.raises(ValueError, match="width"):
        infer(model, np.zeros(7))
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    from qutrit_readout.mlp import TrainingError

    x, y = blobs(rng, 600, p=16)
    with pytest.raises(TrainingError, match="non-finite"):
        train_mlp(x, y, x, y, TrainConfig(learning_rate=1e300))
