import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from flowguard.attacks import (
    AccuracyTable,
    AttackParams,
    AttackSpec,
    Signal,
    delay_attack,
    evaluate_under_attack,
    fgsm,
    pgd,
)
from flowguard.errors import ConvergenceFailure, InvalidParams, ShapeMismatch, TauOutOfRange
from flowguard.nn import Dense, TinyNet, make_toy_dataset, train, train_toy

from oracles import gradient_relative_error, loss_by_hand, random_case


@pytest.fixture(scope="module")
def toy():
    return train_toy(7)


def linear(w, b=None):
    w = np.atleast_2d(np.asarray(w, dtype=float))
    return TinyNet([Dense(w, np.zeros(w.shape[0]) if b is None else b, "identity")])


# forward / loss

def test_zero_net_gives_uniform_softmax():
    net = linear(np.zeros((4, 3)))
    assert net.loss(np.zeros(3), 2) == pytest.approx(np.log(4), abs=1e-12)


def test_linear_hand_logits():
    net = linear([[1.0, -2.0], [0.5, 0.5]])
    assert net.forward([1.0, 1.0]).tolist() == [-1.0, 1.0]
    assert net.loss([1.0, 1.0], 0) == pytest.approx(np.log(1 + np.exp(2.0)))


def test_loss_matches_hand_computation():
    rng = np.random.default_rng(3)
    for _ in range(20):
        net, layers, x, y = random_case(rng)
        assert net.loss(x, y) == pytest.approx(loss_by_hand(layers, x, y), rel=1e-12)
        assert net.loss(x, y) >= 0


def test_one_weight_step_reduces_loss():
    rng = np.random.default_rng(5)
    net = TinyNet.init((2, 8), (6,), 2, rng)
    x, y = rng.normal(size=(16, 2, 8)), rng.integers(0, 2, 16)
    before = net.loss(x, y)
    for layer, (gw, gb) in zip(net.layers, net.param_gradients(x, y)):
        layer.weights -= 1e-3 * gw
        layer.bias -= 1e-3 * gb
    assert net.loss(x, y) < before


def test_shape_errors():
    net = TinyNet.init((2, 4), (3,), 2, np.random.default_rng(0))
    with pytest.raises(ShapeMismatch):
        net.forward(np.zeros((3, 4)))
    with pytest.raises(ShapeMismatch):
        net.loss(np.zeros((5, 2, 4)), [0, 1])
    with pytest.raises(ShapeMismatch):
        TinyNet([Dense(np.zeros((3, 4)), np.zeros(3)), Dense(np.zeros((2, 2)), np.zeros(2))])


# gradients

def test_input_gradient_matches_finite_differences():
    assert gradient_relative_error(100, seed=11) < 1e-4


def test_constant_output_net_has_zero_gradient():
    net = linear(np.zeros((3, 5)), np.array([1.0, -1.0, 0.5]))
    assert np.array_equal(net.input_gradient(np.ones(5), 1), np.zeros(5))


def test_gradient_under_logit_scaling():
    """For logits z = c*W x, dL/dx = c * W^T (softmax(z) - onehot)."""
    w = np.array([[1.0, -2.0, 0.5], [0.0, 1.0, -1.0]])
    x = np.array([0.3, -0.2, 0.7])
    for c in (0.5, 1.0, 3.0):
        z = c * w @ x
        p = np.exp(z - z.max()) / np.exp(z - z.max()).sum()
        expected = c * w.T @ (p - np.array([1.0, 0.0]))
        assert np.allclose(linear(c * w).input_gradient(x, 0), expected, atol=1e-14)


def test_batch_gradient_is_mean_of_singles():
    rng = np.random.default_rng(2)
    net = TinyNet.init((2, 3), (4,), 2, rng)
    x, y = rng.normal(size=(4, 2, 3)), np.array([0, 1, 1, 0])
    batch = net.input_gradient(x, y)
    for i in range(4):
        assert np.allclose(batch[i] * 4, net.input_gradient(x[i], y[i]))


# fgsm

def test_fgsm_hand_case():
    # dL/dx for label 0 is W^T (p - e0); p = (0.5, 0.5) at x = 0
    net = linear([[-1.0, 1.0], [1.0, -1.0]])
    out = fgsm(net, np.zeros(2), 0, 0.1)
    assert out.tolist() == [0.1, -0.1]


def test_fgsm_zero_epsilon_is_identity(toy):
    net, data = toy
    assert np.array_equal(fgsm(net, data.x_test, data.y_test, 0.0), data.x_test)


def test_fgsm_perturbation_is_exactly_epsilon(toy):
    net, data = toy
    x, y = data.x_test[:10], data.y_test[:10]
    delta = fgsm(net, x, y, 0.2) - x
    grad = net.input_gradient(x, y)
    assert np.allclose(np.abs(delta[grad != 0]), 0.2)
    assert np.all(delta[grad == 0] == 0)


def test_fgsm_keeps_signal_type():
    net = linear([[1.0, -1.0], [-1.0, 1.0]])
    sig = Signal([0.0, 0.0], freq=128.0)
    out = fgsm(net, sig, 1, 0.1)
    assert isinstance(out, Signal) and out.freq == 128.0
    with pytest.raises(InvalidParams):
        fgsm(net, sig, 1, -0.1)


# pgd

@pytest.mark.parametrize("kwargs", [
    dict(epsilon=0.1, epsilon1=0.1, alpha=0.1, n=1),
    dict(epsilon=0.1, epsilon1=-0.01, alpha=0.1, n=1),
    dict(epsilon=0.1, epsilon1=0.0, alpha=0.0, n=1),
    dict(epsilon=0.1, epsilon1=0.0, alpha=0.1, n=0),
])
def test_invalid_params(kwargs):
    with pytest.raises(InvalidParams):
        AttackParams(**kwargs)


@settings(max_examples=40, deadline=None)
@given(x=arrays(np.float64, (2, 6), elements=st.floats(-3, 3)),
       eps=st.floats(0.01, 1.0), frac=st.floats(0, 0.99), alpha=st.floats(0.001, 2.0),
       n=st.integers(1, 8), seed=st.integers(0, 2**32 - 1))
def test_pgd_stays_in_epsilon_ball(x, eps, frac, alpha, n, seed):
    net, _, _, _ = random_case(np.random.default_rng(seed), shape=(2, 6), classes=2)
    adv = pgd(net, x, 1, AttackParams(eps, eps * frac, alpha, n), seed)
    assert np.all((adv >= x - eps) & (adv <= x + eps))


def test_pgd_single_step_equals_clipped_fgsm(toy):
    net, data = toy
    x, y = data.x_test, data.y_test
    for eps in (0.05, 0.3):
        got = pgd(net, x, y, AttackParams(eps, 0.0, eps, 1), seed=123)
        want = np.clip(fgsm(net, x, y, eps), x - eps, x + eps)
        assert np.array_equal(got, want)


def test_pgd_more_steps_is_at_least_as_strong():
    rng = np.random.default_rng(21)
    wins = 0
    for trial in range(50):
        net, _, x, y = random_case(rng, shape=(2, 6), classes=2)
        short = pgd(net, x, y, AttackParams(0.3, 0.1, 0.05, 1), trial)
        long = pgd(net, x, y, AttackParams(0.3, 0.1, 0.05, 10), trial)
        wins += net.loss(long, y) >= net.loss(short, y)
    assert wins >= 45


def test_pgd_is_deterministic_per_seed(toy):
    net, data = toy
    p = AttackParams(0.2, 0.1, 0.02, 5)
    a = pgd(net, data.x_test, data.y_test, p, 4)
    assert np.array_equal(a, pgd(net, data.x_test, data.y_test, p, 4))
    assert not np.array_equal(a, pgd(net, data.x_test, data.y_test, p, 5))


# delay

def test_delay_hand_case():
    assert delay_attack(np.array([1.0, 2.0, 3.0, 4.0]), 2).tolist() == [2.5, 2.5, 1.0, 2.0]


def test_delay_edges():
    x = np.arange(12.0).reshape(2, 6)
    assert np.array_equal(delay_attack(x, 0), x)
    full = delay_attack(x, 6)
    assert np.array_equal(full, np.repeat(x.mean(axis=1, keepdims=True), 6, axis=1))
    for tau in (-1, 7, 1.5, True):
        with pytest.raises(TauOutOfRange):
            delay_attack(x, tau)


@settings(max_examples=50, deadline=None)
@given(x=arrays(np.float64, (3, 9), elements=st.floats(-5, 5)), tau=st.integers(0, 9))
def test_delay_piecewise_definition(x, tau):
    out = delay_attack(x, tau)
    assert out.shape == x.shape
    assert np.array_equal(delay_attack(out, 0), out)
    for c in range(3):
        for t in range(9):
            want = x[c].mean() if t < tau else x[c, t - tau]
            assert out[c, t] == pytest.approx(want, abs=1e-12)


def test_delay_on_signal_does_not_mutate_input():
    sig = Signal(np.arange(4.0))
    out = delay_attack(sig, 1)
    assert sig.data.tolist() == [[0.0, 1.0, 2.0, 3.0]]
    assert out.data.tolist() == [[1.5, 0.0, 1.0, 2.0]]


# training

def test_train_toy_reaches_target_and_matches_logistic_oracle(toy):
    from sklearn.linear_model import LogisticRegression
    net, data = toy
    assert net.accuracy(data.x_test, data.y_test) >= 0.90
    flat = lambda a: a.reshape(len(a), -1)
    oracle = LogisticRegression(max_iter=2000).fit(flat(data.x_train), data.y_train)
    assert oracle.score(flat(data.x_test), data.y_test) >= 0.85


def test_train_toy_is_deterministic():
    a, da = train_toy(3, 200)
    b, db = train_toy(3, 200)
    assert np.array_equal(da.x_test, db.x_test)
    for la, lb in zip(a.layers, b.layers):
        assert np.array_equal(la.weights, lb.weights) and np.array_equal(la.bias, lb.bias)


def test_shuffled_labels_give_chance_accuracy():
    data = make_toy_dataset(7, 2000)
    rng = np.random.default_rng(0)
    net = TinyNet.init(data.x_train.shape[1:], (32,), 2, rng)
    train(net, data.x_train, rng.permutation(data.y_train), epochs=10, rng=rng)
    assert abs(net.accuracy(data.x_test, data.y_test) - 0.5) <= 0.1


def test_train_toy_rejects_small_or_unreachable():
    with pytest.raises(ValueError):
        train_toy(1, 99)
    with pytest.raises(ConvergenceFailure):
        train_toy(1, 200, epochs=1, min_accuracy=1.01)


def test_dataset_csv():
    data = make_toy_dataset(1, 8, channels=2, length=3)
    lines = data.to_csv().splitlines()
    assert lines[0] == "label,x0,x1,x2,x3,x4,x5"
    assert len(lines) == 1 + len(data.y_test)
    assert all(len(v.split(".")[1]) == 6 for v in lines[1].split(",")[1:])


# evaluation

def test_grid_zero_reproduces_clean_accuracy(toy):
    net, data = toy
    clean = net.accuracy(data.x_test, data.y_test)
    for spec in (AttackSpec("fgsm"), AttackSpec("pgd"), AttackSpec("delay")):
        table = evaluate_under_attack(net, data.x_test, data.y_test, spec, [0])
        assert table.rows == ((0.0, clean),)


def test_fgsm_accuracy_is_mostly_monotone(toy):
    net, data = toy
    grid = np.round(np.linspace(0, 0.6, 13), 3)
    accs = [a for _, a in evaluate_under_attack(net, data.x_test, data.y_test,
                                                AttackSpec("fgsm"), grid).rows]
    pairs = list(zip(accs, accs[1:]))
    assert sum(b <= a for a, b in pairs) >= 0.9 * len(pairs)


def test_attack_efficacy(toy):
    net, data = toy
    x, y = data.x_test, data.y_test
    clean = net.accuracy(x, y)
    assert net.accuracy(fgsm(net, x, y, 0.5), y) <= 0.30
    assert net.accuracy(AttackSpec("pgd", epsilon=0.5, n=40).apply(net, x, y, 7), y) <= 0.05
    assert clean - net.accuracy(delay_attack(x, x.shape[-1] // 2), y) >= 0.20


def test_accuracy_table_csv():
    table = AccuracyTable("epsilon", ((0.0, 1.0), (0.25, 0.5)))
    assert table.to_csv() == "epsilon,accuracy\n0.000000,1.000000\n0.250000,0.500000\n"
    assert table.accuracy(0.25) == 0.5
    with pytest.raises(KeyError):
        table.accuracy(0.3)


def test_attack_spec_sweeps():
    spec = AttackSpec("pgd", epsilon=0.2, sweep="n")
    assert spec.at(3).n == 3 and spec.at(3).epsilon == 0.2
    with pytest.raises(ValueError):
        AttackSpec("delay", sweep="epsilon")
    with pytest.raises(ValueError):
        AttackSpec("cw")


def test_evaluation_is_byte_deterministic(toy):
    net, data = toy
    spec = AttackSpec("pgd", n=10)
    run = lambda: evaluate_under_attack(net, data.x_test, data.y_test, spec, [0.1, 0.3], 9).to_csv()
    assert run() == run()
