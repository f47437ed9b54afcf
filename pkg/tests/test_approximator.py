import numpy as np
import pytest
from scipy import stats

from ptrppo import approximator as ax
from ptrppo.losses import entropy_bonus

from oracles import central_difference, max_relative_error


def _random_params(rng, obs_dim=4, actions=3, hidden=8, scale=0.3):
    p = ax.init_params(obs_dim, actions, rng, hidden)
    return p.with_flat(p.flat() + scale * rng.standard_normal(p.flat().size))


def test_zero_network_is_uniform():
    p = ax.zero_params(6, 4)
    res = ax.forward(p, np.random.default_rng(0).standard_normal(6))
    np.testing.assert_array_equal(res.action_probs, np.full((1, 4), 0.25))
    assert res.value[0] == 0.0


def test_probabilities_on_simplex():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        p = _random_params(rng, scale=2.0)
        res = ax.forward(p, 3 * rng.standard_normal((1, 4)))
        assert np.all(res.action_probs >= 0)
        assert abs(res.action_probs.sum() - 1.0) < 1e-12
        assert np.isfinite(res.value).all()


def test_entropy_range():
    rng = np.random.default_rng(2)
    for _ in range(200):
        p = _random_params(rng, scale=3.0)
        h = entropy_bonus(ax.forward(p, rng.standard_normal((5, 4))).action_probs).value
        assert 0.0 <= h <= np.log(3) + 1e-12


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        ax.forward(ax.zero_params(4, 2), np.zeros(5))


def test_sample_degenerate():
    res = ax.ForwardResult(np.array([[1.0, 0.0, 0.0, 0.0]]), np.zeros(1), np.zeros((1, 4)), ())
    rng = np.random.default_rng(0)
    for _ in range(100):
        a, bp = ax.sample_action(res, rng)
        assert a[0] == 0 and bp[0] == 1.0


def test_sample_uniform_frequencies():
    n = 100_000
    res = ax.ForwardResult(np.full((n, 4), 0.25), np.zeros(n), np.zeros((n, 4)), ())
    a, bp = ax.sample_action(res, np.random.default_rng(3))
    counts = np.bincount(a, minlength=4)
    assert np.all(np.abs(counts / n - 0.25) < 0.01)
    assert stats.chisquare(counts).pvalue > 1e-3
    assert np.all(bp == 0.25)


def test_sample_reproducible():
    res = ax.ForwardResult(np.tile([0.7, 0.3], (50, 1)), np.zeros(50), np.zeros((50, 2)), ())
    a1, _ = ax.sample_action(res, np.random.default_rng(11))
    a2, _ = ax.sample_action(res, np.random.default_rng(11))
    np.testing.assert_array_equal(a1, a2)


def _flat_grad(g):
    return np.concatenate([g[k].ravel() for k in ax.PARAM_NAMES])


def test_zero_signal_zero_gradient():
    rng = np.random.default_rng(4)
    p = _random_params(rng)
    res = ax.forward(p, rng.standard_normal((3, 4)))
    g = ax.backward(p, res, np.zeros((3, 3)), np.zeros(3))
    assert np.all(_flat_grad(g) == 0)


@pytest.mark.parametrize("seed", range(5))
def test_backward_matches_finite_differences(seed):
    """Arbitrary linear functional of logits and value: L = mean(c . logits + k * value)."""
    rng = np.random.default_rng(seed)
    p = _random_params(rng)
    obs = rng.standard_normal((1, 4))
    c, k = rng.standard_normal((1, 3)), rng.standard_normal(1)

    def loss(vec):
        r = ax.forward(p.with_flat(vec), obs)
        return float(np.mean((r.logits * c).sum(axis=1) + k * r.value))

    g = _flat_grad(ax.backward(p, ax.forward(p, obs), c, k))
    assert max_relative_error(g, central_difference(loss, p.flat())) < 1e-4


def test_batch_of_identical_examples_equals_single():
    rng = np.random.default_rng(5)
    p = _random_params(rng)
    obs = rng.standard_normal((1, 4))
    c, k = rng.standard_normal((1, 3)), rng.standard_normal(1)
    g1 = _flat_grad(ax.backward(p, ax.forward(p, obs), c, k))
    gk = _flat_grad(ax.backward(p, ax.forward(p, np.repeat(obs, 7, axis=0)),
                                np.repeat(c, 7, axis=0), np.repeat(k, 7)))
    np.testing.assert_allclose(gk, g1, rtol=1e-12, atol=1e-15)


def test_backward_shape_mismatch():
    p = ax.zero_params(4, 3, hidden=8)
    res = ax.forward(p, np.zeros((2, 4)))
    with pytest.raises(ValueError):
        ax.backward(p, res, np.zeros((2, 2)), np.zeros(2))


def test_zero_gradient_leaves_params():
    p = _random_params(np.random.default_rng(6))
    before = p.flat()
    ax.apply_update(p, {k: np.zeros_like(v) for k, v in p.arrays.items()}, ax.AdamState())
    np.testing.assert_array_equal(p.flat(), before)


def test_adam_step_decreases_quadratic():
    # loss = 0.5 * ||theta - target||^2 over all parameters
    rng = np.random.default_rng(7)
    p = _random_params(rng)
    target = rng.standard_normal(p.flat().size)

    def loss(params):
        return 0.5 * np.sum((params.flat() - target) ** 2)

    before = loss(p)
    grad = p.with_flat(p.flat() - target).arrays
    ax.apply_update(p, grad, ax.AdamState(lr=1e-4))
    assert loss(p) < before


def test_adam_is_deterministic():
    rng = np.random.default_rng(8)
    p = _random_params(rng)
    g = p.with_flat(rng.standard_normal(p.flat().size)).arrays
    a, b = p.copy(), p.copy()
    sa, sb = ax.AdamState(), ax.AdamState()
    for _ in range(3):
        ax.apply_update(a, g, sa)
        ax.apply_update(b, g, sb)
    np.testing.assert_array_equal(a.flat(), b.flat())


def test_adam_rejects_non_finite():
    p = _random_params(np.random.default_rng(9))
    before = p.flat()
    state = ax.AdamState()
    g = {k: np.zeros_like(v) for k, v in p.arrays.items()}
    g["b2"][0] = np.nan
    with pytest.raises(ax.NonFiniteError, match="b2"):
        ax.apply_update(p, g, state)
    np.testing.assert_array_equal(p.flat(), before)
    assert state.t == 0


def test_softmax_normalized_after_updates():
    rng = np.random.default_rng(10)
    p = _random_params(rng)
    state = ax.AdamState(lr=0.05)
    obs = rng.standard_normal((4, 4))
    for _ in range(20):
        g = p.with_flat(rng.standard_normal(p.flat().size)).arrays
        ax.apply_update(p, g, state)
        probs = ax.forward(p, obs).action_probs
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_snapshot_isolated_from_updates():
    rng = np.random.default_rng(11)
    p = _random_params(rng)
    obs = rng.standard_normal((3, 4))
    snap = ax.snapshot(p)
    ref = ax.forward(snap, obs).action_probs.copy()
    np.testing.assert_array_equal(ref, ax.forward(p, obs).action_probs)
    ax.apply_update(p, p.with_flat(np.ones(p.flat().size)).arrays, ax.AdamState(lr=0.1))
    np.testing.assert_array_equal(ax.forward(snap, obs).action_probs, ref)
    snap2 = ax.snapshot(snap)
    np.testing.assert_array_equal(ax.forward(snap2, obs).action_probs, ref)
    with pytest.raises(ValueError):
        snap.arrays["W1"][0, 0] = 1.0


def test_checkpoint_roundtrip(tmp_path):
    p = _random_params(np.random.default_rng(12), obs_dim=5, actions=2, hidden=6)
    path = ax.save_checkpoint(p, tmp_path / "c.ckpt")
    q = ax.load_checkpoint(path)
    for k in ax.PARAM_NAMES:
        np.testing.assert_array_equal(p[k], q[k])
        assert p[k].shape == q[k].shape
    assert path.read_text().splitlines()[1] == "W1 matrix 5 6"


def test_checkpoint_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_text("hello\n")
    with pytest.raises(ValueError):
        ax.load_checkpoint(bad)
