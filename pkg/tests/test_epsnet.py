import numpy as np

from eipkit.nn import (
    eps_backward,
    eps_forward,
    eps_forward_batch,
    eps_forward_cached,
    init_eps_params,
    silu,
    tree_count,
)
from eipkit.rng import child_rng


def _flat_params(params):
    return np.concatenate([v.ravel() for v in params.values()])


def _loss_of(params, x_t, t, y, z):
    out, _ = eps_forward_cached(params, x_t, t, y, z)
    return 0.5 * float(np.sum(out * out))


def test_forward_shapes_and_batch_consistency():
    rng = child_rng(0, "eps-shapes")
    params = init_eps_params(2, 3, rng, hidden=16)
    x_t = rng.standard_normal((5, 2))
    y = rng.standard_normal((5, 2))
    z = rng.standard_normal((5, 3))
    t = rng.uniform(size=5)
    batch = eps_forward_batch(params, x_t, t, y, z)
    assert batch.shape == (5, 2)
    for i in range(5):
        single = eps_forward(params, x_t[i], t[i], y[i], z[i])
        assert np.allclose(single, batch[i], atol=1e-12)


def test_residual_skip_changes_output():
    """Zeroing the trunk must leave the skip path active."""
    rng = child_rng(1, "eps-skip")
    params = init_eps_params(2, 0, rng, hidden=8)
    params["w1"][:] = 0.0
    params["w2"][:] = 0.0
    params["b1"][:] = 0.0
    params["b2"][:] = 0.0
    x_t = rng.standard_normal((1, 2))
    y = rng.standard_normal((1, 2))
    out = eps_forward_batch(params, x_t, np.array([0.5]), y,
                            np.zeros((1, 0)))
    u = np.concatenate([x_t[0], y[0]])
    pre = params["w_in"] @ u + params["b_in"] + params["w_t"] * 0.5 + params["b_t"]
    a1 = silu(pre)
    h2 = silu(params["w2"] @ silu(np.zeros(8)))
    expect = params["w_out"] @ (h2 + a1) + params["b_out"]
    assert np.allclose(out[0], expect, atol=1e-12)


def test_gradients_match_finite_differences():
    rng = child_rng(2, "eps-grad")
    params = init_eps_params(2, 2, rng, hidden=6)
    assert tree_count(params) <= 500
    x_t = rng.standard_normal((4, 2))
    y = rng.standard_normal((4, 2))
    z = rng.standard_normal((4, 2))
    t = rng.uniform(size=4)

    out, cache = eps_forward_cached(params, x_t, t, y, z)
    grads, _ = eps_backward(params, cache, out)

    eps = 1e-5
    worst = 0.0
    for key in params:
        it = np.nditer(params[key], flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = params[key][idx]
            params[key][idx] = orig + eps
            up = _loss_of(params, x_t, t, y, z)
            params[key][idx] = orig - eps
            dn = _loss_of(params, x_t, t, y, z)
            params[key][idx] = orig
            fd = (up - dn) / (2 * eps)
            got = grads[key][idx]
            rel = abs(fd - got) / max(abs(fd), abs(got), 1e-6)
            worst = max(worst, rel)
    assert worst < 1e-4


def test_input_gradient_propagates_to_conditioning():
    rng = child_rng(3, "eps-dz")
    params = init_eps_params(2, 3, rng, hidden=6)
    x_t = rng.standard_normal((2, 2))
    y = rng.standard_normal((2, 2))
    z = rng.standard_normal((2, 3))
    t = np.array([0.2, 0.9])

    out, cache = eps_forward_cached(params, x_t, t, y, z)
    _, du = eps_backward(params, cache, out)
    assert du.shape == (2, 7)

    eps = 1e-6
    z_pert = z.copy()
    z_pert[0, 1] += eps
    up = _loss_of(params, x_t, t, y, z_pert)
    z_pert[0, 1] -= 2 * eps
    dn = _loss_of(params, x_t, t, y, z_pert)
    fd = (up - dn) / (2 * eps)
    assert abs(fd - du[0, 4 + 1]) < 1e-5


def test_time_input_is_scalar_channel():
    rng = child_rng(4, "eps-time")
    params = init_eps_params(2, 0, rng, hidden=8)
    x_t = rng.standard_normal((1, 2))
    y = rng.standard_normal((1, 2))
    z = np.zeros((1, 0))
    a = eps_forward_batch(params, x_t, np.array([0.1]), y, z)
    b = eps_forward_batch(params, x_t, np.array([0.9]), y, z)
    assert not np.allclose(a, b)


def test_init_scale_follows_fan_in():
    rng = child_rng(5, "eps-init")
    params = init_eps_params(2, 3, rng, hidden=64)
    bound = 1.0 / np.sqrt(7)
    assert np.abs(params["w_in"]).max() <= bound
    assert np.abs(params["w_in"]).max() > 0.5 * bound
    assert np.array_equal(params["b_in"], np.zeros(64))
