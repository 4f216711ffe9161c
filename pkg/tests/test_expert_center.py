import math

import numpy as np
import pytest

from adaroute.errors import ConfigurationError, DimensionError
from adaroute.expert_center import (TRUNC_NORMAL_STD, InitMethod, center_param_counts,
                                    compose_channel_weights, compose_spatial_kernels, count_params,
                                    init_center, mix_experts, parse_init, partition_scope)
from adaroute.tensor import Tensor, backward


def test_pool_shapes(small_center):
    assert small_center.capacity == 3
    assert small_center.E_A.shape == (3, 8, 4)
    assert small_center.E_B.shape == (3, 4, 8)
    assert [s.shape for s in small_center.spatial] == [(3, 4, 9), (3, 4, 25), (3, 4, 49)]


def test_closed_form_counts_match_instance(small_center):
    assert center_param_counts(3, 8, 4, [3, 5, 7]) == count_params(small_center)
    assert count_params(small_center)["total"] == 3 * 4 * (8 + 8 + 9 + 25 + 49)


def test_no_spatial_pools():
    center = init_center(2, 8, 4, kernel_sizes=())
    assert center.spatial == []
    assert set(center.parameters()) == {"E_A", "E_B"}


@pytest.mark.parametrize("capacity, channels, latent, kernels", [
    (0, 8, 4, (3,)),
    (2, 8, 8, (3,)),
    (2, 8, 0, (3,)),
    (2, 8, 4, (4,)),
    (2, 8, 4, (5, 3)),
    (2, 8, 4, (3, 5, 7, 9)),
])
def test_invalid_extents(capacity, channels, latent, kernels):
    with pytest.raises(ConfigurationError):
        init_center(capacity, channels, latent, kernels)


def test_init_is_seeded():
    a = init_center(2, 8, 4, seed=5)
    b = init_center(2, 8, 4, seed=5)
    c = init_center(2, 8, 4, seed=6)
    for name in a.pools:
        np.testing.assert_array_equal(a.pools[name].data, b.pools[name].data)
    assert not np.array_equal(a.E_A.data, c.E_A.data)


def test_truncated_normal_bound():
    center = init_center(4, 16, 8, seed=1)
    for t in center.pools.values():
        assert np.abs(t.data).max() <= 2 * TRUNC_NORMAL_STD


def test_kaiming_uniform_bound():
    center = init_center(4, 16, 8, init="kaiming_uniform", seed=1)
    assert np.abs(center.E_A.data).max() <= math.sqrt(6.0 / 16)
    assert np.abs(center.spatial[0].data).max() <= math.sqrt(6.0 / 9)


def test_parse_init():
    assert parse_init("kaiming_normal") is InitMethod.KAIMING_NORMAL
    assert str(InitMethod.TRUNC_NORMAL) == "trunc_normal"
    with pytest.raises(ConfigurationError):
        parse_init("xavier")


def test_composition_matches_per_expert_loop():
    rng = np.random.default_rng(0)
    for trial in range(100):
        m = int(rng.integers(1, 5))
        c = int(rng.integers(3, 9))
        latent = int(rng.integers(1, c))
        center = init_center(m, c, latent, (3, 5), init="kaiming_normal", seed=trial)
        g1, g2, ga, gb = (rng.standard_normal(m) for _ in range(4))
        W1, W2 = compose_channel_weights(center, Tensor(g1), Tensor(g2))
        kA, kB = compose_spatial_kernels(center, Tensor(ga), Tensor(gb))
        loop_W1 = sum(g1[i] * center.E_A.data[i] for i in range(m))
        loop_W2 = sum(g2[i] * center.E_B.data[i] for i in range(m))
        loop_kA = sum(ga[i] * center.spatial[0].data[i] for i in range(m)).reshape(latent, 3, 3)
        loop_kB = sum(gb[i] * center.spatial[1].data[i] for i in range(m)).reshape(latent, 5, 5)
        np.testing.assert_allclose(W1.data, loop_W1, rtol=0, atol=1e-12)
        np.testing.assert_allclose(W2.data, loop_W2, rtol=0, atol=1e-12)
        np.testing.assert_allclose(kA.data, loop_kA, rtol=0, atol=1e-12)
        np.testing.assert_allclose(kB.data, loop_kB, rtol=0, atol=1e-12)


def test_batched_gates_compose_per_sample(small_center):
    rng = np.random.default_rng(3)
    gates = rng.standard_normal((2, 3))
    W1 = mix_experts(Tensor(gates), small_center.E_A)
    assert W1.shape == (2, 8, 4)
    for b in range(2):
        single = mix_experts(Tensor(gates[b]), small_center.E_A)
        np.testing.assert_allclose(W1.data[b], single.data, rtol=0, atol=1e-14)


def test_one_hot_gate_selects_expert(small_center):
    W1, W2 = compose_channel_weights(small_center, Tensor([0.0, 1.0, 0.0]), Tensor([0.0, 0.0, 1.0]))
    np.testing.assert_array_equal(W1.data, small_center.E_A.data[1])
    np.testing.assert_array_equal(W2.data, small_center.E_B.data[2])


def test_gate_count_mismatch(small_center):
    with pytest.raises(DimensionError):
        mix_experts(Tensor(np.ones(4)), small_center.E_A)
    with pytest.raises(DimensionError):
        compose_spatial_kernels(small_center, Tensor(np.ones(3)))


def test_gradient_reaches_gates_and_pool(small_center):
    g = Tensor(np.array([0.2, 0.3, 0.5]), requires_grad=True)
    W1 = mix_experts(g, small_center.E_A)
    backward(W1.sum())
    np.testing.assert_allclose(g.grad, small_center.E_A.data.sum(axis=(1, 2)), rtol=0, atol=1e-12)
    np.testing.assert_allclose(small_center.E_A.grad, np.broadcast_to(g.data[:, None, None], (3, 8, 4)),
                               rtol=1e-12)


def test_detached_center_shares_storage(small_center):
    view = small_center.detached()
    assert not view.E_A.requires_grad
    small_center.E_A.data[0, 0, 0] = 7.0
    assert view.E_A.data[0, 0, 0] == 7.0


def test_partition_scope():
    assert partition_scope(list("abcde"), 2) == [["a", "b"], ["c", "d"], ["e"]]
    assert partition_scope(list("abc"), None) == [["a", "b", "c"]]
    with pytest.raises(ConfigurationError):
        partition_scope(list("abc"), 0)


def test_composition_is_linear_in_the_gates(small_center, rng):
    g, g2 = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
    h, h2 = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
    alpha, beta = 0.3, 1.7
    W1, W2 = compose_channel_weights(small_center, Tensor(alpha * g + beta * g2), Tensor(alpha * h + beta * h2))
    A1, A2 = compose_channel_weights(small_center, Tensor(g), Tensor(h))
    B1, B2 = compose_channel_weights(small_center, Tensor(g2), Tensor(h2))
    np.testing.assert_allclose(W1.data, alpha * A1.data + beta * B1.data, rtol=0, atol=1e-14)
    np.testing.assert_allclose(W2.data, alpha * A2.data + beta * B2.data, rtol=0, atol=1e-14)


def test_swin_b_stage_three_counts():
    counts = count_params(init_center(18, 512, 128, (3, 5, 7), seed=0))
    assert counts["E_A"] == counts["E_B"] == 18 * 512 * 128
    assert counts["total"] == 2550528
    assert center_param_counts(18, 512, 128, (3, 5, 7)) == counts
