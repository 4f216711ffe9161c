import numpy as np
import pytest

from adaroute.backbones import (HeadKind, TensorCategory, build_backbone, capacity_for, freeze_check,
                                ForwardTaps, insert_adapters, plan_centers, snapshot)
from adaroute.config import AdapterConfig, BackboneConfig
from adaroute.errors import ConfigurationError, DimensionError, UsageError
from adaroute.model import task_loss
from adaroute.optim import OptimState, adamw_step
from adaroute.tensor import Tensor, backward

SWIN = BackboneConfig(style="swin_like", depths=[2, 1], dims=[8, 16], patch=[2, 2], head_dim=4)
CONVNEXT = BackboneConfig(style="convnext_like", depths=[3], dims=[8], patch=[1])


def images(b=2, size=8, seed=0):
    return Tensor(np.random.default_rng(seed).standard_normal((b, 3, size, size)))


def test_backbone_is_frozen_and_head_trainable():
    g = build_backbone(SWIN, seed=0)
    for name, t in g.tensors.items():
        if g.categories[name] is TensorCategory.BACKBONE:
            assert g.frozen[name] and not t.requires_grad
        else:
            assert g.categories[name] is TensorCategory.HEAD and t.requires_grad
    assert g.count_trainable() == 0
    assert g.count_trainable(include_head=True) == (8 + 16) * 3 + 2 * 3


def test_build_is_deterministic():
    a = build_backbone(SWIN, seed=4)
    b = build_backbone(SWIN, seed=4)
    c = build_backbone(SWIN, seed=5)
    for name in a.tensors:
        np.testing.assert_array_equal(a.tensors[name].data, b.tensors[name].data)
    assert not np.array_equal(a.tensors["s0.b0.attn.qkv.weight"].data, c.tensors["s0.b0.attn.qkv.weight"].data)


def test_output_shapes():
    seg = build_backbone(SWIN, seed=0, n_classes=4)
    assert seg.forward(images()).shape == (2, 4, 8, 8)
    cls = build_backbone(CONVNEXT, seed=0, n_classes=5, head_kind=HeadKind.CLASSIFICATION)
    assert cls.forward(images()).shape == (2, 5)


def test_forward_needs_batch():
    g = build_backbone(SWIN, seed=0)
    with pytest.raises(DimensionError):
        g.forward(Tensor(np.zeros((3, 8, 8))))


def test_capacity_rule():
    assert capacity_for(1.0, 2) == 2
    assert capacity_for(0.5, 3) == 2
    assert capacity_for(0.5, 1) == 1
    assert capacity_for(4.0, 2) == 8
    assert capacity_for(0.1, 2) == 1


def test_center_plan():
    plans = plan_centers("swin_like", [2, 1], [8, 16], AdapterConfig(latent=4))
    assert [p.name for p in plans] == ["s0.g0", "s1.g0"]
    assert plans[0].sites == ["s0.b0.attn", "s0.b0.mlp", "s0.b1.attn", "s0.b1.mlp"]
    assert plans[0].capacity == 2 and plans[1].capacity == 1
    grouped = plan_centers("convnext_like", [3], [8], AdapterConfig(latent=4, group_size=2))
    assert [p.sites for p in grouped] == [["s0.b0.block", "s0.b1.block"], ["s0.b2.block"]]
    assert [p.capacity for p in grouped] == [2, 1]


def test_insert_registers_every_site():
    g = insert_adapters(build_backbone(SWIN, seed=0), AdapterConfig(latent=4, router_hidden=3), seed=0)
    assert list(g.adapters) == g.sites == ["s0.b0.attn", "s0.b0.mlp", "s0.b1.attn", "s0.b1.mlp",
                                           "s1.b0.attn", "s1.b0.mlp"]
    assert set(g.centers) == {"s0.g0", "s1.g0"}
    assert g.adapters["s0.b1.mlp"].center is g.centers["s0.g0"]
    assert g.categories["center.s0.g0.E_A"] is TensorCategory.CENTER
    assert g.categories["adapter.s0.b0.attn.router.hidden.weight"] is TensorCategory.ROUTER
    assert g.categories["adapter.s1.b0.mlp.sa.weight"] is TensorCategory.SA
    trainable = g.trainable_tensors()
    assert all(g.categories[n] is not TensorCategory.BACKBONE for n in trainable)


def test_double_insertion_fails():
    g = insert_adapters(build_backbone(SWIN, seed=0), AdapterConfig(latent=4), seed=0)
    with pytest.raises(UsageError):
        insert_adapters(g, AdapterConfig(latent=4), seed=0)


def test_latent_must_be_below_width():
    with pytest.raises(ConfigurationError):
        insert_adapters(build_backbone(SWIN, seed=0), AdapterConfig(latent=8), seed=0)


def test_gradients_skip_frozen_tensors():
    g = insert_adapters(build_backbone(SWIN, seed=0), AdapterConfig(latent=4, router_hidden=3), seed=0)
    targets = np.zeros((2, 8, 8), dtype=np.int64)
    backward(task_loss(g.forward(images()), targets))
    for name, t in g.tensors.items():
        if g.frozen[name]:
            assert t.grad is None
        else:
            assert t.grad is not None and t.grad.shape == t.shape


def test_zero_up_projection_keeps_backbone_output():
    plain = build_backbone(SWIN, seed=2)
    adapted = insert_adapters(build_backbone(SWIN, seed=2), AdapterConfig(latent=4), seed=2)
    for center in adapted.centers.values():
        center.E_B.data[...] = 0.0
    np.testing.assert_array_equal(plain.forward(images()).data, adapted.forward(images()).data)


def test_taps_record_blocks_and_gates():
    g = insert_adapters(build_backbone(SWIN, seed=0), AdapterConfig(latent=4), seed=0)
    taps = ForwardTaps()
    g.features(images(), taps)
    assert list(taps.features) == ["s0.b0", "s0.b1", "s1.b0"]
    assert set(taps.gates) == set(g.sites)
    assert taps.gates["s1.b0.attn"].G1.shape == (2, 1)
    assert len(taps.stages) == 2


def test_freeze_check():
    g = insert_adapters(build_backbone(CONVNEXT, seed=0), AdapterConfig(latent=4), seed=0)
    snap = snapshot(g)
    assert "s0.b0.dwconv.weight" in snap and "center.s0.g0.E_A" not in snap
    g.centers["s0.g0"].E_A.data += 1.0
    assert freeze_check(g, snap)
    g.tensors["s0.b1.pwconv1.weight"].data[0, 0] += 1e-12
    assert not freeze_check(g, snap)


def test_set_trainable():
    g = build_backbone(CONVNEXT, seed=0)
    g.set_trainable("s0.b0.norm.gamma")
    assert g.tensors["s0.b0.norm.gamma"].requires_grad
    assert g.count_trainable() == 8
    with pytest.raises(ConfigurationError):
        g.set_trainable("s9.missing")


def test_swin_b_insertion_shape():
    plans = plan_centers("swin_like", [2, 2, 18, 2], [128, 256, 512, 1024], AdapterConfig(latent=128))
    assert sum(len(p.sites) for p in plans) == 48
    assert [p.capacity for p in plans] == [2, 2, 18, 2]

    narrow = BackboneConfig(style="swin_like", depths=[2, 2, 18, 2], dims=[8, 16, 24, 32],
                            patch=[1, 1, 1, 1], head_dim=4)
    g = insert_adapters(build_backbone(narrow, seed=0), AdapterConfig(latent=4), seed=0)
    assert len(g.adapters) == 48
    assert list(g.centers) == ["s0.g0", "s1.g0", "s2.g0", "s3.g0"]
    assert [c.capacity for c in g.centers.values()] == [2, 2, 18, 2]
    assert len(g.centers["s2.g0"].scope) == 36


def test_freeze_check_catches_an_optimizer_update():
    def one_step(g):
        snap = snapshot(g)
        backward(task_loss(g.forward(images()), np.zeros((2, 8, 8), dtype=np.int64)))
        adamw_step(g.trainable_tensors(), OptimState(lr=1e-2))
        return snap

    g = insert_adapters(build_backbone(CONVNEXT, seed=0), AdapterConfig(latent=4), seed=0)
    assert freeze_check(g, one_step(g))

    g = insert_adapters(build_backbone(CONVNEXT, seed=0), AdapterConfig(latent=4), seed=0)
    snap = snapshot(g)
    g.set_trainable("s0.b0.norm.gamma")
    one_step(g)
    assert not freeze_check(g, snap)
