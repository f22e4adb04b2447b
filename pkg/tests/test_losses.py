import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_material
from matkit import engine as E
from matkit.engine import Rng, Tensor, grad_check
from matkit.errors import ShapeError
from matkit.losses import (
    LossBreakdown,
    kl_divergence,
    log_l1_render_loss,
    log_l1_render_loss_t,
    map_l1_loss,
    pbr_total_loss,
)
from matkit.materials import MaterialMaps, decode_normal
from matkit.render import RenderSetup, render_views, sample_nine_views, setup_geometry


def test_log_render_loss_closed_forms():
    x = np.zeros((4, 4, 3))
    y = np.ones((4, 4, 3))
    assert log_l1_render_loss(x, x) == 0.0
    assert abs(log_l1_render_loss(x, y) - math.log(101.0)) < 1e-9


def test_log_render_loss_shape_error():
    with pytest.raises(ShapeError):
        log_l1_render_loss(np.zeros((4, 4, 3)), np.zeros((5, 5, 3)))


@given(st.integers(0, 10 ** 6))
@settings(max_examples=40, deadline=None)
def test_log_render_loss_symmetry_and_triangle(seed):
    stream = Rng(seed).stream("imgs")
    a, b, c = (stream.uniform((5, 5, 3)) * 3.0 for _ in range(3))
    ab = log_l1_render_loss(a, b)
    assert abs(ab - log_l1_render_loss(b, a)) < 1e-12
    assert log_l1_render_loss(a, c) <= ab + log_l1_render_loss(b, c) + 1e-12


def test_map_l1_channel_weighting():
    ref = random_material(1)
    pred = MaterialMaps(ref.albedo, ref.normal,
                        np.zeros_like(ref.roughness), ref.metallic)
    ref2 = MaterialMaps(ref.albedo, ref.normal,
                        np.ones_like(ref.roughness), ref.metallic)
    assert abs(map_l1_loss(pred, ref2) - 1.0 / 8.0) < 1e-7
    assert map_l1_loss(ref, ref) == 0.0


@given(st.integers(0, 10 ** 6))
@settings(max_examples=25, deadline=None)
def test_map_l1_triangle(seed):
    a, b, c = (random_material(seed + i, 8) for i in range(3))
    assert map_l1_loss(a, c) <= map_l1_loss(a, b) + map_l1_loss(b, c) + 1e-7


def test_kl_closed_forms():
    assert kl_divergence(np.zeros(5), np.zeros(5)) == 0.0
    assert abs(kl_divergence(np.ones(5), np.zeros(5)) - 0.5) < 1e-7
    expected = 0.5 * (4.0 - 1.0 - math.log(4.0))
    assert abs(kl_divergence(np.zeros(3), np.full(3, math.log(4.0))) - expected) < 1e-7
    assert abs(expected - 0.80685) < 1e-5


def test_pbr_total_loss_weight_contracts():
    pred = random_material(2)
    ref = random_material(3)
    views = sample_nine_views(4)
    only_map = pbr_total_loss(pred, ref, views, {"w_map": 1, "w_kl": 0, "w_render": 0})
    assert abs(only_map.total - only_map.map_l1) < 1e-9
    assert len(only_map.per_view_render) == 9
    assert only_map.perceptual == 0.0 and only_map.adversarial == 0.0

    w1 = pbr_total_loss(pred, ref, views, {"w_map": 1, "w_kl": 0, "w_render": 1})
    w2 = pbr_total_loss(pred, ref, views, {"w_map": 1, "w_kl": 0, "w_render": 2})
    assert abs((w2.total - w2.map_l1) - 2 * (w1.total - w1.map_l1)) < 1e-9


def test_pbr_total_loss_identical_inputs():
    m = random_material(5)
    views = sample_nine_views(6)
    out = pbr_total_loss(m, m, views)
    assert out.map_l1 == 0.0 and out.render == 0.0 and out.kl == 0.0
    assert out.total == 0.0
    assert isinstance(out, LossBreakdown)


def _stack_to_maps(x: Tensor):
    albedo = x[:, :, 0:3]
    n_raw = E.sub(E.mul(x[:, :, 3:6], 2.0), 1.0)
    norm = E.sqrt(E.sum_(E.mul(n_raw, n_raw), axis=-1, keepdims=True))
    return albedo, E.div(n_raw, norm), x[:, :, 6:7], x[:, :, 7:8]


def render_loss_grad_setup(res: int = 8):
    """A well-conditioned differentiable-render configuration.

    Near-field collocated views keep every texel clear of the n.l = 0
    visibility kink, and the reference render is shifted in log space
    into the largest gap of the |log pred - log ref| distribution so
    finite differences never straddle the L1 subgradient.
    """
    stream = Rng(31).stream("stack")
    base = np.zeros((res, res, 8))
    base[:, :, 0:3] = stream.uniform((res, res, 3)) * 0.5 + 0.3    # albedo
    base[:, :, 3:5] = stream.uniform((res, res, 2)) * 0.2 + 0.4    # mild tilts
    base[:, :, 5] = 0.85                                           # encoded z
    base[:, :, 6] = stream.uniform((res, res)) * 0.4 + 0.5         # broad lobes
    base[:, :, 7] = stream.uniform((res, res)) * 0.4 + 0.1
    # bright lights keep pred + 0.01 well away from the log pole, where the
    # third derivative would swamp an h = 1e-3 central difference
    views = [RenderSetup((0.3, -0.2, 2.5), (0.3, -0.2, 2.5), 16.0),
             RenderSetup((-0.4, 0.3, 2.0), (-0.4, 0.3, 2.0), 16.0)]
    geom = setup_geometry(views, res, dtype=np.float64)
    ref = random_material(9, res)
    ref_img = render_views(ref.albedo.astype(np.float64), ref.normal.astype(np.float64),
                           ref.roughness.astype(np.float64),
                           ref.metallic.astype(np.float64), geom).data

    albedo, normal, rough, metal = _stack_to_maps(Tensor(base.copy()))
    pred = render_views(albedo, normal, rough, metal, geom).data
    diffs = np.log(pred + 0.01) - np.log(ref_img + 0.01)
    best_shift, best_margin = 0.0, 0.0
    for shift in np.linspace(0.0, 0.4, 201):
        margin = np.abs(diffs - shift).min()
        if margin > best_margin:
            best_shift, best_margin = shift, margin
    ref_img = (ref_img + 0.01) * math.exp(best_shift) - 0.01
    assert best_margin > 5e-3, "could not nudge ties clear of the subgradient"
    return base, geom, Tensor(ref_img)


def test_render_loss_gradient_matches_finite_differences():
    """Analytic grads through render + log loss vs central differences (64-bit)."""
    base, geom, ref_t = render_loss_grad_setup(res=8)

    def f(x):
        albedo, normal, rough, metal = _stack_to_maps(x)
        pred = render_views(albedo, normal, rough, metal, geom)
        return log_l1_render_loss_t(pred, ref_t)

    err = grad_check(f, Tensor(base.copy()), h=1e-3)
    assert err < 1e-4
