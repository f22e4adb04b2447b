"""Training losses: log-space rendering loss, map L1, KL penalty.

Each loss has a public float-returning form and a tensor form (suffix
`_t`) used inside training graphs; the tensor forms are the same math on
autodiff tensors.  The perceptual and adversarial slots of the full loss
are reserved but fixed at zero at this scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine as E
from .engine import Tensor
from .errors import ShapeError
from .materials import MaterialMaps
from .render import RenderedImage, RenderSetup, render_tensors

LOG_OFFSET = 0.01

DEFAULT_WEIGHTS = {"w_map": 1.0, "w_kl": 1e-6, "w_render": 1.0}


def _pixels(x) -> np.ndarray:
    if isinstance(x, RenderedImage):
        return x.pixels
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x)


# -- rendering loss ------------------------------------------------------------


def log_l1_render_loss_t(x: Tensor, y: Tensor) -> Tensor:
    if x.shape != y.shape:
        raise ShapeError(f"render loss operands differ: {x.shape} vs {y.shape}")
    lx = E.log(E.add(x, LOG_OFFSET))
    ly = E.log(E.add(y, LOG_OFFSET))
    return E.mean(E.abs_(E.sub(lx, ly)))


def log_l1_render_loss(x, y) -> float:
    """Mean |log(x + 0.01) - log(y + 0.01)| over pixels and channels."""
    return float(log_l1_render_loss_t(Tensor(_pixels(x)), Tensor(_pixels(y))).data)


# -- map L1 ----------------------------------------------------------------------


def map_l1_loss_t(pred_stack: Tensor, ref_stack: Tensor) -> Tensor:
    if pred_stack.shape != ref_stack.shape:
        raise ShapeError(f"map stacks differ: {pred_stack.shape} vs {ref_stack.shape}")
    return E.mean(E.abs_(E.sub(pred_stack, ref_stack)))


def map_l1_loss(pred: MaterialMaps, ref: MaterialMaps) -> float:
    """Mean absolute difference over the 8 channels (normals in encoded space)."""
    if pred.resolution != ref.resolution:
        raise ShapeError(f"material resolutions differ: {pred.resolution} vs {ref.resolution}")
    return float(map_l1_loss_t(Tensor(pred.encoded_stack()), Tensor(ref.encoded_stack())).data)


# -- KL ----------------------------------------------------------------------------


def kl_divergence_t(mu: Tensor, log_var: Tensor) -> Tensor:
    if mu.shape != log_var.shape:
        raise ShapeError(f"kl operands differ: {mu.shape} vs {log_var.shape}")
    term = E.sub(E.add(E.mul(mu, mu), E.exp(log_var)), E.add(log_var, 1.0))
    return E.mean(E.mul(term, 0.5))


def kl_divergence(mu, log_var) -> float:
    """Mean of 0.5 (mu^2 + exp(log_var) - 1 - log_var)."""
    return float(kl_divergence_t(Tensor(np.asarray(mu)), Tensor(np.asarray(log_var))).data)


# -- combined decoder loss ------------------------------------------------------------


@dataclass
class LossBreakdown:
    """Weighted components of the decoder training loss.

    perceptual/adversarial are reserved slots, always 0 here.
    """

    map_l1: float
    kl: float
    render: float
    total: float
    per_view_render: list[float] = field(default_factory=list)
    perceptual: float = 0.0
    adversarial: float = 0.0


def pbr_total_loss(pred: MaterialMaps, ref: MaterialMaps, views: list[RenderSetup],
                   weights: dict | None = None, kl_terms=None) -> LossBreakdown:
    """Map L1 + KL + mean nine-view log rendering loss, per configured weights."""
    w = dict(DEFAULT_WEIGHTS)
    if weights:
        w.update(weights)
    m = map_l1_loss(pred, ref)
    kl = kl_divergence(*kl_terms) if kl_terms is not None else 0.0
    per_view = []
    for setup in views:
        a = render_tensors(pred.albedo, pred.normal, pred.roughness, pred.metallic, setup)
        b = render_tensors(ref.albedo, ref.normal, ref.roughness, ref.metallic, setup)
        per_view.append(float(log_l1_render_loss_t(a, b).data))
    render_mean = float(np.mean(per_view)) if per_view else 0.0
    total = w["w_map"] * m + w["w_kl"] * kl + w["w_render"] * render_mean
    return LossBreakdown(map_l1=m, kl=kl, render=render_mean, total=total,
                         per_view_render=per_view)
