"""Exact gradients of the alignment loss with respect to hypernet weights.

The loss of one training step is

    S_eps( encode(batch; lora(hw, d)),  h_sae )

computed with exactly ``unroll_iters`` Sinkhorn update pairs per transport
term (see :func:`hyperlora.ot.sinkhorn_divergence_unrolled`).  This module
evaluates that loss on the reverse-mode tape and returns gradients for the
hypernetwork tensors only; the frozen encoder contributes no leaves, so
gradients with respect to it cannot even be represented.

The final Sinkhorn potentials are part of the differentiated graph (not
detached), which keeps the analytic gradient exactly the derivative of the
computed loss; :func:`finite_diff_check` verifies that to first order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tape as tp
from .encoder import EncoderStack, batch_encode, token_ids, forward_ids
from .errors import ArgumentError, NumericError
from .hypernet import HypernetConfig, HypernetWeights, generate_lora
from .mathx import numpy_ops
from .ot import (OTConfig, PointCloud, _cost_matrix_ops, _log_weights,
                 _unrolled_w, sinkhorn_divergence_unrolled)

_TENSOR_NAMES = ("down/w1", "down/b1", "down/w2", "down/b2",
                 "up/w1", "up/b1", "up/w2", "up/b2")


@dataclass(frozen=True)
class AlignmentSetup:
    """Everything fixed during differentiation: encoder, shapes, OT knobs."""

    encoder: EncoderStack
    hyper_cfg: HypernetConfig
    ot_cfg: OTConfig = OTConfig()


@dataclass(frozen=True)
class GradReport:
    loss: float
    grads: dict[str, np.ndarray]


def alignment_loss(hw: HypernetWeights, d, batch, h_sae: PointCloud,
                   setup: AlignmentSetup, tensors=None) -> float:
    """Plain-array evaluation of the training loss (no tape).

    Bitwise-equal to the loss :func:`loss_and_grad` reports, and by
    construction equal to ``sinkhorn_divergence_unrolled(batch_encode(...),
    h_sae)``.
    """
    enc = setup.encoder
    lora = generate_lora(hw, d, setup.hyper_cfg, tensors=tensors)
    cloud = PointCloud(batch_encode(enc.cfg, enc.weights, lora, batch))
    return sinkhorn_divergence_unrolled(cloud, h_sae, setup.ot_cfg)


def loss_and_grad(hw: HypernetWeights, d, batch, h_sae: PointCloud,
                  setup: AlignmentSetup) -> GradReport:
    """Taped loss evaluation plus gradients for every hypernet tensor."""
    enc = setup.encoder
    t = tp.Tape()
    leaves = {name: t.leaf(hw.tensors[name], name)
              for name in _TENSOR_NAMES}
    lora = generate_lora(hw, d, setup.hyper_cfg, tensors=leaves,
                         ops=tp.tape_ops)
    rows = [forward_ids(enc.cfg, enc.weights, lora,
                        token_ids(s.tokens, enc.cfg), tp.tape_ops)
            for s in batch]
    cloud = tp.concat(rows, axis=0)
    n = cloud.shape[0]
    loga = _log_weights(PointCloud(cloud.value))
    logb = _log_weights(h_sae)
    eps, n_iters = setup.ot_cfg.epsilon, setup.ot_cfg.unroll_iters
    c_ab = _cost_matrix_ops(cloud, h_sae.points, tp.tape_ops)
    c_aa = _cost_matrix_ops(cloud, cloud, tp.tape_ops)
    c_bb = _cost_matrix_ops(h_sae.points, h_sae.points, numpy_ops)
    w_ab = _unrolled_w(c_ab, loga, logb, eps, n_iters, tp.tape_ops)
    w_aa = _unrolled_w(c_aa, loga, loga, eps, n_iters, tp.tape_ops)
    w_bb = _unrolled_w(c_bb, logb, logb, eps, n_iters, numpy_ops)
    loss = w_ab - 0.5 * w_aa - 0.5 * float(w_bb)
    if not np.isfinite(loss.value):
        where = t.first_nonfinite()
        raise NumericError(
            "non-finite loss; first bad primitive: "
            f"node #{where[0]} ({where[1]})" if where else "non-finite loss")
    grad_list = t.gradients(loss, [leaves[name] for name in _TENSOR_NAMES])
    return GradReport(loss=float(loss.value),
                      grads=dict(zip(_TENSOR_NAMES, grad_list)))


def finite_diff_check(hw: HypernetWeights, d, batch, h_sae: PointCloud,
                      setup: AlignmentSetup, n_probes: int,
                      step: float = 1e-6, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    Perturbs ``n_probes`` randomly chosen weight scalars by +/-step; the
    relative error denominator is max(|analytic|, |numeric|, 1e-8).
    """
    if n_probes < 1:
        raise ArgumentError("n_probes must be >= 1")
    report = loss_and_grad(hw, d, batch, h_sae, setup)
    coords = [(name, i) for name in _TENSOR_NAMES
              for i in range(hw.tensors[name].size)]
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(coords), size=min(n_probes, len(coords)),
                       replace=False)
    work = {name: arr.copy() for name, arr in hw.tensors.items()}
    worst = 0.0
    for p in picks:
        name, i = coords[p]
        flat = work[name].ravel()
        orig = flat[i]
        flat[i] = orig + step
        up = alignment_loss(hw, d, batch, h_sae, setup, tensors=work)
        flat[i] = orig - step
        down = alignment_loss(hw, d, batch, h_sae, setup, tensors=work)
        flat[i] = orig
        numeric = (up - down) / (2.0 * step)
        analytic = report.grads[name].ravel()[i]
        denom = max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, abs(analytic - numeric) / denom)
    return worst
