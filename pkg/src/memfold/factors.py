"""Per-layer analytical byte counts for the four memory factors.

For every layer the predictor books parameters, optimizer state, gradients,
and activations separately. Parameter bytes are unconditional (frozen weights
still live on the GPU); gradient and optimizer bytes exist only for trainable
layers and are divided across data-parallel ranks per the configured sharding
stage; activation bytes exist only for layers that must keep their forward
outputs for the backward pass.

Activation ownership convention: a layer accounts only for tensors it
materializes (its outputs plus kind-specific internals). Its inputs belong to
the producing layer, so summing layers never double-counts.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ir import LayerDesc, LayerKind, param_count
from .policy import PlanEntry, TrainConfig, dtype_plan


@dataclass(frozen=True)
class FactorBreakdown:
    """Per-layer factor bytes. Frozen layers have m_opt == m_grad == 0."""

    layer_path: str
    m_param: int
    m_opt: int
    m_grad: int
    m_act: int


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def factor_param(layer: LayerDesc, entry: PlanEntry) -> int:
    """Parameter bytes: element count times storage width, trainable or not."""
    return param_count(layer) * entry.param_bytes_per_elem


def factor_grad(layer: LayerDesc, entry: PlanEntry) -> int:
    """Gradient bytes, sharded across ranks with byte-level ceiling division."""
    if not entry.trainable:
        return 0
    return _ceil_div(
        param_count(layer) * entry.grad_bytes_per_elem, entry.partition_divisor_grad
    )


def factor_opt(layer: LayerDesc, entry: PlanEntry) -> int:
    """Optimizer-state bytes (incl. any fp32 master copy), sharded like grads."""
    if not entry.trainable:
        return 0
    return _ceil_div(
        param_count(layer) * entry.opt_bytes_per_param, entry.partition_divisor_opt
    )


def conv2d_output_hw(hyperparams: dict) -> tuple[int, int]:
    """Spatial output extent of a conv2d layer (valid padding)."""
    h = hyperparams
    out_h = (h["input_h"] - h["kernel_h"]) // h["stride_h"] + 1
    out_w = (h["input_w"] - h["kernel_w"]) // h["stride_w"] + 1
    return out_h, out_w


def factor_act(layer: LayerDesc, entry: PlanEntry, cfg: TrainConfig) -> int:
    """Activation bytes retained for the backward pass; 0 if nothing is kept.

    With b = micro-batch size, s = the module's token count, and e = bytes
    per activation element:

      embedding / layer_norm     b*s*hidden*e
      linear                     b*s*out_features*e
      activation_fn              b*s*width*e
      dropout                    b*s*width (1-byte mask per element)
      attention, memory_efficient  5*b*s*hidden*e            (Q, K, V, attn out, proj out)
      attention, exact             ... + 2*b*num_heads*s^2*e (score and prob matrices)
      conv2d                     b*out_channels*out_h*out_w*e
      lm_head_loss               b*s*vocab_size*e            (logits)
    """
    if not entry.stores_activations:
        return 0
    h = layer.hyperparams
    b = cfg.micro_batch_size
    s = entry.token_count
    e = dtype_plan(cfg).act_bytes
    kind = layer.kind
    if kind is LayerKind.EMBEDDING or kind is LayerKind.LAYER_NORM:
        return b * s * h["hidden"] * e
    if kind is LayerKind.LINEAR:
        return b * s * h["out_features"] * e
    if kind is LayerKind.ACTIVATION_FN:
        return b * s * h["width"] * e
    if kind is LayerKind.DROPOUT:
        return b * s * h["width"]
    if kind is LayerKind.ATTENTION:
        total = 5 * b * s * h["hidden"] * e
        if h["mode"] == "exact":
            total += 2 * b * h["num_heads"] * s * s * e
        return total
    if kind is LayerKind.CONV2D:
        out_h, out_w = conv2d_output_hw(h)
        return b * h["out_channels"] * out_h * out_w * e
    if kind is LayerKind.LM_HEAD_LOSS:
        return b * s * h["vocab_size"] * e
    raise AssertionError(f"unhandled layer kind: {kind}")


def predict_layer(layer: LayerDesc, entry: PlanEntry, cfg: TrainConfig) -> FactorBreakdown:
    """Assemble the four factor byte counts for one layer."""
    return FactorBreakdown(
        layer_path=entry.layer_path,
        m_param=factor_param(layer, entry),
        m_opt=factor_opt(layer, entry),
        m_grad=factor_grad(layer, entry),
        m_act=factor_act(layer, entry, cfg),
    )
