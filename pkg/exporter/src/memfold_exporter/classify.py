"""Classification table: host (PyTorch-style) layer types onto IR layer kinds.

Both ingestion paths (live module trees and config-only export) go through
this table. The mapping is fail-closed on purpose: a host type that is not
listed raises instead of being skipped, and a listed type whose parameter
layout does not match the IR kind's accounting (e.g. a LayerNorm without a
bias, or a Conv2d without one) also raises, because the IR-side count would
silently diverge from the real model.

A handful of genuinely parameterless, allocation-free types (Identity,
Flatten) are explicit no-ops: they are in the table and map to nothing.
"""

from __future__ import annotations

from typing import Any

from .errors import UnmappedLayerTypeError

# Exporter-side element accounting per IR kind. Deliberately written here,
# independently of the predictor package, so the two can cross-check.
PARAM_COUNTS = {
    "embedding": lambda h: h["vocab_size"] * h["hidden"],
    "linear": lambda h: h["in_features"] * h["out_features"]
    + (h["out_features"] if h["has_bias"] else 0),
    "layer_norm": lambda h: 2 * h["hidden"],
    "attention": lambda h: 4 * h["hidden"] * (h["hidden"] + 1),
    "activation_fn": lambda h: 0,
    "dropout": lambda h: 0,
    "conv2d": lambda h: h["out_channels"] * (h["in_channels"] * h["kernel_h"] * h["kernel_w"] + 1),
    "lm_head_loss": lambda h: h["hidden"] * h["vocab_size"],
}


def ir_param_count(kind: str, hyperparams: dict[str, Any]) -> int:
    return PARAM_COUNTS[kind](hyperparams)


_ACTIVATION_TYPES = {
    "ReLU", "GELU", "SiLU", "Tanh", "Sigmoid", "LeakyReLU", "ELU", "Mish",
    "QuickGELU", "NewGELU", "GELUActivation", "SiLUActivation", "PytorchGELUTanh",
}

# Atomic types are classified whole even though they have submodules.
ATOMIC_TYPES = {"MultiheadAttention"}

_NOOP_TYPES = {"Identity", "Flatten"}


def _require(module: Any, attr: str, type_name: str):
    value = getattr(module, attr, None)
    if value is None:
        raise UnmappedLayerTypeError(
            type_name, where=f"{type_name} without {attr!r} (accounting would not match)"
        )
    return value


def _pair(value) -> tuple[int, int]:
    if isinstance(value, (tuple, list)):
        return int(value[0]), int(value[1])
    return int(value), int(value)


def classify_layer(
    module: Any,
    *,
    width_hint: int | None = None,
    input_hw: tuple[int, int] | None = None,
    attention_mode: str = "exact",
) -> tuple[str, dict[str, Any]] | None:
    """Map one host module onto an IR layer kind plus hyperparameters.

    ``width_hint`` supplies the feature width for width-less host types
    (dropout, activation functions), inferred by the caller from the
    surrounding block. ``input_hw`` supplies the spatial input extent for
    conv layers, which host modules do not carry. Returns None for explicit
    no-op types; raises UnmappedLayerTypeError for everything not in the
    table.
    """
    type_name = type(module).__name__
    if type_name in _NOOP_TYPES:
        return None
    if type_name == "Linear" or type_name == "NonDynamicallyQuantizableLinear":
        return "linear", {
            "in_features": int(module.in_features),
            "out_features": int(module.out_features),
            "has_bias": getattr(module, "bias", None) is not None,
        }
    if type_name == "Embedding":
        return "embedding", {
            "vocab_size": int(module.num_embeddings),
            "hidden": int(module.embedding_dim),
        }
    if type_name == "LayerNorm":
        _require(module, "weight", type_name)
        _require(module, "bias", type_name)
        shape = module.normalized_shape
        if len(shape) != 1:
            raise UnmappedLayerTypeError(type_name, where=f"normalized_shape={tuple(shape)}")
        return "layer_norm", {"hidden": int(shape[0])}
    if type_name == "Conv2d":
        _require(module, "bias", type_name)
        if input_hw is None:
            raise UnmappedLayerTypeError(
                type_name, where="no input extent known; pass image_size to the walker"
            )
        kernel_h, kernel_w = _pair(module.kernel_size)
        stride_h, stride_w = _pair(module.stride)
        return "conv2d", {
            "in_channels": int(module.in_channels),
            "out_channels": int(module.out_channels),
            "kernel_h": kernel_h,
            "kernel_w": kernel_w,
            "stride_h": stride_h,
            "stride_w": stride_w,
            "input_h": int(input_hw[0]),
            "input_w": int(input_hw[1]),
        }
    if type_name == "Dropout":
        if width_hint is None:
            raise UnmappedLayerTypeError(type_name, where="no width inferable from context")
        return "dropout", {"width": int(width_hint)}
    if type_name in _ACTIVATION_TYPES:
        if width_hint is None:
            raise UnmappedLayerTypeError(type_name, where="no width inferable from context")
        return "activation_fn", {"width": int(width_hint)}
    if type_name == "MultiheadAttention":
        _require(module, "in_proj_weight", type_name)
        _require(module, "in_proj_bias", type_name)
        return "attention", {
            "hidden": int(module.embed_dim),
            "num_heads": int(module.num_heads),
            "mode": attention_mode,
        }
    raise UnmappedLayerTypeError(type_name)


def output_width(kind: str, hyperparams: dict[str, Any]) -> int | None:
    """Feature width a layer hands to its successor, for hint propagation."""
    if kind == "linear":
        return hyperparams["out_features"]
    if kind == "embedding":
        return hyperparams["hidden"]
    if kind in ("layer_norm", "attention"):
        return hyperparams["hidden"]
    if kind == "conv2d":
        return hyperparams["out_channels"]
    if kind in ("activation_fn", "dropout"):
        return hyperparams["width"]
    return None
