"""Config-only ingestion path: published model configs to ``.mir.json``.

Supports vision-language configs of the LLaVA family (a CLIP-style vision
tower, a 2-layer GELU projector, and a LLaMA-style decoder) and plain decoder
configs (llama/vicuna/mistral model types). Dimensions are read from the
standard HuggingFace-style keys; anything missing is an error, never a
default, and anything else about the family being unknown fails the export.

The vision tower is emitted with exact attention and the decoder with
memory-efficient attention; the two bracket real kernels and can be
overridden per module.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

from .classify import ir_param_count
from .errors import (
    ExportError,
    MissingDimensionError,
    UnrecognizedArchitectureError,
)

MODALITY_TOKEN_SOURCE = {
    "vision": "image_patches",
    "projector": "image_patches",
    "language": "text_tokens",
    "other": "text_tokens",
}

DEFAULT_LLAVA_MODALITIES = {
    "vision_tower": "vision",
    "projector": "projector",
    "language_model": "language",
}


@dataclass(frozen=True)
class ExportResult:
    ir: dict[str, Any]
    element_count: int
    elements_by_module: dict[str, int]


def _dim(section: dict, key: str, *, prefix: str = "") -> int:
    if key not in section or section[key] is None:
        raise MissingDimensionError(f"{prefix}{key}")
    value = section[key]
    if type(value) is not int or value <= 0:
        raise ExportError(f"dimension {prefix}{key} must be a positive integer, got {value!r}")
    return value


def _layer(name: str, kind: str, hyperparams: dict[str, Any]) -> dict[str, Any]:
    return {"name": name, "kind": kind, "hyperparams": hyperparams}


def _linear(name, in_features, out_features, has_bias=True):
    return _layer(name, "linear", {
        "in_features": in_features, "out_features": out_features, "has_bias": has_bias,
    })


def _norm(name, hidden):
    return _layer(name, "layer_norm", {"hidden": hidden})


def _attention(name, hidden, heads, mode):
    return _layer(name, "attention", {"hidden": hidden, "num_heads": heads, "mode": mode})


def _clip_vision_layers(section: dict, *, attention_mode: str) -> list[dict]:
    prefix = "vision_config."
    hidden = _dim(section, "hidden_size", prefix=prefix)
    mlp = _dim(section, "intermediate_size", prefix=prefix)
    heads = _dim(section, "num_attention_heads", prefix=prefix)
    blocks = _dim(section, "num_hidden_layers", prefix=prefix)
    patch = _dim(section, "patch_size", prefix=prefix)
    image = _dim(section, "image_size", prefix=prefix)
    if image % patch:
        raise ExportError(f"image_size {image} is not a multiple of patch_size {patch}")
    grid = image // patch
    layers = [
        _layer("patch_embed", "conv2d", {
            "in_channels": 3, "out_channels": hidden,
            "kernel_h": patch, "kernel_w": patch,
            "stride_h": patch, "stride_w": patch,
            "input_h": image, "input_w": image,
        }),
        _layer("pos_embed", "embedding", {"vocab_size": grid * grid + 1, "hidden": hidden}),
        _norm("pre_norm", hidden),
    ]
    for i in range(blocks):
        layers += [
            _norm(f"blk{i}.attn_norm", hidden),
            _attention(f"blk{i}.attn", hidden, heads, attention_mode),
            _norm(f"blk{i}.mlp_norm", hidden),
            _linear(f"blk{i}.mlp.fc1", hidden, mlp),
            _layer(f"blk{i}.mlp.gelu", "activation_fn", {"width": mlp}),
            _linear(f"blk{i}.mlp.fc2", mlp, hidden),
        ]
    layers.append(_norm("post_norm", hidden))
    return layers


def _llama_decoder_layers(section: dict, *, attention_mode: str, prefix: str) -> list[dict]:
    hidden = _dim(section, "hidden_size", prefix=prefix)
    inter = _dim(section, "intermediate_size", prefix=prefix)
    heads = _dim(section, "num_attention_heads", prefix=prefix)
    blocks = _dim(section, "num_hidden_layers", prefix=prefix)
    vocab = _dim(section, "vocab_size", prefix=prefix)
    layers = [_layer("embed_tokens", "embedding", {"vocab_size": vocab, "hidden": hidden})]
    for i in range(blocks):
        layers += [
            _norm(f"blk{i}.input_norm", hidden),
            _attention(f"blk{i}.attn", hidden, heads, attention_mode),
            _norm(f"blk{i}.post_attn_norm", hidden),
            _linear(f"blk{i}.mlp.gate", hidden, inter, has_bias=False),
            _linear(f"blk{i}.mlp.up", hidden, inter, has_bias=False),
            _layer(f"blk{i}.mlp.silu", "activation_fn", {"width": inter}),
            _linear(f"blk{i}.mlp.down", inter, hidden, has_bias=False),
        ]
    layers += [
        _norm("final_norm", hidden),
        _layer("lm_head", "lm_head_loss", {"hidden": hidden, "vocab_size": vocab}),
    ]
    return layers


def _projector_layers(vision_hidden: int, text_hidden: int) -> list[dict]:
    return [
        _linear("fc1", vision_hidden, text_hidden),
        _layer("gelu", "activation_fn", {"width": text_hidden}),
        _linear("fc2", text_hidden, text_hidden),
    ]


_TEXT_ONLY_FAMILIES = {"llama", "vicuna", "mistral"}


def _family_of(config: dict) -> str:
    model_type = config.get("model_type")
    if model_type:
        return str(model_type)
    for arch in config.get("architectures", []) or []:
        lowered = arch.lower()
        if "llava" in lowered:
            return "llava"
        for family in _TEXT_ONLY_FAMILIES:
            if family in lowered:
                return family
    raise UnrecognizedArchitectureError(
        "config declares neither model_type nor a recognizable architectures entry"
    )


def export_from_config(
    config: dict[str, Any],
    modality_map: dict[str, str] | None = None,
    *,
    name: str | None = None,
    attention_modes: dict[str, str] | None = None,
    expected_total_params: int | None = None,
    tolerance: float = 0.02,
) -> ExportResult:
    """Emit an IR object for a published model config.

    ``modality_map`` overrides the modality assigned to each emitted module
    (module name -> modality); token sources follow the modality.
    ``attention_modes`` overrides the attention encoding per module. When
    ``expected_total_params`` (the family's published count) is given, the
    export fails if its own element count strays beyond ``tolerance``.
    """
    family = _family_of(config)
    modes = {"vision_tower": "exact", "language_model": "memory_efficient"}
    modes.update(attention_modes or {})

    if family == "llava":
        vision_cfg = config.get("vision_config")
        text_cfg = config.get("text_config")
        if not isinstance(vision_cfg, dict):
            raise MissingDimensionError("vision_config")
        if not isinstance(text_cfg, dict):
            raise MissingDimensionError("text_config")
        modules = [
            ("vision_tower", _clip_vision_layers(vision_cfg, attention_mode=modes["vision_tower"])),
            ("projector", _projector_layers(
                _dim(vision_cfg, "hidden_size", prefix="vision_config."),
                _dim(text_cfg, "hidden_size", prefix="text_config."),
            )),
            ("language_model", _llama_decoder_layers(
                text_cfg, attention_mode=modes["language_model"], prefix="text_config.",
            )),
        ]
        modalities = dict(DEFAULT_LLAVA_MODALITIES)
    elif family in _TEXT_ONLY_FAMILIES:
        modules = [
            ("language_model", _llama_decoder_layers(
                config, attention_mode=modes["language_model"], prefix="",
            )),
        ]
        modalities = {"language_model": "language"}
    else:
        raise UnrecognizedArchitectureError(f"unsupported architecture family {family!r}")

    for module_name, modality in (modality_map or {}).items():
        if module_name not in modalities:
            raise ExportError(f"modality_map names unknown module {module_name!r}")
        if modality not in MODALITY_TOKEN_SOURCE:
            raise ExportError(f"unknown modality {modality!r} for module {module_name!r}")
        modalities[module_name] = modality

    elements_by_module: dict[str, int] = {}
    module_objs = []
    for module_name, layers in modules:
        modality = modalities[module_name]
        elements_by_module[module_name] = sum(
            ir_param_count(l["kind"], l["hyperparams"]) for l in layers
        )
        module_objs.append({
            "name": module_name,
            "modality": modality,
            "token_source": MODALITY_TOKEN_SOURCE[modality],
            "trainable": "all",
            "layers": layers,
        })
    total = sum(elements_by_module.values())

    if expected_total_params is not None:
        drift = abs(total - expected_total_params) / expected_total_params
        if drift > tolerance:
            raise ExportError(
                f"export accounts for {total} elements, {drift:.1%} away from the "
                f"published {expected_total_params} (tolerance {tolerance:.0%})"
            )

    ir = {"name": name or f"{family}-export", "modules": module_objs}
    return ExportResult(ir=ir, element_count=total, elements_by_module=elements_by_module)


def export_config_file(
    config_path: str,
    out_path: str,
    **kwargs,
) -> ExportResult:
    """Read a host config JSON, export, and write the ``.mir.json`` document."""
    with open(config_path, encoding="utf-8") as handle:
        config = json.load(handle)
    result = export_from_config(config, **kwargs)
    with open(out_path, "w", encoding="utf-8") as handle:
        json.dump(result.ir, handle, indent=2)
        handle.write("\n")
    return result
