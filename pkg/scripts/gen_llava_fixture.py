#!/usr/bin/env python3
"""Regenerate the LLaVA-1.5-7B-like fixture files under fixtures/.

Architecture: CLIP-ViT-L/14 style vision tower at 336px (hidden 1024, 24
blocks, heads 16, mlp 4096), a 2-layer GELU projector into the decoder width,
and a Vicuna/LLaMA-7B style decoder (hidden 4096, 32 blocks, heads 32,
intermediate 11008, vocab 32000). Attention is encoded as the fused layer
kind; the vision tower uses exact attention, the decoder memory-efficient.
"""

from pathlib import Path

from memfold import (
    LayerDesc,
    LayerKind,
    Modality,
    ModelIR,
    ModuleDesc,
    OptimizerKind,
    Precision,
    TokenSource,
    TrainConfig,
    TrainMode,
    param_count,
    serialize_config,
    serialize_ir,
    validate_ir,
)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def linear(name, in_features, out_features, bias=True):
    return LayerDesc(name, LayerKind.LINEAR, {
        "in_features": in_features, "out_features": out_features, "has_bias": bias,
    })


def norm(name, hidden):
    return LayerDesc(name, LayerKind.LAYER_NORM, {"hidden": hidden})


def attention(name, hidden, heads, mode):
    return LayerDesc(name, LayerKind.ATTENTION, {
        "hidden": hidden, "num_heads": heads, "mode": mode,
    })


def act(name, width):
    return LayerDesc(name, LayerKind.ACTIVATION_FN, {"width": width})


def vision_tower(hidden=1024, heads=16, mlp=4096, blocks=24, patch=14, image=336):
    grid = image // patch
    layers = [
        LayerDesc("patch_embed", LayerKind.CONV2D, {
            "in_channels": 3, "out_channels": hidden,
            "kernel_h": patch, "kernel_w": patch,
            "stride_h": patch, "stride_w": patch,
            "input_h": image, "input_w": image,
        }),
        LayerDesc("pos_embed", LayerKind.EMBEDDING, {
            "vocab_size": grid * grid + 1, "hidden": hidden,
        }),
        norm("pre_norm", hidden),
    ]
    for i in range(blocks):
        layers += [
            norm(f"blk{i}.attn_norm", hidden),
            attention(f"blk{i}.attn", hidden, heads, "exact"),
            norm(f"blk{i}.mlp_norm", hidden),
            linear(f"blk{i}.mlp.fc1", hidden, mlp),
            act(f"blk{i}.mlp.gelu", mlp),
            linear(f"blk{i}.mlp.fc2", mlp, hidden),
        ]
    layers.append(norm("post_norm", hidden))
    return ModuleDesc("vision", Modality.VISION, TokenSource.IMAGE_PATCHES,
                      tuple(layers), TrainMode.ALL)


def projector(vision_hidden=1024, text_hidden=4096):
    layers = (
        linear("fc1", vision_hidden, text_hidden),
        act("gelu", text_hidden),
        linear("fc2", text_hidden, text_hidden),
    )
    return ModuleDesc("projector", Modality.PROJECTOR, TokenSource.IMAGE_PATCHES,
                      layers, TrainMode.ALL)


def language_decoder(hidden=4096, heads=32, intermediate=11008, blocks=32, vocab=32000):
    layers = [
        LayerDesc("embed_tokens", LayerKind.EMBEDDING, {"vocab_size": vocab, "hidden": hidden}),
    ]
    for i in range(blocks):
        layers += [
            norm(f"blk{i}.input_norm", hidden),
            attention(f"blk{i}.attn", hidden, heads, "memory_efficient"),
            norm(f"blk{i}.post_attn_norm", hidden),
            linear(f"blk{i}.mlp.gate", hidden, intermediate, bias=False),
            linear(f"blk{i}.mlp.up", hidden, intermediate, bias=False),
            act(f"blk{i}.mlp.silu", intermediate),
            linear(f"blk{i}.mlp.down", intermediate, hidden, bias=False),
        ]
    layers += [
        norm("final_norm", hidden),
        LayerDesc("lm_head", LayerKind.LM_HEAD_LOSS, {"hidden": hidden, "vocab_size": vocab}),
    ]
    return ModuleDesc("language", Modality.LANGUAGE, TokenSource.TEXT_TOKENS,
                      tuple(layers), TrainMode.ALL)


def build_ir() -> ModelIR:
    return ModelIR("llava-1.5-7b-like", (vision_tower(), projector(), language_decoder()))


def main():
    FIXTURES.mkdir(exist_ok=True)
    ir = build_ir()
    assert validate_ir(ir) == []
    total = sum(param_count(l) for m in ir.modules for l in m.layers)
    (FIXTURES / "llava15_7b.mir.json").write_text(serialize_ir(ir) + "\n", encoding="utf-8")
    print(f"wrote llava15_7b.mir.json: {sum(len(m.layers) for m in ir.modules)} layers, "
          f"{total:,} params")

    # stage-1-style run: only the projector trains
    pretrain = TrainConfig(
        micro_batch_size=16,
        text_token_count=1024,
        image_patch_token_count=577,  # (336/14)^2 + 1
        precision=Precision.MIXED_BF16,
        optimizer=OptimizerKind.ADAM,
        zero_stage=2,
        dp_degree=8,
        frozen_modules=frozenset({"vision", "language"}),
    )
    (FIXTURES / "pretrain_s1024_mbs16.tcfg.json").write_text(
        serialize_config(pretrain) + "\n", encoding="utf-8")

    # stage-2-style run: vision stays frozen, projector + decoder train
    finetune = TrainConfig(
        micro_batch_size=8,
        text_token_count=2048,
        image_patch_token_count=577,
        precision=Precision.MIXED_BF16,
        optimizer=OptimizerKind.ADAM,
        zero_stage=2,
        dp_degree=8,
        frozen_modules=frozenset({"vision"}),
    )
    (FIXTURES / "finetune_s2048_mbs8.tcfg.json").write_text(
        serialize_config(finetune) + "\n", encoding="utf-8")
    print("wrote pretrain_s1024_mbs16.tcfg.json, finetune_s2048_mbs8.tcfg.json")


if __name__ == "__main__":
    main()
