"""Shared builders, randomized model/config generators, and fixture paths."""

from __future__ import annotations

import random
from pathlib import Path

import pytest

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
    parse_ir,
)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
LLAVA_IR_PATH = FIXTURES / "llava15_7b.mir.json"
PRETRAIN_CFG_PATH = FIXTURES / "pretrain_s1024_mbs16.tcfg.json"
FINETUNE_CFG_PATH = FIXTURES / "finetune_s2048_mbs8.tcfg.json"


def embedding(name="emb", vocab=16, hidden=8, trainable=True):
    return LayerDesc(name, LayerKind.EMBEDDING,
                     {"vocab_size": vocab, "hidden": hidden}, trainable)


def linear(name="fc", in_features=8, out_features=8, bias=True, trainable=True):
    return LayerDesc(name, LayerKind.LINEAR,
                     {"in_features": in_features, "out_features": out_features,
                      "has_bias": bias}, trainable)


def layer_norm(name="ln", hidden=8, trainable=True):
    return LayerDesc(name, LayerKind.LAYER_NORM, {"hidden": hidden}, trainable)


def attention(name="attn", hidden=8, heads=2, mode="exact", trainable=True):
    return LayerDesc(name, LayerKind.ATTENTION,
                     {"hidden": hidden, "num_heads": heads, "mode": mode}, trainable)


def activation_fn(name="act", width=8, trainable=True):
    return LayerDesc(name, LayerKind.ACTIVATION_FN, {"width": width}, trainable)


def dropout(name="drop", width=8, trainable=True):
    return LayerDesc(name, LayerKind.DROPOUT, {"width": width}, trainable)


def conv2d(name="conv", in_channels=3, out_channels=4, kernel=2, stride=2,
           input_hw=8, trainable=True):
    return LayerDesc(name, LayerKind.CONV2D,
                     {"in_channels": in_channels, "out_channels": out_channels,
                      "kernel_h": kernel, "kernel_w": kernel,
                      "stride_h": stride, "stride_w": stride,
                      "input_h": input_hw, "input_w": input_hw}, trainable)


def lm_head_loss(name="head", hidden=8, vocab=16, trainable=True):
    return LayerDesc(name, LayerKind.LM_HEAD_LOSS,
                     {"hidden": hidden, "vocab_size": vocab}, trainable)


ALL_KIND_LAYERS = [
    embedding(), linear(), layer_norm(), attention(),
    activation_fn(), dropout(), conv2d(), lm_head_loss(),
]


def module(name="m", layers=(), modality=Modality.OTHER,
           token_source=TokenSource.TEXT_TOKENS, trainable=TrainMode.ALL,
           fixed_token_count=None):
    return ModuleDesc(name, modality, token_source, tuple(layers), trainable,
                      fixed_token_count)


def model(*modules_, name="m"):
    return ModelIR(name, tuple(modules_))


def simple_config(**overrides) -> TrainConfig:
    defaults = dict(
        micro_batch_size=1,
        text_token_count=1,
        image_patch_token_count=1,
        precision=Precision.FP32,
        optimizer=OptimizerKind.ADAM,
        zero_stage=0,
        dp_degree=1,
    )
    defaults.update(overrides)
    return TrainConfig(**defaults)


def random_layer(rng: random.Random, index: int) -> LayerDesc:
    kind = rng.choice(list(LayerKind))
    name = f"l{index}"
    if kind is LayerKind.EMBEDDING:
        return embedding(name, rng.randint(1, 64), rng.randint(1, 64))
    if kind is LayerKind.LINEAR:
        return linear(name, rng.randint(1, 64), rng.randint(1, 64), rng.random() < 0.5)
    if kind is LayerKind.LAYER_NORM:
        return layer_norm(name, rng.randint(1, 64))
    if kind is LayerKind.ATTENTION:
        heads = rng.choice([1, 2, 4])
        return attention(name, heads * rng.randint(1, 64 // heads), heads,
                         rng.choice(["exact", "memory_efficient"]))
    if kind is LayerKind.ACTIVATION_FN:
        return activation_fn(name, rng.randint(1, 64))
    if kind is LayerKind.DROPOUT:
        return dropout(name, rng.randint(1, 64))
    if kind is LayerKind.CONV2D:
        input_hw = rng.randint(2, 16)
        kernel = rng.randint(1, input_hw)
        return conv2d(name, rng.randint(1, 8), rng.randint(1, 8), kernel,
                      rng.randint(1, 4), input_hw)
    return lm_head_loss(name, rng.randint(1, 64), rng.randint(1, 64))


def random_ir(rng: random.Random, max_layers: int = 12) -> ModelIR:
    n_modules = rng.randint(1, 3)
    budget = rng.randint(n_modules, max_layers)
    sizes = [1] * n_modules
    for _ in range(budget - n_modules):
        sizes[rng.randrange(n_modules)] += 1
    modules = []
    for i, size in enumerate(sizes):
        token_source = rng.choice(list(TokenSource))
        fixed = rng.randint(1, 64) if token_source is TokenSource.FIXED else None
        layers = []
        for j in range(size):
            layer = random_layer(rng, j)
            if rng.random() < 0.3:
                layer = LayerDesc(layer.name, layer.kind, layer.hyperparams, trainable=False)
            layers.append(layer)
        modules.append(module(
            name=f"mod{i}",
            layers=layers,
            modality=rng.choice(list(Modality)),
            token_source=token_source,
            trainable=rng.choice(list(TrainMode)),
            fixed_token_count=fixed,
        ))
    return model(*modules, name=f"rand-{rng.randint(0, 10**6)}")


def random_config(rng: random.Random, ir: ModelIR) -> TrainConfig:
    names = [m.name for m in ir.modules]
    frozen = frozenset(n for n in names if rng.random() < 0.4)
    return TrainConfig(
        micro_batch_size=rng.randint(1, 4),
        text_token_count=rng.randint(1, 64),
        image_patch_token_count=rng.randint(1, 64),
        precision=rng.choice(list(Precision)),
        optimizer=rng.choice(list(OptimizerKind)),
        zero_stage=rng.choice([0, 1, 2]),
        dp_degree=rng.randint(1, 8),
        frozen_modules=frozen,
    )


@pytest.fixture(scope="session")
def llava_ir():
    return parse_ir(LLAVA_IR_PATH.read_text(encoding="utf-8"))
