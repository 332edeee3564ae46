"""Per-factor byte formulas against hand-computed goldens and shape enumeration."""

import math
import random
from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from memfold import (
    OptimizerKind,
    Precision,
    activation_tensors,
    dtype_plan,
    factor_act,
    factor_grad,
    factor_opt,
    factor_param,
    param_count,
    predict_layer,
    resolve_plan,
)

from conftest import (
    ALL_KIND_LAYERS,
    attention,
    conv2d,
    dropout,
    embedding,
    linear,
    model,
    module,
    simple_config,
)


def entry_for(layer, cfg, *, frozen=False, stores=None, module_kwargs=None):
    """Resolve a single-layer model and return (entry, cfg)."""
    m = module("m", [layer], **(module_kwargs or {}))
    cfg = replace(cfg, frozen_modules=frozenset({"m"}) if frozen else frozenset())
    plan = resolve_plan(model(m), cfg)
    entry = plan.entries[0]
    if stores is not None:
        entry = replace(entry, stores_activations=stores)
    return entry


BIG_LINEAR = linear(in_features=4096, out_features=4096)  # 16,781,312 params


class TestFactorParam:
    def test_mixed_precision_linear(self):
        cfg = simple_config(precision=Precision.MIXED_FP16)
        entry = entry_for(BIG_LINEAR, cfg)
        assert factor_param(BIG_LINEAR, entry) == 33_562_624

    def test_dropout_zero(self):
        layer = dropout(width=4096)
        assert factor_param(layer, entry_for(layer, simple_config())) == 0

    def test_fp32_embedding(self):
        layer = embedding(vocab=32_000, hidden=4096)
        assert factor_param(layer, entry_for(layer, simple_config())) == 524_288_000

    def test_independent_of_trainability(self):
        cfg = simple_config()
        assert factor_param(BIG_LINEAR, entry_for(BIG_LINEAR, cfg, frozen=True)) == \
            factor_param(BIG_LINEAR, entry_for(BIG_LINEAR, cfg))


class TestFactorGrad:
    def test_stage2_dp8_mixed(self):
        cfg = simple_config(precision=Precision.MIXED_FP16, zero_stage=2, dp_degree=8)
        entry = entry_for(BIG_LINEAR, cfg)
        assert factor_grad(BIG_LINEAR, entry) == 4_195_328  # ceil(33,562,624 / 8)

    def test_frozen_layer_zero(self):
        cfg = simple_config(precision=Precision.MIXED_FP16, zero_stage=2, dp_degree=8)
        assert factor_grad(BIG_LINEAR, entry_for(BIG_LINEAR, cfg, frozen=True)) == 0

    def test_stage0_ignores_dp(self):
        cfg = simple_config(precision=Precision.MIXED_FP16, zero_stage=0, dp_degree=8)
        assert factor_grad(BIG_LINEAR, entry_for(BIG_LINEAR, cfg)) == 33_562_624


class TestFactorOpt:
    def test_adam_mixed_stage2_dp8(self):
        cfg = simple_config(
            precision=Precision.MIXED_FP16, optimizer=OptimizerKind.ADAM,
            zero_stage=2, dp_degree=8,
        )
        entry = entry_for(BIG_LINEAR, cfg)
        assert factor_opt(BIG_LINEAR, entry) == 25_171_968  # ceil(16,781,312 * 12 / 8)

    def test_frozen_embedding_zero(self):
        layer = embedding(vocab=1000, hidden=64)
        cfg = simple_config(optimizer=OptimizerKind.ADAM)
        assert factor_opt(layer, entry_for(layer, cfg, frozen=True)) == 0

    def test_plain_sgd_fp32_zero(self):
        cfg = simple_config(optimizer=OptimizerKind.SGD)
        assert factor_opt(BIG_LINEAR, entry_for(BIG_LINEAR, cfg)) == 0


class TestFactorAct:
    def test_linear_golden(self):
        layer = linear(in_features=4096, out_features=4096)
        cfg = simple_config(
            precision=Precision.MIXED_FP16, micro_batch_size=16, text_token_count=1024,
        )
        entry = entry_for(layer, cfg)
        assert factor_act(layer, entry, cfg) == 134_217_728  # 16*1024*4096*2

    def test_attention_exact_quadratic_term(self):
        mem_eff = attention(hidden=4096, heads=32, mode="memory_efficient")
        exact = attention(hidden=4096, heads=32, mode="exact")
        cfg = simple_config(
            precision=Precision.MIXED_FP16, micro_batch_size=16, text_token_count=1024,
        )
        base = factor_act(mem_eff, entry_for(mem_eff, cfg), cfg)
        full = factor_act(exact, entry_for(exact, cfg), cfg)
        # score + prob matrices: 2 * 16 * 32 * 1024^2 * 2, i.e. 1.0 GiB each
        assert full - base == 2_147_483_648
        assert (full - base) // 2 == 1_073_741_824

    def test_frozen_prefix_layer_stores_nothing(self):
        layer = linear()
        cfg = simple_config()
        assert factor_act(layer, entry_for(layer, cfg, frozen=True), cfg) == 0

    def test_dropout_mask_is_one_byte_per_element(self):
        layer = dropout(width=10)
        cfg = simple_config(micro_batch_size=2, text_token_count=3)
        assert factor_act(layer, entry_for(layer, cfg), cfg) == 2 * 3 * 10

    def test_conv2d_uses_output_extent(self):
        layer = conv2d(in_channels=3, out_channels=8, kernel=3, stride=2, input_hw=9)
        cfg = simple_config(micro_batch_size=2)
        # out extent: floor((9-3)/2)+1 = 4 per axis
        assert factor_act(layer, entry_for(layer, cfg), cfg) == 2 * 8 * 4 * 4 * 4


class TestPredictLayer:
    def test_frozen_linear_keeps_params_only(self):
        cfg = simple_config()
        fb = predict_layer(BIG_LINEAR, entry_for(BIG_LINEAR, cfg, frozen=True), cfg)
        assert fb.m_param > 0
        assert (fb.m_opt, fb.m_grad, fb.m_act) == (0, 0, 0)

    def test_trainable_linear_has_all_factors(self):
        cfg = simple_config()
        fb = predict_layer(BIG_LINEAR, entry_for(BIG_LINEAR, cfg), cfg)
        assert fb.m_param > 0 and fb.m_opt > 0 and fb.m_grad > 0 and fb.m_act > 0

    def test_dropout_in_frozen_prefix_is_all_zero(self):
        layer = dropout(width=16)
        cfg = simple_config()
        fb = predict_layer(layer, entry_for(layer, cfg, frozen=True), cfg)
        assert (fb.m_param, fb.m_opt, fb.m_grad, fb.m_act) == (0, 0, 0, 0)


class TestScalingProperties:
    @pytest.mark.parametrize("layer", ALL_KIND_LAYERS, ids=lambda l: l.kind.value)
    def test_act_linear_in_batch(self, layer):
        for k in (1, 2, 5):
            small = simple_config(micro_batch_size=k, text_token_count=6)
            big = simple_config(micro_batch_size=2 * k, text_token_count=6)
            assert factor_act(layer, entry_for(layer, big), big) == \
                2 * factor_act(layer, entry_for(layer, small), small)

    @pytest.mark.parametrize("layer", ALL_KIND_LAYERS, ids=lambda l: l.kind.value)
    def test_act_nondecreasing_in_tokens(self, layer):
        values = []
        for s in (1, 2, 4, 8, 16):
            cfg = simple_config(text_token_count=s)
            values.append(factor_act(layer, entry_for(layer, cfg), cfg))
        assert values == sorted(values)

    def test_attention_exact_quadratic_in_tokens(self):
        layer = attention(hidden=32, heads=4, mode="exact")
        e = 4  # fp32 activation bytes
        for s in (1, 3, 8):
            cfg_s = simple_config(text_token_count=s)
            cfg_2s = simple_config(text_token_count=2 * s)
            linear_part_s = 5 * 1 * s * 32 * e
            linear_part_2s = 5 * 1 * (2 * s) * 32 * e
            act_s = factor_act(layer, entry_for(layer, cfg_s), cfg_s)
            act_2s = factor_act(layer, entry_for(layer, cfg_2s), cfg_2s)
            assert act_2s - linear_part_2s == 4 * (act_s - linear_part_s)

    @given(st.integers(1, 64), st.sampled_from([1, 2, 4, 8]), st.integers(1, 128))
    def test_exact_attention_strictly_dominates(self, scale, heads, tokens):
        hidden = heads * scale
        exact = attention(hidden=hidden, heads=heads, mode="exact")
        mem_eff = attention(hidden=hidden, heads=heads, mode="memory_efficient")
        cfg = simple_config(text_token_count=tokens)
        assert factor_act(exact, entry_for(exact, cfg), cfg) > \
            factor_act(mem_eff, entry_for(mem_eff, cfg), cfg)

    def test_param_invariant_to_config_except_precision(self):
        configs = [
            simple_config(micro_batch_size=7, text_token_count=99, zero_stage=2,
                          dp_degree=8, optimizer=OptimizerKind.SGD),
            simple_config(),
        ]
        values = {factor_param(BIG_LINEAR, entry_for(BIG_LINEAR, c)) for c in configs}
        assert len(values) == 1
        mixed = simple_config(precision=Precision.MIXED_BF16)
        assert factor_param(BIG_LINEAR, entry_for(BIG_LINEAR, mixed)) != values.pop()

    def test_doubling_dp_never_increases_state_and_bounds_hold(self):
        rng = random.Random(3)
        for _ in range(50):
            n_out = rng.randint(1, 300)
            layer = linear(in_features=rng.randint(1, 300), out_features=n_out)
            n = param_count(layer)
            for dp in (1, 2, 4):
                lo = simple_config(zero_stage=2, dp_degree=dp)
                hi = simple_config(zero_stage=2, dp_degree=2 * dp)
                state = lambda cfg: (
                    factor_grad(layer, entry_for(layer, cfg))
                    + factor_opt(layer, entry_for(layer, cfg))
                )
                assert state(hi) <= state(lo)
                # ceiling division overshoots the ideal share by less than a byte
                entry = entry_for(layer, hi)
                exact = n * entry.grad_bytes_per_elem / entry.partition_divisor_grad
                assert 0 <= factor_grad(layer, entry) - exact < 1


# Brute-force equivalence: closed forms vs shape-list enumeration at tiny dims.

dims = st.integers(1, 8)


@st.composite
def tiny_layer(draw):
    kind = draw(st.sampled_from(
        ["embedding", "linear", "layer_norm", "attention", "activation_fn",
         "dropout", "conv2d", "lm_head_loss"]
    ))
    if kind == "embedding":
        return embedding(vocab=draw(dims), hidden=draw(dims))
    if kind == "linear":
        return linear(in_features=draw(dims), out_features=draw(dims),
                      bias=draw(st.booleans()))
    if kind == "layer_norm":
        from conftest import layer_norm
        return layer_norm(hidden=draw(dims))
    if kind == "attention":
        heads = draw(st.sampled_from([1, 2, 4]))
        return attention(hidden=heads * draw(st.integers(1, 2)), heads=heads,
                         mode=draw(st.sampled_from(["exact", "memory_efficient"])))
    if kind == "activation_fn":
        from conftest import activation_fn
        return activation_fn(width=draw(dims))
    if kind == "dropout":
        return dropout(width=draw(dims))
    if kind == "conv2d":
        input_hw = draw(dims)
        return conv2d(in_channels=draw(dims), out_channels=draw(dims),
                      kernel=draw(st.integers(1, input_hw)),
                      stride=draw(st.integers(1, 8)), input_hw=input_hw)
    from conftest import lm_head_loss
    return lm_head_loss(hidden=draw(dims), vocab=draw(dims))


@given(tiny_layer(), dims, dims)
def test_factors_match_shape_enumeration(layer, batch, tokens):
    cfg = simple_config(
        micro_batch_size=batch, text_token_count=tokens,
        precision=Precision.MIXED_FP16, optimizer=OptimizerKind.ADAM,
        zero_stage=2, dp_degree=4,
    )
    entry = entry_for(layer, cfg)
    widths = dtype_plan(cfg)
    elems = param_count(layer)

    assert factor_param(layer, entry) == elems * widths.param_bytes
    assert factor_grad(layer, entry) == math.ceil(elems * widths.grad_bytes / 4)
    assert factor_opt(layer, entry) == math.ceil(elems * widths.opt_bytes / 4)
    enumerated_act = sum(
        math.prod(shape) * bpe
        for _, shape, bpe in activation_tensors(layer, batch, entry.token_count,
                                                widths.act_bytes)
    )
    assert factor_act(layer, entry, cfg) == enumerated_act
