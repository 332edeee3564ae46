"""Allocation-graph construction and exact live-byte replay."""

import json
import random

import pytest

from memfold import (
    AllocEvent,
    AllocGraph,
    AllocGraphError,
    EventOp,
    Phase,
    build_graph,
    dump_events,
    predict_peak,
    resolve_plan,
    simulate_peak,
)

from conftest import (
    linear,
    model,
    module,
    random_config,
    random_ir,
    simple_config,
)


def ev(tensor_id, size, op=EventOp.ALLOC, phase=Phase.FORWARD):
    return AllocEvent(tensor_id, size, op, phase)


class TestSimulatePeak:
    def test_single_allocation(self):
        stats = simulate_peak(AllocGraph((ev("a", 100),)))
        assert stats.peak_bytes == 100
        assert stats.peak_event_index == 0

    def test_running_sum_golden(self):
        graph = AllocGraph((
            ev("a", 100),
            ev("b", 200),
            ev("a", 100, EventOp.FREE),
            ev("c", 50),
        ))
        stats = simulate_peak(graph)
        # running live bytes: 100, 300, 200, 250
        assert stats.peak_bytes == 300
        assert stats.peak_event_index == 1

    def test_peak_dominates_end_of_forward(self):
        rng = random.Random(11)
        for _ in range(30):
            ir = random_ir(rng)
            cfg = random_config(rng, ir)
            graph = build_graph(ir, resolve_plan(ir, cfg), cfg)
            stats = simulate_peak(graph)
            assert stats.peak_bytes >= stats.end_of_forward_live_bytes

    def test_peak_dominates_every_replay_point(self):
        rng = random.Random(12)
        ir = random_ir(rng)
        cfg = random_config(rng, ir)
        graph = build_graph(ir, resolve_plan(ir, cfg), cfg, lazy_grads=True)
        stats = simulate_peak(graph)
        live = 0
        for event in graph.events:
            live += event.size if event.op is EventOp.ALLOC else -event.size
            assert stats.peak_bytes >= live

    def test_double_alloc_rejected(self):
        with pytest.raises(AllocGraphError, match="twice"):
            simulate_peak(AllocGraph((ev("a", 1), ev("a", 1))))

    def test_free_before_alloc_rejected(self):
        with pytest.raises(AllocGraphError, match="before"):
            simulate_peak(AllocGraph((ev("a", 1, EventOp.FREE),)))

    def test_double_free_rejected(self):
        with pytest.raises(AllocGraphError, match="freed twice"):
            simulate_peak(AllocGraph((
                ev("a", 1), ev("a", 1, EventOp.FREE), ev("a", 1, EventOp.FREE),
            )))


class TestBuildGraph:
    def test_single_trainable_linear_event_sequence(self):
        ir = model(module("m", [linear("fc", 4, 4)]))
        cfg = simple_config()
        graph = build_graph(ir, resolve_plan(ir, cfg), cfg)
        kinds = [(e.op, e.phase, e.tensor_id.rsplit("#", 1)[1]) for e in graph.events]
        assert kinds == [
            (EventOp.ALLOC, Phase.SETUP, "param"),
            (EventOp.ALLOC, Phase.SETUP, "grad"),
            (EventOp.ALLOC, Phase.SETUP, "opt"),
            (EventOp.ALLOC, Phase.FORWARD, "act.out"),
            (EventOp.FREE, Phase.BACKWARD, "act.out"),
        ]

    def test_fully_frozen_model_has_no_forward_events(self):
        ir = model(module("m", [linear("a"), linear("b")]))
        cfg = simple_config(frozen_modules=frozenset({"m"}))
        graph = build_graph(ir, resolve_plan(ir, cfg), cfg)
        assert all(e.phase is not Phase.FORWARD for e in graph.events)
        assert all(e.op is EventOp.ALLOC for e in graph.events)

    def test_frozen_middle_layer_still_allocates_activation(self):
        from memfold import TrainMode

        chain = module(
            "m",
            [linear("a", trainable=True), linear("b", trainable=False),
             linear("c", trainable=True)],
            trainable=TrainMode.PER_LAYER,
        )
        ir = model(chain)
        cfg = simple_config()
        graph = build_graph(ir, resolve_plan(ir, cfg), cfg)
        forward_ids = [e.tensor_id for e in graph.events if e.phase is Phase.FORWARD]
        assert any("m/b#act" in tid for tid in forward_ids)

    def test_backward_frees_in_reverse_layer_order(self):
        ir = model(module("m", [linear("a"), linear("b"), linear("c")]))
        cfg = simple_config()
        graph = build_graph(ir, resolve_plan(ir, cfg), cfg)
        freed = [e.tensor_id for e in graph.events if e.op is EventOp.FREE]
        assert [t.split("#")[0].split(":")[1] for t in freed] == ["m/c", "m/b", "m/a"]


class TestOracleAgainstStaticSum:
    def test_equality_on_randomized_models(self):
        rng = random.Random(2024)
        for _ in range(40):
            ir = random_ir(rng)
            cfg = random_config(rng, ir)
            graph = build_graph(ir, resolve_plan(ir, cfg), cfg)
            stats = simulate_peak(graph)
            report = predict_peak(ir, cfg)
            assert stats.end_of_forward_live_bytes == report.m_peak

    def test_equality_on_llava_fixture(self, llava_ir):
        from memfold import OptimizerKind, Precision

        cfg = simple_config(
            micro_batch_size=2, text_token_count=64, image_patch_token_count=17,
            precision=Precision.MIXED_BF16, optimizer=OptimizerKind.ADAM,
            zero_stage=2, dp_degree=4, frozen_modules=frozenset({"vision"}),
        )
        graph = build_graph(llava_ir, resolve_plan(llava_ir, cfg), cfg)
        stats = simulate_peak(graph)
        assert stats.end_of_forward_live_bytes == predict_peak(llava_ir, cfg).m_peak

    def test_lazy_grads_never_exceeds_eager_peak(self):
        rng = random.Random(5)
        for _ in range(30):
            ir = random_ir(rng)
            cfg = random_config(rng, ir)
            plan = resolve_plan(ir, cfg)
            eager = simulate_peak(build_graph(ir, plan, cfg))
            lazy = simulate_peak(build_graph(ir, plan, cfg, lazy_grads=True))
            assert lazy.peak_bytes <= eager.peak_bytes


def test_dump_events_is_line_delimited_json():
    ir = model(module("m", [linear("fc", 2, 2)]))
    cfg = simple_config()
    graph = build_graph(ir, resolve_plan(ir, cfg), cfg)
    lines = dump_events(graph).splitlines()
    assert len(lines) == len(graph.events)
    first = json.loads(lines[0])
    assert first == {
        "tensor_id": "0:m/fc#param", "size": 24, "op": "alloc", "phase": "setup",
    }
