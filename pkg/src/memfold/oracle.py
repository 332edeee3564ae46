"""Brute-force allocation oracle for cross-validating the analytical factors.

Expands an IR plus resolved plan into a flat allocate/free event sequence
(weights, grads and optimizer state at setup, stored activations during the
forward walk, frees during the reverse backward walk) and replays it to find
exact live-byte peaks. Tensor sizes come from explicit per-kind shape
enumerations rather than the closed-form factor expressions, so the replayed
live set checks the analytical path instead of restating it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

from .ir import LayerDesc, LayerKind, ModelIR, iter_layers
from .policy import ResolvedPlan, TrainConfig, dtype_plan


class EventOp(Enum):
    ALLOC = "alloc"
    FREE = "free"


class Phase(Enum):
    SETUP = "setup"
    FORWARD = "forward"
    BACKWARD = "backward"


class AllocGraphError(ValueError):
    """Malformed event stream: double alloc, free-before-alloc, or double free."""


@dataclass(frozen=True)
class AllocEvent:
    tensor_id: str
    size: int
    op: EventOp
    phase: Phase


@dataclass(frozen=True)
class AllocGraph:
    events: tuple[AllocEvent, ...]


@dataclass(frozen=True)
class PeakStats:
    peak_bytes: int
    peak_event_index: int
    end_of_forward_live_bytes: int


def weight_tensor_shapes(layer: LayerDesc) -> list[tuple[int, ...]]:
    """Shapes of every weight/bias tensor the layer owns."""
    h = layer.hyperparams
    kind = layer.kind
    if kind is LayerKind.EMBEDDING:
        return [(h["vocab_size"], h["hidden"])]
    if kind is LayerKind.LINEAR:
        shapes = [(h["in_features"], h["out_features"])]
        if h["has_bias"]:
            shapes.append((h["out_features"],))
        return shapes
    if kind is LayerKind.LAYER_NORM:
        return [(h["hidden"],), (h["hidden"],)]
    if kind is LayerKind.ATTENTION:
        d = h["hidden"]
        return [(d, d)] * 4 + [(d,)] * 4
    if kind in (LayerKind.ACTIVATION_FN, LayerKind.DROPOUT):
        return []
    if kind is LayerKind.CONV2D:
        return [
            (h["out_channels"], h["in_channels"], h["kernel_h"], h["kernel_w"]),
            (h["out_channels"],),
        ]
    if kind is LayerKind.LM_HEAD_LOSS:
        return [(h["hidden"], h["vocab_size"])]
    raise AssertionError(f"unhandled layer kind: {kind}")


def activation_tensors(
    layer: LayerDesc, batch: int, tokens: int, act_bytes: int
) -> list[tuple[str, tuple[int, ...], int]]:
    """``(tag, shape, bytes_per_elem)`` for every tensor the layer keeps alive."""
    h = layer.hyperparams
    kind = layer.kind
    b, s, e = batch, tokens, act_bytes
    if kind is LayerKind.EMBEDDING or kind is LayerKind.LAYER_NORM:
        return [("out", (b, s, h["hidden"]), e)]
    if kind is LayerKind.LINEAR:
        return [("out", (b, s, h["out_features"]), e)]
    if kind is LayerKind.ACTIVATION_FN:
        return [("out", (b, s, h["width"]), e)]
    if kind is LayerKind.DROPOUT:
        # boolean keep/drop mask, one byte per element
        return [("mask", (b, s, h["width"]), 1)]
    if kind is LayerKind.ATTENTION:
        d = h["hidden"]
        tensors = [
            ("q", (b, s, d), e),
            ("k", (b, s, d), e),
            ("v", (b, s, d), e),
            ("attn_out", (b, s, d), e),
            ("proj_out", (b, s, d), e),
        ]
        if h["mode"] == "exact":
            n = h["num_heads"]
            tensors += [("scores", (b, n, s, s), e), ("probs", (b, n, s, s), e)]
        return tensors
    if kind is LayerKind.CONV2D:
        out_h = (h["input_h"] - h["kernel_h"]) // h["stride_h"] + 1
        out_w = (h["input_w"] - h["kernel_w"]) // h["stride_w"] + 1
        return [("out", (b, h["out_channels"], out_h, out_w), e)]
    if kind is LayerKind.LM_HEAD_LOSS:
        return [("logits", (b, s, h["vocab_size"]), e)]
    raise AssertionError(f"unhandled layer kind: {kind}")


def build_graph(
    ir: ModelIR, plan: ResolvedPlan, cfg: TrainConfig, *, lazy_grads: bool = False
) -> AllocGraph:
    """Expand one training step into an ordered allocate/free event stream.

    Setup allocates parameters plus (post-sharding) gradient and optimizer
    state per layer; the forward phase allocates each stored activation
    tensor at its layer's position; the backward phase walks layers in
    reverse and frees their activations.

    ``lazy_grads=True`` moves gradient allocation into each layer's backward
    step instead of setup. That mode explores how conservative the static sum
    is; the default (eager) mode makes the end-of-forward live set equal the
    static sum exactly.
    """
    layers = list(iter_layers(ir))
    if len(layers) != len(plan.entries):
        raise ValueError(
            f"plan has {len(plan.entries)} entries but model {ir.name!r} has {len(layers)} layers"
        )
    widths = dtype_plan(cfg)
    events: list[AllocEvent] = []

    def sized(entry, layer):
        elems = sum(math.prod(shape) for shape in weight_tensor_shapes(layer))
        grad = -(-elems * entry.grad_bytes_per_elem // entry.partition_divisor_grad)
        opt = -(-elems * entry.opt_bytes_per_param // entry.partition_divisor_opt)
        return elems * entry.param_bytes_per_elem, grad if entry.trainable else 0, opt

    for i, ((path, _, layer), entry) in enumerate(zip(layers, plan.entries)):
        param_bytes, grad_bytes, opt_bytes = sized(entry, layer)
        if param_bytes:
            events.append(AllocEvent(f"{i}:{path}#param", param_bytes, EventOp.ALLOC, Phase.SETUP))
        if entry.trainable:
            if grad_bytes and not lazy_grads:
                events.append(AllocEvent(f"{i}:{path}#grad", grad_bytes, EventOp.ALLOC, Phase.SETUP))
            if opt_bytes:
                events.append(AllocEvent(f"{i}:{path}#opt", opt_bytes, EventOp.ALLOC, Phase.SETUP))

    acts_by_layer: list[list[tuple[str, int]]] = []
    for i, ((path, _, layer), entry) in enumerate(zip(layers, plan.entries)):
        acts: list[tuple[str, int]] = []
        if entry.stores_activations:
            for tag, shape, bpe in activation_tensors(
                layer, cfg.micro_batch_size, entry.token_count, widths.act_bytes
            ):
                acts.append((f"{i}:{path}#act.{tag}", math.prod(shape) * bpe))
        acts_by_layer.append(acts)
        for tensor_id, size in acts:
            events.append(AllocEvent(tensor_id, size, EventOp.ALLOC, Phase.FORWARD))

    for i in reversed(range(len(layers))):
        path, _, layer = layers[i]
        entry = plan.entries[i]
        if lazy_grads and entry.trainable:
            _, grad_bytes, _ = sized(entry, layer)
            if grad_bytes:
                events.append(
                    AllocEvent(f"{i}:{path}#grad", grad_bytes, EventOp.ALLOC, Phase.BACKWARD)
                )
        for tensor_id, size in acts_by_layer[i]:
            events.append(AllocEvent(tensor_id, size, EventOp.FREE, Phase.BACKWARD))

    return AllocGraph(tuple(events))


def simulate_peak(graph: AllocGraph) -> PeakStats:
    """Replay the event stream and return exact live-byte statistics.

    ``end_of_forward_live_bytes`` is the live total immediately after the last
    non-backward event. Raises AllocGraphError on malformed streams.
    """
    live: dict[str, int] = {}
    freed: set[str] = set()
    current = 0
    peak = 0
    peak_index = -1
    end_of_forward = 0
    for i, event in enumerate(graph.events):
        if event.op is EventOp.ALLOC:
            if event.tensor_id in live or event.tensor_id in freed:
                raise AllocGraphError(f"event {i}: tensor {event.tensor_id!r} allocated twice")
            live[event.tensor_id] = event.size
            current += event.size
            if current > peak:
                peak = current
                peak_index = i
        else:
            if event.tensor_id in freed:
                raise AllocGraphError(f"event {i}: tensor {event.tensor_id!r} freed twice")
            if event.tensor_id not in live:
                raise AllocGraphError(
                    f"event {i}: tensor {event.tensor_id!r} freed before allocation"
                )
            current -= live.pop(event.tensor_id)
            freed.add(event.tensor_id)
        if event.phase is not Phase.BACKWARD:
            end_of_forward = current
    return PeakStats(peak, peak_index, end_of_forward)


def dump_events(graph: AllocGraph) -> str:
    """Line-delimited JSON event trace, one event per line, for debugging."""
    lines = [
        json.dumps(
            {"tensor_id": e.tensor_id, "size": e.size, "op": e.op.value, "phase": e.phase.value}
        )
        for e in graph.events
    ]
    return "\n".join(lines)
