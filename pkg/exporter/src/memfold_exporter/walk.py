"""Live ingestion path: walk a host module tree and emit IR layer objects.

Works against any PyTorch-style object graph (duck-typed: children via
``named_children()``, parameters via ``parameters()`` yielding tensors with a
``shape``). Containers are recursed, atomic types are classified whole, and
every leaf must classify. Coverage is enforced layer by layer: the elements
the emitted IR layer accounts for must equal the elements the host module
actually holds, exactly, and parameters attached directly to containers are
an error rather than a silent omission.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

from .classify import ATOMIC_TYPES, classify_layer, ir_param_count, output_width
from .errors import CoverageError, UnmappedLayerTypeError


def _element_count(module: Any, recurse: bool) -> int:
    return sum(math.prod(p.shape) for p in module.parameters(recurse=recurse))


@dataclass
class WalkState:
    width_hint: int | None = None
    layers: list[dict[str, Any]] = field(default_factory=list)
    host_elements: int = 0


def _emit(state: WalkState, name: str, module: Any, *, input_hw, attention_mode, recurse):
    classified = classify_layer(
        module,
        width_hint=state.width_hint,
        input_hw=input_hw,
        attention_mode=attention_mode,
    )
    host_elems = _element_count(module, recurse=recurse)
    if classified is None:
        if host_elems:
            raise CoverageError(
                f"{name}: no-op type {type(module).__name__} unexpectedly holds "
                f"{host_elems} parameter elements"
            )
        return
    kind, hyperparams = classified
    accounted = ir_param_count(kind, hyperparams)
    if accounted != host_elems:
        raise CoverageError(
            f"{name}: emitted {kind} accounts for {accounted} elements but the host "
            f"module holds {host_elems}"
        )
    state.layers.append({"name": name, "kind": kind, "hyperparams": hyperparams})
    state.host_elements += host_elems
    width = output_width(kind, hyperparams)
    if width is not None:
        state.width_hint = width


def _walk(state: WalkState, module: Any, prefix: str, *, input_hw, attention_mode):
    children = list(module.named_children())
    type_name = type(module).__name__
    if type_name in ATOMIC_TYPES or not children:
        _emit(
            state, prefix or type_name.lower(), module,
            input_hw=input_hw, attention_mode=attention_mode,
            recurse=type_name in ATOMIC_TYPES,
        )
        return
    direct = _element_count(module, recurse=False)
    if direct:
        raise CoverageError(
            f"{prefix or '<root>'}: container {type_name} holds {direct} parameter "
            "elements directly; they would not be attributed to any layer"
        )
    for child_name, child in children:
        path = f"{prefix}.{child_name}" if prefix else child_name
        _walk(state, child, path, input_hw=input_hw, attention_mode=attention_mode)


def walk_module_tree(
    root: Any,
    *,
    image_size: tuple[int, int] | int | None = None,
    attention_mode: str = "exact",
) -> list[dict[str, Any]]:
    """Flatten a host module tree into IR layer objects, fail-closed.

    ``image_size`` provides the spatial input extent for any conv layers
    (host modules do not know it). Raises UnmappedLayerTypeError or
    CoverageError rather than dropping anything.
    """
    if isinstance(image_size, int):
        image_size = (image_size, image_size)
    state = WalkState()
    _walk(state, root, "", input_hw=image_size, attention_mode=attention_mode)
    total = _element_count(root, recurse=True)
    if state.host_elements != total:
        raise CoverageError(
            f"walk attributed {state.host_elements} elements but the model holds {total}"
        )
    if not state.layers:
        raise UnmappedLayerTypeError(type(root).__name__, where="tree produced no layers")
    return state.layers
