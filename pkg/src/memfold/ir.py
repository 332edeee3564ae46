"""Neutral model-architecture IR: typed modules and layers, JSON parsing, validation.

A model is an ordered list of modality-level modules (vision tower, projector,
language decoder, ...), each an ordered list of typed layers with shape-level
hyperparameters. Weights themselves are never represented, only shapes.

The on-disk format (conventional suffix ``.mir.json``) is a single UTF-8 JSON
document mirroring the dataclasses below field for field, snake_case, integers
as plain JSON numbers. Parsing is strict: unknown layer kinds, unknown fields,
and incomplete hyperparameters are hard errors, because a silently skipped
layer means silently under-predicted memory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterator


class Modality(Enum):
    VISION = "vision"
    LANGUAGE = "language"
    PROJECTOR = "projector"
    OTHER = "other"


class TokenSource(Enum):
    """Where a module's per-sample token count comes from at prediction time."""

    TEXT_TOKENS = "text_tokens"
    IMAGE_PATCHES = "image_patches"
    FIXED = "fixed"


class LayerKind(Enum):
    EMBEDDING = "embedding"
    LINEAR = "linear"
    LAYER_NORM = "layer_norm"
    ATTENTION = "attention"
    ACTIVATION_FN = "activation_fn"
    DROPOUT = "dropout"
    CONV2D = "conv2d"
    LM_HEAD_LOSS = "lm_head_loss"


class TrainMode(Enum):
    """Module-level trainability: everything, nothing, or per-layer flags."""

    ALL = "all"
    NONE = "none"
    PER_LAYER = "per_layer"


class IRError(ValueError):
    """Base class for IR parse/validation failures."""


class IRSyntaxError(IRError):
    """The document is not syntactically valid JSON."""

    def __init__(self, msg: str, line: int, column: int):
        super().__init__(f"invalid JSON at line {line} column {column}: {msg}")
        self.line = line
        self.column = column


class IRSchemaError(IRError):
    """A field is missing, unknown, or of the wrong type/value."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


class IRInvariantError(IRError):
    """A structurally well-formed document violates an IR invariant."""

    def __init__(self, diagnostics: list["Diagnostic"]):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = list(diagnostics)


@dataclass(frozen=True)
class Diagnostic:
    """One validation finding: where (field path) and what."""

    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


@dataclass(frozen=True)
class LayerDesc:
    """One fine-grained computational unit. ``hyperparams`` is kind-specific.

    ``trainable`` is the layer's own flag; it only takes effect when the
    enclosing module uses ``TrainMode.PER_LAYER``. Treat instances (including
    the hyperparams dict) as read-only.
    """

    name: str
    kind: LayerKind
    hyperparams: dict[str, Any]
    trainable: bool = True


@dataclass(frozen=True)
class ModuleDesc:
    name: str
    modality: Modality
    token_source: TokenSource
    layers: tuple[LayerDesc, ...]
    trainable: TrainMode = TrainMode.ALL
    fixed_token_count: int | None = None


@dataclass(frozen=True)
class ModelIR:
    name: str
    modules: tuple[ModuleDesc, ...]


# Required hyperparameters per layer kind, grouped by value type. Dimension
# keys must be positive integers.
_DIM_KEYS: dict[LayerKind, tuple[str, ...]] = {
    LayerKind.EMBEDDING: ("vocab_size", "hidden"),
    LayerKind.LINEAR: ("in_features", "out_features"),
    LayerKind.LAYER_NORM: ("hidden",),
    LayerKind.ATTENTION: ("hidden", "num_heads"),
    LayerKind.ACTIVATION_FN: ("width",),
    LayerKind.DROPOUT: ("width",),
    LayerKind.CONV2D: (
        "in_channels",
        "out_channels",
        "kernel_h",
        "kernel_w",
        "stride_h",
        "stride_w",
        "input_h",
        "input_w",
    ),
    LayerKind.LM_HEAD_LOSS: ("hidden", "vocab_size"),
}
_BOOL_KEYS: dict[LayerKind, tuple[str, ...]] = {LayerKind.LINEAR: ("has_bias",)}
_CHOICE_KEYS: dict[LayerKind, dict[str, tuple[str, ...]]] = {
    LayerKind.ATTENTION: {"mode": ("exact", "memory_efficient")},
}

ATTENTION_MODES = _CHOICE_KEYS[LayerKind.ATTENTION]["mode"]


def hyperparam_keys(kind: LayerKind) -> tuple[str, ...]:
    """All required hyperparameter keys for ``kind``, in canonical order."""
    return (
        _DIM_KEYS.get(kind, ())
        + _BOOL_KEYS.get(kind, ())
        + tuple(_CHOICE_KEYS.get(kind, {}))
    )


def param_count(layer: LayerDesc) -> int:
    """Number of weight/bias elements the layer owns.

    Attention counts fused Q, K, V and output projections with biases
    (4*hidden^2 + 4*hidden); an IR that encodes the projections as four
    separate biased linear layers totals the same.
    """
    h = layer.hyperparams
    kind = layer.kind
    if kind is LayerKind.EMBEDDING:
        return h["vocab_size"] * h["hidden"]
    if kind is LayerKind.LINEAR:
        n = h["in_features"] * h["out_features"]
        return n + h["out_features"] if h["has_bias"] else n
    if kind is LayerKind.LAYER_NORM:
        return 2 * h["hidden"]
    if kind is LayerKind.ATTENTION:
        return 4 * h["hidden"] * h["hidden"] + 4 * h["hidden"]
    if kind in (LayerKind.ACTIVATION_FN, LayerKind.DROPOUT):
        return 0
    if kind is LayerKind.CONV2D:
        weights = h["out_channels"] * h["in_channels"] * h["kernel_h"] * h["kernel_w"]
        return weights + h["out_channels"]
    if kind is LayerKind.LM_HEAD_LOSS:
        return h["hidden"] * h["vocab_size"]
    raise AssertionError(f"unhandled layer kind: {kind}")


def iter_layers(ir: ModelIR) -> Iterator[tuple[str, ModuleDesc, LayerDesc]]:
    """Yield ``(path, module, layer)`` in dataflow order; path is ``module/layer``."""
    for module in ir.modules:
        for layer in module.layers:
            yield f"{module.name}/{layer.name}", module, layer


def _layer_diagnostics(layer: LayerDesc, path: str) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    if not isinstance(layer.kind, LayerKind):
        out.append(Diagnostic(f"{path}.kind", f"unknown layer kind {layer.kind!r}"))
        return out
    h = layer.hyperparams
    required = set(hyperparam_keys(layer.kind))
    for key in sorted(set(h) - required):
        out.append(
            Diagnostic(
                f"{path}.hyperparams.{key}",
                f"unknown hyperparameter for kind {layer.kind.value!r}",
            )
        )
    for key in _DIM_KEYS[layer.kind]:
        if key not in h:
            out.append(Diagnostic(f"{path}.hyperparams.{key}", "missing"))
        elif type(h[key]) is not int or h[key] <= 0:
            out.append(
                Diagnostic(
                    f"{path}.hyperparams.{key}",
                    f"must be a positive integer, got {h[key]!r}",
                )
            )
    for key in _BOOL_KEYS.get(layer.kind, ()):
        if key not in h:
            out.append(Diagnostic(f"{path}.hyperparams.{key}", "missing"))
        elif type(h[key]) is not bool:
            out.append(
                Diagnostic(f"{path}.hyperparams.{key}", f"must be a boolean, got {h[key]!r}")
            )
    for key, choices in _CHOICE_KEYS.get(layer.kind, {}).items():
        if key not in h:
            out.append(Diagnostic(f"{path}.hyperparams.{key}", "missing"))
        elif h[key] not in choices:
            out.append(
                Diagnostic(
                    f"{path}.hyperparams.{key}",
                    f"must be one of {list(choices)}, got {h[key]!r}",
                )
            )
    if out:
        return out

    # Cross-field invariants, only meaningful once the fields themselves hold.
    if layer.kind is LayerKind.ATTENTION and h["hidden"] % h["num_heads"] != 0:
        out.append(
            Diagnostic(
                f"{path}.hyperparams.hidden",
                f"hidden={h['hidden']} not divisible by num_heads={h['num_heads']}",
            )
        )
    if layer.kind is LayerKind.CONV2D:
        for axis in ("h", "w"):
            if h[f"kernel_{axis}"] > h[f"input_{axis}"]:
                out.append(
                    Diagnostic(
                        f"{path}.hyperparams.kernel_{axis}",
                        f"kernel_{axis}={h[f'kernel_{axis}']} exceeds "
                        f"input_{axis}={h[f'input_{axis}']}",
                    )
                )
    return out


def validate_ir(ir: ModelIR) -> list[Diagnostic]:
    """Check every IR invariant; returns an empty list iff the IR is valid.

    Never raises and never mutates the input; findings carry the offending
    field path.
    """
    diags: list[Diagnostic] = []
    if not ir.modules:
        diags.append(Diagnostic("modules", "model must declare at least one module"))
    seen: dict[str, int] = {}
    for i, module in enumerate(ir.modules):
        mpath = f"modules[{i}]"
        if not module.name:
            diags.append(Diagnostic(f"{mpath}.name", "module name must be non-empty"))
        if module.name in seen:
            diags.append(
                Diagnostic(
                    f"{mpath}.name",
                    f"duplicate module name {module.name!r}"
                    f" (first declared at modules[{seen[module.name]}].name)",
                )
            )
        else:
            seen[module.name] = i
        if module.token_source is TokenSource.FIXED:
            if module.fixed_token_count is None:
                diags.append(
                    Diagnostic(
                        f"{mpath}.fixed_token_count",
                        "required when token_source is 'fixed'",
                    )
                )
            elif type(module.fixed_token_count) is not int or module.fixed_token_count <= 0:
                diags.append(
                    Diagnostic(
                        f"{mpath}.fixed_token_count",
                        f"must be a positive integer, got {module.fixed_token_count!r}",
                    )
                )
        elif module.fixed_token_count is not None:
            diags.append(
                Diagnostic(
                    f"{mpath}.fixed_token_count",
                    f"only allowed when token_source is 'fixed'"
                    f" (token_source is {module.token_source.value!r})",
                )
            )
        if not module.layers:
            diags.append(Diagnostic(f"{mpath}.layers", "module must declare at least one layer"))
        for j, layer in enumerate(module.layers):
            diags.extend(_layer_diagnostics(layer, f"{mpath}.layers[{j}]"))
    return diags


# ---------------------------------------------------------------------------
# JSON decoding
# ---------------------------------------------------------------------------


def _expect_obj(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        raise IRSchemaError(path, f"expected an object, got {type(value).__name__}")
    return value


def _expect_str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise IRSchemaError(path, f"expected a string, got {type(value).__name__}")
    return value


def _expect_int(value: Any, path: str) -> int:
    if type(value) is not int:  # bool is an int subclass; reject it too
        raise IRSchemaError(path, f"expected an integer, got {value!r}")
    return value


def _take(obj: dict, allowed: set[str], required: set[str], path: str) -> None:
    for key in obj:
        if key not in allowed:
            raise IRSchemaError(f"{path}.{key}", "unknown field")
    for key in required:
        if key not in obj:
            raise IRSchemaError(f"{path}.{key}", "missing required field")


def _enum_value(enum_cls, value: Any, path: str):
    try:
        return enum_cls(value)
    except ValueError:
        allowed = [e.value for e in enum_cls]
        raise IRSchemaError(path, f"must be one of {allowed}, got {value!r}") from None


def _decode_layer(obj: Any, path: str) -> LayerDesc:
    obj = _expect_obj(obj, path)
    _take(obj, {"name", "kind", "hyperparams", "trainable"}, {"name", "kind", "hyperparams"}, path)
    name = _expect_str(obj["name"], f"{path}.name")
    kind = _enum_value(LayerKind, obj["kind"], f"{path}.kind")
    raw = _expect_obj(obj["hyperparams"], f"{path}.hyperparams")
    keys = hyperparam_keys(kind)
    _take(raw, set(keys), set(keys), f"{path}.hyperparams")
    hyper: dict[str, Any] = {}
    for key in _DIM_KEYS[kind]:
        hyper[key] = _expect_int(raw[key], f"{path}.hyperparams.{key}")
    for key in _BOOL_KEYS.get(kind, ()):
        if type(raw[key]) is not bool:
            raise IRSchemaError(f"{path}.hyperparams.{key}", f"expected a boolean, got {raw[key]!r}")
        hyper[key] = raw[key]
    for key in _CHOICE_KEYS.get(kind, {}):
        hyper[key] = _expect_str(raw[key], f"{path}.hyperparams.{key}")
    trainable = obj.get("trainable", True)
    if type(trainable) is not bool:
        raise IRSchemaError(f"{path}.trainable", f"expected a boolean, got {trainable!r}")
    return LayerDesc(name=name, kind=kind, hyperparams=hyper, trainable=trainable)


def _decode_module(obj: Any, path: str) -> ModuleDesc:
    obj = _expect_obj(obj, path)
    allowed = {"name", "modality", "token_source", "fixed_token_count", "trainable", "layers"}
    _take(obj, allowed, {"name", "modality", "token_source", "trainable", "layers"}, path)
    layers_obj = obj["layers"]
    if not isinstance(layers_obj, list):
        raise IRSchemaError(f"{path}.layers", "expected an array")
    fixed = obj.get("fixed_token_count")
    if fixed is not None:
        fixed = _expect_int(fixed, f"{path}.fixed_token_count")
    return ModuleDesc(
        name=_expect_str(obj["name"], f"{path}.name"),
        modality=_enum_value(Modality, obj["modality"], f"{path}.modality"),
        token_source=_enum_value(TokenSource, obj["token_source"], f"{path}.token_source"),
        layers=tuple(
            _decode_layer(l, f"{path}.layers[{j}]") for j, l in enumerate(layers_obj)
        ),
        trainable=_enum_value(TrainMode, obj["trainable"], f"{path}.trainable"),
        fixed_token_count=fixed,
    )


def decode_ir(text: str) -> ModelIR:
    """Decode JSON into a ModelIR, checking structure only, not invariants.

    Raises IRSyntaxError / IRSchemaError. Used by tooling that wants to list
    every invariant violation via :func:`validate_ir` instead of failing on
    the first one.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IRSyntaxError(exc.msg, exc.lineno, exc.colno) from exc
    doc = _expect_obj(doc, "$")
    _take(doc, {"name", "modules"}, {"name", "modules"}, "$")
    modules_obj = doc["modules"]
    if not isinstance(modules_obj, list):
        raise IRSchemaError("modules", "expected an array")
    return ModelIR(
        name=_expect_str(doc["name"], "name"),
        modules=tuple(_decode_module(m, f"modules[{i}]") for i, m in enumerate(modules_obj)),
    )


def parse_ir(text: str) -> ModelIR:
    """Parse and fully validate an IR document.

    Raises IRSyntaxError (with position), IRSchemaError (with field path), or
    IRInvariantError (with one diagnostic per violated invariant).
    """
    ir = decode_ir(text)
    diags = validate_ir(ir)
    if diags:
        raise IRInvariantError(diags)
    return ir


def _layer_obj(layer: LayerDesc) -> dict[str, Any]:
    return {
        "name": layer.name,
        "kind": layer.kind.value,
        "hyperparams": {k: layer.hyperparams[k] for k in hyperparam_keys(layer.kind)},
        "trainable": layer.trainable,
    }


def _module_obj(module: ModuleDesc) -> dict[str, Any]:
    obj: dict[str, Any] = {
        "name": module.name,
        "modality": module.modality.value,
        "token_source": module.token_source.value,
    }
    if module.fixed_token_count is not None:
        obj["fixed_token_count"] = module.fixed_token_count
    obj["trainable"] = module.trainable.value
    obj["layers"] = [_layer_obj(l) for l in module.layers]
    return obj


def serialize_ir(ir: ModelIR, *, indent: int | None = 2) -> str:
    """Serialize a valid IR to its canonical JSON form (round-trips via parse_ir)."""
    doc = {"name": ir.name, "modules": [_module_obj(m) for m in ir.modules]}
    return json.dumps(doc, indent=indent)
