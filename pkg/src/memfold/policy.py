"""Training-behavior resolution: who trains, at which widths, sharded how.

Turns an IR plus a training configuration into a per-layer plan that the
factor formulas consume: effective trainability, whether the layer must keep
its forward activations, the per-sample token count for its module, byte
widths for each memory factor, and the data-parallel partition divisors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, NamedTuple

from .ir import ModelIR, ModuleDesc, TokenSource, TrainMode, iter_layers


class Precision(Enum):
    FP32 = "fp32"
    MIXED_FP16 = "mixed_fp16"
    MIXED_BF16 = "mixed_bf16"


class OptimizerKind(Enum):
    SGD = "sgd"
    SGD_MOMENTUM = "sgd_momentum"
    ADAM = "adam"


class ConfigError(ValueError):
    """A training configuration is malformed."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}" if path else msg)
        self.path = path


class ConfigMismatchError(ConfigError):
    """A configuration is self-consistent but does not match the target IR."""


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; the on-disk form is ``.tcfg.json``.

    ``micro_batch_size`` is sequences per GPU per step. ``text_token_count``
    is the sequence length seen by text-token modules;
    ``image_patch_token_count`` is the number of tokens the vision tower
    produces per image (patch grid plus class token).

    ``headroom_factor`` is a multiplicative allowance for allocator slack and
    transient buffers the per-layer factors do not model;
    ``runtime_baseline_bytes`` covers fixed framework/context overhead. Both
    default to "off" (1.0 / 0).
    """

    micro_batch_size: int
    text_token_count: int
    image_patch_token_count: int
    precision: Precision
    optimizer: OptimizerKind
    zero_stage: int
    dp_degree: int
    frozen_modules: frozenset[str] = frozenset()
    headroom_factor: float = 1.0
    runtime_baseline_bytes: int = 0

    def __post_init__(self):
        object.__setattr__(self, "frozen_modules", frozenset(self.frozen_modules))
        for field_name in ("micro_batch_size", "text_token_count",
                           "image_patch_token_count", "dp_degree"):
            value = getattr(self, field_name)
            if type(value) is not int or value <= 0:
                raise ConfigError(field_name, f"must be a positive integer, got {value!r}")
        if self.zero_stage not in (0, 1, 2):
            raise ConfigError("zero_stage", f"must be 0, 1 or 2, got {self.zero_stage!r}")
        if not isinstance(self.headroom_factor, (int, float)) or self.headroom_factor < 1.0:
            raise ConfigError(
                "headroom_factor", f"must be a number >= 1.0, got {self.headroom_factor!r}"
            )
        if type(self.runtime_baseline_bytes) is not int or self.runtime_baseline_bytes < 0:
            raise ConfigError(
                "runtime_baseline_bytes",
                f"must be a non-negative integer, got {self.runtime_baseline_bytes!r}",
            )


class DtypeWidths(NamedTuple):
    """Bytes per element/parameter for the four factors."""

    param_bytes: int
    grad_bytes: int
    opt_bytes: int
    act_bytes: int


# Optimizer state held in fp32 regardless of compute precision: adam keeps two
# moment tensors, momentum-sgd one, plain sgd none.
_FP32_STATE_BYTES = {OptimizerKind.ADAM: 8, OptimizerKind.SGD_MOMENTUM: 4, OptimizerKind.SGD: 0}


def dtype_plan(cfg: TrainConfig) -> DtypeWidths:
    """Byte widths (param, grad, opt-per-param, act) for the configured precision.

    Under mixed precision, compute tensors are 2 bytes and the fp32 master
    copy of each trainable parameter (4 bytes) is booked on the optimizer
    side, on top of the optimizer's own fp32 state. Gradients stay in compute
    precision.
    """
    if cfg.precision is Precision.FP32:
        return DtypeWidths(4, 4, _FP32_STATE_BYTES[cfg.optimizer], 4)
    return DtypeWidths(2, 2, 4 + _FP32_STATE_BYTES[cfg.optimizer], 2)


def zero_partition(cfg: TrainConfig) -> tuple[int, int]:
    """Partition divisors ``(optimizer, gradient)`` for the configured stage.

    Stage 0 shards nothing, stage 1 shards optimizer state across the
    data-parallel group, stage 2 additionally shards gradients. Divisors
    apply per layer with ceiling division at the byte level.
    """
    dp = cfg.dp_degree
    if cfg.zero_stage == 0:
        return (1, 1)
    if cfg.zero_stage == 1:
        return (dp, 1)
    return (dp, dp)


def token_count_for(module: ModuleDesc, cfg: TrainConfig) -> int:
    """Per-sample token count for one module under this configuration."""
    if module.token_source is TokenSource.TEXT_TOKENS:
        return cfg.text_token_count
    if module.token_source is TokenSource.IMAGE_PATCHES:
        return cfg.image_patch_token_count
    assert module.fixed_token_count is not None
    return module.fixed_token_count


@dataclass(frozen=True)
class PlanEntry:
    layer_path: str
    trainable: bool
    stores_activations: bool
    token_count: int
    param_bytes_per_elem: int
    grad_bytes_per_elem: int
    opt_bytes_per_param: int
    partition_divisor_opt: int
    partition_divisor_grad: int


@dataclass(frozen=True)
class ResolvedPlan:
    """Per-layer plan entries, in IR dataflow order (module-major)."""

    entries: tuple[PlanEntry, ...]


def resolve_trainability(ir: ModelIR, cfg: TrainConfig) -> ResolvedPlan:
    """Resolve effective per-layer trainability (and byte widths/divisors).

    A layer trains iff its module is not frozen and the module's train mode
    permits it (``all`` / ``none`` override layer flags, ``per_layer`` defers
    to them). Frozen layers get zero gradient/optimizer widths. The
    ``stores_activations`` flags are left False; see
    :func:`propagate_requires_grad`.
    """
    unknown = cfg.frozen_modules - {m.name for m in ir.modules}
    if unknown:
        raise ConfigMismatchError(
            "frozen_modules", f"not present in model {ir.name!r}: {sorted(unknown)}"
        )
    widths = dtype_plan(cfg)
    div_opt, div_grad = zero_partition(cfg)
    entries = []
    for path, module, layer in iter_layers(ir):
        if module.name in cfg.frozen_modules or module.trainable is TrainMode.NONE:
            trainable = False
        elif module.trainable is TrainMode.ALL:
            trainable = True
        else:
            trainable = layer.trainable
        entries.append(
            PlanEntry(
                layer_path=path,
                trainable=trainable,
                stores_activations=False,
                token_count=token_count_for(module, cfg),
                param_bytes_per_elem=widths.param_bytes,
                grad_bytes_per_elem=widths.grad_bytes if trainable else 0,
                opt_bytes_per_param=widths.opt_bytes if trainable else 0,
                partition_divisor_opt=div_opt,
                partition_divisor_grad=div_grad,
            )
        )
    return ResolvedPlan(tuple(entries))


def propagate_requires_grad(ir: ModelIR, plan: ResolvedPlan) -> ResolvedPlan:
    """Fill ``stores_activations`` by walking the linear pipeline in order.

    A layer's input requires grad iff any earlier layer trains, and a layer
    keeps its activations iff it trains itself or its input requires grad.
    Consequently a frozen prefix ahead of every trainable layer stores
    nothing, while frozen layers sandwiched after a trainable one still store
    (the gradient must flow through them). Idempotent; depends only on the
    ordered trainability sequence.
    """
    n_layers = sum(len(m.layers) for m in ir.modules)
    if n_layers != len(plan.entries):
        raise ValueError(
            f"plan has {len(plan.entries)} entries but model {ir.name!r} has {n_layers} layers"
        )
    out = []
    upstream_trains = False
    for entry in plan.entries:
        out.append(replace(entry, stores_activations=entry.trainable or upstream_trains))
        upstream_trains = upstream_trains or entry.trainable
    return ResolvedPlan(tuple(out))


def resolve_plan(ir: ModelIR, cfg: TrainConfig) -> ResolvedPlan:
    """Full resolution pipeline: trainability, then activation retention."""
    return propagate_requires_grad(ir, resolve_trainability(ir, cfg))


# ---------------------------------------------------------------------------
# JSON form (.tcfg.json)
# ---------------------------------------------------------------------------

_REQUIRED_FIELDS = (
    "micro_batch_size",
    "text_token_count",
    "image_patch_token_count",
    "precision",
    "optimizer",
    "zero_stage",
    "dp_degree",
)
_OPTIONAL_FIELDS = ("frozen_modules", "headroom_factor", "runtime_baseline_bytes")


def config_from_obj(obj: Any) -> TrainConfig:
    """Build a TrainConfig from a decoded JSON object (strict field set)."""
    if not isinstance(obj, dict):
        raise ConfigError("", f"expected an object, got {type(obj).__name__}")
    allowed = set(_REQUIRED_FIELDS) | set(_OPTIONAL_FIELDS)
    for key in obj:
        if key not in allowed:
            raise ConfigError(key, "unknown field")
    for key in _REQUIRED_FIELDS:
        if key not in obj:
            raise ConfigError(key, "missing required field")
    try:
        precision = Precision(obj["precision"])
    except ValueError:
        raise ConfigError(
            "precision", f"must be one of {[p.value for p in Precision]}, got {obj['precision']!r}"
        ) from None
    try:
        optimizer = OptimizerKind(obj["optimizer"])
    except ValueError:
        raise ConfigError(
            "optimizer",
            f"must be one of {[o.value for o in OptimizerKind]}, got {obj['optimizer']!r}",
        ) from None
    frozen = obj.get("frozen_modules", [])
    if not isinstance(frozen, list) or not all(isinstance(n, str) for n in frozen):
        raise ConfigError("frozen_modules", "expected an array of module names")
    headroom = obj.get("headroom_factor", 1.0)
    if type(headroom) is int:
        headroom = float(headroom)
    return TrainConfig(
        micro_batch_size=obj["micro_batch_size"],
        text_token_count=obj["text_token_count"],
        image_patch_token_count=obj["image_patch_token_count"],
        precision=precision,
        optimizer=optimizer,
        zero_stage=obj["zero_stage"],
        dp_degree=obj["dp_degree"],
        frozen_modules=frozenset(frozen),
        headroom_factor=headroom,
        runtime_baseline_bytes=obj.get("runtime_baseline_bytes", 0),
    )


def config_to_obj(cfg: TrainConfig) -> dict[str, Any]:
    """Decompose a TrainConfig into its canonical JSON object form."""
    return {
        "micro_batch_size": cfg.micro_batch_size,
        "text_token_count": cfg.text_token_count,
        "image_patch_token_count": cfg.image_patch_token_count,
        "precision": cfg.precision.value,
        "optimizer": cfg.optimizer.value,
        "zero_stage": cfg.zero_stage,
        "dp_degree": cfg.dp_degree,
        "frozen_modules": sorted(cfg.frozen_modules),
        "headroom_factor": cfg.headroom_factor,
        "runtime_baseline_bytes": cfg.runtime_baseline_bytes,
    }


def parse_config(text: str) -> TrainConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return config_from_obj(doc)


def serialize_config(cfg: TrainConfig, *, indent: int | None = 2) -> str:
    return json.dumps(config_to_obj(cfg), indent=indent)
