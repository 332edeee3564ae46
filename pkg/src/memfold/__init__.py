"""Static peak-GPU-memory prediction for training multimodal and unimodal models."""

from .ir import (
    ATTENTION_MODES,
    Diagnostic,
    IRError,
    IRInvariantError,
    IRSchemaError,
    IRSyntaxError,
    LayerDesc,
    LayerKind,
    Modality,
    ModelIR,
    ModuleDesc,
    TokenSource,
    TrainMode,
    decode_ir,
    hyperparam_keys,
    iter_layers,
    param_count,
    parse_ir,
    serialize_ir,
    validate_ir,
)
from .policy import (
    ConfigError,
    ConfigMismatchError,
    DtypeWidths,
    OptimizerKind,
    PlanEntry,
    Precision,
    ResolvedPlan,
    TrainConfig,
    dtype_plan,
    parse_config,
    propagate_requires_grad,
    resolve_plan,
    resolve_trainability,
    serialize_config,
    token_count_for,
    zero_partition,
)
from .factors import (
    FactorBreakdown,
    conv2d_output_hw,
    factor_act,
    factor_grad,
    factor_opt,
    factor_param,
    predict_layer,
)
from .oracle import (
    AllocEvent,
    AllocGraph,
    AllocGraphError,
    EventOp,
    PeakStats,
    Phase,
    activation_tensors,
    build_graph,
    dump_events,
    simulate_peak,
    weight_tensor_shapes,
)
from .report import (
    FactorTotals,
    MemoryReport,
    adjusted_peak,
    mape,
    parse_report,
    predict_peak,
    render_report,
    report_from_obj,
    report_to_obj,
    sweep_dp,
)

__version__ = "0.1.0"
