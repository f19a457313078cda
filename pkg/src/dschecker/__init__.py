"""Detection and repair of data-science API misuses, LLM-assisted.

The package splits into small layers: dataset model, prompt assembly,
documentation lookup, model gateway (record/replay), sandboxed execution,
the tool-calling agent loop, verdict/patch handling, and the evaluation
harness with its statistics. Import from here for the stable surface.
"""
from .agent import AgentConfig, CallRecord, call_summary, dispatch_tool, run_agent
from .docs import DocEntry, DocIndex, load_index, lookup_api
from .errors import (
    AgentError,
    DatasetError,
    DocIndexError,
    DSCheckerError,
    ErrorCode,
    EvalError,
    ExecutionError,
    GatewayError,
    PatchError,
    PromptError,
    VerdictError,
    exit_code_for,
)
from .evaluation import (
    ConfusionCounts,
    Contribution,
    EvalConfig,
    EvalMode,
    bootstrap,
    detection_metrics,
    evaluate,
    fix_rate,
    load_adjudications,
    report_to_json,
    report_to_table,
)
from .execution import (
    ExecutionOutcome,
    FixClass,
    FixOutcome,
    LiveEngine,
    RecordingEngine,
    ReplayEngine,
    RunStatus,
    SnippetRunner,
    classify_fix,
)
from .gateway import (
    ChatMessage,
    Gateway,
    HttpProvider,
    ModelTurn,
    RecordingProvider,
    ReplayProvider,
    Role,
    ScriptedProvider,
    ToolCall,
    ToolDeclaration,
    load_tool_declarations,
)
from .model import (
    ArrayDetail,
    CorrectAnswer,
    DataInfo,
    DataKind,
    Dataset,
    Directive,
    ErrorSignature,
    Expectation,
    FrameColumn,
    FrameDetail,
    GenerationParams,
    GroundTruth,
    OutputCheck,
    OutputCheckMode,
    ProbeTarget,
    PromptVariant,
    SequenceDetail,
    SnippetRecord,
    Verdict,
    load_dataset,
    serialize_dataset,
)
from .patching import (
    MalformedVerdict,
    apply_patch,
    extract_verdict_json,
    parse_verdict,
    reverse_patch,
)
from .prompts import (
    FewShotExemplar,
    PromptBundle,
    PromptTemplate,
    load_exemplars,
    load_template,
    render,
    render_data_section,
)
from .stats import PairwiseComparison, SplitMix64, dunn_test, shapiro_wilk

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "AgentError",
    "ArrayDetail",
    "CallRecord",
    "ChatMessage",
    "ConfusionCounts",
    "Contribution",
    "CorrectAnswer",
    "DSCheckerError",
    "DataInfo",
    "DataKind",
    "Dataset",
    "DatasetError",
    "Directive",
    "DocEntry",
    "DocIndex",
    "DocIndexError",
    "ErrorCode",
    "ErrorSignature",
    "EvalConfig",
    "EvalError",
    "EvalMode",
    "ExecutionError",
    "ExecutionOutcome",
    "Expectation",
    "FewShotExemplar",
    "FixClass",
    "FixOutcome",
    "FrameColumn",
    "FrameDetail",
    "Gateway",
    "GatewayError",
    "GenerationParams",
    "GroundTruth",
    "HttpProvider",
    "LiveEngine",
    "MalformedVerdict",
    "ModelTurn",
    "OutputCheck",
    "OutputCheckMode",
    "PairwiseComparison",
    "PatchError",
    "ProbeTarget",
    "PromptBundle",
    "PromptError",
    "PromptTemplate",
    "PromptVariant",
    "RecordingEngine",
    "RecordingProvider",
    "ReplayEngine",
    "ReplayProvider",
    "Role",
    "RunStatus",
    "ScriptedProvider",
    "SequenceDetail",
    "SnippetRecord",
    "SnippetRunner",
    "SplitMix64",
    "ToolCall",
    "ToolDeclaration",
    "Verdict",
    "VerdictError",
    "apply_patch",
    "bootstrap",
    "call_summary",
    "classify_fix",
    "detection_metrics",
    "dispatch_tool",
    "dunn_test",
    "evaluate",
    "exit_code_for",
    "extract_verdict_json",
    "fix_rate",
    "load_adjudications",
    "load_dataset",
    "load_exemplars",
    "load_index",
    "load_template",
    "load_tool_declarations",
    "lookup_api",
    "parse_verdict",
    "render",
    "render_data_section",
    "report_to_json",
    "report_to_table",
    "reverse_patch",
    "run_agent",
    "serialize_dataset",
    "shapiro_wilk",
]
