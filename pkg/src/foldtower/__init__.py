"""Fold towers on metric core graphs: build and validate split sequences,
probe the induced inverse-limit space at finite depth, and certify minimality,
expansion and unique ergodicity through transition-matrix cones."""

from .graphs import (
    Cell,
    CoreGraph,
    DisconnectedGraph,
    GraphError,
    GraphPoint,
    LowValenceVertex,
    NaturalEdge,
    NaturalStructure,
    NonComposablePath,
    NonPositiveLength,
    build_core_graph,
    tighten_path,
)
from .folds import (
    FoldError,
    FoldReport,
    FoldSpec,
    GraphMap,
    InvalidExtent,
    RankDrop,
    SelfDartFold,
    TransitionMatrix,
    apply_fold,
    check_no_backtracking,
    compose,
    count_crossings,
    transition_matrix,
    validate_fold,
)
from .sequences import (
    BacktrackingCreated,
    GeneratorStuck,
    LevelOutOfRange,
    RandomFoldPolicy,
    ScriptFold,
    ScriptedPairGenerator,
    SequenceAudit,
    SplitSequence,
    Status,
    WindowMatrix,
    audit_expanding,
    audit_properness,
    audit_stabilization,
    audit_strong_properness,
    extend_sequence,
    generator_from_descriptor,
    load_sequence,
    mingling_number,
    scan_full_mingling,
    scan_semi_normality,
    validate_periodicity,
    window_matrix,
)
from .solenoid import (
    EdgeRun,
    FiberNode,
    FiberPartitionSystem,
    FiberTree,
    InsufficientDepth,
    LeafTraceRecord,
    PointSpec,
    ShadowLevel,
    SingularityCensus,
    StarChainRecord,
    TurnDecomposition,
    TurnSpec,
    compute_fiber,
    decompose_turn_transversal,
    describe_point,
    edge_runs,
    edge_turn,
    fiber_partition_system,
    is_generic_point,
    make_generic,
    pre_turn_shadows,
    resolve_point,
    scan_star_chains,
    trace_partial_leaf,
    validate_turn,
    vertex_turn,
)
from .cones import (
    ConeApprox,
    ContractionStep,
    DeltaBound,
    DimensionMismatch,
    ErgodicityCertificate,
    NonExpandingSequence,
    NonPositiveMatrix,
    WeightVector,
    ZeroVector,
    certify_unique_ergodicity,
    check_weight_equations,
    cone_approximation,
    contraction_trace,
    delta_bound,
    evaluate_transverse_measure,
    hilbert_projective_distance,
    perron_weights,
    projective_distance,
    smallest_recurring_dimension,
    veech_inequality_check,
)
from .fixtures import (
    FIXTURES,
    UnknownFixture,
    load_fixture,
)

__version__ = "0.1.0"

__all__ = [
    "Cell", "CoreGraph", "DisconnectedGraph", "GraphError", "GraphPoint",
    "LowValenceVertex", "NaturalEdge", "NaturalStructure", "NonComposablePath",
    "NonPositiveLength", "build_core_graph", "tighten_path",
    "FoldError", "FoldReport", "FoldSpec", "GraphMap", "InvalidExtent",
    "RankDrop", "SelfDartFold", "TransitionMatrix", "apply_fold",
    "check_no_backtracking", "compose", "count_crossings", "transition_matrix",
    "validate_fold",
    "BacktrackingCreated", "GeneratorStuck", "LevelOutOfRange",
    "RandomFoldPolicy", "ScriptFold", "ScriptedPairGenerator", "SequenceAudit",
    "SplitSequence", "Status", "WindowMatrix", "audit_expanding",
    "audit_properness", "audit_stabilization", "audit_strong_properness",
    "extend_sequence", "generator_from_descriptor", "load_sequence",
    "mingling_number", "scan_full_mingling", "scan_semi_normality",
    "validate_periodicity", "window_matrix",
    "EdgeRun", "FiberNode", "FiberPartitionSystem", "FiberTree",
    "InsufficientDepth", "LeafTraceRecord", "PointSpec", "ShadowLevel",
    "SingularityCensus", "StarChainRecord", "TurnDecomposition", "TurnSpec",
    "compute_fiber", "decompose_turn_transversal", "describe_point",
    "edge_runs", "edge_turn", "fiber_partition_system", "is_generic_point",
    "make_generic", "pre_turn_shadows", "resolve_point", "scan_star_chains",
    "trace_partial_leaf", "validate_turn", "vertex_turn",
    "ConeApprox", "ContractionStep", "DeltaBound", "DimensionMismatch",
    "ErgodicityCertificate", "NonExpandingSequence", "NonPositiveMatrix",
    "WeightVector", "ZeroVector", "certify_unique_ergodicity",
    "check_weight_equations", "cone_approximation", "contraction_trace",
    "delta_bound", "evaluate_transverse_measure",
    "hilbert_projective_distance", "perron_weights", "projective_distance",
    "smallest_recurring_dimension", "veech_inequality_check",
    "FIXTURES", "UnknownFixture", "load_fixture",
    "__version__",
]
