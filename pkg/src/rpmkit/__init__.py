"""rpmkit: generate, perceive, and solve Raven-style matrix puzzles.

The package splits the job the way a person would: a perception stage
turns panel images into integer attribute codes, and a reasoning stage
fits each attribute's 3x3 value matrix with a tiny least-squares system,
classifies the coefficients into human-readable rule families, and picks
the candidate consistent with the rules it has seen during training.
"""

from .core import (
    ALL_CONFIGURATIONS,
    ANGLE_DEGREES,
    AttributeKind,
    AttributeMatrix,
    Cell,
    Component,
    Configuration,
    Layout,
    Problem,
    attribute_tuple_distance,
    decode_position,
    encode_position,
    get_layout,
    modal_value,
    popcount,
    validate_problem,
)
from .errors import (
    ContractViolation,
    CorpusError,
    EmptyPoolError,
    GenerationError,
    PerceptionError,
    RpmkitError,
    TrainingDataError,
    UnrecognizedEntityError,
)
from .rules import (
    LinearFit,
    Rule,
    RuleKind,
    RulePool,
    check_consistency,
    classify_rule,
    detect_position_rule,
    distribute_three_theta_phi,
    fit_columns,
    induce_from_sample,
    is_degenerate_sample,
    least_squares_induce,
    pool_insert,
)
from .solver import (
    PredictedConstraint,
    SolveReport,
    find_feasible_rules,
    predict_attribute,
    score_candidates,
    solve_problem,
)
from .generator import (
    Entity,
    GenSpec,
    PanelSet,
    generate_corpus,
    generate_problem,
    make_candidates_iraven,
    make_candidates_raven,
    rng_for,
    sample_rule_assignment,
)
from .vision import (
    PALETTE,
    EntityBlob,
    PanelRaster,
    classify_type_size,
    extract_color,
    load_png,
    perceive_panel,
    render_panel,
    save_png,
    segment_entities,
    template_bank,
)
from .dataio import (
    CorpusManifest,
    import_external_attributes,
    read_corpus,
    write_corpus,
)
from .cli import EvalReport, run_eval, run_shrink, run_train

__version__ = "0.1.0"
