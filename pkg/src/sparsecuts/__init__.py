"""Sparse conic cutting planes for nonconvex QCQP relaxations.

The package builds the lifted SDP relaxation of a box-constrained QCQP,
outer approximates the PSD (or doubly-nonnegative) cone with linear cuts
supported only on the instance's sparsity pattern, and drives the
resulting sparse LP through cutting-plane loops and a small spatial
branch-and-bound global solver.
"""

from .model import (
    DimensionMismatchError,
    EVector,
    QcqpInstance,
    SupportMismatchError,
    SupportSet,
    SymMatrix,
    build_support_set,
    embed_from_E,
    evec_inner,
    project_to_E,
)
from .instances import (
    GeneratorConfig,
    SchemaViolationError,
    UnsupportedFeatureError,
    generate_boxqcqp,
    load_instance,
    parse_qplib_subset,
    read_json,
    write_json,
)
from .relaxation import (
    ConicProblem,
    McCormickRow,
    build_e_lp,
    build_shor_sdp,
    mccormick_rows,
)
from .backend import (
    BackendError,
    SolveLimits,
    SolveResult,
    complete_to_psd,
    eigendecomp,
    register_backend,
    solve_conic,
)
from .separation import (
    Cut,
    ModeViolationError,
    blend_point,
    cuts_from_json,
    cuts_to_json,
    dense_eigen_cuts,
    separate_ednn,
    separate_epsd,
)
from .driver import (
    DegenerateGapError,
    RunLimits,
    Strategy,
    Trace,
    gap_closed,
    prune_slack_cuts,
    run_cutting_plane,
)
from .bnb import brute_force_grid, coordinate_descent, solve_global

__version__ = "0.1.0"
