"""Batch expected-improvement toolkit.

Gaussian-process regression on the unit cube, closed-form multipoint
expected improvement with exact, tilted-difference and proxy gradients,
multistart batch maximizers and benchmark utilities. Thin bindings over
the C++ core; matrices are numpy arrays, batches are q x d with rows in
[0, 1]^d.
"""

from ._core import (
    BestObserved,
    CdfResult,
    ClMixResult,
    ContractError,
    Design,
    GpModel,
    IterationRecord,
    Kernel,
    LiePolicy,
    MaximizeDiagnostics,
    MaximizeResult,
    McEstimate,
    NumericalError,
    OptimizerConfig,
    PosteriorBatch,
    Problem,
    RunHistory,
    __version__,
    best_observed,
    borehole,
    borehole_problem,
    borehole_to_physical,
    borehole_to_unit,
    cl_mix,
    constant_liar,
    fit,
    lhs_design,
    make_model,
    maximize_qei,
    min_pairwise_distance,
    mvn_cdf,
    posterior,
    qei,
    qei_grad,
    qei_mc,
    read_batch_csv,
    read_design_csv,
    read_history_jsonl,
    read_model_json,
    run_strategy,
    sample_conditional,
    update,
    write_batch_csv,
    write_design_csv,
    write_history_jsonl,
    write_model_json,
)

__all__ = [
    "BestObserved",
    "CdfResult",
    "ClMixResult",
    "ContractError",
    "Design",
    "GpModel",
    "IterationRecord",
    "Kernel",
    "LiePolicy",
    "MaximizeDiagnostics",
    "MaximizeResult",
    "McEstimate",
    "NumericalError",
    "OptimizerConfig",
    "PosteriorBatch",
    "Problem",
    "RunHistory",
    "__version__",
    "best_observed",
    "borehole",
    "borehole_problem",
    "borehole_to_physical",
    "borehole_to_unit",
    "cl_mix",
    "constant_liar",
    "fit",
    "lhs_design",
    "make_model",
    "maximize_qei",
    "min_pairwise_distance",
    "mvn_cdf",
    "posterior",
    "qei",
    "qei_grad",
    "qei_mc",
    "read_batch_csv",
    "read_design_csv",
    "read_history_jsonl",
    "read_model_json",
    "run_strategy",
    "sample_conditional",
    "update",
    "write_batch_csv",
    "write_design_csv",
    "write_history_jsonl",
    "write_model_json",
]
