"""Sparse vector technique variants, privacy-loss auditing and top-c selection benchmarks."""
from .mechanisms import (LaplaceDist, QuerySet, SelectionResult, em_probabilities,
                         em_select_one, em_select_top_c, laplace_cdf, laplace_pdf,
                         laplace_sample, utility_bounds)
from .svt import (ABOVE, BELOW, BudgetSplit, Mark, OutcomeVector, SvtConfig,
                  SvtSession, Variant, noise_scales, open_session, optimize_split,
                  run_svt, run_svt_retraversal)

__version__ = "0.1.0"

__all__ = [
    "ABOVE", "BELOW", "BudgetSplit", "LaplaceDist", "Mark", "OutcomeVector",
    "QuerySet", "SelectionResult", "SvtConfig", "SvtSession", "Variant",
    "em_probabilities", "em_select_one", "em_select_top_c", "laplace_cdf",
    "laplace_pdf", "laplace_sample", "noise_scales", "open_session",
    "optimize_split", "run_svt", "run_svt_retraversal", "utility_bounds",
]
