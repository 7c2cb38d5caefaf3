"""Masked bipartite Gaussian random geometric graphs.

Thin Python layer over the C++ core. Matrices are 2-D uint8 arrays with
entries in {0, 1}; latent blocks are 2-D float arrays of shape (rows, d).
Report-style functions return plain dicts with the same fields as the JSON
written by the ``maskrgg`` command-line tool.
"""

from ._core import (
    __version__,
    calibrate,
    compute_tau,
    conditional_star_sw_exact2,
    conditional_star_sw_mc,
    inner_product_cdf,
    leading_term_lambda,
    run_chi2_oracle,
    run_sweep,
    run_test,
    sample,
    statistic,
    statistic_names,
    verify_remainder_scaling,
    verify_star_decay,
)

__all__ = [
    "__version__",
    "calibrate",
    "compute_tau",
    "conditional_star_sw_exact2",
    "conditional_star_sw_mc",
    "inner_product_cdf",
    "leading_term_lambda",
    "run_chi2_oracle",
    "run_sweep",
    "run_test",
    "sample",
    "statistic",
    "statistic_names",
    "verify_remainder_scaling",
    "verify_star_decay",
]
