"""Benchmark problems, synthetic data, metrics and the command-line driver."""

from .problems import (COARSE_N, FINE_N, ProblemSpec, SyntheticData, build_problem, builtin_examples,
                       err_q, generate_data, get_example, post_process_intensity,
                       symmetric_difference_area)

__all__ = [
    "ProblemSpec", "SyntheticData", "builtin_examples", "get_example", "generate_data",
    "build_problem", "err_q", "post_process_intensity", "symmetric_difference_area",
    "FINE_N", "COARSE_N",
]
