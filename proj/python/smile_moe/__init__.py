"""Zero-shot fusion of fine-tuned models into a sparse mixture of low-rank experts."""

from ._core import (
    LowRankExpert,
    SmileConfig,
    SmileError,
    SmileLayer,
    SmileModel,
    build_expert,
    build_expert_from_lora,
    least_squares,
    low_rank_approx,
    merging_error,
    optimal_bias_lambda,
    param_count,
    param_summary,
    project_zone,
    read_store,
    svd,
    task_arithmetic,
    upscale_files,
    weight_average,
    write_store,
    zone_energies,
    zone_partition,
)

__all__ = [
    "LowRankExpert",
    "SmileConfig",
    "SmileError",
    "SmileLayer",
    "SmileModel",
    "build_expert",
    "build_expert_from_lora",
    "least_squares",
    "low_rank_approx",
    "merging_error",
    "optimal_bias_lambda",
    "param_count",
    "param_summary",
    "project_zone",
    "read_store",
    "svd",
    "task_arithmetic",
    "upscale_files",
    "weight_average",
    "write_store",
    "zone_energies",
    "zone_partition",
]

__version__ = "0.1.0"
