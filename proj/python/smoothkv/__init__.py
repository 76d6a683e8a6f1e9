from ._core import (
    ConfigError,
    IntegrityError,
    RangeStore,
    capacity,
    goodness_of_fit,
    init_smoothing,
    rsd,
    run_kv,
    two_sample_chi_square,
)

__all__ = [
    "ConfigError",
    "IntegrityError",
    "RangeStore",
    "capacity",
    "goodness_of_fit",
    "init_smoothing",
    "rsd",
    "run_kv",
    "two_sample_chi_square",
]
