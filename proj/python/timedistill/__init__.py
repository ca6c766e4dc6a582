"""Distill long-horizon forecasters into small channel-independent MLPs."""

from ._timedistill import (
    ContractViolation,
    DataError,
    DistillConfig,
    NormMode,
    SeriesDataset,
    Split,
    Student,
    TrainConfig,
    UsageError,
    WindowSet,
    build_pyramid,
    destandardize,
    dft_amplitude,
    init_student,
    load_csv,
    load_student,
    load_teacher_artifact,
    mae,
    mse,
    oracle_noise_teacher,
    per_sample_mse,
    period_distribution,
    predict,
    split_calendar,
    split_standard,
    standardize,
    synth_multiperiod,
    theorem1_suite,
    theorem2_suite,
    total_loss,
    train_distill,
    win_keep,
    win_ratio,
    window_count,
    winners,
    write_csv,
    write_teacher_artifact,
)

__version__ = "0.1.0"
__all__ = [name for name in dir() if not name.startswith("_")]
