"""StratDef: strategic moving-target defense for ML-based malware detection."""

from ._core import (
    Dataset,
    Model,
    PerturbationPolicy,
    Sample,
    SplitSpec,
    StratDefError,
    apply_policy,
    auc_rank,
    balance_and_split,
    chi_squared_pvalue,
    generate_adversarial,
    load_dataset,
    load_model,
    run_pipeline,
    save_model,
    solve_stackelberg,
    synth_dataset,
    train_model,
    write_dataset,
)

__all__ = [
    "Dataset",
    "Model",
    "PerturbationPolicy",
    "Sample",
    "SplitSpec",
    "StratDefError",
    "apply_policy",
    "auc_rank",
    "balance_and_split",
    "chi_squared_pvalue",
    "generate_adversarial",
    "load_dataset",
    "load_model",
    "run_pipeline",
    "save_model",
    "solve_stackelberg",
    "synth_dataset",
    "train_model",
    "write_dataset",
]
