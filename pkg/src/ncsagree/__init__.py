"""Field-normalized citation scores under several classification systems and their agreement."""

__version__ = "0.1.0"

from .agreement import (  # noqa: E402
    AgreementResult,
    ContingencyTable,
    Estimate,
    WeightMatrix,
    contingency,
    interpret_kappa,
    lin_ccc,
    pairwise_compare,
    percent_agreement,
    weighted_kappa,
)
from .css import CssClass, CssThresholds, assign_classes, compute_thresholds  # noqa: E402
from .normalize import NcsTable, ReferenceSetStats, build_reference_sets, compute_ncs  # noqa: E402

__all__ = [
    "AgreementResult",
    "ContingencyTable",
    "CssClass",
    "CssThresholds",
    "Estimate",
    "NcsTable",
    "ReferenceSetStats",
    "WeightMatrix",
    "assign_classes",
    "build_reference_sets",
    "compute_ncs",
    "compute_thresholds",
    "contingency",
    "interpret_kappa",
    "lin_ccc",
    "pairwise_compare",
    "percent_agreement",
    "weighted_kappa",
]
